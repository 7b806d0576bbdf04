#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "rpmeas/integrate.hpp"
#include "rpmeas/model.hpp"
#include "rpmeas/noise.hpp"

namespace rpmeas {

struct PullbackOptions {
  int n_phases = 8;                  // t_k = k tau / K
  int n_max_periods = 64;
  double tol = 0.0;                  // absolute mean-square tolerance; <= 0 selects the relative rule
  double tol_relative = 1e-6;        // tol = tol_relative * (RMS of the cloud)^2
  std::uint64_t stream_base = streams::kPullback;
};

struct ResidualPoint {
  int n_periods = 0;                 // depth n compared against 2n
  std::vector<double> per_phase;     // E|S_2n(t_k) - S_n(t_k)|^2
  double max = 0.0;
};

// S(t_k, omega_i) ~ phi(t_k, -n tau, omega_i, x_init) for realizations i = 0..N-1.
// Realization i uses noise stream (stream_base + i) chunked per period, so the same
// omega_i is seen at every depth.
struct RandomPeriodicPathEstimate {
  std::vector<double> phases;        // t_k
  std::size_t n_realizations = 0;
  int dim = 0;
  int n_periods = 0;                 // accepted depth
  bool converged = false;
  double tol = 0.0;
  double scale = 0.0;                // RMS |S| over the cloud
  std::vector<ResidualPoint> residual_curve;
  std::vector<double> states;        // [phase][realization][dim]

  std::span<const double> state(std::size_t k, std::size_t i) const {
    const auto d = static_cast<std::size_t>(dim);
    return {states.data() + (k * n_realizations + i) * d, d};
  }
};

RandomPeriodicPathEstimate pullback_path(const PeriodicSdeModel& model, std::span<const double> x_init,
                                         std::size_t n_realizations, const NoiseSpec& spec,
                                         const PullbackOptions& options = {});

// States phi(t_k, -n tau, theta_{shift_periods tau} omega_i, x_init) at every phase, laid out
// like RandomPeriodicPathEstimate::states.
std::vector<double> pullback_states(const PeriodicSdeModel& model, std::span<const double> x_init,
                                    std::size_t n_realizations, const NoiseSpec& spec,
                                    const PullbackOptions& options, int n_periods,
                                    std::int64_t shift_periods = 0);

struct PeriodicityCheck {
  double shift_residual = 0.0;       // mean_i,k |phi(t_k + tau, t_k, omega, S(t_k, omega)) - S(t_k, theta_tau omega)|^2
  double invariance_max = 0.0;       // max_i,k of the same quantity
  double tol = 0.0;
  bool passes = false;               // shift_residual <= 3 tol
};

// S(t + tau, omega) = S(t, theta_tau omega): S(t_k + tau, omega) is obtained by flowing the
// estimate over one period, S(t_k, theta_tau omega) by re-running the pullback on the
// shifted noise.
PeriodicityCheck periodicity_identity_check(const RandomPeriodicPathEstimate& estimate,
                                            const PeriodicSdeModel& model, std::span<const double> x_init,
                                            const NoiseSpec& spec, const PullbackOptions& options = {});

struct ContractionCurve {
  double p = 2.0;
  std::vector<double> times;
  std::vector<double> mean;          // E|phi(t, 0, xi) - phi(t, 0, eta)|^p
  std::vector<double> std_error;
  std::vector<std::vector<double>> traces;  // first few pairs, |difference|^p per time
};

// Synchronously coupled pairs started at xi and eta, recorded every `record_every` steps.
ContractionCurve two_point_contraction(const PeriodicSdeModel& model, std::span<const double> xi,
                                       std::span<const double> eta, double p, double horizon,
                                       std::size_t n_pairs, const NoiseSpec& spec,
                                       std::int64_t record_every = 100, std::size_t n_traces = 5,
                                       std::uint64_t stream_base = streams::kDiagnostic);

// Least-squares slope of log(curve) over [t_lo, t_hi]; throws on nonpositive values.
double contraction_rate(const ContractionCurve& curve, double t_lo, double t_hi);

}  // namespace rpmeas
