#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rpmeas/integrate.hpp"
#include "rpmeas/measure.hpp"
#include "rpmeas/model.hpp"
#include "rpmeas/noise.hpp"
#include "rpmeas/perturbation.hpp"

namespace rpmeas {

enum class Provenance { Direct, FdtQg, FdtKde };
std::string to_string(Provenance p);

struct ResponseCurve {
  Provenance provenance = Provenance::Direct;
  std::vector<double> times;
  std::vector<std::string> labels;
  std::vector<std::vector<double>> values;     // [observable][time], Delta F(t)
  std::vector<std::vector<double>> std_error;  // [observable][time]
  std::size_t n_samples = 0;
  std::size_t n_diverged = 0;
};

struct DirectResponseOptions {
  std::uint64_t stream_base = streams::kResponse;
  // Start the pairs at the last period boundary before the perturbation switches on.
  // Valid because the initial cloud samples the phase-0 periodic measure.
  bool fast_forward = true;
  std::size_t block_size = 64;
};

// Delta F(t) = E[phi(t, X^eps_t) - phi(t, X_t)], X_0 drawn from the phase-0 cloud (member i
// uses row i mod rows). Perturbed and unperturbed copies share the noise of their pair; all
// perturbations share one unperturbed trajectory per pair. Times are snapped to the grid.
std::vector<ResponseCurve> direct_response(const PeriodicSdeModel& model,
                                           const std::vector<PerturbationSpec>& perturbations,
                                           const std::vector<Observable>& observables,
                                           const InitialCondition& phase0_cloud,
                                           const std::vector<double>& times, std::size_t n_paths,
                                           const NoiseSpec& spec, const DirectResponseOptions& options = {});

ResponseCurve direct_response(const PeriodicSdeModel& model, const PerturbationSpec& perturbation,
                              const std::vector<Observable>& observables, const InitialCondition& phase0_cloud,
                              const std::vector<double>& times, std::size_t n_paths, const NoiseSpec& spec,
                              const DirectResponseOptions& options = {});

struct ResponseTableOptions {
  int n_phase_bins = 64;           // r_j = j tau / J; J must divide tau / dt
  int lag_stride_steps = 10;       // lag step h = lag_stride_steps dt
  double max_lag = 0.0;            // required
  std::size_t n_trajectories = 1000;
  int n_periods = 10;              // base periods per trajectory; pairs per phase = trajectories x periods
  std::uint64_t stream_base = streams::kCorrelation;
  std::size_t block_size = 16;
  Bandwidth bandwidth = Bandwidth::Scott;  // kde variant
  std::size_t max_centers = 2000;          // kde variant
};

// R(lag, r) on phase bins x lag grid, per observable. The estimator is the covariance
// mean(B_r phi) - mean(B_r) mean(phi) over base points X_r of unperturbed trajectories
// started from the phase-0 cloud of the measure.
struct ResponseTable {
  Provenance provenance = Provenance::FdtQg;
  double period = 1.0;
  double lag_step = 0.0;
  std::vector<double> phases;          // r_j
  std::vector<double> lags;            // l_i = i lag_step
  std::vector<std::string> labels;
  std::vector<double> R;               // [phase][lag][observable]
  std::vector<double> std_error;
  std::vector<double> score_mean;      // mean B_r per phase (should vanish)
  std::vector<double> score_std_error;
  std::size_t samples_per_phase = 0;
  std::size_t n_diverged = 0;

  std::size_t n_obs() const { return labels.size(); }
  std::size_t index(std::size_t phase, std::size_t lag, std::size_t obs) const {
    return (phase * lags.size() + lag) * labels.size() + obs;
  }
  double max_lag() const { return lags.empty() ? 0.0 : lags.back(); }
  // Linear in lag, linear and periodic in phase. Throws WindowError beyond max_lag.
  double interpolate(double lag, double r, std::size_t obs) const;
  double interpolate_std_error(double lag, double r, std::size_t obs) const;
};

// Gaussian surrogate per phase bin: B_r(x) = -div b(x) + b(x) . Sigma_r^{-1} (x - m_r), with
// (m_r, Sigma_r) fitted to the base samples of that bin. Rejects diffusion perturbations.
ResponseTable fdt_response_function_qg(const PeriodicSdeModel& model, const EmpiricalPeriodicMeasure& measure,
                                       const PerturbationSpec& perturbation,
                                       const std::vector<Observable>& observables,
                                       const ResponseTableOptions& options, const NoiseSpec& spec);

// Kernel density surrogate per phase bin: B_r = -div(b rho)/rho + 1/2 tr(frak_a D^2 rho)/rho with
// frak_a = sigma H^T + H sigma^T, which must not depend on x.
ResponseTable fdt_response_function_kde(const PeriodicSdeModel& model, const EmpiricalPeriodicMeasure& measure,
                                        const PerturbationSpec& perturbation,
                                        const std::vector<Observable>& observables,
                                        const ResponseTableOptions& options, const NoiseSpec& spec);

struct ConvolutionOptions {
  // Treat R as 0 beyond the table's max lag instead of failing.
  bool truncate_beyond_max_lag = false;
};

// eps int_0^t R(t - r, r) theta(r) dr by the trapezoid rule on nodes spaced by the lag step.
ResponseCurve convolve_response(const ResponseTable& table, const TimeProfile& profile, double epsilon,
                                const std::vector<double>& times, const ConvolutionOptions& options = {});

struct CurveComparison {
  std::vector<std::string> labels;
  std::vector<double> relative_l2;                // ||direct - predicted|| / ||direct|| on the window
  std::vector<double> sup_error;
  std::vector<bool> undefined;                    // zero-norm direct curve
  std::vector<std::vector<double>> z_scores;      // per window time
  std::vector<double> window_times;
  double max_relative_l2 = 0.0;
};

CurveComparison compare_curves(const ResponseCurve& direct, const ResponseCurve& predicted, double t_lo,
                               double t_hi);

struct FdtIIOptions {
  int n_phases = 8;
  double lag_step = 0.0;       // evaluation lags 0, lag_step, ..., max_lag (grid multiples)
  double max_lag = 0.0;
  int h_steps = 2;             // finite-difference step h = h_steps dt
  std::size_t n_trajectories = 1000;
  int n_periods = 10;
  std::uint64_t stream_base = streams::kCorrelation + (1ULL << 32);
  std::size_t block_size = 16;
};

// dX = (-aX + A sin(2 pi t / tau)) dt + sigma dW with drift perturbation b = 1.
// K(l, r) = E[(X_{r+l} - m(r+l)) W(r, X_r)], W(r, x) = (x - m(r)) / (a Sigma), is
// differentiated in r at fixed t = r + l and compared with exp(-a l).
struct FdtIICheck {
  std::vector<double> phases;
  std::vector<double> lags;
  std::vector<double> correlation;   // [phase][lag] K(l, r)
  std::vector<double> derivative;    // [phase][lag] d_r K(t - r, r)
  std::vector<double> std_error;     // of the derivative
  std::vector<double> analytic;      // [lag] exp(-a l)
  std::vector<double> fd_error;      // [lag] finite-difference error bound
  std::vector<double> residual;      // [phase][lag] |derivative - analytic|
  std::size_t samples_per_phase = 0;
  double max_excess = 0.0;           // max residual - (3 stderr + fd_error)
  bool passes = false;
};

FdtIICheck fdt2_check_ou(const OuParams& params, const FdtIIOptions& options, const NoiseSpec& spec);

}  // namespace rpmeas
