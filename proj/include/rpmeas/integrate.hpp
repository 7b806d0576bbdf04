#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "rpmeas/error.hpp"
#include "rpmeas/model.hpp"
#include "rpmeas/noise.hpp"
#include "rpmeas/perturbation.hpp"
#include "rpmeas/stats.hpp"

namespace rpmeas {

inline constexpr double kDivergenceRadius = 1e9;

// Integration lattice {n dt}. When the period is a whole number K of steps the
// coefficients are evaluated at the phase time (n mod K) dt, which makes the
// flow over [s + tau, t + tau] with noise theta_tau(omega) bit-identical to the
// flow over [s, t].
class TimeGrid {
 public:
  TimeGrid(double dt, double period);

  double dt() const { return dt_; }
  double period() const { return period_; }
  bool aligned() const { return steps_per_period_ > 0; }
  // Throws GridError when the period is not a multiple of dt.
  std::int64_t steps_per_period() const;
  // Nearest grid index (checkpoint snapping).
  std::int64_t nearest(double t) const { return static_cast<std::int64_t>(std::llround(t / dt_)); }
  // Grid index of an on-grid time; throws GridError otherwise.
  std::int64_t exact(double t) const { return grid_index(t, dt_); }
  double time(std::int64_t n) const { return static_cast<double>(n) * dt_; }
  double coefficient_time(std::int64_t n) const {
    if (steps_per_period_ <= 0) return time(n);
    std::int64_t r = n % steps_per_period_;
    if (r < 0) r += steps_per_period_;
    return static_cast<double>(r) * dt_;
  }

 private:
  double dt_;
  double period_;
  std::int64_t steps_per_period_ = 0;
};

// Euler-Maruyama step for one model, optionally perturbed by
// eps theta(t) (b_dir, H). Holds scratch buffers, so use one per worker.
class Stepper {
 public:
  Stepper(const PeriodicSdeModel& model, const TimeGrid& grid,
          const PerturbationSpec* perturbation = nullptr);

  const TimeGrid& grid() const { return grid_; }
  int dim() const { return d_; }
  int noise_dim() const { return m_; }

  // x <- x + b(t_n, x) dt + sigma(t_n, x) dw over the step [n dt, (n+1) dt].
  void step(std::int64_t n, std::span<double> x, std::span<const double> dw);

  // Steps n0 -> n1; noise(n, dw) fills the increment for step n.
  template <class Noise>
  void advance(std::span<double> x, std::int64_t n0, std::int64_t n1, Noise&& noise) {
    for (std::int64_t n = n0; n < n1; ++n) {
      noise(n, std::span<double>(dw_));
      step(n, x, dw_);
    }
  }

 private:
  const PeriodicSdeModel* model_;
  TimeGrid grid_;
  const PerturbationSpec* pert_;
  int d_;
  int m_;
  std::vector<double> b_, sig_, pb_, ph_, dw_;
};

// Noise adaptors for Stepper::advance.
struct PathNoise {
  const WienerPath& path;
  void operator()(std::int64_t n, std::span<double> dw) const {
    const auto inc = path.increment_at_index(n);
    std::copy(inc.begin(), inc.end(), dw.begin());
  }
};

// Sequential draws; steps must be requested in increasing order.
struct StreamNoise {
  NoiseStream& stream;
  void operator()(std::int64_t, std::span<double> dw) const { stream.next(dw); }
};

// phi(t, s, omega, x0) on the grid of `path`.
std::vector<double> flow(const PeriodicSdeModel& model, double s, double t,
                         std::span<const double> x0, const WienerPath& path);

// (direct s -> t, composed s -> u -> t)
std::pair<std::vector<double>, std::vector<double>> flow_composition_check(
    const PeriodicSdeModel& model, double s, double u, double t, std::span<const double> x0,
    const WienerPath& path);

// max over all grid checkpoints of |phi(r + tau, s + tau, omega, x) - phi(r, s, theta_tau omega, x)|
// for r in [s, s + duration]. The path must cover [s, s + duration + tau].
double periodic_flow_identity(const PeriodicSdeModel& model, double s, double duration,
                              std::span<const double> x0, const WienerPath& path);

// Two trajectories driven by the same increments.
std::pair<std::vector<double>, std::vector<double>> two_point_flow(
    const PeriodicSdeModel& model, double s, double t, std::span<const double> x0,
    std::span<const double> y0, const WienerPath& path);

// Initial states for an ensemble: member i starts from row (i mod rows).
struct InitialCondition {
  int dim = 0;
  std::vector<double> states;

  static InitialCondition point(std::span<const double> x);
  static InitialCondition cloud(int dim, std::vector<double> rows);
  std::size_t rows() const { return dim > 0 ? states.size() / static_cast<std::size_t>(dim) : 0; }
  std::span<const double> row(std::size_t i) const {
    const std::size_t r = i % rows();
    return {states.data() + r * static_cast<std::size_t>(dim), static_cast<std::size_t>(dim)};
  }
};

struct EnsembleOptions {
  bool keep_samples = false;
  std::uint64_t stream_base = streams::kEnsemble;
  std::size_t block_size = 64;
};

struct EnsembleCheckpoint {
  double time = 0.0;  // snapped grid time
  std::int64_t index = 0;
  Moments state;
  std::vector<ScalarMoments> observables;
  std::vector<double> samples;  // N x d row-major when kept; diverged members are NaN
};

struct EnsembleResult {
  std::vector<EnsembleCheckpoint> checkpoints;
  std::size_t n_paths = 0;
  std::size_t n_diverged = 0;
};

// Monte Carlo transition evolution: N members from `initial` at s, member i driven by
// stream (stream_base + i) of `spec`, statistics at checkpoints snapped to the grid.
// Diverged members are excluded; more than 0.1% diverged raises DivergenceError.
// Results do not depend on the worker count.
EnsembleResult ensemble_flow(const PeriodicSdeModel& model, double s, double t,
                             const InitialCondition& initial, std::size_t n_paths,
                             const NoiseSpec& spec, const std::vector<Observable>& observables,
                             const std::vector<double>& checkpoint_times,
                             const EnsembleOptions& options = {});

// Single-threaded reference with the same blocking and merge order as ensemble_flow.
EnsembleResult ensemble_flow_serial(const PeriodicSdeModel& model, double s, double t,
                                    const InitialCondition& initial, std::size_t n_paths,
                                    const NoiseSpec& spec,
                                    const std::vector<Observable>& observables,
                                    const std::vector<double>& checkpoint_times,
                                    const EnsembleOptions& options = {});

// Throws DivergenceError when more than 0.1% of n_paths diverged.
void check_divergence_fraction(std::size_t n_diverged, std::size_t n_paths, const char* stage);

}  // namespace rpmeas
