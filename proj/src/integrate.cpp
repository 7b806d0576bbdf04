#include "rpmeas/integrate.hpp"

#include <algorithm>
#include <limits>
#include <string>

#include "rpmeas/parallel.hpp"

namespace rpmeas {

TimeGrid::TimeGrid(double dt, double period) : dt_(dt), period_(period) {
  if (!(dt > 0.0) || !std::isfinite(dt)) throw ValidationError("dt", "must be positive");
  if (!(period > 0.0) || !std::isfinite(period)) throw ValidationError("period", "must be positive");
  const double k = std::round(period / dt);
  if (k >= 1.0 && std::abs(k * dt - period) <= 1e-9 * period)
    steps_per_period_ = static_cast<std::int64_t>(k);
}

std::int64_t TimeGrid::steps_per_period() const {
  if (steps_per_period_ <= 0)
    throw GridError("period " + std::to_string(period_) + " is not a multiple of dt = " +
                    std::to_string(dt_));
  return steps_per_period_;
}

Stepper::Stepper(const PeriodicSdeModel& model, const TimeGrid& grid,
                 const PerturbationSpec* perturbation)
    : model_(&model), grid_(grid), pert_(perturbation), d_(model.dim), m_(model.noise_dim) {
  const auto d = static_cast<std::size_t>(d_), m = static_cast<std::size_t>(m_);
  b_.resize(d);
  sig_.resize(d * m);
  dw_.resize(m);
  if (pert_) {
    if (pert_->dim() != d_) throw ValidationError("perturbation.direction", "dimension mismatch");
    pb_.resize(d);
    if (pert_->has_diffusion()) ph_.resize(d * m);
  }
}

void Stepper::step(std::int64_t n, std::span<double> x, std::span<const double> dw) {
  const double tc = grid_.coefficient_time(n);
  const double dt = grid_.dt();
  model_->eval_drift(tc, x, b_);
  model_->eval_diffusion(tc, x, sig_);
  if (pert_) {
    const double a = pert_->alpha(grid_.time(n));
    if (a != 0.0) {
      pert_->drift(tc, x, pb_);
      for (int i = 0; i < d_; ++i) b_[i] += a * pb_[i];
      if (pert_->has_diffusion()) {
        pert_->diffusion(tc, x, ph_);
        for (std::size_t k = 0; k < sig_.size(); ++k) sig_[k] += a * ph_[k];
      }
    }
  }
  double norm2 = 0.0;
  for (int i = 0; i < d_; ++i) {
    double incr = b_[i] * dt;
    const double* row = sig_.data() + static_cast<std::size_t>(i) * static_cast<std::size_t>(m_);
    for (int k = 0; k < m_; ++k) incr += row[k] * dw[k];
    x[i] += incr;
    norm2 += x[i] * x[i];
  }
  if (!(norm2 <= kDivergenceRadius * kDivergenceRadius))
    throw DivergenceError(n + 1, "state left |x| <= 1e9 at grid step " + std::to_string(n + 1));
}

namespace {

TimeGrid grid_for(const PeriodicSdeModel& model, const WienerPath& path) {
  if (path.noise_dim() != model.noise_dim)
    throw ValidationError("noise_dim", "path and model noise dimensions differ");
  return TimeGrid(path.dt(), model.period);
}

void require_state(const PeriodicSdeModel& model, std::span<const double> x) {
  if (static_cast<int>(x.size()) != model.dim) throw ValidationError("x0", "dimension mismatch");
}

}  // namespace

std::vector<double> flow(const PeriodicSdeModel& model, double s, double t,
                         std::span<const double> x0, const WienerPath& path) {
  require_state(model, x0);
  const TimeGrid grid = grid_for(model, path);
  const auto n0 = grid.exact(s), n1 = grid.exact(t);
  if (n1 < n0) throw ValidationError("t", "flow requires s <= t");
  if (!path.covers(n0, n1)) throw WindowError("noise path does not cover [s, t]");
  std::vector<double> x(x0.begin(), x0.end());
  Stepper stepper(model, grid);
  stepper.advance(x, n0, n1, PathNoise{path});
  return x;
}

std::pair<std::vector<double>, std::vector<double>> flow_composition_check(
    const PeriodicSdeModel& model, double s, double u, double t, std::span<const double> x0,
    const WienerPath& path) {
  if (!(s <= u && u <= t)) throw ValidationError("u", "requires s <= u <= t");
  auto direct = flow(model, s, t, x0, path);
  auto mid = flow(model, s, u, x0, path);
  auto composed = flow(model, u, t, mid, path);
  return {std::move(direct), std::move(composed)};
}

double periodic_flow_identity(const PeriodicSdeModel& model, double s, double duration,
                              std::span<const double> x0, const WienerPath& path) {
  require_state(model, x0);
  const TimeGrid grid = grid_for(model, path);
  const auto k = grid.steps_per_period();
  const auto n0 = grid.exact(s), len = grid.exact(duration);
  if (len < 0) throw ValidationError("duration", "must be nonnegative");
  if (!path.covers(n0, n0 + len + k)) throw WindowError("noise path does not cover [s, s + duration + tau]");
  const WienerPath shifted = shift(path, k);

  std::vector<double> late(x0.begin(), x0.end()), early(x0.begin(), x0.end());
  Stepper a(model, grid), b(model, grid);
  std::vector<double> dw(static_cast<std::size_t>(model.noise_dim));
  double residual = 0.0;
  for (std::int64_t j = 0; j < len; ++j) {
    a.advance(late, n0 + k + j, n0 + k + j + 1, PathNoise{path});
    b.advance(early, n0 + j, n0 + j + 1, PathNoise{shifted});
    for (std::size_t i = 0; i < late.size(); ++i) residual = std::max(residual, std::abs(late[i] - early[i]));
  }
  return residual;
}

std::pair<std::vector<double>, std::vector<double>> two_point_flow(
    const PeriodicSdeModel& model, double s, double t, std::span<const double> x0,
    std::span<const double> y0, const WienerPath& path) {
  return {flow(model, s, t, x0, path), flow(model, s, t, y0, path)};
}

InitialCondition InitialCondition::point(std::span<const double> x) {
  return InitialCondition{static_cast<int>(x.size()), std::vector<double>(x.begin(), x.end())};
}

InitialCondition InitialCondition::cloud(int dim, std::vector<double> rows) {
  if (dim <= 0 || rows.empty() || rows.size() % static_cast<std::size_t>(dim) != 0)
    throw ValidationError("initial", "cloud size must be a positive multiple of dim");
  return InitialCondition{dim, std::move(rows)};
}

void check_divergence_fraction(std::size_t n_diverged, std::size_t n_paths, const char* stage) {
  if (static_cast<double>(n_diverged) > 1e-3 * static_cast<double>(n_paths))
    throw DivergenceError(-1, std::string(stage) + ": " + std::to_string(n_diverged) + " of " +
                                  std::to_string(n_paths) +
                                  " trajectories diverged (more than 0.1%)");
}

namespace {

struct EnsembleAcc {
  std::vector<Moments> state;
  std::vector<std::vector<ScalarMoments>> obs;
  std::size_t diverged = 0;
};

EnsembleResult run_ensemble(const PeriodicSdeModel& model, double s, double t,
                            const InitialCondition& initial, std::size_t n_paths,
                            const NoiseSpec& spec, const std::vector<Observable>& observables,
                            const std::vector<double>& checkpoint_times,
                            const EnsembleOptions& options, bool parallel) {
  if (n_paths < 2) throw ValidationError("n_paths", "ensemble needs at least 2 members");
  if (initial.dim != model.dim || initial.rows() == 0)
    throw ValidationError("initial", "initial states do not match the model dimension");
  const TimeGrid grid(spec.dt, model.period);
  const auto n0 = grid.nearest(s), n1 = grid.nearest(t);
  if (n1 < n0) throw ValidationError("t", "ensemble requires s <= t");

  EnsembleResult result;
  result.n_paths = n_paths;
  std::vector<std::int64_t> marks;
  for (double c : checkpoint_times) {
    const auto n = grid.nearest(c);
    if (n < n0 || n > n1) throw ValidationError("checkpoint_times", "checkpoint outside [s, t]");
    marks.push_back(n);
  }
  std::vector<std::size_t> order(marks.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return marks[a] < marks[b]; });

  const auto d = static_cast<std::size_t>(model.dim);
  const std::size_t n_marks = marks.size(), n_obs = observables.size();
  result.checkpoints.resize(n_marks);
  for (std::size_t c = 0; c < n_marks; ++c) {
    auto& cp = result.checkpoints[c];
    cp.index = marks[c];
    cp.time = grid.time(marks[c]);
    if (options.keep_samples) cp.samples.assign(n_paths * d, std::numeric_limits<double>::quiet_NaN());
  }
  NoiseSpec path_spec = spec;
  path_spec.noise_dim = model.noise_dim;

  auto make = [&] {
    EnsembleAcc acc;
    acc.state.assign(n_marks, Moments(model.dim));
    acc.obs.assign(n_marks, std::vector<ScalarMoments>(n_obs));
    return acc;
  };
  // Stepper scratch is per call; members of one block share nothing else.
  auto body = [&](EnsembleAcc& acc, std::size_t i) {
    Stepper stepper(model, grid);
    NoiseStream stream(path_spec, options.stream_base + i);
    std::vector<double> x(initial.row(i).begin(), initial.row(i).end());
    std::vector<double> recorded(n_marks * d);
    std::int64_t at = n0;
    try {
      for (std::size_t c : order) {
        stepper.advance(x, at, marks[c], StreamNoise{stream});
        at = marks[c];
        std::copy(x.begin(), x.end(), recorded.begin() + static_cast<std::ptrdiff_t>(c * d));
      }
    } catch (const DivergenceError&) {
      ++acc.diverged;
      return;
    }
    for (std::size_t c = 0; c < n_marks; ++c) {
      std::span<const double> xc(recorded.data() + c * d, d);
      acc.state[c].add(xc);
      const double tc = grid.coefficient_time(marks[c]);
      for (std::size_t o = 0; o < n_obs; ++o) acc.obs[c][o].add(observables[o](tc, xc));
      if (options.keep_samples)
        std::copy(xc.begin(), xc.end(), result.checkpoints[c].samples.begin() + static_cast<std::ptrdiff_t>(i * d));
    }
  };
  auto merge = [&](EnsembleAcc& into, EnsembleAcc&& from) {
    for (std::size_t c = 0; c < n_marks; ++c) {
      into.state[c].merge(from.state[c]);
      for (std::size_t o = 0; o < n_obs; ++o) into.obs[c][o].merge(from.obs[c][o]);
    }
    into.diverged += from.diverged;
  };

  EnsembleAcc total;
  if (parallel) {
    total = block_reduce<EnsembleAcc>(n_paths, options.block_size, make, body, merge);
  } else {
    total = make();
    for (std::size_t lo = 0; lo < n_paths; lo += options.block_size) {
      EnsembleAcc acc = make();
      for (std::size_t i = lo; i < std::min(n_paths, lo + options.block_size); ++i) body(acc, i);
      merge(total, std::move(acc));
    }
  }
  check_divergence_fraction(total.diverged, n_paths, "ensemble_flow");
  result.n_diverged = total.diverged;
  for (std::size_t c = 0; c < n_marks; ++c) {
    result.checkpoints[c].state = std::move(total.state[c]);
    result.checkpoints[c].observables = std::move(total.obs[c]);
  }
  return result;
}

}  // namespace

EnsembleResult ensemble_flow(const PeriodicSdeModel& model, double s, double t,
                             const InitialCondition& initial, std::size_t n_paths,
                             const NoiseSpec& spec, const std::vector<Observable>& observables,
                             const std::vector<double>& checkpoint_times,
                             const EnsembleOptions& options) {
  return run_ensemble(model, s, t, initial, n_paths, spec, observables, checkpoint_times, options, true);
}

EnsembleResult ensemble_flow_serial(const PeriodicSdeModel& model, double s, double t,
                                    const InitialCondition& initial, std::size_t n_paths,
                                    const NoiseSpec& spec,
                                    const std::vector<Observable>& observables,
                                    const std::vector<double>& checkpoint_times,
                                    const EnsembleOptions& options) {
  return run_ensemble(model, s, t, initial, n_paths, spec, observables, checkpoint_times, options, false);
}

}  // namespace rpmeas
