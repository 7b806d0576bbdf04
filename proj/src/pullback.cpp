#include "rpmeas/pullback.hpp"

#include <cmath>
#include <limits>

#include "rpmeas/error.hpp"
#include "rpmeas/parallel.hpp"
#include "rpmeas/stats.hpp"

namespace rpmeas {

namespace {

std::vector<std::int64_t> phase_offsets(const TimeGrid& grid, int n_phases) {
  const auto k = grid.steps_per_period();
  if (n_phases <= 0 || k % n_phases != 0)
    throw GridError("phases: " + std::to_string(n_phases) + " does not divide the " +
                    std::to_string(k) + " steps of one period");
  std::vector<std::int64_t> out;
  for (int j = 0; j < n_phases; ++j) out.push_back(j * (k / n_phases));
  return out;
}

bool finite_row(std::span<const double> x) {
  for (double v : x)
    if (!std::isfinite(v)) return false;
  return true;
}

}  // namespace

std::vector<double> pullback_states(const PeriodicSdeModel& model, std::span<const double> x_init,
                                    std::size_t n_realizations, const NoiseSpec& spec,
                                    const PullbackOptions& options, int n_periods,
                                    std::int64_t shift_periods) {
  if (static_cast<int>(x_init.size()) != model.dim) throw ValidationError("x_init", "dimension mismatch");
  const TimeGrid grid(spec.dt, model.period);
  const auto offsets = phase_offsets(grid, options.n_phases);
  const auto k = grid.steps_per_period();
  const auto d = static_cast<std::size_t>(model.dim);
  const std::size_t n_phases = offsets.size();
  NoiseSpec s = spec;
  s.noise_dim = model.noise_dim;

  std::vector<double> out(n_phases * n_realizations * d, std::numeric_limits<double>::quiet_NaN());
  std::vector<unsigned char> diverged(n_realizations, 0);
  parallel_for(n_realizations, [&](std::size_t i) {
    Stepper stepper(model, grid);
    ChunkedNoise noise(s, options.stream_base + i, k, shift_periods * k);
    std::vector<double> x(x_init.begin(), x_init.end());
    std::int64_t at = -static_cast<std::int64_t>(n_periods) * k;
    try {
      for (std::size_t j = 0; j < n_phases; ++j) {
        stepper.advance(x, at, offsets[j], noise);
        at = offsets[j];
        std::copy(x.begin(), x.end(), out.begin() + static_cast<std::ptrdiff_t>((j * n_realizations + i) * d));
      }
    } catch (const DivergenceError&) {
      diverged[i] = 1;
      for (std::size_t j = 0; j < n_phases; ++j)
        std::fill_n(out.begin() + static_cast<std::ptrdiff_t>((j * n_realizations + i) * d), d,
                    std::numeric_limits<double>::quiet_NaN());
    }
  });
  std::size_t n_div = 0;
  for (auto v : diverged) n_div += v;
  check_divergence_fraction(n_div, n_realizations, "pullback");
  return out;
}

RandomPeriodicPathEstimate pullback_path(const PeriodicSdeModel& model, std::span<const double> x_init,
                                         std::size_t n_realizations, const NoiseSpec& spec,
                                         const PullbackOptions& options) {
  if (n_realizations < 2) throw ValidationError("n_paths", "pullback needs at least 2 realizations");
  if (options.n_max_periods < 2) throw ValidationError("n_max_periods", "must be at least 2");
  const TimeGrid grid(spec.dt, model.period);
  const auto offsets = phase_offsets(grid, options.n_phases);
  const auto d = static_cast<std::size_t>(model.dim);
  const std::size_t n_phases = offsets.size();

  RandomPeriodicPathEstimate est;
  est.n_realizations = n_realizations;
  est.dim = model.dim;
  for (auto o : offsets) est.phases.push_back(grid.time(o));

  std::vector<double> prev = pullback_states(model, x_init, n_realizations, spec, options, 1);
  for (int n = 1; 2 * n <= options.n_max_periods; n *= 2) {
    std::vector<double> next = pullback_states(model, x_init, n_realizations, spec, options, 2 * n);
    ResidualPoint point;
    point.n_periods = n;
    double sum_sq = 0.0;
    std::size_t count = 0;
    for (std::size_t j = 0; j < n_phases; ++j) {
      double acc = 0.0;
      std::size_t used = 0;
      for (std::size_t i = 0; i < n_realizations; ++i) {
        std::span<const double> a(next.data() + (j * n_realizations + i) * d, d);
        std::span<const double> b(prev.data() + (j * n_realizations + i) * d, d);
        if (!finite_row(a) || !finite_row(b)) continue;
        double diff = 0.0;
        for (std::size_t c = 0; c < d; ++c) {
          diff += (a[c] - b[c]) * (a[c] - b[c]);
          sum_sq += a[c] * a[c];
        }
        acc += diff;
        ++used;
        ++count;
      }
      point.per_phase.push_back(used > 0 ? acc / static_cast<double>(used) : std::numeric_limits<double>::infinity());
      point.max = std::max(point.max, point.per_phase.back());
    }
    est.scale = count > 0 ? std::sqrt(sum_sq / static_cast<double>(count)) : 0.0;
    est.tol = options.tol > 0.0 ? options.tol : options.tol_relative * est.scale * est.scale;
    est.residual_curve.push_back(point);
    est.n_periods = 2 * n;
    est.states = std::move(next);
    if (point.max < est.tol) {
      est.converged = true;
      break;
    }
    prev = est.states;
  }
  return est;
}

PeriodicityCheck periodicity_identity_check(const RandomPeriodicPathEstimate& estimate,
                                            const PeriodicSdeModel& model, std::span<const double> x_init,
                                            const NoiseSpec& spec, const PullbackOptions& options) {
  const TimeGrid grid(spec.dt, model.period);
  const auto offsets = phase_offsets(grid, options.n_phases);
  const auto k = grid.steps_per_period();
  const auto d = static_cast<std::size_t>(model.dim);
  const std::size_t n = estimate.n_realizations;
  if (offsets.size() != estimate.phases.size() || estimate.dim != model.dim)
    throw ValidationError("estimate", "does not match the model / phase grid");
  const auto shifted = pullback_states(model, x_init, n, spec, options, estimate.n_periods, 1);
  NoiseSpec s = spec;
  s.noise_dim = model.noise_dim;

  std::vector<double> err(offsets.size() * n, std::numeric_limits<double>::quiet_NaN());
  parallel_for(n, [&](std::size_t i) {
    Stepper stepper(model, grid);
    for (std::size_t j = 0; j < offsets.size(); ++j) {
      const auto s0 = estimate.state(j, i);
      if (!finite_row(s0)) continue;
      ChunkedNoise noise(s, options.stream_base + i, k);
      std::vector<double> x(s0.begin(), s0.end());
      try {
        stepper.advance(x, offsets[j], offsets[j] + k, noise);
      } catch (const DivergenceError&) {
        continue;
      }
      double diff = 0.0;
      for (std::size_t c = 0; c < d; ++c) {
        const double v = x[c] - shifted[(j * n + i) * d + c];
        diff += v * v;
      }
      err[j * n + i] = diff;
    }
  });
  PeriodicityCheck out;
  out.tol = estimate.tol;
  double sum = 0.0;
  std::size_t used = 0;
  for (double e : err) {
    if (!std::isfinite(e)) continue;
    sum += e;
    ++used;
    out.invariance_max = std::max(out.invariance_max, e);
  }
  out.shift_residual = used > 0 ? sum / static_cast<double>(used) : std::numeric_limits<double>::infinity();
  out.passes = out.shift_residual <= 3.0 * out.tol;
  return out;
}

ContractionCurve two_point_contraction(const PeriodicSdeModel& model, std::span<const double> xi,
                                       std::span<const double> eta, double p, double horizon,
                                       std::size_t n_pairs, const NoiseSpec& spec,
                                       std::int64_t record_every, std::size_t n_traces,
                                       std::uint64_t stream_base) {
  if (!(p >= 1.0)) throw ValidationError("p", "requires p >= 1");
  if (n_pairs < 2) throw ValidationError("n_paths", "requires at least 2 pairs");
  if (static_cast<int>(xi.size()) != model.dim || static_cast<int>(eta.size()) != model.dim)
    throw ValidationError("x0", "dimension mismatch");
  if (record_every <= 0) throw ValidationError("record_every", "must be positive");
  const TimeGrid grid(spec.dt, model.period);
  const auto n_end = grid.nearest(horizon);
  const auto d = static_cast<std::size_t>(model.dim);
  std::vector<std::int64_t> marks;
  for (std::int64_t n = 0; n <= n_end; n += record_every) marks.push_back(n);
  const std::size_t n_marks = marks.size();
  n_traces = std::min(n_traces, n_pairs);
  NoiseSpec s = spec;
  s.noise_dim = model.noise_dim;

  ContractionCurve curve;
  curve.p = p;
  curve.traces.assign(n_traces, std::vector<double>(n_marks, 0.0));
  struct Acc {
    std::vector<ScalarMoments> m;
    std::size_t diverged = 0;
  };
  auto body = [&](Acc& acc, std::size_t i) {
    Stepper sx(model, grid), sy(model, grid);
    NoiseStream stream(s, stream_base + i);
    std::vector<double> x(xi.begin(), xi.end()), y(eta.begin(), eta.end());
    std::vector<double> dw(static_cast<std::size_t>(model.noise_dim));
    std::vector<double> values(n_marks);
    try {
      std::int64_t at = 0;
      for (std::size_t c = 0; c < n_marks; ++c) {
        for (; at < marks[c]; ++at) {
          stream.next(dw);
          sx.step(at, x, dw);
          sy.step(at, y, dw);
        }
        double r2 = 0.0;
        for (std::size_t j = 0; j < d; ++j) r2 += (x[j] - y[j]) * (x[j] - y[j]);
        values[c] = std::pow(std::sqrt(r2), p);
      }
    } catch (const DivergenceError&) {
      ++acc.diverged;
      return;
    }
    for (std::size_t c = 0; c < n_marks; ++c) acc.m[c].add(values[c]);
    if (i < n_traces) curve.traces[i] = values;
  };
  auto total = block_reduce<Acc>(
      n_pairs, 16, [&] { return Acc{std::vector<ScalarMoments>(n_marks), 0}; }, body,
      [&](Acc& into, Acc&& from) {
        for (std::size_t c = 0; c < n_marks; ++c) into.m[c].merge(from.m[c]);
        into.diverged += from.diverged;
      });
  check_divergence_fraction(total.diverged, n_pairs, "two_point_contraction");
  for (std::size_t c = 0; c < n_marks; ++c) {
    curve.times.push_back(grid.time(marks[c]));
    curve.mean.push_back(total.m[c].mean());
    curve.std_error.push_back(total.m[c].stderr_of_mean());
  }
  return curve;
}

double contraction_rate(const ContractionCurve& curve, double t_lo, double t_hi) {
  std::vector<double> t, y;
  for (std::size_t i = 0; i < curve.times.size(); ++i) {
    if (curve.times[i] < t_lo || curve.times[i] > t_hi) continue;
    if (!(curve.mean[i] > 0.0))
      throw ValidationError("curve", "nonpositive value at t = " + std::to_string(curve.times[i]));
    t.push_back(curve.times[i]);
    y.push_back(std::log(curve.mean[i]));
  }
  return fit_line(t, y).slope;
}

}  // namespace rpmeas
