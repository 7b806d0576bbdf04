#include "rpmeas/response.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "rpmeas/error.hpp"
#include "rpmeas/parallel.hpp"

namespace rpmeas {

std::string to_string(Provenance p) {
  switch (p) {
    case Provenance::Direct: return "direct";
    case Provenance::FdtQg: return "fdt_qg";
    case Provenance::FdtKde: return "fdt_kde";
  }
  return "unknown";
}

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::vector<std::string> labels_of(const std::vector<Observable>& observables) {
  std::vector<std::string> out;
  for (std::size_t o = 0; o < observables.size(); ++o)
    out.push_back(observables[o].label.empty() ? "obs" + std::to_string(o) : observables[o].label);
  return out;
}

bool finite_row(std::span<const double> x) {
  for (double v : x)
    if (!std::isfinite(v)) return false;
  return true;
}

}  // namespace

// ---------------------------------------------------------------------------
// direct response

std::vector<ResponseCurve> direct_response(const PeriodicSdeModel& model,
                                           const std::vector<PerturbationSpec>& perturbations,
                                           const std::vector<Observable>& observables,
                                           const InitialCondition& phase0_cloud,
                                           const std::vector<double>& times, std::size_t n_paths,
                                           const NoiseSpec& spec, const DirectResponseOptions& options) {
  if (n_paths < 1000) throw ValidationError("n_paths", "direct response needs N >= 1000");
  if (perturbations.empty()) throw ValidationError("perturbation", "at least one perturbation required");
  if (phase0_cloud.dim != model.dim || phase0_cloud.rows() == 0)
    throw ValidationError("initial", "initial cloud does not match the model dimension");
  if (times.empty()) throw ValidationError("times", "empty output grid");
  const TimeGrid grid(spec.dt, model.period);
  std::vector<std::int64_t> marks;
  for (double t : times) {
    if (t < 0.0) throw ValidationError("times", "response times must be nonnegative");
    marks.push_back(grid.nearest(t));
  }
  if (!std::is_sorted(marks.begin(), marks.end())) throw ValidationError("times", "must be increasing");
  for (const auto& p : perturbations) {
    if (p.dim() != model.dim) throw ValidationError("perturbation.direction", "dimension mismatch");
    p.validate(grid.time(marks.back()), model.noise_dim);
  }

  std::int64_t n_start = 0;
  if (options.fast_forward && grid.aligned()) {
    double onset = std::numeric_limits<double>::infinity();
    for (const auto& p : perturbations) onset = std::min(onset, p.profile.support_start());
    if (std::isfinite(onset) && onset > 0.0) {
      const auto K = grid.steps_per_period();
      n_start = std::min(static_cast<std::int64_t>(std::floor(onset / model.period)) * K, marks.back());
      n_start -= n_start % K;
    } else if (onset == std::numeric_limits<double>::infinity()) {
      n_start = marks.back() - marks.back() % grid.steps_per_period();
    }
  }

  const std::size_t n_pert = perturbations.size(), n_obs = observables.size(), n_marks = marks.size();
  NoiseSpec path_spec = spec;
  path_spec.noise_dim = model.noise_dim;

  struct Acc {
    std::vector<ScalarMoments> diff;  // [pert][mark][obs]
    std::size_t diverged = 0;
  };
  auto make = [&] { return Acc{std::vector<ScalarMoments>(n_pert * n_marks * n_obs), 0}; };
  auto body = [&](Acc& acc, std::size_t i) {
    Stepper base(model, grid);
    std::vector<Stepper> pert;
    pert.reserve(n_pert);
    for (const auto& p : perturbations) pert.emplace_back(model, grid, &p);
    NoiseStream stream(path_spec, options.stream_base + i);
    std::vector<double> x(phase0_cloud.row(i).begin(), phase0_cloud.row(i).end());
    std::vector<std::vector<double>> xp(n_pert, x);
    std::vector<double> dw(static_cast<std::size_t>(model.noise_dim));
    std::vector<double> local(n_pert * n_marks * n_obs, 0.0);
    std::int64_t n = n_start;
    try {
      for (std::size_t c = 0; c < n_marks; ++c) {
        if (marks[c] <= n_start) continue;  // both copies still coincide
        for (; n < marks[c]; ++n) {
          stream.next(dw);
          base.step(n, x, dw);
          for (std::size_t k = 0; k < n_pert; ++k) pert[k].step(n, xp[k], dw);
        }
        const double tc = grid.coefficient_time(n);
        for (std::size_t k = 0; k < n_pert; ++k)
          for (std::size_t o = 0; o < n_obs; ++o)
            local[(k * n_marks + c) * n_obs + o] = observables[o](tc, xp[k]) - observables[o](tc, x);
      }
    } catch (const DivergenceError&) {
      ++acc.diverged;
      return;
    }
    for (std::size_t j = 0; j < local.size(); ++j) acc.diff[j].add(local[j]);
  };
  auto merge = [&](Acc& into, Acc&& from) {
    for (std::size_t j = 0; j < into.diff.size(); ++j) into.diff[j].merge(from.diff[j]);
    into.diverged += from.diverged;
  };
  const Acc total = block_reduce<Acc>(n_paths, options.block_size, make, body, merge);
  check_divergence_fraction(total.diverged, n_paths, "direct_response");

  std::vector<ResponseCurve> out(n_pert);
  for (std::size_t k = 0; k < n_pert; ++k) {
    auto& rc = out[k];
    rc.provenance = Provenance::Direct;
    rc.labels = labels_of(observables);
    rc.n_samples = n_paths - total.diverged;
    rc.n_diverged = total.diverged;
    for (auto m : marks) rc.times.push_back(grid.time(m));
    rc.values.assign(n_obs, std::vector<double>(n_marks, 0.0));
    rc.std_error.assign(n_obs, std::vector<double>(n_marks, 0.0));
    for (std::size_t c = 0; c < n_marks; ++c)
      for (std::size_t o = 0; o < n_obs; ++o) {
        const auto& s = total.diff[(k * n_marks + c) * n_obs + o];
        rc.values[o][c] = s.mean();
        rc.std_error[o][c] = s.stderr_of_mean();
      }
  }
  return out;
}

ResponseCurve direct_response(const PeriodicSdeModel& model, const PerturbationSpec& perturbation,
                              const std::vector<Observable>& observables, const InitialCondition& phase0_cloud,
                              const std::vector<double>& times, std::size_t n_paths, const NoiseSpec& spec,
                              const DirectResponseOptions& options) {
  return direct_response(model, std::vector<PerturbationSpec>{perturbation}, observables, phase0_cloud, times,
                         n_paths, spec, options)
      .front();
}

// ---------------------------------------------------------------------------
// response tables

namespace {

struct TableLayout {
  std::int64_t K = 0;        // steps per period
  std::size_t J = 0;         // phase bins
  std::int64_t h = 0;        // steps per lag stride
  std::int64_t g = 0;        // strides between consecutive bases
  std::size_t L = 0;         // max lag in strides
  std::size_t P = 0;         // base periods
  std::size_t n_traj = 0;
  std::int64_t total = 0;    // steps per trajectory
  std::size_t stride_phases = 0;
  std::size_t n_bases() const { return P * J; }
};

TableLayout make_layout(const TimeGrid& grid, const ResponseTableOptions& o) {
  TableLayout l;
  l.K = grid.steps_per_period();
  if (o.n_phase_bins <= 0 || l.K % o.n_phase_bins != 0)
    throw GridError("n_phase_bins must divide the steps per period");
  if (o.lag_stride_steps <= 0) throw ValidationError("lag_stride_steps", "must be positive");
  l.J = static_cast<std::size_t>(o.n_phase_bins);
  l.h = o.lag_stride_steps;
  const std::int64_t bin_steps = l.K / o.n_phase_bins;
  if (bin_steps % l.h != 0) throw GridError("the lag stride must divide the phase-bin spacing");
  l.g = bin_steps / l.h;
  if (!(o.max_lag > 0.0)) throw ValidationError("max_lag", "must be positive");
  l.L = static_cast<std::size_t>(std::ceil(o.max_lag / (static_cast<double>(l.h) * grid.dt()) - 1e-9));
  if (o.n_periods <= 0) throw ValidationError("n_periods", "must be positive");
  if (o.n_trajectories < 2) throw ValidationError("n_trajectories", "need at least 2");
  l.P = static_cast<std::size_t>(o.n_periods);
  l.n_traj = o.n_trajectories;
  l.total = static_cast<std::int64_t>(l.P) * l.K + static_cast<std::int64_t>(l.L) * l.h;
  l.stride_phases = static_cast<std::size_t>(l.K / l.h);
  return l;
}

// Pass 1: base states of every trajectory, per-stride-phase observable means (used only to
// centre phi) and the divergence mask.
struct BaseSamples {
  std::vector<double> bases;        // [bin][traj][period][d]
  std::vector<double> phi_mean;     // [stride phase][obs]
  std::vector<char> diverged;       // per trajectory
  std::size_t n_diverged = 0;
};

BaseSamples collect_bases(const PeriodicSdeModel& model, const TimeGrid& grid, const TableLayout& l,
                          const InitialCondition& start, const std::vector<Observable>& observables,
                          const NoiseSpec& path_spec, const ResponseTableOptions& o) {
  const auto d = static_cast<std::size_t>(model.dim);
  const std::size_t n_obs = observables.size();
  BaseSamples out;
  out.bases.assign(l.J * l.n_traj * l.P * d, kNaN);
  out.diverged.assign(l.n_traj, 0);
  struct Acc {
    std::vector<ScalarMoments> phi;
    std::size_t diverged = 0;
  };
  auto make = [&] { return Acc{std::vector<ScalarMoments>(l.stride_phases * n_obs), 0}; };
  auto body = [&](Acc& acc, std::size_t i) {
    Stepper stepper(model, grid);
    NoiseStream stream(path_spec, o.stream_base + i);
    std::vector<double> x(start.row(i).begin(), start.row(i).end());
    std::vector<double> dw(static_cast<std::size_t>(model.noise_dim));
    std::vector<double> phi(l.stride_phases * n_obs, 0.0);
    std::vector<double> mine(l.n_bases() * d);
    const std::int64_t base_end = static_cast<std::int64_t>(l.P) * l.K;
    try {
      for (std::int64_t n = 0;; ++n) {
        if (n % l.h == 0 && n < base_end) {
          const std::int64_t s = n / l.h;
          const auto sp = static_cast<std::size_t>(s % static_cast<std::int64_t>(l.stride_phases));
          const double tc = grid.coefficient_time(n);
          for (std::size_t k = 0; k < n_obs; ++k) phi[sp * n_obs + k] += observables[k](tc, x);
          if (s % l.g == 0) std::copy(x.begin(), x.end(), mine.begin() + static_cast<std::ptrdiff_t>((s / l.g) * static_cast<std::int64_t>(d)));
        }
        if (n == l.total) break;
        stream.next(dw);
        stepper.step(n, x, dw);
      }
    } catch (const DivergenceError&) {
      out.diverged[i] = 1;
      ++acc.diverged;
      return;
    }
    for (std::size_t q = 0; q < l.n_bases(); ++q) {
      const std::size_t j = q % l.J, p = q / l.J;
      std::copy(mine.begin() + static_cast<std::ptrdiff_t>(q * d), mine.begin() + static_cast<std::ptrdiff_t>((q + 1) * d),
                out.bases.begin() + static_cast<std::ptrdiff_t>(((j * l.n_traj + i) * l.P + p) * d));
    }
    // each stride phase is visited once per base period
    for (std::size_t k = 0; k < phi.size(); ++k) acc.phi[k].add(phi[k] / static_cast<double>(l.P));
  };
  auto merge = [&](Acc& into, Acc&& from) {
    for (std::size_t k = 0; k < into.phi.size(); ++k) into.phi[k].merge(from.phi[k]);
    into.diverged += from.diverged;
  };
  const Acc total = block_reduce<Acc>(l.n_traj, o.block_size, make, body, merge);
  check_divergence_fraction(total.diverged, l.n_traj, "response table");
  out.n_diverged = total.diverged;
  out.phi_mean.resize(total.phi.size());
  for (std::size_t k = 0; k < total.phi.size(); ++k) out.phi_mean[k] = total.phi[k].mean();
  return out;
}

// Pass 2: sliding-window correlation sums with scores fixed per base.
ResponseTable accumulate_table(const PeriodicSdeModel& model, const TimeGrid& grid, const TableLayout& l,
                               const InitialCondition& start, const std::vector<Observable>& observables,
                               const NoiseSpec& path_spec, const ResponseTableOptions& o,
                               const BaseSamples& bs, const std::vector<double>& scores, Provenance prov) {
  const std::size_t n_obs = observables.size(), n_lags = l.L + 1;
  const std::size_t cells = l.J * n_lags * n_obs;
  struct Acc {
    std::vector<double> s_bphi, s_bphi2, s_phi, s_b, s_b2;
    std::vector<std::size_t> n;
  };
  auto make = [&] {
    return Acc{std::vector<double>(cells, 0.0), std::vector<double>(cells, 0.0), std::vector<double>(cells, 0.0),
               std::vector<double>(l.J, 0.0),   std::vector<double>(l.J, 0.0),   std::vector<std::size_t>(l.J, 0)};
  };
  auto body = [&](Acc& acc, std::size_t i) {
    if (bs.diverged[i]) return;
    std::vector<double> b(l.n_bases());
    for (std::size_t q = 0; q < l.n_bases(); ++q) b[q] = scores[((q % l.J) * l.n_traj + i) * l.P + q / l.J];
    Stepper stepper(model, grid);
    NoiseStream stream(path_spec, o.stream_base + i);
    std::vector<double> x(start.row(i).begin(), start.row(i).end());
    std::vector<double> dw(static_cast<std::size_t>(model.noise_dim));
    std::vector<double> phi(n_obs);
    const auto last_base = static_cast<std::int64_t>(l.n_bases()) - 1;
    const auto L = static_cast<std::int64_t>(l.L);
    for (std::int64_t n = 0;; ++n) {
      if (n % l.h == 0) {
        const std::int64_t s = n / l.h;
        const auto sp = static_cast<std::size_t>(s % static_cast<std::int64_t>(l.stride_phases));
        const double tc = grid.coefficient_time(n);
        for (std::size_t k = 0; k < n_obs; ++k) phi[k] = observables[k](tc, x) - bs.phi_mean[sp * n_obs + k];
        const std::int64_t q_hi = std::min(s / l.g, last_base);
        const std::int64_t q_lo = s > L ? (s - L + l.g - 1) / l.g : 0;
        for (std::int64_t q = q_lo; q <= q_hi; ++q) {
          const auto lag = static_cast<std::size_t>(s - q * l.g);
          const std::size_t j = static_cast<std::size_t>(q) % l.J;
          const double bq = b[static_cast<std::size_t>(q)];
          const std::size_t at = (j * n_lags + lag) * n_obs;
          for (std::size_t k = 0; k < n_obs; ++k) {
            const double v = bq * phi[k];
            acc.s_bphi[at + k] += v;
            acc.s_bphi2[at + k] += v * v;
            acc.s_phi[at + k] += phi[k];
          }
          if (lag == 0) {
            acc.s_b[j] += bq;
            acc.s_b2[j] += bq * bq;
            ++acc.n[j];
          }
        }
      }
      if (n == l.total) break;
      stream.next(dw);
      stepper.step(n, x, dw);
    }
  };
  auto merge = [&](Acc& into, Acc&& from) {
    for (std::size_t c = 0; c < cells; ++c) {
      into.s_bphi[c] += from.s_bphi[c];
      into.s_bphi2[c] += from.s_bphi2[c];
      into.s_phi[c] += from.s_phi[c];
    }
    for (std::size_t j = 0; j < l.J; ++j) {
      into.s_b[j] += from.s_b[j];
      into.s_b2[j] += from.s_b2[j];
      into.n[j] += from.n[j];
    }
  };
  const Acc total = block_reduce<Acc>(l.n_traj, o.block_size, make, body, merge);

  ResponseTable t;
  t.provenance = prov;
  t.period = model.period;
  t.lag_step = static_cast<double>(l.h) * grid.dt();
  for (std::size_t j = 0; j < l.J; ++j) t.phases.push_back(grid.time(static_cast<std::int64_t>(j) * l.g * l.h));
  for (std::size_t i = 0; i < n_lags; ++i) t.lags.push_back(static_cast<double>(i) * t.lag_step);
  t.labels = labels_of(observables);
  t.R.assign(cells, 0.0);
  t.std_error.assign(cells, 0.0);
  t.n_diverged = bs.n_diverged;
  t.samples_per_phase = total.n.empty() ? 0 : total.n[0];
  for (std::size_t j = 0; j < l.J; ++j) {
    const auto n = static_cast<double>(total.n[j]);
    const double mb = total.s_b[j] / n;
    t.score_mean.push_back(mb);
    t.score_std_error.push_back(std::sqrt(std::max(0.0, total.s_b2[j] / n - mb * mb) / n));
    for (std::size_t i = 0; i < n_lags; ++i)
      for (std::size_t k = 0; k < n_obs; ++k) {
        const std::size_t c = (j * n_lags + i) * n_obs + k;
        const double m = total.s_bphi[c] / n;
        t.R[c] = m - mb * (total.s_phi[c] / n);
        t.std_error[c] = std::sqrt(std::max(0.0, total.s_bphi2[c] / n - m * m) / n);
      }
  }
  return t;
}

InitialCondition start_cloud(const EmpiricalPeriodicMeasure& measure, int dim) {
  std::vector<double> rows;
  const auto d = static_cast<std::size_t>(dim);
  for (std::size_t i = 0; i + d <= measure.final_states.size(); i += d) {
    std::span<const double> x(measure.final_states.data() + i, d);
    if (finite_row(x)) rows.insert(rows.end(), x.begin(), x.end());
  }
  if (rows.empty()) throw ValidationError("measure", "no finite phase-0 states to start from");
  return InitialCondition::cloud(dim, std::move(rows));
}

void check_inputs(const PeriodicSdeModel& model, const EmpiricalPeriodicMeasure& measure,
                  const PerturbationSpec& perturbation, const std::vector<Observable>& observables) {
  if (measure.dim != model.dim) throw ValidationError("measure", "dimension does not match the model");
  if (perturbation.dim() != model.dim) throw ValidationError("perturbation.direction", "dimension mismatch");
  if (observables.empty()) throw ValidationError("observables", "at least one observable required");
}

template <class ScoreFactory>
ResponseTable build_table(const PeriodicSdeModel& model, const EmpiricalPeriodicMeasure& measure,
                          const std::vector<Observable>& observables, const ResponseTableOptions& options,
                          const NoiseSpec& spec, Provenance prov, ScoreFactory&& factory) {
  const TimeGrid grid(spec.dt, model.period);
  const auto layout = make_layout(grid, options);
  const auto start = start_cloud(measure, model.dim);
  NoiseSpec path_spec = spec;
  path_spec.noise_dim = model.noise_dim;
  const auto bs = collect_bases(model, grid, layout, start, observables, path_spec, options);
  const auto d = static_cast<std::size_t>(model.dim);
  const std::size_t per_bin = layout.n_traj * layout.P;
  std::vector<double> scores(layout.J * per_bin, kNaN);
  // one surrogate per bin, built from the bin's finite base samples in trajectory order
  parallel_for(layout.J, [&](std::size_t j) {
    const double r = grid.time(static_cast<std::int64_t>(j) * layout.g * layout.h);
    std::vector<double> pts;
    pts.reserve(per_bin * d);
    for (std::size_t s = 0; s < per_bin; ++s) {
      std::span<const double> x(bs.bases.data() + (j * per_bin + s) * d, d);
      if (finite_row(x)) pts.insert(pts.end(), x.begin(), x.end());
    }
    const auto score = factory(r, pts);
    for (std::size_t s = 0; s < per_bin; ++s) {
      std::span<const double> x(bs.bases.data() + (j * per_bin + s) * d, d);
      if (finite_row(x)) scores[j * per_bin + s] = score(x);
    }
  });
  return accumulate_table(model, grid, layout, start, observables, path_spec, options, bs, scores, prov);
}

}  // namespace

ResponseTable fdt_response_function_qg(const PeriodicSdeModel& model, const EmpiricalPeriodicMeasure& measure,
                                       const PerturbationSpec& perturbation,
                                       const std::vector<Observable>& observables,
                                       const ResponseTableOptions& options, const NoiseSpec& spec) {
  check_inputs(model, measure, perturbation, observables);
  if (perturbation.has_diffusion())
    throw ValidationError("perturbation.diffusion_direction",
                          "diffusion perturbations are unsupported by the Gaussian surrogate; use the kde variant");
  const int dim = model.dim;
  auto factory = [&](double r, const std::vector<double>& pts) {
    Moments mo(dim);
    for (std::size_t i = 0; i < pts.size(); i += static_cast<std::size_t>(dim))
      mo.add(std::span<const double>(pts.data() + i, static_cast<std::size_t>(dim)));
    if (mo.count() < 2) throw DegenerateError("too few base samples for a Gaussian surrogate");
    const GaussianDensity g(mo.mean(), mo.covariance());
    return [g, r, &perturbation, dim](std::span<const double> x) {
      std::vector<double> b(static_cast<std::size_t>(dim)), sc(static_cast<std::size_t>(dim));
      perturbation.drift(r, x, b);
      g.score(x, sc);
      double v = -perturbation.drift_divergence(r, x);
      for (int i = 0; i < dim; ++i) v -= b[static_cast<std::size_t>(i)] * sc[static_cast<std::size_t>(i)];
      return v;
    };
  };
  return build_table(model, measure, observables, options, spec, Provenance::FdtQg, factory);
}

ResponseTable fdt_response_function_kde(const PeriodicSdeModel& model, const EmpiricalPeriodicMeasure& measure,
                                        const PerturbationSpec& perturbation,
                                        const std::vector<Observable>& observables,
                                        const ResponseTableOptions& options, const NoiseSpec& spec) {
  check_inputs(model, measure, perturbation, observables);
  const int dim = model.dim;
  const auto d = static_cast<std::size_t>(dim), m = static_cast<std::size_t>(model.noise_dim);
  auto factory = [&](double r, const std::vector<double>& pts) {
    if (pts.size() < 2 * d) throw DegenerateError("too few base samples for a kernel density");
    KernelDensity kde(dim, pts, options.bandwidth, options.max_centers);
    // frak_a = sigma H^T + H sigma^T at phase r; must be the same at every base point
    std::vector<double> a(d * d, 0.0);
    const bool diffusion = perturbation.has_diffusion();
    if (diffusion) {
      auto frak_a = [&](std::span<const double> x) {
        std::vector<double> s(d * m), h(s.size()), out(d * d, 0.0);
        model.eval_diffusion(r, x, s);
        perturbation.diffusion(r, x, h);
        for (std::size_t i = 0; i < d; ++i)
          for (std::size_t j = 0; j < d; ++j)
            for (std::size_t k = 0; k < m; ++k)
              out[i * d + j] += s[i * m + k] * h[j * m + k] + h[i * m + k] * s[j * m + k];
        return out;
      };
      a = frak_a(std::span<const double>(pts.data(), d));
      const std::size_t n_pts = pts.size() / d;
      for (std::size_t probe : {n_pts / 2, n_pts - 1}) {
        const auto other = frak_a(std::span<const double>(pts.data() + probe * d, d));
        for (std::size_t k = 0; k < a.size(); ++k)
          if (std::abs(other[k] - a[k]) > 1e-12 * (1.0 + std::abs(a[k])))
            throw ValidationError("perturbation.diffusion_direction",
                                  "kde variant needs sigma H^T + H sigma^T independent of x");
      }
    }
    return [kde = std::move(kde), a, r, diffusion, &perturbation, d](std::span<const double> x) {
      std::vector<double> b(d), grad(d), hess(d * d);
      const double rho = kde.evaluate(x, grad, hess);
      if (!(rho > 0.0)) return 0.0;
      perturbation.drift(r, x, b);
      double v = -perturbation.drift_divergence(r, x);
      for (std::size_t i = 0; i < d; ++i) v -= b[i] * grad[i] / rho;
      if (diffusion)
        for (std::size_t k = 0; k < d * d; ++k) v += 0.5 * a[k] * hess[k] / rho;
      return v;
    };
  };
  return build_table(model, measure, observables, options, spec, Provenance::FdtKde, factory);
}

namespace {

struct Bracket {
  std::size_t lo = 0, hi = 0;
  double w = 0.0;
};

Bracket lag_bracket(const ResponseTable& t, double lag) {
  if (lag < -1e-9 * t.lag_step) throw WindowError("negative lag");
  const double u = std::max(0.0, lag) / t.lag_step;
  const std::size_t n = t.lags.size();
  if (u > static_cast<double>(n - 1) + 1e-6)
    throw WindowError("lag " + std::to_string(lag) + " beyond the table's max lag " + std::to_string(t.max_lag()));
  const auto lo = std::min(static_cast<std::size_t>(std::floor(u)), n - 1);
  const std::size_t hi = std::min(lo + 1, n - 1);
  return {lo, hi, std::clamp(u - static_cast<double>(lo), 0.0, 1.0)};
}

Bracket phase_bracket(const ResponseTable& t, double r) {
  const std::size_t J = t.phases.size();
  double ph = std::fmod(r, t.period);
  if (ph < 0.0) ph += t.period;
  const double u = ph / t.period * static_cast<double>(J);
  auto lo = static_cast<std::size_t>(std::floor(u));
  double w = u - static_cast<double>(lo);
  if (lo >= J) {
    lo = J - 1;
    w = 1.0;
  }
  return {lo, (lo + 1) % J, w};
}

template <class Get>
double bilinear(const ResponseTable& t, double lag, double r, Get&& get) {
  const auto a = lag_bracket(t, lag);
  const auto b = phase_bracket(t, r);
  const double v0 = (1.0 - a.w) * get(b.lo, a.lo) + a.w * get(b.lo, a.hi);
  const double v1 = (1.0 - a.w) * get(b.hi, a.lo) + a.w * get(b.hi, a.hi);
  return (1.0 - b.w) * v0 + b.w * v1;
}

}  // namespace

double ResponseTable::interpolate(double lag, double r, std::size_t obs) const {
  return bilinear(*this, lag, r, [&](std::size_t j, std::size_t i) { return R[index(j, i, obs)]; });
}

double ResponseTable::interpolate_std_error(double lag, double r, std::size_t obs) const {
  return bilinear(*this, lag, r, [&](std::size_t j, std::size_t i) { return std_error[index(j, i, obs)]; });
}

ResponseCurve convolve_response(const ResponseTable& table, const TimeProfile& profile, double epsilon,
                                const std::vector<double>& times, const ConvolutionOptions& options) {
  if (table.lags.empty() || table.phases.empty()) throw ValidationError("table", "empty response table");
  ResponseCurve rc;
  rc.provenance = table.provenance;
  rc.labels = table.labels;
  rc.times = times;
  rc.n_samples = table.samples_per_phase;
  const std::size_t n_obs = table.n_obs();
  rc.values.assign(n_obs, std::vector<double>(times.size(), 0.0));
  rc.std_error.assign(n_obs, std::vector<double>(times.size(), 0.0));
  const double dr = table.lag_step;
  const double start = std::max(0.0, profile.support_start());
  for (std::size_t c = 0; c < times.size(); ++c) {
    const double t = times[c];
    if (t < 0.0) throw ValidationError("times", "must be nonnegative");
    if (epsilon == 0.0 || !(start < t)) continue;
    // nodes 0, dr, 2 dr, ... below t, then t itself
    const auto n_full = static_cast<std::int64_t>(std::floor(t / dr * (1.0 + 1e-12)));
    const auto first = std::max<std::int64_t>(0, static_cast<std::int64_t>(std::floor(start / dr)) - 1);
    std::vector<double> nodes;
    for (std::int64_t i = first; i <= n_full; ++i) nodes.push_back(static_cast<double>(i) * dr);
    if (nodes.empty() || t - nodes.back() > 1e-9 * dr) nodes.push_back(t);
    else nodes.back() = t;
    std::vector<double> acc(n_obs, 0.0), var(n_obs, 0.0);
    for (std::size_t k = 0; k < nodes.size(); ++k) {
      const double r = nodes[k];
      const double th = profile(r);
      if (th == 0.0) continue;
      double w = 0.0;
      if (k > 0) w += 0.5 * (nodes[k] - nodes[k - 1]);
      if (k + 1 < nodes.size()) w += 0.5 * (nodes[k + 1] - nodes[k]);
      const double lag = t - r;
      if (lag > table.max_lag() * (1.0 + 1e-9) + 1e-12) {
        if (options.truncate_beyond_max_lag) continue;
        throw WindowError("response table does not cover lag " + std::to_string(lag) + " (max lag " +
                          std::to_string(table.max_lag()) + ")");
      }
      for (std::size_t o = 0; o < n_obs; ++o) {
        acc[o] += w * th * table.interpolate(lag, r, o);
        const double se = w * th * table.interpolate_std_error(lag, r, o);
        var[o] += se * se;
      }
    }
    for (std::size_t o = 0; o < n_obs; ++o) {
      rc.values[o][c] = epsilon * acc[o];
      rc.std_error[o][c] = std::abs(epsilon) * std::sqrt(var[o]);
    }
  }
  return rc;
}

CurveComparison compare_curves(const ResponseCurve& direct, const ResponseCurve& predicted, double t_lo,
                               double t_hi) {
  if (direct.times.size() != predicted.times.size())
    throw ValidationError("times", "curves are not on a common grid");
  for (std::size_t c = 0; c < direct.times.size(); ++c)
    if (std::abs(direct.times[c] - predicted.times[c]) > 1e-9 * std::max(1.0, std::abs(direct.times[c])))
      throw ValidationError("times", "curves are not on a common grid");
  if (direct.values.size() != predicted.values.size())
    throw ValidationError("observables", "curves have different observables");
  CurveComparison out;
  out.labels = direct.labels;
  std::vector<std::size_t> idx;
  for (std::size_t c = 0; c < direct.times.size(); ++c) {
    const double t = direct.times[c];
    if (t >= t_lo - 1e-9 && t <= t_hi + 1e-9) {
      idx.push_back(c);
      out.window_times.push_back(t);
    }
  }
  if (idx.empty()) throw ValidationError("window", "no grid times inside the window");
  for (std::size_t o = 0; o < direct.values.size(); ++o) {
    double num = 0.0, den = 0.0, sup = 0.0;
    std::vector<double> z;
    for (auto c : idx) {
      const double e = direct.values[o][c] - predicted.values[o][c];
      num += e * e;
      den += direct.values[o][c] * direct.values[o][c];
      sup = std::max(sup, std::abs(e));
      const double s = std::hypot(direct.std_error[o][c], predicted.std_error[o][c]);
      z.push_back(s > 0.0 ? e / s : (e == 0.0 ? 0.0 : std::copysign(std::numeric_limits<double>::infinity(), e)));
    }
    const bool undefined = !(den > 0.0);
    out.undefined.push_back(undefined);
    out.relative_l2.push_back(undefined ? kNaN : std::sqrt(num / den));
    out.sup_error.push_back(sup);
    out.z_scores.push_back(std::move(z));
    if (!undefined) out.max_relative_l2 = std::max(out.max_relative_l2, out.relative_l2.back());
  }
  return out;
}

// ---------------------------------------------------------------------------
// FDT II on the OU oracle

FdtIICheck fdt2_check_ou(const OuParams& params, const FdtIIOptions& options, const NoiseSpec& spec) {
  const auto model = build_ou(params);
  const TimeGrid grid(spec.dt, model.period);
  const auto K = grid.steps_per_period();
  if (options.n_phases <= 0 || K % options.n_phases != 0)
    throw GridError("n_phases must divide the steps per period");
  const auto h = static_cast<std::int64_t>(options.h_steps);
  if (h <= 0) throw ValidationError("h_steps", "must be positive");
  const auto lag_steps = grid.exact(options.lag_step);
  if (lag_steps < h) throw ValidationError("lag_step", "must be at least the finite-difference step");
  const auto n_lags = static_cast<std::size_t>(std::floor(options.max_lag / options.lag_step + 1e-9)) + 1;
  if (options.n_trajectories < 2 || options.n_periods <= 0)
    throw ValidationError("n_paths", "need at least 2 trajectories and one period");

  const double a = params.a;
  const double sigma_st = ou_stationary_variance(params);
  const double dt = grid.dt();
  const auto n_ph = static_cast<std::size_t>(options.n_phases);
  const auto P = static_cast<std::int64_t>(options.n_periods);
  const std::int64_t burn = K;
  const std::int64_t total = burn + P * K + static_cast<std::int64_t>(n_lags - 1) * lag_steps + h;
  auto W = [&](std::int64_t n, double x) { return (x - ou_periodic_mean(params, grid.time(n))) / (a * sigma_st); };

  const std::size_t cells = n_ph * n_lags;
  struct Acc {
    std::vector<ScalarMoments> corr, deriv;
    std::size_t diverged = 0;
  };
  auto make = [&] { return Acc{std::vector<ScalarMoments>(cells), std::vector<ScalarMoments>(cells), 0}; };
  NoiseSpec path_spec = spec;
  path_spec.noise_dim = 1;
  auto body = [&](Acc& acc, std::size_t i) {
    Stepper stepper(model, grid);
    NoiseStream stream(path_spec, options.stream_base + i);
    // exact periodic law at time 0, then one period on the Euler chain
    std::vector<double> x = {ou_periodic_mean(params, 0.0) + std::sqrt(sigma_st) * stream.standard_normal()};
    std::vector<double> path(static_cast<std::size_t>(total + 1));
    std::vector<double> dw(1);
    try {
      for (std::int64_t n = 0; n <= total; ++n) {
        path[static_cast<std::size_t>(n)] = x[0];
        if (n == total) break;
        stream.next(dw);
        stepper.step(n, x, dw);
      }
    } catch (const DivergenceError&) {
      ++acc.diverged;
      return;
    }
    for (std::int64_t p = 0; p < P; ++p)
      for (std::size_t k = 0; k < n_ph; ++k) {
        const std::int64_t b = burn + p * K + static_cast<std::int64_t>(k) * (K / options.n_phases);
        const double w0 = W(b, path[static_cast<std::size_t>(b)]);
        const double wm = W(b - h, path[static_cast<std::size_t>(b - h)]);
        const double wp = W(b + h, path[static_cast<std::size_t>(b + h)]);
        for (std::size_t li = 0; li < n_lags; ++li) {
          const std::int64_t t = b + static_cast<std::int64_t>(li) * lag_steps;
          const double phi = path[static_cast<std::size_t>(t)] - ou_periodic_mean(params, grid.time(t));
          const double dk = li == 0 ? (w0 - wm) / (static_cast<double>(h) * dt)
                                    : (wp - wm) / (2.0 * static_cast<double>(h) * dt);
          acc.corr[k * n_lags + li].add(phi * w0);
          acc.deriv[k * n_lags + li].add(phi * dk);
        }
      }
  };
  auto merge = [&](Acc& into, Acc&& from) {
    for (std::size_t c = 0; c < cells; ++c) {
      into.corr[c].merge(from.corr[c]);
      into.deriv[c].merge(from.deriv[c]);
    }
    into.diverged += from.diverged;
  };
  const Acc total_acc = block_reduce<Acc>(options.n_trajectories, options.block_size, make, body, merge);
  check_divergence_fraction(total_acc.diverged, options.n_trajectories, "fdt2_check_ou");

  FdtIICheck out;
  const double hh = static_cast<double>(h) * dt;
  for (std::size_t k = 0; k < n_ph; ++k) out.phases.push_back(grid.time(static_cast<std::int64_t>(k) * (K / options.n_phases)));
  for (std::size_t li = 0; li < n_lags; ++li) {
    const double lag = grid.time(static_cast<std::int64_t>(li) * lag_steps);
    out.lags.push_back(lag);
    out.analytic.push_back(std::exp(-a * lag));
    // one-sided at lag 0: h |d2| / 2; central: h^2 |d3| / 6 over [r - h, r + h]
    out.fd_error.push_back(li == 0 ? 0.5 * hh * a : hh * hh * a * a / 6.0 * std::exp(-a * (lag - hh)));
  }
  out.samples_per_phase = total_acc.corr.empty() ? 0 : total_acc.corr[0].count();
  out.max_excess = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < n_ph; ++k)
    for (std::size_t li = 0; li < n_lags; ++li) {
      const auto& c = total_acc.corr[k * n_lags + li];
      const auto& dv = total_acc.deriv[k * n_lags + li];
      out.correlation.push_back(c.mean());
      out.derivative.push_back(dv.mean());
      out.std_error.push_back(dv.stderr_of_mean());
      const double res = std::abs(dv.mean() - out.analytic[li]);
      out.residual.push_back(res);
      out.max_excess = std::max(out.max_excess, res - (3.0 * dv.stderr_of_mean() + out.fd_error[li]));
    }
  out.passes = out.max_excess <= 0.0;
  return out;
}

}  // namespace rpmeas
