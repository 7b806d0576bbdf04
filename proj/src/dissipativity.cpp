#include "rpmeas/dissipativity.hpp"

#include <cmath>
#include <limits>
#include <random>

#include <Eigen/Dense>

#include "rpmeas/error.hpp"
#include "rpmeas/integrate.hpp"

namespace rpmeas {

namespace {

constexpr int kEnvelopeSamples = 1024;
constexpr double kInf = std::numeric_limits<double>::infinity();

std::vector<std::vector<double>> grid_points(int dim, const DissipativityGrid& grid) {
  std::vector<std::vector<double>> dirs;
  for (int i = 0; i < dim; ++i)
    for (double s : {1.0, -1.0}) {
      std::vector<double> e(static_cast<std::size_t>(dim), 0.0);
      e[static_cast<std::size_t>(i)] = s;
      dirs.push_back(e);
    }
  std::mt19937_64 rng(grid.seed);
  std::normal_distribution<double> n01;
  for (int k = 0; k < grid.n_directions; ++k) {
    std::vector<double> v(static_cast<std::size_t>(dim));
    double norm = 0.0;
    for (auto& c : v) {
      c = n01(rng);
      norm += c * c;
    }
    norm = std::sqrt(norm);
    for (auto& c : v) c /= norm;
    dirs.push_back(v);
  }
  std::vector<std::vector<double>> pts;
  for (double r : grid.radii) {
    if (r == 0.0) {
      pts.emplace_back(static_cast<std::size_t>(dim), 0.0);
      continue;
    }
    for (const auto& v : dirs) {
      std::vector<double> x(v);
      for (auto& c : x) c *= r;
      pts.push_back(x);
    }
  }
  return pts;
}

double hs_norm2(const PeriodicSdeModel& model, double t, std::span<const double> x) {
  std::vector<double> s(static_cast<std::size_t>(model.dim * model.noise_dim));
  model.eval_diffusion(t, x, s);
  double acc = 0.0;
  for (double v : s) acc += v * v;
  return acc;
}

double dot_drift(const PeriodicSdeModel& model, double t, std::span<const double> x) {
  std::vector<double> b(static_cast<std::size_t>(model.dim));
  model.eval_drift(t, x, b);
  double acc = 0.0;
  for (std::size_t i = 0; i < b.size(); ++i) acc += b[i] * x[i];
  return acc;
}

double norm2(std::span<const double> x) {
  double acc = 0.0;
  for (double v : x) acc += v * v;
  return acc;
}

bool exceeds(double lhs, double rhs, double margin) { return lhs > rhs + margin * (1.0 + std::abs(rhs)); }

}  // namespace

GrowthEnvelope GrowthEnvelope::constant(double l_b1, double l_b2, double l_sigma, double period) {
  return GrowthEnvelope{[l_b1](double) { return l_b1; }, [l_b2](double) { return l_b2; },
                        [l_sigma](double) { return l_sigma; }, period};
}

double envelope_sup(const std::function<double(double)>& f, double period) {
  double s = -kInf;
  for (int k = 0; k < kEnvelopeSamples; ++k) s = std::max(s, f(period * k / kEnvelopeSamples));
  return s;
}

double envelope_inf(const std::function<double(double)>& f, double period) {
  double s = kInf;
  for (int k = 0; k < kEnvelopeSamples; ++k) s = std::min(s, f(period * k / kEnvelopeSamples));
  return s;
}

ViolationReport verify_dissipative(const PeriodicSdeModel& model, const GrowthEnvelope& envelope,
                                   const DissipativityGrid& grid) {
  ViolationReport report;
  const auto pts = grid_points(model.dim, grid);
  for (int it = 0; it < grid.n_times; ++it) {
    const double t = model.period * it / grid.n_times;
    const double lb1 = envelope.L_b1(t), lb2 = envelope.L_b2(t), ls = envelope.L_sigma(t);
    for (const auto& x : pts) {
      ++report.n_checked;
      const double r2 = norm2(x);
      DissipativityViolation v;
      v.t = t;
      v.drift_lhs = dot_drift(model, t, x);
      v.drift_rhs = lb1 - lb2 * r2;
      v.hs_lhs = hs_norm2(model, t, x);
      v.hs_rhs = ls * (1.0 + r2);
      if (exceeds(v.drift_lhs, v.drift_rhs, grid.margin) || exceeds(v.hs_lhs, v.hs_rhs, grid.margin)) {
        v.x = x;
        report.violations.push_back(std::move(v));
      }
    }
  }
  return report;
}

MomentBoundReport coeffs_ap_bp(const GrowthEnvelope& envelope, double p) {
  if (!(p >= 1.0)) throw ValidationError("p", "moment bounds need p >= 1");
  MomentBoundReport r;
  r.p = p;
  r.p_used = p < 2.0 ? 2.0 * p : p;
  const double q = r.p_used;
  const double c = std::pow(2.0, q / 2.0 - 1.0);
  const auto& e = envelope;
  r.a = q * c * envelope_sup([&](double t) { return e.L_b1(t) + 0.5 * e.L_sigma(t) * (q - 1.0); }, e.period);
  r.b = q * envelope_inf(
                [&](double t) {
                  return e.L_b2(t) - c * e.L_b1(t) - 0.5 * (c + 1.0) * e.L_sigma(t) * (q - 1.0);
                },
                e.period);
  r.passes = r.b > 0.0;
  r.bound = r.passes ? r.a / r.b : kInf;
  return r;
}

SharpBounds sharp_bounds(const GrowthEnvelope& envelope, std::optional<double> kappa) {
  const auto& e = envelope;
  SharpBounds s;
  s.a2 = 2.0 * envelope_sup([&](double t) { return e.L_b1(t) + 0.5 * e.L_sigma(t); }, e.period);
  s.b2 = 2.0 * envelope_inf([&](double t) { return e.L_b2(t) - 0.5 * e.L_sigma(t); }, e.period);
  s.passes2 = s.b2 > 0.0;
  s.bound2 = s.passes2 ? s.a2 / s.b2 : kInf;

  const double A = envelope_sup([&](double t) { return e.L_b1(t) + e.L_sigma(t); }, e.period);
  const double B = envelope_inf([&](double t) { return e.L_b2(t) - e.L_sigma(t); }, e.period);
  s.optimal_available = B > 0.0;
  if (s.optimal_available) {
    s.ratio_AB = A / B;
    s.nominal_optimal_kappa = std::sqrt(12.0 * A / B);
    s.nominal_min_ratio = std::sqrt(27.0) * std::pow(A / B, 1.5);
    s.exact_optimal_kappa = std::sqrt(4.0 * A / (9.0 * B));
    s.exact_min_ratio = std::pow(A / B, 1.5);
  } else {
    s.note = "L_b2 <= L_sigma: optimal-kappa branch unavailable";
  }
  if (kappa) {
    if (!(*kappa > 0.0)) throw ValidationError("kappa", "must be positive");
    s.kappa = *kappa;
  } else {
    s.kappa = s.optimal_available ? s.nominal_optimal_kappa : 1.0;
  }
  const double k2 = s.kappa * s.kappa;
  s.a3 = 3.0 * s.kappa * A;
  s.b3 = 3.0 * envelope_inf(
                   [&](double t) {
                     return e.L_b2(t) - e.L_sigma(t) - 4.0 / (27.0 * k2) * (e.L_b1(t) + e.L_sigma(t));
                   },
                   e.period);
  s.passes3 = s.b3 > 0.0;
  s.ratio_at_kappa = s.passes3 ? s.a3 / s.b3 : kInf;
  return s;
}

std::vector<double> moment_bound_curve(double a, double b, double initial_moment,
                                       std::span<const double> times) {
  if (!(b > 0.0)) throw ValidationError("b_p", "moment bound curve needs b_p > 0");
  std::vector<double> out;
  out.reserve(times.size());
  for (double t : times) {
    const double decay = std::exp(-b * t);
    out.push_back(decay * initial_moment + (a / b) * (1.0 - decay));
  }
  return out;
}

LorenzEnvelope lorenz_envelope(const LorenzParams& p, double kappa1, double kappa3, double c_bar) {
  if (!(kappa1 > 0.0) || !(kappa3 > 0.0)) throw ValidationError("kappa", "kappa1, kappa3 must be positive");
  LorenzEnvelope out;
  out.F1_bar = lorenz_forcing_sup(p);
  const double beta2 = p.beta_bar * p.beta_bar;
  out.L_b1 = kappa1 * out.F1_bar + kappa3 * p.gamma_bar / beta2 * (p.rho_bar + p.alpha_bar);
  out.L_b2 = std::min({p.beta_bar, p.alpha_bar * (1.0 - out.F1_bar / (4.0 * p.alpha_bar * kappa1)),
                       p.gamma_bar * (1.0 - (p.rho_bar + p.alpha_bar) / (4.0 * beta2 * kappa3))});
  out.L_sigma = p.sigma_bar;
  out.C_A = std::min({p.alpha_bar, p.beta_bar, p.gamma_bar});
  out.C_bar = c_bar;
  out.envelope = GrowthEnvelope::constant(out.L_b1, out.L_b2, out.L_sigma, p.tau);
  out.valid = out.L_b2 > 0.0;
  if (!out.valid) {
    out.message = "L_b2 <= 0 for these kappas; increase kappa1 and kappa3";
    out.constraint = -kInf;
    return out;
  }
  if (out.L_b2 > out.L_sigma) {
    out.constraint = out.C_A - 0.5 * p.sigma_bar - c_bar * std::sqrt((out.L_b1 + out.L_sigma) / (out.L_b2 - out.L_sigma));
  } else {
    out.constraint = -kInf;
    out.message = "L_b2 <= L_sigma: contraction constraint undefined";
  }
  out.constraint_ok = out.constraint > 0.0;
  return out;
}

HasminskiiReport hasminskii_check(const PeriodicSdeModel& model, const std::function<double(double)>& L_b,
                                  const std::function<double(double)>& L_sigma, double p, double horizon,
                                  const DissipativityGrid& grid) {
  if (!(p > 1.0)) throw ValidationError("p", "requires p > 1");
  if (!(horizon > 0.0)) throw ValidationError("horizon", "must be positive");
  HasminskiiReport r;
  const auto pts = grid_points(model.dim, grid);
  for (int it = 0; it < grid.n_times; ++it) {
    const double t = model.period * it / grid.n_times;
    for (const auto& x : pts) {
      const double r2 = norm2(x);
      if (exceeds(dot_drift(model, t, x), L_b(t) * (1.0 + r2), grid.margin) ||
          exceeds(hs_norm2(model, t, x), L_sigma(t) * (1.0 + r2), grid.margin))
        ++r.growth_violations;
    }
  }
  r.growth_ok = r.growth_violations == 0;
  auto C = [&](double u) { return L_b(u) + 0.5 * (p - 1.0) * L_sigma(u); };
  // Trapezoid with 1024 nodes per period.
  const double h = model.period / kEnvelopeSamples;
  double mean = 0.0;
  for (int k = 0; k < kEnvelopeSamples; ++k) mean += 0.5 * (C(k * h) + C((k + 1) * h)) * h;
  r.period_mean_C = mean / model.period;
  const auto n = static_cast<std::int64_t>(std::ceil(horizon / h));
  double acc = 0.0;
  r.max_exp_integral = 1.0;
  for (std::int64_t k = 0; k < n; ++k) {
    const double u0 = static_cast<double>(k) * h, u1 = std::min(horizon, u0 + h);
    acc += 0.5 * (C(u0) + C(u1)) * (u1 - u0);
    r.max_exp_integral = std::max(r.max_exp_integral, std::exp(acc));
  }
  r.integral = acc;
  r.integral_bounded = r.period_mean_C <= 1e-12;
  r.passes = r.growth_ok && r.integral_bounded;
  return r;
}

MomentComparison simulated_moment_vs_bound(const PeriodicSdeModel& model, const GrowthEnvelope& envelope,
                                           double p, double horizon, std::size_t n_paths,
                                           const NoiseSpec& spec, std::span<const double> x0,
                                           int n_checkpoints) {
  MomentComparison out;
  out.p = p;
  bool have = false;
  if (p == 2.0 || p == 3.0) {
    const auto s = sharp_bounds(envelope);
    if (p == 2.0 && s.passes2) {
      out.a = s.a2;
      out.b = s.b2;
      have = out.sharp = true;
    } else if (p == 3.0 && s.passes3) {
      out.a = s.a3;
      out.b = s.b3;
      have = out.sharp = true;
    }
  }
  if (!have) {
    const auto g = coeffs_ap_bp(envelope, p);
    if (g.p_used != p) throw ValidationError("p", "simulated comparison needs p >= 2");
    out.a = g.a;
    out.b = g.b;
  }
  if (!(out.b > 0.0)) throw ValidationError("b_p", "no moment certificate (b_p <= 0) for this envelope");

  std::vector<double> cps;
  for (int k = 0; k <= n_checkpoints; ++k) cps.push_back(horizon * k / n_checkpoints);
  EnsembleOptions opts;
  opts.keep_samples = true;
  opts.stream_base = streams::kDiagnostic;
  const auto res = ensemble_flow(model, 0.0, horizon, InitialCondition::point(x0), n_paths, spec, {}, cps, opts);
  const auto d = static_cast<std::size_t>(model.dim);
  for (const auto& cp : res.checkpoints) {
    ScalarMoments m;
    for (std::size_t i = 0; i < n_paths; ++i) {
      std::span<const double> x(cp.samples.data() + i * d, d);
      if (!std::isfinite(x[0])) continue;
      m.add(std::pow(std::sqrt(norm2(x)), p));
    }
    out.times.push_back(cp.time);
    out.simulated.push_back(m.mean());
    out.std_error.push_back(m.stderr_of_mean());
  }
  out.bound = moment_bound_curve(out.a, out.b, std::pow(std::sqrt(norm2(x0)), p), out.times);
  out.holds = true;
  out.worst_margin = -kInf;
  for (std::size_t i = 0; i < out.times.size(); ++i) {
    const double slack = out.simulated[i] - out.bound[i] - 3.0 * out.std_error[i];
    // rounding slack at t = 0 where simulated == bound exactly
    if (slack > 1e-12 * (1.0 + std::abs(out.bound[i]))) out.holds = false;
    out.worst_margin = std::max(out.worst_margin, (out.simulated[i] - out.bound[i]) / std::max(out.std_error[i], 1e-300));
  }
  return out;
}

SpanRankReport diffusion_span_rank(const PeriodicSdeModel& model, double t, std::span<const double> points) {
  SpanRankReport r;
  const auto d = static_cast<std::size_t>(model.dim), m = static_cast<std::size_t>(model.noise_dim);
  r.min_rank = model.dim;
  std::vector<double> s(d * m);
  for (std::size_t i = 0; i + d <= points.size(); i += d) {
    int rank = 0;
    if (m > 0) {
      model.eval_diffusion(t, points.subspan(i, d), s);
      Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> mat(
          s.data(), static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(m));
      Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(mat);
      qr.setThreshold(1e-12);
      rank = static_cast<int>(qr.rank());
    }
    r.ranks.push_back(rank);
    r.min_rank = std::min(r.min_rank, rank);
    if (rank < model.dim) r.deficient.push_back(i / d);
  }
  if (r.ranks.empty()) r.min_rank = 0;
  return r;
}

}  // namespace rpmeas
