#include "rpmeas/model.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "rpmeas/error.hpp"

namespace rpmeas {

namespace {

void require_positive(double v, const char* field) {
  if (!(v > 0.0) || !std::isfinite(v)) throw ValidationError(field, "must be positive and finite");
}

void require_dim(std::span<const double> x, int dim, const char* what) {
  if (static_cast<int>(x.size()) != dim)
    throw ValidationError(what, "dimension mismatch: expected " + std::to_string(dim) + ", got " +
                                    std::to_string(x.size()));
}

}  // namespace

LorenzParams LorenzParams::regime1() { return LorenzParams{}; }

LorenzParams LorenzParams::regime2() {
  LorenzParams p;
  p.alpha_bar = 10.0;
  p.beta_bar = 1.0;
  p.gamma_bar = 8.0 / 3.0;
  p.rho_bar = 28.0;
  p.f_bar = 23.0;
  p.delta_bar = 0.9;
  p.tau = 1.0;
  p.sigma_bar = 0.2;
  return p;
}

double lorenz_forcing(const LorenzParams& p, double t) {
  return p.f_bar * (1.0 + p.delta_bar * std::sin(2.0 * std::numbers::pi * t / p.tau));
}

double lorenz_forcing_sup(const LorenzParams& p) {
  // sin attains +-1 at t = tau/4, 3tau/4; both are on the 4096-point grid.
  constexpr int n = 4096;
  double sup = 0.0;
  for (int k = 0; k < n; ++k) sup = std::max(sup, std::abs(lorenz_forcing(p, p.tau * k / n)));
  sup = std::max(sup, std::abs(p.f_bar * (1.0 + p.delta_bar)));
  sup = std::max(sup, std::abs(p.f_bar * (1.0 - p.delta_bar)));
  return sup;
}

PeriodicSdeModel build_lorenz(const LorenzParams& p) {
  require_positive(p.alpha_bar, "alpha_bar");
  require_positive(p.beta_bar, "beta_bar");
  require_positive(p.gamma_bar, "gamma_bar");
  require_positive(p.rho_bar, "rho_bar");
  require_positive(p.tau, "tau");
  if (!std::isfinite(p.f_bar)) throw ValidationError("f_bar", "must be finite");
  if (!(std::abs(p.delta_bar) <= std::abs(p.f_bar)))
    throw ValidationError("delta_bar", "requires |delta_bar| <= |f_bar|");
  if (!std::isfinite(p.sigma_bar)) throw ValidationError("sigma_bar", "must be finite");

  const double a = p.alpha_bar, b = p.beta_bar, g = p.gamma_bar;
  const double z_shift = g * (p.rho_bar + a) / (b * b);
  const double f = p.f_bar, delta = p.delta_bar, omega = 2.0 * std::numbers::pi / p.tau;
  const double s = p.sigma_bar;

  PeriodicSdeModel m;
  m.dim = 3;
  m.noise_dim = 3;
  m.period = p.tau;
  m.label = "lorenz";
  m.params = p;
  m.drift = [=](double t, std::span<const double> v, std::span<double> out) {
    const double forcing = f * (1.0 + delta * std::sin(omega * t));
    out[0] = -a * v[0] + a * v[1] + forcing;
    out[1] = -a * v[0] - b * v[1] - v[0] * v[2];
    out[2] = -g * v[2] + v[0] * v[1] - z_shift;
  };
  m.diffusion = [=](double, std::span<const double> v, std::span<double> out) {
    out[0] = s * v[0]; out[1] = 0.0;      out[2] = 0.0;
    out[3] = 0.0;      out[4] = s * v[1]; out[5] = 0.0;
    out[6] = 0.0;      out[7] = 0.0;      out[8] = s * v[2];
  };
  m.drift_jacobian = [=](double, std::span<const double> v, std::span<double> out) {
    out[0] = -a;        out[1] = a;     out[2] = 0.0;
    out[3] = -a - v[2]; out[4] = -b;    out[5] = -v[0];
    out[6] = v[1];      out[7] = v[0];  out[8] = -g;
  };
  return m;
}

PeriodicSdeModel build_ou(const OuParams& p) {
  if (!(p.a > 0.0) || !std::isfinite(p.a)) throw ValidationError("a", "mean reversion must be positive");
  require_positive(p.tau, "tau");
  if (!(p.sigma >= 0.0) || !std::isfinite(p.sigma)) throw ValidationError("sigma", "must be nonnegative");
  if (!std::isfinite(p.forcing_amp)) throw ValidationError("forcing_amp", "must be finite");
  const double a = p.a, amp = p.forcing_amp, omega = 2.0 * std::numbers::pi / p.tau, s = p.sigma;

  PeriodicSdeModel m;
  m.dim = 1;
  m.noise_dim = 1;
  m.period = p.tau;
  m.label = "ou";
  m.params = p;
  m.drift = [=](double t, std::span<const double> x, std::span<double> out) {
    out[0] = -a * x[0] + amp * std::sin(omega * t);
  };
  m.diffusion = [=](double, std::span<const double>, std::span<double> out) { out[0] = s; };
  m.drift_jacobian = [=](double, std::span<const double>, std::span<double> out) { out[0] = -a; };
  return m;
}

PeriodicSdeModel build_fhn(const FhnParams& p) {
  if (!(p.a < 1.0)) throw ValidationError("a", "requires a < 1");
  require_positive(p.beta, "beta");
  require_positive(p.tau_freq, "tau_freq");
  const double a = p.a, B1 = p.B1, B2 = p.B2, c = p.c, w = p.tau_freq;
  const double s0 = std::sqrt(2.0 / p.beta);

  PeriodicSdeModel m;
  m.dim = 2;
  m.noise_dim = 1;
  m.period = 2.0 * std::numbers::pi / p.tau_freq;
  m.label = "fhn";
  m.params = p;
  m.drift = [=](double t, std::span<const double> x, std::span<double> out) {
    out[0] = x[0] - x[1] - x[0] * x[0] * x[0] / 3.0 + B1 * std::sin(w * t);
    out[1] = a * x[0] - x[1] + c;
  };
  m.diffusion = [=](double t, std::span<const double>, std::span<double> out) {
    out[0] = s0 + B2 * std::cos(w * t);
    out[1] = 0.0;
  };
  m.drift_jacobian = [=](double, std::span<const double> x, std::span<double> out) {
    out[0] = 1.0 - x[0] * x[0]; out[1] = -1.0;
    out[2] = a;                 out[3] = -1.0;
  };
  return m;
}

PeriodicSdeModel build_polynomial(const PolynomialSpec& spec) {
  if (spec.dim <= 0) throw ValidationError("dim", "must be positive");
  if (spec.noise_dim < 0) throw ValidationError("noise_dim", "must be nonnegative");
  require_positive(spec.period, "period");
  if (static_cast<int>(spec.drift.size()) != spec.dim)
    throw ValidationError("drift", "expected one polynomial per state component");
  if (static_cast<int>(spec.diffusion.size()) != spec.dim * spec.noise_dim)
    throw ValidationError("diffusion", "expected dim * noise_dim polynomials (row-major)");
  for (const auto* group : {&spec.drift, &spec.diffusion}) {
    for (const auto& poly : *group) {
      if (poly.dim() != spec.dim) throw ValidationError("drift", "polynomial dimension mismatch");
      if (poly.degree() > 4) throw ValidationError("drift", "polynomial degree must be <= 4");
      if (std::abs(poly.period() - spec.period) > 1e-12 * spec.period)
        throw ValidationError("period", "polynomial period differs from model period");
    }
  }

  PeriodicSdeModel m;
  m.dim = spec.dim;
  m.noise_dim = spec.noise_dim;
  m.period = spec.period;
  m.label = spec.label;
  m.params = spec;
  const auto drift = spec.drift;
  const auto diffusion = spec.diffusion;
  m.drift = [drift](double t, std::span<const double> x, std::span<double> out) {
    for (std::size_t i = 0; i < drift.size(); ++i) out[i] = drift[i].value(t, x);
  };
  m.diffusion = [diffusion](double t, std::span<const double> x, std::span<double> out) {
    for (std::size_t i = 0; i < diffusion.size(); ++i) out[i] = diffusion[i].value(t, x);
  };
  const int d = spec.dim;
  m.drift_jacobian = [drift, d](double t, std::span<const double> x, std::span<double> out) {
    std::vector<double> row(static_cast<std::size_t>(d));
    for (int i = 0; i < d; ++i) {
      drift[static_cast<std::size_t>(i)].gradient(t, x, row);
      for (int j = 0; j < d; ++j) out[static_cast<std::size_t>(i * d + j)] = row[static_cast<std::size_t>(j)];
    }
  };
  return m;
}

double ou_periodic_mean(const OuParams& p, double t) {
  const double w = 2.0 * std::numbers::pi / p.tau;
  return p.forcing_amp * (p.a * std::sin(w * t) - w * std::cos(w * t)) / (p.a * p.a + w * w);
}

double ou_stationary_variance(const OuParams& p) { return p.sigma * p.sigma / (2.0 * p.a); }

double generator_apply(const PeriodicSdeModel& model, const ScalarFunction& f, double t,
                       std::span<const double> x) {
  require_dim(x, model.dim, "x");
  const auto d = static_cast<std::size_t>(model.dim);
  const auto m = static_cast<std::size_t>(model.noise_dim);
  std::vector<double> b(d), sig(d * m), grad(d), hess(d * d);
  model.eval_drift(t, x, b);
  model.eval_diffusion(t, x, sig);
  f.gradient(t, x, grad);
  f.hessian(t, x, hess);
  double out = f.time_derivative ? f.time_derivative(t, x) : 0.0;
  for (std::size_t i = 0; i < d; ++i) out += b[i] * grad[i];
  double second = 0.0;
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      double a = 0.0;
      for (std::size_t k = 0; k < m; ++k) a += sig[i * m + k] * sig[j * m + k];
      second += a * hess[i * d + j];
    }
  }
  return out + 0.5 * second;
}

double two_point_generator_apply(const PeriodicSdeModel& model, const TwoPointFunction& g,
                                 double t, std::span<const double> x, std::span<const double> y) {
  require_dim(x, model.dim, "x");
  require_dim(y, model.dim, "y");
  const auto d = static_cast<std::size_t>(model.dim);
  const auto m = static_cast<std::size_t>(model.noise_dim);
  const std::size_t n = 2 * d;
  std::vector<double> bx(d), by(d), sx(d * m), sy(d * m), grad(n), hess(n * n);
  model.eval_drift(t, x, bx);
  model.eval_drift(t, y, by);
  model.eval_diffusion(t, x, sx);
  model.eval_diffusion(t, y, sy);
  g.gradient(t, x, y, grad);
  g.hessian(t, x, y, hess);
  double out = g.time_derivative ? g.time_derivative(t, x, y) : 0.0;
  for (std::size_t i = 0; i < d; ++i) out += bx[i] * grad[i] + by[i] * grad[d + i];
  // Stacked diffusion [sigma(x); sigma(y)] driven by the same m-dimensional noise.
  auto stacked = [&](std::size_t row, std::size_t k) {
    return row < d ? sx[row * m + k] : sy[(row - d) * m + k];
  };
  double second = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double a = 0.0;
      for (std::size_t k = 0; k < m; ++k) a += stacked(i, k) * stacked(j, k);
      second += a * hess[i * n + j];
    }
  }
  return out + 0.5 * second;
}

double two_point_distance_generator(const PeriodicSdeModel& model, double p, double t,
                                    std::span<const double> x, std::span<const double> y) {
  if (!(p >= 1.0)) throw ValidationError("p", "distance fast path requires p >= 1");
  require_dim(x, model.dim, "x");
  require_dim(y, model.dim, "y");
  const auto d = static_cast<std::size_t>(model.dim);
  const auto m = static_cast<std::size_t>(model.noise_dim);
  std::vector<double> z(d), bx(d), by(d), sx(d * m), sy(d * m);
  double r2 = 0.0;
  for (std::size_t i = 0; i < d; ++i) {
    z[i] = x[i] - y[i];
    r2 += z[i] * z[i];
  }
  if (r2 == 0.0) return 0.0;
  model.eval_drift(t, x, bx);
  model.eval_drift(t, y, by);
  model.eval_diffusion(t, x, sx);
  model.eval_diffusion(t, y, sy);
  const double r = std::sqrt(r2);
  const double rp2 = std::pow(r, p - 2.0);
  double drift_term = 0.0;
  for (std::size_t i = 0; i < d; ++i) drift_term += (bx[i] - by[i]) * z[i];
  drift_term *= p * rp2;
  // Hess V = p r^{p-2} I + p (p-2) r^{p-4} z z^T
  double hs = 0.0, proj = 0.0;
  for (std::size_t k = 0; k < m; ++k) {
    double col_dot = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
      const double ds = sx[i * m + k] - sy[i * m + k];
      hs += ds * ds;
      col_dot += ds * z[i];
    }
    proj += col_dot * col_dot;
  }
  const double diffusion_term = 0.5 * (p * rp2 * hs + p * (p - 2.0) * rp2 / r2 * proj);
  return drift_term + diffusion_term;
}

}  // namespace rpmeas
