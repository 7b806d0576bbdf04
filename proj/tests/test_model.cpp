#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "rpmeas/error.hpp"
#include "rpmeas/model.hpp"

using namespace rpmeas;

namespace {

std::vector<double> drift_at(const PeriodicSdeModel& m, double t, std::vector<double> x) {
  std::vector<double> out(static_cast<std::size_t>(m.dim));
  m.eval_drift(t, x, out);
  return out;
}

ScalarFunction squared_norm(int d) {
  ScalarFunction f;
  f.value = [](double, std::span<const double> x) {
    double s = 0.0;
    for (double v : x) s += v * v;
    return s;
  };
  f.time_derivative = [](double, std::span<const double>) { return 0.0; };
  f.gradient = [](double, std::span<const double> x, std::span<double> g) {
    for (std::size_t i = 0; i < x.size(); ++i) g[i] = 2.0 * x[i];
  };
  f.hessian = [d](double, std::span<const double>, std::span<double> h) {
    for (int i = 0; i < d * d; ++i) h[static_cast<std::size_t>(i)] = (i % (d + 1) == 0) ? 2.0 : 0.0;
  };
  return f;
}

}  // namespace

TEST_CASE("lorenz drift at the origin") {
  const auto m = build_lorenz(LorenzParams::regime1());
  const auto b = drift_at(m, 0.0, {0, 0, 0});
  CHECK(b[0] == doctest::Approx(100.0).epsilon(1e-14));
  CHECK(b[1] == 0.0);
  CHECK(b[2] == doctest::Approx(-7.0 * 17.3 / 676.0).epsilon(1e-14));
  CHECK(b[2] == doctest::Approx(-0.17914).epsilon(1e-4));
  std::vector<double> sig(9, 1.0);
  m.eval_diffusion(0.3, std::vector<double>{0, 0, 0}, sig);
  for (double s : sig) CHECK(s == 0.0);
}

TEST_CASE("parameter validation names the field") {
  auto p = LorenzParams::regime1();
  p.beta_bar = -1.0;
  try {
    build_lorenz(p);
    FAIL("expected a validation error");
  } catch (const ValidationError& e) {
    CHECK(e.field() == "beta_bar");
  }
  p = LorenzParams::regime1();
  p.delta_bar = 200.0;
  CHECK_THROWS_AS(build_lorenz(p), ValidationError);
  CHECK_THROWS_AS(build_ou(OuParams{0.0, 1.0, 1.0, 1.0}), ValidationError);
  CHECK_THROWS_AS(build_fhn(FhnParams{1.5, 2.0, 0.5, 0.1, 0.0, 1.0}), ValidationError);
}

TEST_CASE("ou closed forms") {
  const auto m = build_ou(OuParams{1.0, 0.0, 1.0, 1.0});
  CHECK(drift_at(m, 0.37, {2.5})[0] == -2.5);
  std::vector<double> sig(1);
  m.eval_diffusion(0.1, std::vector<double>{4.0}, sig);
  CHECK(sig[0] == 1.0);

  const OuParams p{1.0, 1.0, 2.0 * std::numbers::pi, 1.0};
  for (double t : {0.0, 0.5, 1.7, 4.0}) {
    CHECK(ou_periodic_mean(p, t) == doctest::Approx((std::sin(t) - std::cos(t)) / 2.0).epsilon(1e-13));
    // periodic solution of m' = -a m + A sin(w t)
    const double h = 1e-5;
    const double deriv = (ou_periodic_mean(p, t + h) - ou_periodic_mean(p, t - h)) / (2 * h);
    CHECK(deriv == doctest::Approx(-ou_periodic_mean(p, t) + std::sin(t)).epsilon(1e-8));
  }
  CHECK(ou_stationary_variance(OuParams{2.0, 0.0, 1.0, 1.0}) == 0.25);
}

TEST_CASE("coefficient periodicity on a grid") {
  const std::vector<PeriodicSdeModel> models = {
      build_lorenz(LorenzParams::regime1()), build_ou(OuParams{1.0, 1.0, 1.0, 0.5}),
      build_fhn(FhnParams{})};
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-5.0, 5.0);
  for (const auto& m : models) {
    const auto d = static_cast<std::size_t>(m.dim), k = static_cast<std::size_t>(m.noise_dim);
    double worst = 0.0;
    for (int it = 0; it < 32; ++it) {
      const double t = m.period * it / 32.0;
      for (int j = 0; j < 64; ++j) {
        std::vector<double> x(d);
        for (auto& v : x) v = u(rng);
        std::vector<double> b0(d), b1(d), s0(d * k), s1(d * k);
        m.eval_drift(t, x, b0);
        m.eval_drift(t + m.period, x, b1);
        m.eval_diffusion(t, x, s0);
        m.eval_diffusion(t + m.period, x, s1);
        for (std::size_t i = 0; i < d; ++i) worst = std::max(worst, std::abs(b0[i] - b1[i]) / (1.0 + std::abs(b0[i])));
        for (std::size_t i = 0; i < d * k; ++i) worst = std::max(worst, std::abs(s0[i] - s1[i]));
      }
    }
    CHECK(worst < 1e-12);
  }
}

TEST_CASE("generator evaluations") {
  const auto ou = build_ou(OuParams{1.0, 0.0, 1.0, std::sqrt(2.0)});
  CHECK(generator_apply(ou, squared_norm(1), 0.0, std::vector<double>{1.0}) == doctest::Approx(0.0).scale(1.0));

  const auto lorenz = build_lorenz(LorenzParams::regime1());
  CHECK(generator_apply(lorenz, squared_norm(3), 0.0, std::vector<double>{1, 0, 0}) ==
        doctest::Approx(185.44).epsilon(1e-12));

  ScalarFunction one;
  one.time_derivative = [](double, std::span<const double>) { return 0.0; };
  one.gradient = [](double, std::span<const double>, std::span<double> g) { std::fill(g.begin(), g.end(), 0.0); };
  one.hessian = one.gradient;
  CHECK(generator_apply(lorenz, one, 0.4, std::vector<double>{3, -2, 5}) == 0.0);
}

TEST_CASE("generator is linear in the test function") {
  const auto m = build_fhn(FhnParams{});
  const PolyScalar f(2, m.period, {{1.0, {2, 1}, TimeMode::Cos, 1}, {-0.5, {0, 3}, TimeMode::Const, 0}});
  const PolyScalar g(2, m.period, {{2.0, {1, 0}, TimeMode::Sin, 2}, {1.0, {1, 1}, TimeMode::Const, 0}});
  std::vector<PolyTerm> combo;
  for (auto t : f.terms()) { t.coefficient *= 3.0; combo.push_back(t); }
  for (auto t : g.terms()) { t.coefficient *= -2.0; combo.push_back(t); }
  const PolyScalar h(2, m.period, combo);
  const std::vector<double> x{0.7, -1.3};
  const double lhs = generator_apply(m, to_scalar_function(h), 0.9, x);
  const double rhs = 3.0 * generator_apply(m, to_scalar_function(f), 0.9, x) -
                     2.0 * generator_apply(m, to_scalar_function(g), 0.9, x);
  CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
}

TEST_CASE("two-point generator") {
  const auto ou = build_ou(OuParams{1.5, 1.0, 1.0, 0.8});
  const std::vector<double> x{0.4}, y{-1.1};
  const double z = x[0] - y[0];
  CHECK(two_point_distance_generator(ou, 2.0, 0.2, x, y) == doctest::Approx(-2.0 * 1.5 * z * z).epsilon(1e-13));
  CHECK(two_point_distance_generator(ou, 2.0, 0.2, x, x) == 0.0);
  CHECK_THROWS_AS(two_point_distance_generator(ou, 0.5, 0.2, x, y), ValidationError);

  // general operator vs fast path for g = |x - y|^2 on the Lorenz model
  const auto lorenz = build_lorenz(LorenzParams::regime1());
  TwoPointFunction g;
  g.time_derivative = [](double, std::span<const double>, std::span<const double>) { return 0.0; };
  g.gradient = [](double, std::span<const double> a, std::span<const double> b, std::span<double> out) {
    for (std::size_t i = 0; i < 3; ++i) {
      out[i] = 2.0 * (a[i] - b[i]);
      out[3 + i] = -out[i];
    }
  };
  g.hessian = [](double, std::span<const double>, std::span<const double>, std::span<double> h) {
    std::fill(h.begin(), h.end(), 0.0);
    for (std::size_t i = 0; i < 3; ++i) {
      h[i * 6 + i] = 2.0;
      h[(i + 3) * 6 + i + 3] = 2.0;
      h[i * 6 + i + 3] = -2.0;
      h[(i + 3) * 6 + i] = -2.0;
    }
  };
  const std::vector<double> v{1.0, -2.0, 3.0}, w{0.5, 0.2, -1.0};
  CHECK(two_point_generator_apply(lorenz, g, 0.3, v, w) ==
        doctest::Approx(two_point_distance_generator(lorenz, 2.0, 0.3, v, w)).epsilon(1e-12));
  CHECK(two_point_generator_apply(lorenz, g, 0.3, v, v) == 0.0);
}

TEST_CASE("lorenz two-point contraction bound") {
  // L2 |v - w|^p <= p |v| |z|^p - p c |z|^p + 1/2 sigma^2 p (p - 1) |z|^p holds with
  // c = min(alpha, beta, gamma); with c = beta it fails already near the origin.
  const auto params = LorenzParams::regime1();
  const auto m = build_lorenz(params);
  const double c_a = std::min({params.alpha_bar, params.beta_bar, params.gamma_bar});
  auto bound = [&](double p, double c, const std::vector<double>& v, const std::vector<double>& w) {
    double nv = 0.0, nz = 0.0;
    for (int i = 0; i < 3; ++i) {
      nv += v[i] * v[i];
      nz += (v[i] - w[i]) * (v[i] - w[i]);
    }
    const double zp = std::pow(std::sqrt(nz), p);
    return p * std::sqrt(nv) * zp - p * c * zp + 0.5 * params.sigma_bar * params.sigma_bar * p * (p - 1.0) * zp;
  };
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-20.0, 20.0);
  int violations = 0;
  for (int trial = 0; trial < 2000; ++trial) {
    const double p = 1.0 + 3.0 * (trial % 4) / 3.0;
    std::vector<double> v{u(rng), u(rng), u(rng)}, w{u(rng), u(rng), u(rng)};
    const double lhs = two_point_distance_generator(m, p, 0.1 * trial, v, w);
    if (lhs > bound(p, c_a, v, w) * (1 + 1e-12) + 1e-9) ++violations;
  }
  CHECK(violations == 0);
  const std::vector<double> v{0.1, 0.0, 0.0}, w{0.0, 0.0, 0.0};
  CHECK(two_point_distance_generator(m, 2.0, 0.0, v, w) > bound(2.0, params.beta_bar, v, w));
}
