#include <doctest.h>

#include <cmath>
#include <vector>

#include "rpmeas/error.hpp"
#include "rpmeas/pullback.hpp"

using namespace rpmeas;

namespace {

double mean_sq_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += (a[i] - b[i]) * (a[i] - b[i]);
  return acc;
}

}  // namespace

TEST_CASE("pullback of the noiseless linear system is the periodic solution") {
  OuParams p;
  p.sigma = 0.0;
  const auto m = build_ou(p);
  const NoiseSpec spec{3, 1e-3, 1, 0.0};
  const std::vector<double> x0 = {4.0};
  const auto est = pullback_path(m, x0, 4, spec);
  REQUIRE(est.converged);
  for (std::size_t k = 0; k < est.phases.size(); ++k)
    for (std::size_t i = 0; i < 4; ++i) CHECK(std::abs(est.state(k, i)[0] - ou_periodic_mean(p, est.phases[k])) < 2e-3);
  const auto chk = periodicity_identity_check(est, m, x0, spec);
  CHECK(chk.passes);
  CHECK(chk.shift_residual < 1e-12);
}

TEST_CASE("OU pullback mean, independence from the start and periodicity") {
  OuParams p;
  const auto m = build_ou(p);
  const NoiseSpec spec{5, 1e-3, 1, 0.0};
  const std::size_t n = 1000;
  const std::vector<double> x0 = {1.0}, x10 = {10.0};
  const auto est = pullback_path(m, x0, n, spec);
  REQUIRE(est.converged);
  CHECK(est.residual_curve.back().max < est.tol);
  for (std::size_t k = 0; k < est.phases.size(); ++k) {
    ScalarMoments s;
    for (std::size_t i = 0; i < n; ++i) s.add(est.state(k, i)[0]);
    CHECK(std::abs(s.mean() - ou_periodic_mean(p, est.phases[k])) < 3.0 * s.stderr_of_mean() + 2e-3);
  }
  PullbackOptions opts;
  const auto far = pullback_states(m, x10, n, spec, opts, est.n_periods + 4);
  CHECK(mean_sq_diff(far, est.states) / static_cast<double>(far.size()) < 3.0 * est.tol);

  const auto chk = periodicity_identity_check(est, m, x0, spec);
  CHECK(chk.passes);
}

TEST_CASE("Lorenz pullback converges in regime 1 and not in regime 2") {
  const NoiseSpec spec{7, 1e-3, 3, 0.0};
  const std::vector<double> x0 = {1.0, 1.0, 1.0};
  PullbackOptions opts;
  opts.n_max_periods = 16;
  const auto good = pullback_path(build_lorenz(LorenzParams::regime1()), x0, 20, spec, opts);
  CHECK(good.converged);
  CHECK(good.n_periods <= 16);
  const auto bad = pullback_path(build_lorenz(LorenzParams::regime2()), x0, 20, spec, opts);
  CHECK_FALSE(bad.converged);
  CHECK(bad.residual_curve.size() == 4);
}

TEST_CASE("two-point contraction") {
  OuParams p;
  const auto m = build_ou(p);
  const NoiseSpec spec{9, 1e-3, 1, 0.0};
  const std::vector<double> xi = {2.0}, eta = {-1.0};
  const auto c = two_point_contraction(m, xi, eta, 2.0, 3.0, 20, spec);
  for (std::size_t i = 0; i < c.times.size(); ++i)
    CHECK(std::abs(c.mean[i] - 9.0 * std::exp(-2.0 * c.times[i])) < 1e-2 * 9.0 * std::exp(-2.0 * c.times[i]));
  CHECK(std::abs(contraction_rate(c, 0.0, 3.0) + 2.0) < 0.1);
  CHECK(c.traces.size() == 5);

  const auto same = two_point_contraction(m, xi, xi, 2.0, 1.0, 4, spec);
  for (double v : same.mean) CHECK(v == 0.0);
  CHECK_THROWS_AS(contraction_rate(same, 0.0, 1.0), ValidationError);

  ContractionCurve flat;
  flat.times = {0, 1, 2, 3};
  flat.mean = {2, 2, 2, 2};
  CHECK(std::abs(contraction_rate(flat, 0.0, 3.0)) < 1e-12);

  const auto lp = LorenzParams::regime1();
  const NoiseSpec ls{9, 1e-3, 3, 0.0};
  const std::vector<double> a = {1.0, 1.0, 1.0}, b = {5.0, -3.0, 2.0};
  const auto lc = two_point_contraction(build_lorenz(lp), a, b, 2.0, 20.0 * lp.tau, 20, ls);
  CHECK(lc.mean.back() * 100.0 <= lc.mean.front());
  CHECK(contraction_rate(lc, 0.0, 2.0) < 0.0);
}
