#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include "rpmeas/error.hpp"
#include "rpmeas/measure.hpp"

using namespace rpmeas;

namespace {

const double kStationaryVar = 0.5;  // sigma^2 / 2a for the default OU

EmpiricalPeriodicMeasure ou_measure(std::size_t n, std::uint64_t seed) {
  OuParams p;
  const NoiseSpec spec{seed, 1e-3, 1, 0.0};
  MeasureOptions opts;
  opts.burn_in_periods = 10;
  const std::vector<double> x0 = {0.0};
  return estimate_periodic_measure(build_ou(p), InitialCondition::point(x0), n, spec, opts);
}

}  // namespace

TEST_CASE("OU periodic measure statistics") {
  const OuParams p;
  const auto mu = ou_measure(1000, 21);
  CHECK(mu.n_phases() == 8);
  CHECK(mu.burn_in_ok);
  for (std::size_t k = 0; k < mu.n_phases(); ++k) {
    const auto& mo = mu.moments[k];
    CHECK(mo.count() == 4000);
    const double se = std::sqrt(kStationaryVar / 1000.0);  // periods of one path are strongly correlated
    CHECK(std::abs(mu.mean(k)[0] - ou_periodic_mean(p, mu.phases[k])) < 3.0 * se + 2e-3);
    CHECK(std::abs(mu.covariance(k)[0] - kStationaryVar) < 0.1 * kStationaryVar);
    const auto g = density_gaussian(mu, k);
    CHECK(g.mean()[0] == mu.mean(k)[0]);
  }
  const auto avg = averaged_measure(mu);
  CHECK(avg.count == 8 * 4000);
  CHECK(std::abs(avg.mean[0]) < 0.05);

  // three phases tested, family-wise level 5%
  for (std::size_t k = 0; k < mu.n_phases(); k += 3) CHECK(periodicity_distance(mu, k, -1, 200, 0.05 / 3).passes);
}

TEST_CASE("deterministic orbit has a degenerate measure") {
  OuParams p;
  p.sigma = 0.0;
  const NoiseSpec spec{1, 1e-3, 1, 0.0};
  MeasureOptions opts;
  opts.burn_in_periods = 20;
  opts.record_periods = 2;
  const std::vector<double> x0 = {3.0};
  const auto mu = estimate_periodic_measure(build_ou(p), InitialCondition::point(x0), 100, spec, opts);
  for (std::size_t k = 0; k < mu.n_phases(); ++k) {
    CHECK(mu.covariance(k)[0] < 1e-12);
    CHECK(std::abs(mu.mean(k)[0] - ou_periodic_mean(p, mu.phases[k])) < 2e-3);
  }
  CHECK_THROWS_AS(density_gaussian(mu, 0), DegenerateError);
}

TEST_CASE("periodicity distance of identical clouds") {
  EmpiricalPeriodicMeasure mu;
  mu.dim = 1;
  mu.phases = {0.0};
  mu.n_paths = 200;
  mu.record_periods = 2;
  std::mt19937_64 rng(4);
  std::normal_distribution<double> n01;
  std::vector<double> cloud(200);
  for (auto& v : cloud) v = n01(rng);
  mu.samples = cloud;
  mu.samples.insert(mu.samples.end(), cloud.begin(), cloud.end());
  const auto d = periodicity_distance(mu, 0);
  CHECK(d.mean_difference == 0.0);
  CHECK(d.covariance_difference == 0.0);
  CHECK(d.energy == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(d.passes);
}

TEST_CASE("Krylov-Bogolyubov averages") {
  const OuParams p;
  const auto mu = ou_measure(1000, 22);
  const NoiseSpec spec{23, 1e-3, 1, 0.0};
  const std::vector<double> x0 = {2.0};
  const double m0 = ou_periodic_mean(p, 0.0), s = std::sqrt(kStationaryVar);
  const std::vector<Box> boxes = {Box{{-1e300}, {1e300}}, Box{{m0 - s}, {m0 + s}}};
  const std::size_t n_paths = 400;
  const auto c = krylov_diagnostic(build_ou(p), x0, mu, 0, boxes, 32, n_paths, spec);
  for (double v : c.deviation[0]) CHECK(v == 0.0);
  CHECK(std::abs(c.reference[1] - 0.6827) < 0.03);
  CHECK(c.deviation[1].back() < 2.0 / std::sqrt(static_cast<double>(n_paths)));
}

TEST_CASE("phase-locked ergodic averages") {
  const OuParams p;
  const NoiseSpec spec{31, 1e-3, 1, 0.0};
  const std::vector<double> x0 = {0.0};
  const auto m = build_ou(p);
  const double t = 0.25;
  const auto one = ergodic_average_observable(m, constant_observable(1, p.tau, 3.0), x0, t, 50, spec);
  CHECK(one.value == 3.0);
  for (double v : one.running) CHECK(v == 3.0);

  const auto x = ergodic_average_observable(m, coordinate_observable(1, p.tau, 0), x0, t, 2000, spec);
  const double mt = ou_periodic_mean(p, t);
  CHECK(std::abs(x.value - mt) < 3.0 * x.std_error + 2e-3);
  const Observable sq{PolyScalar(1, p.tau, {{1.0, {2}, TimeMode::Const, 0}}), "x2"};
  const auto x2 = ergodic_average_observable(m, sq, x0, t, 2000, spec);
  CHECK(std::abs(x2.value - (mt * mt + kStationaryVar)) < 3.0 * x2.std_error + 5e-3);
}

TEST_CASE("density surrogates") {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> n01;
  std::vector<double> pts(2 * 10000);
  for (auto& v : pts) v = n01(rng);
  Moments mo(2);
  for (std::size_t i = 0; i < 10000; ++i) mo.add(std::span<const double>(pts.data() + 2 * i, 2));
  const auto mean = mo.mean();
  const auto cov = mo.covariance();
  CHECK(std::abs(mean[0]) < 3.0 / 100.0);
  CHECK(std::abs(cov[0] - 1.0) < 0.05);
  CHECK(std::abs(cov[1]) < 0.05);

  GaussianDensity g(mean, cov);
  const std::vector<double> at = {0.0, 0.0};
  CHECK(std::abs(g.value(at) - 1.0 / (2.0 * std::numbers::pi)) < 0.01);
  std::vector<double> sc(2);
  const std::vector<double> off = {1.0, -2.0};
  g.score(off, sc);
  CHECK(std::abs(sc[0] + 1.0) < 0.1);
  CHECK(std::abs(sc[1] - 2.0) < 0.2);

  KernelDensity kde(2, pts, Bandwidth::Scott, 10000);
  CHECK(std::abs(kde.value(at) / (1.0 / (2.0 * std::numbers::pi)) - 1.0) < 0.1);
  std::vector<double> grad(2), hess(4);
  const double rho = kde.evaluate(at, grad, hess);
  CHECK(std::abs(grad[0] / rho) < 0.1);
  CHECK(hess[0] < 0.0);

  const std::vector<double> same(50, 1.5);
  KernelDensity spike(1, same);
  const std::vector<double> c = {1.5}, away = {1.6};
  CHECK(spike.value(c) > 1e6);
  CHECK(spike.value(away) < 1e-6);
}
