#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "rpmeas/error.hpp"
#include "rpmeas/integrate.hpp"
#include "rpmeas/parallel.hpp"

using namespace rpmeas;

namespace {

std::vector<PeriodicSdeModel> builtin_models() {
  return {build_lorenz(LorenzParams::regime1()), build_ou(OuParams{1.0, 1.0, 1.0, 1.0}),
          build_fhn(FhnParams{})};
}

// dt that puts each built-in period on the grid
double aligned_dt(const PeriodicSdeModel& m) { return m.period / 1000.0; }

}  // namespace

TEST_CASE("time grid") {
  const TimeGrid g(1e-3, 1.0);
  CHECK(g.aligned());
  CHECK(g.steps_per_period() == 1000);
  CHECK(g.coefficient_time(2500) == doctest::Approx(0.5));
  CHECK(g.coefficient_time(-1) == doctest::Approx(0.999));
  const TimeGrid h(1e-3, 2.0 * std::numbers::pi);
  CHECK_FALSE(h.aligned());
  CHECK_THROWS_AS(h.steps_per_period(), GridError);
  CHECK(h.coefficient_time(7000) == 7.0);
}

TEST_CASE("flow identities") {
  for (const auto& m : builtin_models()) {
    const double dt = aligned_dt(m);
    NoiseSpec spec{17, dt, m.noise_dim, 0.0};
    const auto path = sample_path(spec, 4000, 0);
    std::vector<double> x0(static_cast<std::size_t>(m.dim), 0.5);
    CHECK(flow(m, 0.0, 0.0, x0, path) == x0);
    const double s = 0.0, u = 1000 * dt, t = 2000 * dt;
    const auto [direct, composed] = flow_composition_check(m, s, u, t, x0, path);
    CHECK(direct == composed);
    CHECK(periodic_flow_identity(m, 100 * dt, 1500 * dt, x0, path) == 0.0);
  }
}

TEST_CASE("periodic identity needs an aligned grid") {
  const auto m = build_ou(OuParams{1.0, 1.0, 2.0 * std::numbers::pi, 1.0});
  NoiseSpec spec{1, 1e-3, 1, 0.0};
  const auto path = sample_path(spec, 20000, 0);
  std::vector<double> x0{0.0};
  CHECK_THROWS_AS(periodic_flow_identity(m, 0.0, 1.0, x0, path), GridError);
}

TEST_CASE("deterministic euler accuracy") {
  const auto m = build_ou(OuParams{1.0, 0.0, 1.0, 0.0});
  NoiseSpec spec{1, 1e-4, 1, 0.0};
  const auto path = sample_path(spec, 10000, 0);
  const auto x = flow(m, 0.0, 1.0, std::vector<double>{1.0}, path);
  CHECK(std::abs(x[0] - std::exp(-1.0)) < 1e-4);
  CHECK(x[0] == doctest::Approx(std::pow(1.0 - 1e-4, 1e4)).epsilon(1e-10));

  PolynomialSpec zero;
  zero.drift = {PolyScalar::constant(1, 1.0, 0.0)};
  zero.diffusion = {PolyScalar::constant(1, 1.0, 0.0)};
  const auto z = build_polynomial(zero);
  CHECK(flow(z, 0.0, 1.0, std::vector<double>{3.25}, path)[0] == 3.25);
}

TEST_CASE("two-point flow under additive noise") {
  const double a = 1.3;
  const auto m = build_ou(OuParams{a, 1.0, 1.0, 1.0});
  NoiseSpec spec{2, 1e-4, 1, 0.0};
  const auto path = sample_path(spec, 20000, 4);
  const auto [x, y] = two_point_flow(m, 0.0, 2.0, std::vector<double>{1.0}, std::vector<double>{-0.5}, path);
  const double expected = 1.5 * std::exp(-a * 2.0);
  CHECK(std::abs(std::abs(x[0] - y[0]) - expected) < 1e-3 * expected);
  const auto [p, q] = two_point_flow(m, 0.0, 2.0, std::vector<double>{1.0}, std::vector<double>{1.0}, path);
  CHECK(p == q);
}

TEST_CASE("divergence is reported with the step") {
  PolynomialSpec blowup;
  blowup.drift = {PolyScalar(1, 1.0, {{1.0, {3}, TimeMode::Const, 0}})};
  blowup.diffusion = {PolyScalar::constant(1, 1.0, 0.0)};
  const auto m = build_polynomial(blowup);
  NoiseSpec spec{1, 1e-2, 1, 0.0};
  const auto path = sample_path(spec, 1000, 0);
  try {
    flow(m, 0.0, 10.0, std::vector<double>{2.0}, path);
    FAIL("expected divergence");
  } catch (const DivergenceError& e) {
    CHECK(e.step() > 0);
  }
}

TEST_CASE("ensemble statistics") {
  const auto m = build_ou(OuParams{1.0, 0.0, 1.0, 1.0});
  NoiseSpec spec{3, 1e-3, 1, 0.0};
  const std::vector<Observable> obs = {coordinate_observable(1, 1.0, 0, "x")};

  const auto point = ensemble_flow(m, 0.0, 0.0, InitialCondition::point(std::vector<double>{0.7}), 16, spec, obs, {0.0});
  CHECK(point.checkpoints[0].state.mean()[0] == 0.7);
  CHECK(point.checkpoints[0].state.covariance()[0] == 0.0);

  // stationary start: E[X_t^2] = sigma^2 / (2a)
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n01;
  std::vector<double> rows(10000);
  for (auto& r : rows) r = std::sqrt(0.5) * n01(rng);
  const std::vector<Observable> sq = {Observable{PolyScalar(1, 1.0, {{1.0, {2}, TimeMode::Const, 0}}), "x2"}};
  const auto res = ensemble_flow(m, 0.0, 1.0, InitialCondition::cloud(1, rows), 10000, spec, sq, {1.0});
  const auto& second = res.checkpoints[0].observables[0];
  CHECK(std::abs(second.mean() - 0.5) < 3.0 * second.stderr_of_mean());

  // mean decay from a point mass
  const auto decay = ensemble_flow(m, 0.0, 1.0, InitialCondition::point(std::vector<double>{2.0}), 4000, spec, obs, {0.5, 1.0});
  for (const auto& cp : decay.checkpoints) {
    const double exact = 2.0 * std::exp(-cp.time);
    CHECK(std::abs(cp.observables[0].mean() - exact) < 3.0 * cp.observables[0].stderr_of_mean() + 2e-3);
  }
}

TEST_CASE("ensemble is worker-count invariant and matches the serial reference") {
  const auto m = build_lorenz(LorenzParams::regime1());
  NoiseSpec spec{11, 1e-3, 3, 0.0};
  const std::vector<Observable> obs = {coordinate_observable(3, 1.0, 2, "z")};
  EnsembleOptions opts;
  opts.keep_samples = true;
  opts.block_size = 8;
  const InitialCondition init = InitialCondition::point(std::vector<double>{1.0, 1.0, 1.0});
  const int saved = worker_count();
  set_worker_count(1);
  const auto one = ensemble_flow(m, 0.0, 0.5, init, 50, spec, obs, {0.25, 0.5}, opts);
  set_worker_count(4);
  const auto four = ensemble_flow(m, 0.0, 0.5, init, 50, spec, obs, {0.25, 0.5}, opts);
  set_worker_count(saved);
  const auto serial = ensemble_flow_serial(m, 0.0, 0.5, init, 50, spec, obs, {0.25, 0.5}, opts);
  for (std::size_t c = 0; c < 2; ++c) {
    CHECK(one.checkpoints[c].samples == four.checkpoints[c].samples);
    CHECK(one.checkpoints[c].state.mean() == four.checkpoints[c].state.mean());
    CHECK(one.checkpoints[c].state.covariance() == four.checkpoints[c].state.covariance());
    CHECK(one.checkpoints[c].state.mean() == serial.checkpoints[c].state.mean());
    CHECK(one.checkpoints[c].observables[0].variance() == serial.checkpoints[c].observables[0].variance());
  }
}

TEST_CASE("ensemble aborts when too many members diverge") {
  PolynomialSpec blowup;
  blowup.drift = {PolyScalar(1, 1.0, {{1.0, {3}, TimeMode::Const, 0}})};
  blowup.diffusion = {PolyScalar::constant(1, 1.0, 0.1)};
  const auto m = build_polynomial(blowup);
  NoiseSpec spec{1, 1e-2, 1, 0.0};
  CHECK_THROWS_AS(ensemble_flow(m, 0.0, 5.0, InitialCondition::point(std::vector<double>{1.0}), 100, spec, {}, {5.0}),
                  DivergenceError);
}
