#include "rpmeas/oracle.hpp"

#include <cmath>
#include <cstdio>
#include <numeric>

#include "rpmeas/measure.hpp"
#include "rpmeas/response.hpp"

namespace rpmeas {

namespace {

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

NoiseSpec oracle_spec(const OuOracleOptions& o) {
  return NoiseSpec{o.seed, o.params.tau / static_cast<double>(o.steps_per_period), 1, 0.0};
}

EmpiricalPeriodicMeasure oracle_measure(const OuOracleOptions& o, std::size_t n) {
  MeasureOptions mo;
  mo.burn_in_periods = 4;
  mo.record_periods = 1;
  mo.n_phases = static_cast<int>(std::gcd<std::int64_t>(8, o.steps_per_period));
  const std::vector<double> x0 = {0.0};
  return estimate_periodic_measure(build_ou(o.params), InitialCondition::point(x0), n, oracle_spec(o), mo);
}

PerturbationSpec unit_drift(const OuOracleOptions& o, double eps, TimeProfile profile) {
  const std::vector<double> one = {1.0};
  return PerturbationSpec::constant_drift(one, o.params.tau, eps, std::move(profile));
}

ResponseTableOptions table_options(const OuOracleOptions& o, std::size_t n_traj, int n_periods) {
  ResponseTableOptions to;
  to.n_phase_bins = static_cast<int>(std::gcd<std::int64_t>(64, o.steps_per_period));
  to.lag_stride_steps = static_cast<int>(std::gcd<std::int64_t>(10, o.steps_per_period / to.n_phase_bins));
  to.max_lag = 3.0 * o.params.tau;
  to.n_trajectories = n_traj;
  to.n_periods = n_periods;
  return to;
}

}  // namespace

double ou_exact_response(const TimeProfile& theta, double epsilon, double a, double t) {
  if (t <= 0.0) return 0.0;
  const int n = 200000;
  const double h = t / n;
  double acc = 0.0;
  for (int i = 0; i <= n; ++i) {
    const double r = i * h;
    const double w = (i == 0 || i == n) ? 1.0 : (i % 2 ? 4.0 : 2.0);
    acc += w * std::exp(-a * (t - r)) * theta(r);
  }
  return epsilon * acc * h / 3.0;
}

OracleCheck ou_exact_response_check(const OuOracleOptions& o) {
  OracleCheck out{"OU exact response", false, ""};
  const auto model = build_ou(o.params);
  const TimeProfile theta(RampedStep{5.0, 2.0});
  const auto mu = oracle_measure(o, o.measure_paths);
  const std::vector<Observable> obs = {coordinate_observable(1, o.params.tau, 0, "x")};
  std::vector<double> times;
  for (int k = 0; 0.1 * k <= o.t_end + 1e-9; ++k) times.push_back(0.1 * k);
  const auto spec = oracle_spec(o);
  const auto direct = direct_response(model, unit_drift(o, o.epsilon, theta), obs,
                                      InitialCondition::cloud(1, mu.final_states), times, o.direct_paths, spec);
  const auto table = fdt_response_function_qg(model, mu, unit_drift(o, 1.0, {}), obs,
                                              table_options(o, o.table_trajectories, o.table_periods), spec);
  const auto predicted = convolve_response(table, theta, o.epsilon, direct.times);

  ResponseCurve exact = direct;
  for (std::size_t c = 0; c < exact.times.size(); ++c) {
    exact.values[0][c] = ou_exact_response(theta, o.epsilon, o.params.a, exact.times[c]);
    exact.std_error[0][c] = 0.0;
  }
  const double e_direct = compare_curves(exact, direct, 0.0, o.t_end).relative_l2[0];
  const double e_fdt = compare_curves(exact, predicted, 0.0, o.t_end).relative_l2[0];
  out.pass = e_direct <= 0.05 && e_fdt <= 0.08;
  out.detail = "direct rel L2 " + fmt("%.3g", e_direct) + " (<= 0.05), fdt-qg rel L2 " + fmt("%.3g", e_fdt) +
               " (<= 0.08), N = " + std::to_string(o.direct_paths) + ", dt = " + fmt("%.4g", spec.dt);
  return out;
}

OracleCheck ou_fdt_consistency_check(const OuOracleOptions& o) {
  OracleCheck out{"OU FDT consistency", false, ""};
  const auto mu = oracle_measure(o, std::min<std::size_t>(o.consistency_trajectories, o.measure_paths));
  const std::vector<Observable> obs = {coordinate_observable(1, o.params.tau, 0, "x")};
  auto to = table_options(o, o.consistency_trajectories, o.consistency_periods);
  to.stream_base = streams::kCorrelation + 7;
  const auto table = fdt_response_function_qg(build_ou(o.params), mu, unit_drift(o, 1.0, {}), obs, to, oracle_spec(o));
  const std::size_t phase_stride = std::max<std::size_t>(1, table.phases.size() / 8);
  std::size_t n = 0, bad = 0;
  double worst = 0.0;
  for (std::size_t j = 0; j < table.phases.size(); j += phase_stride)
    for (int q = 0; q <= 12; ++q) {
      const double lag = 0.25 * o.params.tau * q;
      const auto i = static_cast<std::size_t>(std::llround(lag / table.lag_step));
      if (i >= table.lags.size()) continue;
      const double se = table.std_error[table.index(j, i, 0)];
      const double z = (table.R[table.index(j, i, 0)] - std::exp(-o.params.a * table.lags[i])) / se;
      worst = std::max(worst, std::abs(z));
      ++n;
      if (!(std::abs(z) <= 3.0)) ++bad;
    }
  out.pass = bad == 0;
  out.detail = std::to_string(n) + " (phase, lag) points, " + std::to_string(bad) + " outside 3 stderr, max |z| " +
               fmt("%.2f", worst) + ", " + std::to_string(table.samples_per_phase) + " pairs per phase";
  return out;
}

OracleCheck ou_fdt2_check(const OuOracleOptions& o) {
  OracleCheck out{"OU FDT II", false, ""};
  FdtIIOptions f;
  f.n_phases = static_cast<int>(std::gcd<std::int64_t>(8, o.steps_per_period));
  f.lag_step = 0.25 * o.params.tau;
  f.max_lag = 3.0 * o.params.tau;
  f.h_steps = 2;
  f.n_trajectories = o.consistency_trajectories;
  f.n_periods = o.consistency_periods;
  const auto c = fdt2_check_ou(o.params, f, oracle_spec(o));
  out.pass = c.passes;
  out.detail = std::to_string(c.residual.size()) + " (phase, lag) points, max residual - (3 stderr + fd error) = " +
               fmt("%.3g", c.max_excess) + ", " + std::to_string(c.samples_per_phase) + " pairs per phase";
  return out;
}

std::vector<OracleCheck> ou_oracle_suite(const OuOracleOptions& options) {
  std::vector<OracleCheck> out;
  for (auto* check : {&ou_exact_response_check, &ou_fdt_consistency_check, &ou_fdt2_check}) {
    try {
      out.push_back(check(options));
    } catch (const std::exception& e) {
      out.push_back({"OU oracle", false, std::string("error: ") + e.what()});
    }
  }
  return out;
}

}  // namespace rpmeas
