#include "rpmeas/commands.hpp"

#include <cmath>
#include <filesystem>
#include <iostream>
#include <numbers>

#include "rpmeas/config.hpp"
#include "rpmeas/dissipativity.hpp"
#include "rpmeas/error.hpp"
#include "rpmeas/io.hpp"
#include "rpmeas/measure.hpp"
#include "rpmeas/oracle.hpp"
#include "rpmeas/pullback.hpp"
#include "rpmeas/response.hpp"

namespace rpmeas {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

class NonConvergence : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Context {
  const Config& config;
  fs::path dir;
  std::ostream& log;
  bool quiet;

  void note(const std::string& msg) const {
    if (!quiet) log << msg << '\n';
  }
  void warn(const std::string& msg) const { log << "warning: " << msg << '\n'; }
};

std::vector<std::string> coordinate_header(const char* first, int d, const char* second = nullptr) {
  std::vector<std::string> h = {first};
  if (second) h.emplace_back(second);
  for (int i = 1; i <= d; ++i) h.push_back("x" + std::to_string(i));
  return h;
}

json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

// ---------------------------------------------------------------------------

GrowthEnvelope default_envelope(const Config& c, json& info) {
  if (c.check.envelope) {
    const auto& e = *c.check.envelope;
    info["source"] = "config";
    return GrowthEnvelope::constant(e[0], e[1], e[2], c.model.period);
  }
  if (const auto* l = std::get_if<LorenzParams>(&c.model.params)) {
    const auto le = lorenz_envelope(*l, c.check.kappa1, c.check.kappa3);
    info["source"] = "lorenz";
    info["kappa1"] = c.check.kappa1;
    info["kappa3"] = c.check.kappa3;
    info["F1_bar"] = le.F1_bar;
    info["C_A"] = le.C_A;
    info["C_bar"] = le.C_bar;
    info["constraint"] = le.constraint;
    info["constraint_ok"] = le.constraint_ok;
    info["valid"] = le.valid;
    info["message"] = le.message;
    return le.envelope;
  }
  if (const auto* o = std::get_if<OuParams>(&c.model.params)) {
    // A|x| <= A^2 / (4c) + c x^2, with c splitting the sharp p = 2 margin a - sigma^2 / 2 in half
    info["source"] = "ou";
    const double A = std::abs(o->forcing_amp), s2 = o->sigma * o->sigma;
    double split = 0.5 * (o->a - 0.5 * s2);
    if (!(split > 0.0)) split = o->a > 0.0 ? 0.5 * o->a : 0.5;
    info["young_split"] = split;
    return GrowthEnvelope::constant(A * A / (4.0 * split), o->a - split, s2, o->tau);
  }
  throw ConfigError("/check/envelope", "required for model type " + c.model_type);
}

int cmd_check(const Context& ctx) {
  const auto& c = ctx.config;
  json report;
  json env_info;
  const auto env = default_envelope(c, env_info);
  env_info["L_b1_sup"] = envelope_sup(env.L_b1, env.period);
  env_info["L_b2_inf"] = envelope_inf(env.L_b2, env.period);
  env_info["L_sigma_sup"] = envelope_sup(env.L_sigma, env.period);
  report["envelope"] = env_info;

  const auto grid = verify_dissipative(c.model, env);
  json viol = json::array();
  for (std::size_t i = 0; i < std::min<std::size_t>(grid.violations.size(), 10); ++i) {
    const auto& v = grid.violations[i];
    viol.push_back({{"t", v.t}, {"x", v.x}, {"drift_lhs", v.drift_lhs}, {"drift_rhs", v.drift_rhs},
                    {"hs_lhs", v.hs_lhs}, {"hs_rhs", v.hs_rhs}});
  }
  report["grid_check"] = {{"n_checked", grid.n_checked},
                          {"n_violations", grid.violations.size()},
                          {"certified", grid.certified()},
                          {"first_violations", viol}};

  const auto s = sharp_bounds(env, c.check.kappa);
  report["sharp"] = {{"a2", s.a2}, {"b2", s.b2}, {"bound2", finite_or_null(s.bound2)}, {"passes2", s.passes2},
                     {"kappa", s.kappa}, {"a3", s.a3}, {"b3", s.b3}, {"ratio_at_kappa", finite_or_null(s.ratio_at_kappa)},
                     {"passes3", s.passes3}, {"optimal_available", s.optimal_available},
                     {"nominal_optimal_kappa", s.nominal_optimal_kappa}, {"nominal_min_ratio", s.nominal_min_ratio},
                     {"exact_optimal_kappa", s.exact_optimal_kappa}, {"exact_min_ratio", s.exact_min_ratio},
                     {"ratio_AB", s.ratio_AB}, {"note", s.note}};

  // A moment order is certified by the generic constants or, for p = 2, 3, the sharp ones.
  bool all_pass = grid.certified();
  json moments = json::array();
  json sims = json::array();
  const double horizon = c.check.horizon_periods * c.model.period;
  for (double p : c.check.p) {
    const auto m = coeffs_ap_bp(env, p);
    const bool certified = m.passes || (p == 2.0 && s.passes2) || (p == 3.0 && s.passes3);
    all_pass = all_pass && certified;
    moments.push_back({{"p", m.p}, {"p_used", m.p_used}, {"a", m.a}, {"b", m.b},
                       {"bound", finite_or_null(m.bound)}, {"passes", m.passes}, {"certified", certified}});
    if (!certified || !grid.certified() || p < 2.0) continue;
    ctx.note("simulating E|X|^" + format_double(p) + " over " + format_double(horizon));
    const auto sim = simulated_moment_vs_bound(c.model, env, p, horizon, c.check.n_paths, c.noise_spec(), c.sim.x0);
    all_pass = all_pass && sim.holds;
    sims.push_back({{"p", sim.p}, {"a", sim.a}, {"b", sim.b}, {"sharp", sim.sharp}, {"holds", sim.holds},
                    {"worst_margin", sim.worst_margin}, {"t_end", sim.times.back()},
                    {"simulated_end", sim.simulated.back()}, {"bound_end", sim.bound.back()}});
  }
  report["moment_bounds"] = moments;
  report["simulated"] = sims;

  const auto rank = diffusion_span_rank(c.model, 0.0, c.sim.x0);
  report["diffusion_rank_at_x0"] = rank.min_rank;
  report["passes"] = all_pass;
  write_json(ctx.dir / "dissipativity_report.json", report);
  ctx.note(std::string("dissipativity report: ") + (all_pass ? "pass" : "fail"));
  return kExitOk;
}

// ---------------------------------------------------------------------------

int cmd_pullback(const Context& ctx) {
  const auto& c = ctx.config;
  const auto spec = c.noise_spec();
  const int d = c.model.dim;
  PullbackOptions po;
  po.n_phases = c.sim.phases;
  po.n_max_periods = c.pullback.n_max_periods;
  po.tol = c.pullback.tol;
  po.tol_relative = c.pullback.tol_relative;

  ctx.note("pullback over at most " + std::to_string(po.n_max_periods) + " periods");
  const auto est = pullback_path(c.model, c.sim.x0, c.pullback.n_realizations, spec, po);

  {
    CsvWriter w(ctx.dir / "pullback_phase.csv", coordinate_header("phase", d, "realization"));
    for (std::size_t k = 0; k < est.phases.size(); ++k)
      for (std::size_t i = 0; i < est.n_realizations; ++i) {
        w.cell(est.phases[k]).cell(static_cast<long long>(i));
        for (double v : est.state(k, i)) w.cell(v);
        w.end_row();
      }
  }

  const double horizon = c.pullback.contraction_horizon_periods * c.model.period;
  const auto steps = TimeGrid(spec.dt, c.model.period).steps_per_period();
  const auto curve = two_point_contraction(c.model, c.sim.x0, c.pullback.eta, c.pullback.contraction_p, horizon,
                                           c.pullback.contraction_pairs, spec, std::max<std::int64_t>(1, steps / 20));
  {
    std::vector<std::string> header = {"t", "mean_pth_moment", "stderr"};
    for (std::size_t j = 0; j < curve.traces.size(); ++j) header.push_back("trace_" + std::to_string(j + 1));
    CsvWriter w(ctx.dir / "contraction.csv", header);
    for (std::size_t i = 0; i < curve.times.size(); ++i) {
      w.cell(curve.times[i]).cell(curve.mean[i]).cell(curve.std_error[i]);
      for (const auto& tr : curve.traces) w.cell(tr[i]);
      w.end_row();
    }
  }

  json summary;
  summary["converged"] = est.converged;
  summary["n_periods"] = est.n_periods;
  summary["tol"] = est.tol;
  summary["scale"] = est.scale;
  summary["n_realizations"] = est.n_realizations;
  json residuals = json::array();
  for (const auto& r : est.residual_curve)
    residuals.push_back({{"n_periods", r.n_periods}, {"max", r.max}, {"per_phase", r.per_phase}});
  summary["residual_curve"] = residuals;
  try {
    summary["contraction_rate"] = contraction_rate(curve, 0.0, horizon);
  } catch (const ValidationError&) {
    summary["contraction_rate"] = nullptr;
  }
  if (est.converged) {
    const auto pc = periodicity_identity_check(est, c.model, c.sim.x0, spec, po);
    summary["periodicity"] = {{"shift_residual", pc.shift_residual}, {"invariance_max", pc.invariance_max},
                              {"tol", pc.tol}, {"passes", pc.passes}};
  }
  write_json(ctx.dir / "pullback_summary.json", summary);
  if (!est.converged)
    throw NonConvergence("pullback did not converge within " + std::to_string(po.n_max_periods) + " periods");
  ctx.note("pullback converged at depth " + std::to_string(est.n_periods));
  return kExitOk;
}

// ---------------------------------------------------------------------------

EmpiricalPeriodicMeasure run_measure(const Config& c) {
  MeasureOptions mo;
  mo.n_phases = c.sim.phases;
  mo.burn_in_periods = c.sim.burn_in_periods;
  mo.record_periods = c.sim.record_periods;
  return estimate_periodic_measure(c.model, InitialCondition::point(c.sim.x0), c.sim.n_paths, c.noise_spec(), mo);
}

int cmd_measure(const Context& ctx) {
  const auto& c = ctx.config;
  ctx.note("estimating the periodic measure from " + std::to_string(c.sim.n_paths) + " paths");
  const auto mu = run_measure(c);
  const int d = mu.dim;
  for (std::size_t k = 0; k < mu.n_phases(); ++k) {
    CsvWriter w(ctx.dir / ("measure_phase_" + std::to_string(k) + ".csv"), coordinate_header("period_index", d));
    for (int j = 0; j < mu.record_periods; ++j) {
      const auto cloud = mu.cloud(j, k);
      for (std::size_t i = 0; i < mu.n_paths; ++i) {
        w.cell(static_cast<long long>(j));
        for (int q = 0; q < d; ++q) w.cell(cloud[i * static_cast<std::size_t>(d) + static_cast<std::size_t>(q)]);
        w.end_row();
      }
    }
  }

  json summary;
  summary["n_paths"] = mu.n_paths;
  summary["record_periods"] = mu.record_periods;
  summary["burn_in_periods"] = mu.burn_in_periods;
  summary["burn_in_ok"] = mu.burn_in_ok;
  summary["burn_in_drift"] = mu.burn_in_drift;
  // family-wise 95% over the K phase tests
  const double alpha = 0.05 / static_cast<double>(mu.n_phases());
  summary["periodicity_alpha"] = alpha;
  const auto* ou = std::get_if<OuParams>(&c.model.params);
  json phases = json::array();
  bool all_periodic = true;
  for (std::size_t k = 0; k < mu.n_phases(); ++k) {
    json ph = {{"t", mu.phases[k]}, {"mean", mu.mean(k)}, {"covariance", mu.covariance(k)}};
    if (mu.record_periods >= 2) {
      const auto pd = periodicity_distance(mu, k, -1, 200, alpha, c.sim.seed + k);
      all_periodic = all_periodic && pd.passes;
      ph["periodicity"] = {{"mean_difference", pd.mean_difference}, {"covariance_difference", pd.covariance_difference},
                           {"energy", pd.energy}, {"energy_threshold", pd.energy_threshold},
                           {"p_value", pd.p_value}, {"passes", pd.passes}};
    }
    if (ou) {
      ph["analytic_mean"] = ou_periodic_mean(*ou, mu.phases[k]);
      ph["analytic_variance"] = ou_stationary_variance(*ou);
    }
    phases.push_back(ph);
  }
  summary["phases"] = phases;
  summary["periodicity_passes"] = all_periodic;
  const auto avg = averaged_measure(mu);
  summary["averaged"] = {{"count", avg.count}, {"mean", avg.mean}, {"covariance", avg.covariance}};
  write_json(ctx.dir / "measure_summary.json", summary);
  return kExitOk;
}

// ---------------------------------------------------------------------------

void write_rtable(const fs::path& path, const ResponseTable& t) {
  CsvWriter w(path, {"r_phase", "lag", "observable", "R", "stderr"});
  for (std::size_t j = 0; j < t.phases.size(); ++j)
    for (std::size_t i = 0; i < t.lags.size(); ++i)
      for (std::size_t o = 0; o < t.n_obs(); ++o) {
        const auto idx = t.index(j, i, o);
        w.cell(t.phases[j]).cell(t.lags[i]).cell(t.labels[o]).cell(t.R[idx]).cell(t.std_error[idx]);
        w.end_row();
      }
}

json comparison_json(const CurveComparison& cmp) {
  json out = json::array();
  for (std::size_t o = 0; o < cmp.labels.size(); ++o)
    out.push_back({{"observable", cmp.labels[o]}, {"relative_l2", finite_or_null(cmp.relative_l2[o])},
                   {"sup_error", cmp.sup_error[o]}, {"undefined", static_cast<bool>(cmp.undefined[o])}});
  return out;
}

int cmd_respond(const Context& ctx, const std::string& mode) {
  const auto& c = ctx.config;
  if (mode != "direct" && mode != "fdt" && mode != "both") throw ConfigError("--mode", "expected direct, fdt or both");
  if (!c.perturbation) throw ConfigError("/perturbation", "missing perturbation block");
  const auto& pert = *c.perturbation;
  const auto spec = c.noise_spec();
  const auto& r = c.response;

  std::vector<Observable> obs;
  for (int i : r.observables) obs.push_back(coordinate_observable(c.model.dim, c.model.period, i, "x" + std::to_string(i + 1)));
  const TimeGrid grid(spec.dt, c.model.period);
  std::vector<double> times;
  for (std::int64_t n = grid.nearest(r.t_start); grid.time(n) <= r.t_end + 0.5 * spec.dt;
       n += std::max<std::int64_t>(1, grid.nearest(r.t_step)))
    times.push_back(grid.time(n));

  if (!pert.profile.satisfies_regularity())
    ctx.warn(pert.profile.name() + " profile is not C^1 with theta(0) = 0; linear response is outside its regularity class");
  ctx.note("estimating the phase-0 measure");
  const auto mu = run_measure(c);
  const bool do_direct = mode != "fdt", do_fdt = mode != "direct";

  std::optional<ResponseCurve> direct, qg, kde;
  if (do_direct) {
    ctx.note("direct response with " + std::to_string(r.n_paths) + " pairs");
    direct = direct_response(c.model, pert, obs, InitialCondition::cloud(c.model.dim, mu.final_states), times,
                             r.n_paths, spec);
  }
  if (do_fdt) {
    ResponseTableOptions to;
    to.n_phase_bins = r.table.phase_bins;
    to.lag_stride_steps = r.table.lag_stride_steps;
    to.max_lag = r.table.max_lag;
    to.n_trajectories = r.table.n_trajectories;
    to.n_periods = r.table.n_periods;
    ConvolutionOptions co;
    co.truncate_beyond_max_lag = r.table.truncate;
    auto unit = pert;
    unit.epsilon = 1.0;
    if (!pert.has_diffusion()) {
      ctx.note("quasi-Gaussian response function");
      const auto table = fdt_response_function_qg(c.model, mu, unit, obs, to, spec);
      write_rtable(ctx.dir / "rtable.csv", table);
      qg = convolve_response(table, pert.profile, pert.epsilon, times, co);
    }
    if (r.table.kde || pert.has_diffusion()) {
      ctx.note("kernel-density response function");
      const auto table = fdt_response_function_kde(c.model, mu, unit, obs, to, spec);
      write_rtable(ctx.dir / (qg ? "rtable_kde.csv" : "rtable.csv"), table);
      kde = convolve_response(table, pert.profile, pert.epsilon, times, co);
    }
  }

  std::vector<std::string> header = {"t", "observable", "delta_direct", "stderr_direct", "delta_fdt_qg"};
  if (kde) header.emplace_back("delta_fdt_kde");
  CsvWriter w(ctx.dir / "response.csv", header);
  for (std::size_t o = 0; o < obs.size(); ++o)
    for (std::size_t k = 0; k < times.size(); ++k) {
      w.cell(times[k]).cell(obs[o].label);
      if (direct) w.cell(direct->values[o][k]).cell(direct->std_error[o][k]);
      else w.empty().empty();
      if (qg) w.cell(qg->values[o][k]);
      else w.empty();
      if (kde) w.cell(kde->values[o][k]);
      w.end_row();
    }

  json summary = {{"mode", mode}, {"n_times", times.size()}, {"profile", pert.profile.name()},
                  {"profile_regular", pert.profile.satisfies_regularity()}};
  if (direct) summary["direct"] = {{"n_samples", direct->n_samples}, {"n_diverged", direct->n_diverged}};
  if (direct && qg) summary["qg_vs_direct"] = comparison_json(compare_curves(*direct, *qg, times.front(), times.back()));
  if (direct && kde) summary["kde_vs_direct"] = comparison_json(compare_curves(*direct, *kde, times.front(), times.back()));
  write_json(ctx.dir / "response_summary.json", summary);
  return kExitOk;
}

// ---------------------------------------------------------------------------

int cmd_oracle(const Context& ctx) {
  const auto& c = ctx.config;
  const auto* ou = std::get_if<OuParams>(&c.model.params);
  if (!ou) throw ConfigError("/model/type", "the oracle runs on the ou model");
  OuOracleOptions o;
  o.params = *ou;
  o.seed = c.sim.seed;
  o.steps_per_period = TimeGrid(c.sim.dt, c.model.period).steps_per_period();
  json checks = json::array();
  bool pass = true;
  for (const auto& chk : ou_oracle_suite(o)) {
    ctx.note(std::string(chk.pass ? "PASS " : "FAIL ") + chk.name + ": " + chk.detail);
    checks.push_back({{"name", chk.name}, {"pass", chk.pass}, {"detail", chk.detail}});
    pass = pass && chk.pass;
  }
  write_json(ctx.dir / "oracle_report.json", {{"passes", pass}, {"checks", checks}});
  return pass ? kExitOk : kExitFailed;
}

// Default oracle config: the OU process with tau = 2 pi on 6400 steps per period.
json oracle_defaults(const json& doc) {
  json out = doc.is_null() ? json::object() : config_document(doc);
  if (!out.contains("model"))
    out["model"] = {{"type", "ou"}, {"params", {{"a", 1.0}, {"forcing_amp", 1.0}, {"tau", 2.0 * std::numbers::pi}, {"sigma", 1.0}}}};
  if (!out.contains("sim")) out["sim"] = json::object();
  if (!out["sim"].contains("dt")) {
    const double tau = out["model"].contains("params") && out["model"]["params"].contains("tau")
                           ? out["model"]["params"]["tau"].get<double>()
                           : 1.0;
    out["sim"]["dt"] = tau / 6400.0;
  }
  if (!out["sim"].contains("seed")) out["sim"]["seed"] = OuOracleOptions{}.seed;
  return out;
}

}  // namespace

int run_command(const std::string& command, const json& input, const RunOptions& options) {
  std::ostream& log = options.log ? *options.log : std::cerr;
  try {
    const json doc = command == "oracle" ? oracle_defaults(input) : input;
    Config config = parse_config(doc);
    if (!options.out_dir.empty()) {
      config.output_dir = options.out_dir;
      config.resolved["output"]["dir"] = options.out_dir;
    }
    std::string mode = options.mode;
    if (command != "respond") mode.clear();
    const fs::path dir(config.output_dir);
    fs::create_directories(dir);
    json meta = {{"tool", {{"name", kToolName}, {"version", kToolVersion}}},
                 {"command", command},
                 {"seed", config.sim.seed},
                 {"config", config.resolved}};
    if (!mode.empty()) meta["mode"] = mode;
    write_json(dir / "meta.json", meta);

    const Context ctx{config, dir, log, options.quiet};
    if (command == "check") return cmd_check(ctx);
    if (command == "pullback") return cmd_pullback(ctx);
    if (command == "measure") return cmd_measure(ctx);
    if (command == "respond") return cmd_respond(ctx, mode);
    if (command == "oracle") return cmd_oracle(ctx);
    log << "error: unknown command " << command << '\n';
    return kExitConfigError;
  } catch (const ConfigError& e) {
    log << "config error: " << e.what() << '\n';
    return kExitConfigError;
  } catch (const ValidationError& e) {
    log << "config error: " << e.what() << '\n';
    return kExitConfigError;
  } catch (const WindowError& e) {
    log << "config error: " << e.what() << " (raise response.table.max_lag or set response.table.truncate)\n";
    return kExitConfigError;
  } catch (const GridError& e) {
    log << "config error: " << e.what() << '\n';
    return kExitConfigError;
  } catch (const NonConvergence& e) {
    log << "non-convergence: " << e.what() << '\n';
    return kExitNonConvergence;
  } catch (const DivergenceError& e) {
    log << "divergence at step " << e.step() << ": " << e.what() << '\n';
    return kExitDivergence;
  } catch (const std::exception& e) {
    log << "error: " << e.what() << '\n';
    return kExitFailed;
  }
}

}  // namespace rpmeas
