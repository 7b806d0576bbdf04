#include "rpmeas/config.hpp"

#include <cmath>
#include <fstream>
#include <set>

#include "rpmeas/error.hpp"

namespace rpmeas {

namespace {

using nlohmann::json;

// Reads one JSON object, records every value it hands out (defaults included) in
// `resolved`, and rejects keys nobody asked for.
class Block {
 public:
  Block(const json* j, std::string pointer) : j_(j), ptr_(std::move(pointer)) {
    if (j_ && !j_->is_object()) throw ConfigError(ptr_, "expected an object");
    resolved = json::object();
  }

  bool has(const std::string& key) const { return j_ && j_->contains(key); }
  std::string at(const std::string& key) const { return ptr_ + "/" + key; }

  const json* raw(const std::string& key) {
    seen_.insert(key);
    return has(key) ? &(*j_)[key] : nullptr;
  }

  double number(const std::string& key, double def) {
    const json* v = raw(key);
    double out = def;
    if (v) {
      if (!v->is_number()) throw ConfigError(at(key), "expected a number");
      out = v->get<double>();
      if (!std::isfinite(out)) throw ConfigError(at(key), "must be finite");
    }
    resolved[key] = out;
    return out;
  }

  double positive(const std::string& key, double def) {
    const double v = number(key, def);
    if (!(v > 0.0)) throw ConfigError(at(key), "must be positive");
    return v;
  }

  std::int64_t integer(const std::string& key, std::int64_t def, std::int64_t lo) {
    const json* v = raw(key);
    std::int64_t out = def;
    if (v) {
      if (!v->is_number_integer()) throw ConfigError(at(key), "expected an integer");
      out = v->get<std::int64_t>();
    }
    if (out < lo) throw ConfigError(at(key), "must be at least " + std::to_string(lo));
    resolved[key] = out;
    return out;
  }

  std::uint64_t unsigned_integer(const std::string& key, std::uint64_t def) {
    const json* v = raw(key);
    std::uint64_t out = def;
    if (v) {
      if (!v->is_number_unsigned() && !(v->is_number_integer() && v->get<std::int64_t>() >= 0))
        throw ConfigError(at(key), "expected a nonnegative integer");
      out = v->get<std::uint64_t>();
    }
    resolved[key] = out;
    return out;
  }

  bool boolean(const std::string& key, bool def) {
    const json* v = raw(key);
    bool out = def;
    if (v) {
      if (!v->is_boolean()) throw ConfigError(at(key), "expected true or false");
      out = v->get<bool>();
    }
    resolved[key] = out;
    return out;
  }

  std::string string(const std::string& key, const std::string& def) {
    const json* v = raw(key);
    std::string out = def;
    if (v) {
      if (!v->is_string()) throw ConfigError(at(key), "expected a string");
      out = v->get<std::string>();
    }
    resolved[key] = out;
    return out;
  }

  std::vector<double> numbers(const std::string& key, std::vector<double> def) {
    const json* v = raw(key);
    if (v) {
      if (!v->is_array()) throw ConfigError(at(key), "expected an array of numbers");
      def.clear();
      for (std::size_t i = 0; i < v->size(); ++i) {
        if (!(*v)[i].is_number()) throw ConfigError(at(key) + "/" + std::to_string(i), "expected a number");
        def.push_back((*v)[i].get<double>());
      }
    }
    resolved[key] = def;
    return def;
  }

  Block child(const std::string& key) { return Block(raw(key), at(key)); }

  void finish() const {
    if (!j_) return;
    for (const auto& [key, value] : j_->items())
      if (!seen_.count(key)) throw ConfigError(at(key), "unknown key");
  }

  json resolved;

 private:
  const json* j_;
  std::string ptr_;
  std::set<std::string> seen_;
};

PolyScalar parse_poly(const json& j, const std::string& ptr, int dim, double period) {
  if (!j.is_array()) throw ConfigError(ptr, "expected an array of terms");
  std::vector<PolyTerm> terms;
  for (std::size_t i = 0; i < j.size(); ++i) {
    const std::string tp = ptr + "/" + std::to_string(i);
    Block b(&j[i], tp);
    PolyTerm t;
    t.coefficient = b.number("c", 0.0);
    const auto powers = b.numbers("powers", std::vector<double>(static_cast<std::size_t>(dim), 0.0));
    if (static_cast<int>(powers.size()) != dim) throw ConfigError(tp + "/powers", "expected dim entries");
    for (double p : powers) {
      if (p < 0.0 || p != std::floor(p)) throw ConfigError(tp + "/powers", "expected nonnegative integers");
      t.powers.push_back(static_cast<int>(p));
    }
    const auto mode = b.string("mode", "const");
    if (mode == "const") t.mode = TimeMode::Const;
    else if (mode == "cos") t.mode = TimeMode::Cos;
    else if (mode == "sin") t.mode = TimeMode::Sin;
    else throw ConfigError(tp + "/mode", "expected const, cos or sin");
    t.harmonic = static_cast<int>(b.integer("k", 0, 0));
    b.finish();
    terms.push_back(std::move(t));
  }
  return PolyScalar(dim, period, std::move(terms));
}

struct ModelBlock {
  std::string type;
  PeriodicSdeModel model;
  json resolved;
};

ModelBlock parse_model(const json& doc) {
  if (!doc.contains("model")) throw ConfigError("/model", "missing model block");
  Block m(&doc["model"], "/model");
  ModelBlock out;
  out.type = m.string("type", "");
  const std::string preset = m.has("preset") ? m.string("preset", "") : "";
  Block p = m.child("params");
  try {
    if (out.type == "lorenz") {
      LorenzParams l;
      if (preset == "regime2") l = LorenzParams::regime2();
      else if (!preset.empty() && preset != "regime1") throw ConfigError("/model/preset", "expected regime1 or regime2");
      l.alpha_bar = p.number("alpha_bar", l.alpha_bar);
      l.beta_bar = p.number("beta_bar", l.beta_bar);
      l.gamma_bar = p.number("gamma_bar", l.gamma_bar);
      l.rho_bar = p.number("rho_bar", l.rho_bar);
      l.f_bar = p.number("f_bar", l.f_bar);
      l.delta_bar = p.number("delta_bar", l.delta_bar);
      l.tau = p.positive("tau", l.tau);
      l.sigma_bar = p.number("sigma_bar", l.sigma_bar);
      out.model = build_lorenz(l);
    } else if (out.type == "ou") {
      if (!preset.empty()) throw ConfigError("/model/preset", "presets exist only for lorenz");
      OuParams o;
      o.a = p.number("a", o.a);
      o.forcing_amp = p.number("forcing_amp", o.forcing_amp);
      o.tau = p.positive("tau", o.tau);
      o.sigma = p.number("sigma", o.sigma);
      out.model = build_ou(o);
    } else if (out.type == "fhn") {
      if (!preset.empty()) throw ConfigError("/model/preset", "presets exist only for lorenz");
      FhnParams f;
      f.a = p.number("a", f.a);
      f.beta = p.number("beta", f.beta);
      f.B1 = p.number("B1", f.B1);
      f.B2 = p.number("B2", f.B2);
      f.c = p.number("c", f.c);
      f.tau_freq = p.positive("tau_freq", f.tau_freq);
      out.model = build_fhn(f);
    } else if (out.type == "polynomial") {
      if (!preset.empty()) throw ConfigError("/model/preset", "presets exist only for lorenz");
      PolynomialSpec s;
      s.dim = static_cast<int>(p.integer("dim", 1, 1));
      s.noise_dim = static_cast<int>(p.integer("noise_dim", 1, 0));
      s.period = p.positive("period", 1.0);
      s.label = p.string("label", "polynomial");
      for (const char* key : {"drift", "diffusion"}) {
        const json* arr = p.raw(key);
        if (!arr || !arr->is_array()) throw ConfigError(p.at(key), "expected an array of polynomials");
        auto& target = std::string(key) == "drift" ? s.drift : s.diffusion;
        for (std::size_t i = 0; i < arr->size(); ++i)
          target.push_back(parse_poly((*arr)[i], p.at(key) + "/" + std::to_string(i), s.dim, s.period));
        p.resolved[key] = *arr;
      }
      out.model = build_polynomial(s);
    } else {
      throw ConfigError("/model/type", "expected lorenz, ou, fhn or polynomial");
    }
  } catch (const ValidationError& e) {
    throw ConfigError("/model/params/" + e.field(), e.what());
  }
  p.finish();
  m.resolved["params"] = p.resolved;
  m.finish();
  out.resolved = m.resolved;
  return out;
}

TimeProfile parse_profile(Block& b) {
  const auto type = b.string("type", "zero");
  try {
    if (type == "zero") return TimeProfile(ZeroProfile{});
    if (type == "ramped_step") return TimeProfile(RampedStep{b.number("t0", 0.0), b.number("delta_t", 12.0)});
    if (type == "cosine_modulated_ramp")
      return TimeProfile(
          CosineModulatedRamp{b.number("t0", 0.0), b.number("delta_t", 12.0), b.number("omega_mod", 1.0)});
    if (type == "heaviside_cos_sq") return TimeProfile(HeavisideCosSq{b.number("t_on", 0.0), b.number("omega", 1.0)});
    if (type == "table") return TimeProfile(TableProfile{b.numbers("times", {}), b.numbers("values", {})});
  } catch (const ValidationError& e) {
    throw ConfigError("/perturbation/profile/" + e.field(), e.what());
  }
  throw ConfigError("/perturbation/profile/type",
                    "expected zero, ramped_step, cosine_modulated_ramp, heaviside_cos_sq or table");
}

}  // namespace

const nlohmann::json& config_document(const nlohmann::json& doc) {
  if (doc.is_object() && doc.contains("tool") && doc.contains("config")) return doc["config"];
  return doc;
}

Config parse_config(const nlohmann::json& input) {
  const json& doc = config_document(input);
  if (!doc.is_object()) throw ConfigError("", "config must be a JSON object");
  Config c;
  for (const auto& [key, value] : doc.items())
    if (key != "model" && key != "sim" && key != "perturbation" && key != "pullback" && key != "check" &&
        key != "response" && key != "output")
      throw ConfigError("/" + key, "unknown key");

  auto mb = parse_model(doc);
  c.model_type = mb.type;
  c.model = std::move(mb.model);
  c.resolved["model"] = mb.resolved;
  const double period = c.model.period;
  const auto d = static_cast<std::size_t>(c.model.dim);

  Block s(doc.contains("sim") ? &doc["sim"] : nullptr, "/sim");
  c.sim.dt = s.positive("dt", period / 1000.0);
  const double steps = period / c.sim.dt;
  if (std::abs(steps - std::round(steps)) > 1e-9 * steps)
    throw ConfigError("/sim/dt", "the period must be a whole number of steps");
  c.sim.seed = s.unsigned_integer("seed", 1);
  c.sim.n_paths = static_cast<std::size_t>(s.integer("n_paths", 1000, 1));
  c.sim.burn_in_periods = static_cast<int>(s.integer("burn_in_periods", 50, 0));
  c.sim.record_periods = static_cast<int>(s.integer("record_periods", 4, 1));
  c.sim.phases = static_cast<int>(s.integer("phases", 8, 1));
  if (static_cast<std::int64_t>(std::llround(steps)) % c.sim.phases != 0)
    throw ConfigError("/sim/phases", "must divide the number of steps per period (" +
                                         std::to_string(std::llround(steps)) + ")");
  c.sim.x0 = s.numbers("x0", std::vector<double>(d, 1.0));
  if (c.sim.x0.size() != d) throw ConfigError("/sim/x0", "expected " + std::to_string(d) + " entries");
  s.finish();
  c.resolved["sim"] = s.resolved;

  Block pb(doc.contains("pullback") ? &doc["pullback"] : nullptr, "/pullback");
  c.pullback.n_realizations = static_cast<std::size_t>(pb.integer("n_realizations", 200, 2));
  c.pullback.n_max_periods = static_cast<int>(pb.integer("n_max_periods", 64, 2));
  c.pullback.tol = pb.number("tol", 0.0);
  c.pullback.tol_relative = pb.positive("tol_relative", 1e-6);
  c.pullback.contraction_p = pb.number("contraction_p", 2.0);
  if (c.pullback.contraction_p < 1.0) throw ConfigError("/pullback/contraction_p", "must be at least 1");
  c.pullback.contraction_horizon_periods = pb.positive("contraction_horizon_periods", 20.0);
  c.pullback.contraction_pairs = static_cast<std::size_t>(pb.integer("contraction_pairs", 100, 1));
  std::vector<double> eta = c.sim.x0;
  for (auto& v : eta) v = -v;
  c.pullback.eta = pb.numbers("eta", eta);
  if (c.pullback.eta.size() != d) throw ConfigError("/pullback/eta", "expected " + std::to_string(d) + " entries");
  pb.finish();
  c.resolved["pullback"] = pb.resolved;

  Block ck(doc.contains("check") ? &doc["check"] : nullptr, "/check");
  c.check.p = ck.numbers("p", {2.0});
  for (double p : c.check.p)
    if (!(p >= 1.0)) throw ConfigError("/check/p", "moment orders must be at least 1");
  if (ck.has("envelope") && !doc["check"]["envelope"].is_null()) {
    const auto e = ck.numbers("envelope", {});
    if (e.size() != 3) throw ConfigError("/check/envelope", "expected [L_b1, L_b2, L_sigma]");
    c.check.envelope = std::array<double, 3>{e[0], e[1], e[2]};
  } else {
    ck.raw("envelope");
    ck.resolved["envelope"] = nullptr;
  }
  c.check.kappa1 = ck.positive("kappa1", 25.0);
  c.check.kappa3 = ck.positive("kappa3", 1.0);
  if (ck.has("kappa") && !doc["check"]["kappa"].is_null()) {
    c.check.kappa = ck.positive("kappa", 1.0);
  } else {
    ck.raw("kappa");
    ck.resolved["kappa"] = nullptr;
  }
  c.check.horizon_periods = ck.positive("horizon_periods", 10.0);
  c.check.n_paths = static_cast<std::size_t>(ck.integer("n_paths", 200, 2));
  ck.finish();
  c.resolved["check"] = ck.resolved;

  if (doc.contains("perturbation")) {
    Block pt(&doc["perturbation"], "/perturbation");
    const double eps = pt.number("epsilon", 0.0);
    const auto dir = pt.numbers("direction", std::vector<double>(d, 0.0));
    if (dir.size() != d) throw ConfigError("/perturbation/direction", "expected " + std::to_string(d) + " entries");
    Block pf = pt.child("profile");
    auto profile = parse_profile(pf);
    pf.finish();
    pt.resolved["profile"] = pf.resolved;
    auto spec = PerturbationSpec::constant_drift(dir, period, eps, std::move(profile));
    const auto m = static_cast<std::size_t>(c.model.noise_dim);
    const auto h = pt.numbers("diffusion_direction", {});
    if (!h.empty()) {
      if (h.size() != d * m)
        throw ConfigError("/perturbation/diffusion_direction", "expected dim * noise_dim entries (row-major)");
      for (double v : h) spec.diffusion_direction.push_back(PolyScalar::constant(c.model.dim, period, v));
    }
    const auto adm = pt.numbers("admissible", {-1e300, 1e300});
    if (adm.size() != 2 || !(adm[0] <= adm[1])) throw ConfigError("/perturbation/admissible", "expected [lo, hi]");
    spec.admissible_lo = adm[0];
    spec.admissible_hi = adm[1];
    pt.finish();
    c.perturbation = std::move(spec);
    c.resolved["perturbation"] = pt.resolved;
  }

  Block rs(doc.contains("response") ? &doc["response"] : nullptr, "/response");
  c.response.t_start = rs.number("t_start", 0.0);
  c.response.t_end = rs.number("t_end", 10.0 * period);
  c.response.t_step = rs.positive("t_step", period / 10.0);
  if (!(c.response.t_end >= c.response.t_start)) throw ConfigError("/response/t_end", "must not precede t_start");
  std::vector<double> all;
  for (std::size_t i = 0; i < d; ++i) all.push_back(static_cast<double>(i));
  for (double v : rs.numbers("observables", all)) {
    if (v < 0.0 || v >= static_cast<double>(d) || v != std::floor(v))
      throw ConfigError("/response/observables", "expected coordinate indices below " + std::to_string(d));
    c.response.observables.push_back(static_cast<int>(v));
  }
  c.response.n_paths = static_cast<std::size_t>(rs.integer("n_paths", static_cast<std::int64_t>(c.sim.n_paths), 1));
  Block tb = rs.child("table");
  auto& t = c.response.table;
  t.phase_bins = static_cast<int>(tb.integer("phase_bins", 64, 1));
  t.lag_stride_steps = static_cast<int>(tb.integer("lag_stride_steps", 10, 1));
  t.max_lag = tb.positive("max_lag", 3.0 * period);
  t.n_trajectories = static_cast<std::size_t>(tb.integer("n_trajectories", 500, 2));
  t.n_periods = static_cast<int>(tb.integer("n_periods", 10, 1));
  t.truncate = tb.boolean("truncate", false);
  t.kde = tb.boolean("kde", false);
  tb.finish();
  rs.resolved["table"] = tb.resolved;
  rs.finish();
  c.resolved["response"] = rs.resolved;

  Block out(doc.contains("output") ? &doc["output"] : nullptr, "/output");
  c.output_dir = out.string("dir", "out");
  out.finish();
  c.resolved["output"] = out.resolved;
  return c;
}

Config load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("", "cannot open config file " + path);
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("", std::string("invalid JSON: ") + e.what());
  }
  return parse_config(doc);
}

}  // namespace rpmeas
