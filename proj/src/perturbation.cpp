#include "rpmeas/perturbation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "rpmeas/error.hpp"

namespace rpmeas {

namespace {

double smooth_step(double t, double t0, double delta_t) {
  const double s = (t - t0) / delta_t;
  if (s <= -1.0) return 0.0;
  if (s >= 1.0) return 1.0;
  if (s <= 0.0) return 0.5 * (1.0 + s) * (1.0 + s);
  return 1.0 - 0.5 * (1.0 - s) * (1.0 - s);
}

struct ProfileValue {
  double t;
  double operator()(const ZeroProfile&) const { return 0.0; }
  double operator()(const RampedStep& p) const { return smooth_step(t, p.t0, p.delta_t); }
  double operator()(const CosineModulatedRamp& p) const {
    return smooth_step(t, p.t0, p.delta_t) * (1.0 + std::cos(p.omega_mod * t));
  }
  double operator()(const HeavisideCosSq& p) const {
    if (t < p.t_on) return 0.0;
    const double c = std::cos(p.omega * t);
    return c * c;
  }
  double operator()(const TableProfile& p) const {
    const auto& ts = p.times;
    if (t <= ts.front()) return p.values.front();
    if (t >= ts.back()) return p.values.back();
    const auto it = std::upper_bound(ts.begin(), ts.end(), t);
    const auto i = static_cast<std::size_t>(it - ts.begin());
    const double w = (t - ts[i - 1]) / (ts[i] - ts[i - 1]);
    return (1.0 - w) * p.values[i - 1] + w * p.values[i];
  }
};

}  // namespace

TimeProfile::TimeProfile(Variant v) : v_(std::move(v)) {
  if (const auto* r = std::get_if<RampedStep>(&v_)) {
    if (!(r->delta_t > 0.0)) throw ValidationError("delta_t", "must be positive");
  } else if (const auto* c = std::get_if<CosineModulatedRamp>(&v_)) {
    if (!(c->delta_t > 0.0)) throw ValidationError("delta_t", "must be positive");
  } else if (const auto* tab = std::get_if<TableProfile>(&v_)) {
    if (tab->times.empty() || tab->times.size() != tab->values.size())
      throw ValidationError("table", "times and values must be nonempty and of equal length");
    if (!std::is_sorted(tab->times.begin(), tab->times.end()) ||
        std::adjacent_find(tab->times.begin(), tab->times.end()) != tab->times.end())
      throw ValidationError("table", "times must be strictly increasing");
  }
}

double TimeProfile::operator()(double t) const { return std::visit(ProfileValue{t}, v_); }

std::string TimeProfile::name() const {
  struct Name {
    std::string operator()(const ZeroProfile&) const { return "zero"; }
    std::string operator()(const RampedStep&) const { return "ramped_step"; }
    std::string operator()(const CosineModulatedRamp&) const { return "cosine_modulated_ramp"; }
    std::string operator()(const HeavisideCosSq&) const { return "heaviside_cos_sq"; }
    std::string operator()(const TableProfile&) const { return "table"; }
  };
  return std::visit(Name{}, v_);
}

double TimeProfile::support_start() const {
  struct Start {
    double operator()(const ZeroProfile&) const { return std::numeric_limits<double>::infinity(); }
    double operator()(const RampedStep& p) const { return p.t0 - p.delta_t; }
    double operator()(const CosineModulatedRamp& p) const { return p.t0 - p.delta_t; }
    double operator()(const HeavisideCosSq& p) const { return p.t_on; }
    double operator()(const TableProfile& p) const {
      if (p.values.front() != 0.0) return -std::numeric_limits<double>::infinity();
      std::size_t i = 0;
      while (i + 1 < p.values.size() && p.values[i + 1] == 0.0) ++i;
      if (i + 1 == p.values.size()) return std::numeric_limits<double>::infinity();
      return p.times[i];
    }
  };
  return std::visit(Start{}, v_);
}

bool TimeProfile::satisfies_regularity() const {
  if (std::holds_alternative<HeavisideCosSq>(v_)) return false;
  if (std::holds_alternative<TableProfile>(v_)) return false;
  return (*this)(0.0) == 0.0;
}

PerturbationSpec PerturbationSpec::constant_drift(std::span<const double> direction, double period,
                                                  double epsilon, TimeProfile profile) {
  PerturbationSpec p;
  const int d = static_cast<int>(direction.size());
  for (double c : direction) p.drift_direction.push_back(PolyScalar::constant(d, period, c));
  p.epsilon = epsilon;
  p.profile = std::move(profile);
  return p;
}

void PerturbationSpec::drift(double phase, std::span<const double> x, std::span<double> out) const {
  for (std::size_t i = 0; i < drift_direction.size(); ++i) out[i] = drift_direction[i].value(phase, x);
}

double PerturbationSpec::drift_divergence(double phase, std::span<const double> x) const {
  double div = 0.0;
  std::vector<double> g(drift_direction.size());
  for (std::size_t i = 0; i < drift_direction.size(); ++i) {
    if (drift_direction[i].degree() == 0) continue;
    drift_direction[i].gradient(phase, x, g);
    div += g[i];
  }
  return div;
}

void PerturbationSpec::diffusion(double phase, std::span<const double> x, std::span<double> out) const {
  for (std::size_t i = 0; i < diffusion_direction.size(); ++i)
    out[i] = diffusion_direction[i].value(phase, x);
}

void PerturbationSpec::validate(double horizon, int noise_dim) const {
  if (drift_direction.empty()) throw ValidationError("perturbation.direction", "must be nonempty");
  if (has_diffusion() &&
      diffusion_direction.size() != drift_direction.size() * static_cast<std::size_t>(noise_dim))
    throw ValidationError("perturbation.diffusion_direction", "expected dim * noise_dim entries");
  if (!std::isfinite(epsilon)) throw ValidationError("perturbation.epsilon", "must be finite");
  constexpr int n = 4096;
  for (int k = 0; k <= n; ++k) {
    const double a = alpha(horizon * k / n);
    if (a < admissible_lo || a > admissible_hi)
      throw ValidationError("perturbation.epsilon", "eps * theta(t) leaves the admissible interval");
  }
}

}  // namespace rpmeas
