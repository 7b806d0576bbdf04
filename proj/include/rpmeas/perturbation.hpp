#pragma once

#include <span>
#include <string>
#include <variant>
#include <vector>

#include "rpmeas/polynomial.hpp"

namespace rpmeas {

// Time modulation theta(t) of a perturbation eps * theta(t) * (b_dir, H).
struct ZeroProfile {};
// C^1 smooth step from 0 (t <= t0 - delta_t) to 1 (t >= t0 + delta_t), piecewise
// quadratic on both halves of the ramp.
struct RampedStep {
  double t0 = 0.0;
  double delta_t = 12.0;
};
// RampedStep(t) * (1 + cos(omega_mod t)).
struct CosineModulatedRamp {
  double t0 = 0.0;
  double delta_t = 12.0;
  double omega_mod = 1.0;
};
// H(t - t_on) cos^2(omega t). Not C^1 and nonzero right after t_on.
struct HeavisideCosSq {
  double t_on = 0.0;
  double omega = 1.0;
};
// Piecewise-linear interpolation, constant extrapolation.
struct TableProfile {
  std::vector<double> times;
  std::vector<double> values;
};

class TimeProfile {
 public:
  using Variant = std::variant<ZeroProfile, RampedStep, CosineModulatedRamp, HeavisideCosSq, TableProfile>;

  TimeProfile() = default;
  TimeProfile(Variant v);  // validates

  double operator()(double t) const;
  const Variant& variant() const { return v_; }
  std::string name() const;
  // theta is C^1 with theta(0) = 0 on [0, inf).
  bool satisfies_regularity() const;
  // theta(t) == 0 for every t < support_start(); -inf when no such bound is known,
  // +inf for the zero profile.
  double support_start() const;

 private:
  Variant v_ = ZeroProfile{};
};

// Drift direction b_dir (d polynomial components, tau-periodic in the phase) and
// optional diffusion direction H (d*m polynomial entries, row-major; empty = 0).
struct PerturbationSpec {
  std::vector<PolyScalar> drift_direction;
  std::vector<PolyScalar> diffusion_direction;
  double epsilon = 0.0;
  TimeProfile profile;
  double admissible_lo = -1e300;
  double admissible_hi = 1e300;

  static PerturbationSpec constant_drift(std::span<const double> direction, double period,
                                         double epsilon, TimeProfile profile);

  int dim() const { return static_cast<int>(drift_direction.size()); }
  bool has_diffusion() const { return !diffusion_direction.empty(); }
  double alpha(double t) const { return epsilon * profile(t); }
  void drift(double phase, std::span<const double> x, std::span<double> out) const;
  double drift_divergence(double phase, std::span<const double> x) const;
  void diffusion(double phase, std::span<const double> x, std::span<double> out) const;
  // Checks eps * theta(t) stays in [admissible_lo, admissible_hi] on [0, horizon].
  void validate(double horizon, int noise_dim) const;
};

}  // namespace rpmeas
