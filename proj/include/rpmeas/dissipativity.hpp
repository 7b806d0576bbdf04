#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rpmeas/model.hpp"
#include "rpmeas/noise.hpp"

namespace rpmeas {

// Envelope of the dissipative growth condition
//   <b(t,x), x> <= L_b1(t) - L_b2(t)|x|^2,   ||sigma(t,x)||_HS^2 <= L_sigma(t)(1 + |x|^2).
struct GrowthEnvelope {
  std::function<double(double)> L_b1;
  std::function<double(double)> L_b2;
  std::function<double(double)> L_sigma;
  double period = 1.0;

  static GrowthEnvelope constant(double l_b1, double l_b2, double l_sigma, double period = 1.0);
};

// sup / inf over one period from 1024 samples.
double envelope_sup(const std::function<double(double)>& f, double period);
double envelope_inf(const std::function<double(double)>& f, double period);

struct DissipativityGrid {
  int n_times = 16;
  std::vector<double> radii = {0.0, 0.1, 0.3, 1.0, 3.0, 10.0, 30.0, 100.0, 300.0, 1000.0};
  int n_directions = 64;   // random unit vectors, plus the +-coordinate axes
  std::uint64_t seed = 1;
  double margin = 1e-9;    // relative slack before a point counts as a violation
};

struct DissipativityViolation {
  double t = 0.0;
  std::vector<double> x;
  double drift_lhs = 0.0, drift_rhs = 0.0;
  double hs_lhs = 0.0, hs_rhs = 0.0;
};

struct ViolationReport {
  std::size_t n_checked = 0;
  std::vector<DissipativityViolation> violations;
  bool certified() const { return violations.empty(); }
};

ViolationReport verify_dissipative(const PeriodicSdeModel& model, const GrowthEnvelope& envelope,
                                   const DissipativityGrid& grid = {});

struct MomentBoundReport {
  double p = 2.0;
  double p_used = 2.0;     // 2p when p < 2 (Holder reduction)
  double a = 0.0;
  double b = 0.0;
  double bound = 0.0;      // a / b, +inf without certificate
  bool passes = false;     // b > 0
};

// Generic constants a_p, b_p; p in [1, 2) is routed through p' = 2p.
MomentBoundReport coeffs_ap_bp(const GrowthEnvelope& envelope, double p);

struct SharpBounds {
  double a2 = 0.0, b2 = 0.0, bound2 = 0.0;
  bool passes2 = false;
  double kappa = 0.0;                 // kappa used for a3, b3
  double a3 = 0.0, b3 = 0.0;
  double ratio_at_kappa = 0.0;        // a3 / b3 at kappa, +inf if b3 <= 0
  bool passes3 = false;
  bool optimal_available = false;     // L_b2 > L_sigma
  double nominal_optimal_kappa = 0.0; // sqrt(12 A / B)
  double nominal_min_ratio = 0.0;     // 27^{1/2} (A / B)^{3/2}
  double exact_optimal_kappa = 0.0;   // argmin of a3 / b3: sqrt(4 A / (9 B))
  double exact_min_ratio = 0.0;       // (A / B)^{3/2}
  double ratio_AB = 0.0;              // A / B, A = sup(L_b1 + L_sigma), B = inf(L_b2 - L_sigma)
  std::string note;
};

// Sharp p = 2, 3 constants. Without kappa the nominal choice kappa^2 = 12 A / B is used.
SharpBounds sharp_bounds(const GrowthEnvelope& envelope, std::optional<double> kappa = std::nullopt);

// e^{-b t} m0 + (a / b)(1 - e^{-b t}); throws when b <= 0.
std::vector<double> moment_bound_curve(double a, double b, double initial_moment,
                                       std::span<const double> times);

struct LorenzEnvelope {
  GrowthEnvelope envelope;
  double F1_bar = 0.0;
  double L_b1 = 0.0, L_b2 = 0.0, L_sigma = 0.0;
  double C_A = 0.0;
  double C_bar = 0.0;
  double constraint = 0.0;   // C_A - sigma/2 - C_bar sqrt((L_b1 + L_sigma) / (L_b2 - L_sigma))
  bool constraint_ok = false;
  bool valid = false;        // L_b2 > 0
  std::string message;
};

LorenzEnvelope lorenz_envelope(const LorenzParams& params, double kappa1, double kappa3,
                               double c_bar = 1.7320508075688772);  // 27^{1/6}

struct HasminskiiReport {
  bool growth_ok = false;        // <b,x> <= L_b (1 + |x|^2) and HS bound on the grid
  std::size_t growth_violations = 0;
  double period_mean_C = 0.0;    // (1/tau) int_0^tau C(u, p) du
  double integral = 0.0;         // int_0^horizon C(u, p) du
  double max_exp_integral = 0.0; // max over [0, horizon] of exp(int_0^t C)
  bool integral_bounded = false; // period mean of C <= 0
  bool passes = false;
};

HasminskiiReport hasminskii_check(const PeriodicSdeModel& model, const std::function<double(double)>& L_b,
                                  const std::function<double(double)>& L_sigma, double p, double horizon,
                                  const DissipativityGrid& grid = {});

struct MomentComparison {
  double p = 2.0;
  double a = 0.0, b = 0.0;
  bool sharp = false;
  std::vector<double> times;
  std::vector<double> simulated;
  std::vector<double> std_error;
  std::vector<double> bound;
  bool holds = false;            // simulated <= bound + 3 stderr everywhere
  double worst_margin = 0.0;     // max (simulated - bound) / stderr-or-1
};

// Simulated E|X_t|^p from x0 against the Gronwall curve; p = 2, 3 use the sharp
// constants when they certify, otherwise the generic ones.
MomentComparison simulated_moment_vs_bound(const PeriodicSdeModel& model, const GrowthEnvelope& envelope,
                                           double p, double horizon, std::size_t n_paths,
                                           const NoiseSpec& spec, std::span<const double> x0,
                                           int n_checkpoints = 50);

struct SpanRankReport {
  std::vector<int> ranks;
  int min_rank = 0;
  std::vector<std::size_t> deficient;  // indices of points with rank < d
};

// Rank of span{sigma_k(t, x)} at each (t, x); points are rows of dimension d.
SpanRankReport diffusion_span_rank(const PeriodicSdeModel& model, double t, std::span<const double> points);

}  // namespace rpmeas
