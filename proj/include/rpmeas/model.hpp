#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "rpmeas/polynomial.hpp"

namespace rpmeas {

// out = f(t, x). Vector fields write d values, diffusion writes d*m values row-major.
using FieldFn = std::function<void(double t, std::span<const double> x, std::span<double> out)>;

struct LorenzParams {
  double alpha_bar = 7.3;
  double beta_bar = 26.0;
  double gamma_bar = 7.0;
  double rho_bar = 10.0;
  double f_bar = 100.0;
  double delta_bar = 0.9;
  double tau = 1.0;
  double sigma_bar = 0.2;

  // Stable random periodic regime and the regime without convergence.
  static LorenzParams regime1();
  static LorenzParams regime2();
};

struct FhnParams {
  double a = 0.5;
  double beta = 2.0;
  double B1 = 0.5;
  double B2 = 0.1;
  double c = 0.0;
  double tau_freq = 1.0;  // angular frequency; period = 2 pi / tau_freq
};

struct OuParams {
  double a = 1.0;
  double forcing_amp = 1.0;
  double tau = 1.0;
  double sigma = 1.0;
};

struct PolynomialSpec {
  int dim = 1;
  int noise_dim = 1;
  double period = 1.0;
  std::vector<PolyScalar> drift;      // d entries
  std::vector<PolyScalar> diffusion;  // d*m entries, row-major
  std::string label = "polynomial";
};

using ModelParams = std::variant<LorenzParams, OuParams, FhnParams, PolynomialSpec>;

struct PeriodicSdeModel {
  int dim = 0;
  int noise_dim = 0;
  double period = 1.0;
  FieldFn drift;
  FieldFn diffusion;
  std::optional<FieldFn> drift_jacobian;  // row-major d x d
  std::string label;
  ModelParams params;

  void eval_drift(double t, std::span<const double> x, std::span<double> out) const {
    drift(t, x, out);
  }
  void eval_diffusion(double t, std::span<const double> x, std::span<double> out) const {
    diffusion(t, x, out);
  }
};

PeriodicSdeModel build_lorenz(const LorenzParams& p);
PeriodicSdeModel build_ou(const OuParams& p);
PeriodicSdeModel build_fhn(const FhnParams& p);
PeriodicSdeModel build_polynomial(const PolynomialSpec& spec);

// Periodic forcing component F_1(t) of the Lorenz model and its sup over one period
// (sampled at 4096 points, exact endpoints of sin included).
double lorenz_forcing(const LorenzParams& p, double t);
double lorenz_forcing_sup(const LorenzParams& p);

// Closed forms for the OU oracle dX = (-aX + A sin(2 pi t / tau)) dt + sigma dW.
double ou_periodic_mean(const OuParams& p, double t);
double ou_stationary_variance(const OuParams& p);

// d/dt f + b . grad f + 1/2 tr(sigma sigma^T Hess f)
double generator_apply(const PeriodicSdeModel& model, const ScalarFunction& f, double t,
                       std::span<const double> x);

// Two-point test function g(t, x, y); gradient has 2d entries (x then y), Hessian 2d x 2d.
struct TwoPointFunction {
  std::function<double(double, std::span<const double>, std::span<const double>)> time_derivative;
  std::function<void(double, std::span<const double>, std::span<const double>, std::span<double>)>
      gradient;
  std::function<void(double, std::span<const double>, std::span<const double>, std::span<double>)>
      hessian;
};

// Generator of the two-point motion driven by common noise.
double two_point_generator_apply(const PeriodicSdeModel& model, const TwoPointFunction& g,
                                 double t, std::span<const double> x, std::span<const double> y);

// Closed form of the two-point generator for V = |x - y|^p, p >= 1:
//   <b(x) - b(y), grad V> + 1/2 tr(Dsigma Dsigma^T Hess V),  Dsigma = sigma(x) - sigma(y).
double two_point_distance_generator(const PeriodicSdeModel& model, double p, double t,
                                    std::span<const double> x, std::span<const double> y);

}  // namespace rpmeas
