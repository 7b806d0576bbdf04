#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>


namespace rpmeas {

enum class TimeMode { Const, Cos, Sin };

// coefficient * h(t) * prod_i x_i^{powers[i]} with h = 1, cos(2 pi k t / period)
// or sin(2 pi k t / period).
struct PolyTerm {
  double coefficient = 0.0;
  std::vector<int> powers;
  TimeMode mode = TimeMode::Const;
  int harmonic = 0;
};

// Scalar field that is polynomial in x and a finite tau-harmonic sum in t, so
// f(t + period, x) = f(t, x) holds by construction and all derivatives are exact.
class PolyScalar {
 public:
  PolyScalar() = default;
  PolyScalar(int dim, double period, std::vector<PolyTerm> terms);

  static PolyScalar constant(int dim, double period, double c);
  // Coordinate projection x_i.
  static PolyScalar coordinate(int dim, double period, int i);

  int dim() const { return dim_; }
  double period() const { return period_; }
  const std::vector<PolyTerm>& terms() const { return terms_; }
  int degree() const;

  double value(double t, std::span<const double> x) const;
  double time_derivative(double t, std::span<const double> x) const;
  void gradient(double t, std::span<const double> x, std::span<double> out) const;
  // Row-major d x d.
  void hessian(double t, std::span<const double> x, std::span<double> out) const;
  // Exact polynomial derivative d/dx_i as a new field.
  PolyScalar derivative(int i) const;

 private:
  double time_factor(const PolyTerm& term, double t) const;
  double time_factor_dt(const PolyTerm& term, double t) const;

  int dim_ = 0;
  double period_ = 1.0;
  std::vector<PolyTerm> terms_;
};

// tau-periodic observable phi(t, x); only tau-harmonics are representable.
struct Observable {
  PolyScalar field;
  std::string label;

  double operator()(double t, std::span<const double> x) const { return field.value(t, x); }
};

Observable coordinate_observable(int dim, double period, int i, std::string label = "");
Observable constant_observable(int dim, double period, double c, std::string label = "one");

// Scalar test function with caller-supplied derivatives, as consumed by the
// generator operators.
struct ScalarFunction {
  std::function<double(double, std::span<const double>)> value;
  std::function<double(double, std::span<const double>)> time_derivative;
  std::function<void(double, std::span<const double>, std::span<double>)> gradient;
  std::function<void(double, std::span<const double>, std::span<double>)> hessian;
};

ScalarFunction to_scalar_function(const PolyScalar& p);

}  // namespace rpmeas
