#include "rpmeas/polynomial.hpp"

#include <cmath>
#include <numbers>

#include "rpmeas/error.hpp"

namespace rpmeas {

namespace {

double ipow(double x, int n) {
  double r = 1.0;
  for (int k = 0; k < n; ++k) r *= x;
  return r;
}

double monomial(const std::vector<int>& powers, std::span<const double> x) {
  double m = 1.0;
  for (std::size_t i = 0; i < powers.size(); ++i) m *= ipow(x[i], powers[i]);
  return m;
}

}  // namespace

PolyScalar::PolyScalar(int dim, double period, std::vector<PolyTerm> terms)
    : dim_(dim), period_(period), terms_(std::move(terms)) {
  if (dim_ <= 0) throw ValidationError("dim", "must be positive");
  if (!(period_ > 0.0) || !std::isfinite(period_)) throw ValidationError("period", "must be in (0, inf)");
  for (auto& term : terms_) {
    if (term.powers.empty()) term.powers.assign(static_cast<std::size_t>(dim_), 0);
    if (static_cast<int>(term.powers.size()) != dim_)
      throw ValidationError("powers", "multi-index length must equal dim");
    for (int p : term.powers)
      if (p < 0) throw ValidationError("powers", "exponents must be nonnegative");
    if (term.mode != TimeMode::Const && term.harmonic < 0)
      throw ValidationError("harmonic", "must be nonnegative");
  }
}

PolyScalar PolyScalar::constant(int dim, double period, double c) {
  return PolyScalar(dim, period, {PolyTerm{c, std::vector<int>(static_cast<std::size_t>(dim), 0)}});
}

PolyScalar PolyScalar::coordinate(int dim, double period, int i) {
  std::vector<int> powers(static_cast<std::size_t>(dim), 0);
  powers.at(static_cast<std::size_t>(i)) = 1;
  return PolyScalar(dim, period, {PolyTerm{1.0, powers}});
}

int PolyScalar::degree() const {
  int deg = 0;
  for (const auto& term : terms_) {
    int d = 0;
    for (int p : term.powers) d += p;
    deg = std::max(deg, d);
  }
  return deg;
}

double PolyScalar::time_factor(const PolyTerm& term, double t) const {
  const double w = 2.0 * std::numbers::pi * term.harmonic / period_;
  switch (term.mode) {
    case TimeMode::Const: return 1.0;
    case TimeMode::Cos: return std::cos(w * t);
    case TimeMode::Sin: return std::sin(w * t);
  }
  return 1.0;
}

double PolyScalar::time_factor_dt(const PolyTerm& term, double t) const {
  const double w = 2.0 * std::numbers::pi * term.harmonic / period_;
  switch (term.mode) {
    case TimeMode::Const: return 0.0;
    case TimeMode::Cos: return -w * std::sin(w * t);
    case TimeMode::Sin: return w * std::cos(w * t);
  }
  return 0.0;
}

double PolyScalar::value(double t, std::span<const double> x) const {
  double s = 0.0;
  for (const auto& term : terms_) s += term.coefficient * time_factor(term, t) * monomial(term.powers, x);
  return s;
}

double PolyScalar::time_derivative(double t, std::span<const double> x) const {
  double s = 0.0;
  for (const auto& term : terms_)
    s += term.coefficient * time_factor_dt(term, t) * monomial(term.powers, x);
  return s;
}

PolyScalar PolyScalar::derivative(int i) const {
  std::vector<PolyTerm> out;
  for (const auto& term : terms_) {
    const int p = term.powers.at(static_cast<std::size_t>(i));
    if (p == 0) continue;
    PolyTerm d = term;
    d.coefficient *= p;
    d.powers[static_cast<std::size_t>(i)] = p - 1;
    out.push_back(std::move(d));
  }
  return PolyScalar(dim_, period_, std::move(out));
}

void PolyScalar::gradient(double t, std::span<const double> x, std::span<double> out) const {
  for (int i = 0; i < dim_; ++i) out[static_cast<std::size_t>(i)] = 0.0;
  for (const auto& term : terms_) {
    const double c = term.coefficient * time_factor(term, t);
    for (int i = 0; i < dim_; ++i) {
      const int p = term.powers[static_cast<std::size_t>(i)];
      if (p == 0) continue;
      double m = c * p;
      for (int j = 0; j < dim_; ++j) {
        const int q = term.powers[static_cast<std::size_t>(j)] - (j == i ? 1 : 0);
        m *= ipow(x[static_cast<std::size_t>(j)], q);
      }
      out[static_cast<std::size_t>(i)] += m;
    }
  }
}

void PolyScalar::hessian(double t, std::span<const double> x, std::span<double> out) const {
  const auto d = static_cast<std::size_t>(dim_);
  for (std::size_t k = 0; k < d * d; ++k) out[k] = 0.0;
  for (const auto& term : terms_) {
    const double c = term.coefficient * time_factor(term, t);
    for (std::size_t i = 0; i < d; ++i) {
      for (std::size_t j = 0; j < d; ++j) {
        std::vector<int> q = term.powers;
        double factor = c;
        factor *= q[i];
        if (q[i] == 0) continue;
        --q[i];
        factor *= q[j];
        if (q[j] == 0) continue;
        --q[j];
        out[i * d + j] += factor * monomial(q, x);
      }
    }
  }
}

Observable coordinate_observable(int dim, double period, int i, std::string label) {
  if (label.empty()) label = "x" + std::to_string(i + 1);
  return Observable{PolyScalar::coordinate(dim, period, i), std::move(label)};
}

Observable constant_observable(int dim, double period, double c, std::string label) {
  return Observable{PolyScalar::constant(dim, period, c), std::move(label)};
}

ScalarFunction to_scalar_function(const PolyScalar& p) {
  ScalarFunction f;
  f.value = [p](double t, std::span<const double> x) { return p.value(t, x); };
  f.time_derivative = [p](double t, std::span<const double> x) { return p.time_derivative(t, x); };
  f.gradient = [p](double t, std::span<const double> x, std::span<double> g) { p.gradient(t, x, g); };
  f.hessian = [p](double t, std::span<const double> x, std::span<double> h) { p.hessian(t, x, h); };
  return f;
}

}  // namespace rpmeas
