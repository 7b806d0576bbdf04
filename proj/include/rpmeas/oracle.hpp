#pragma once

#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

#include "rpmeas/model.hpp"
#include "rpmeas/perturbation.hpp"

namespace rpmeas {

struct OracleCheck {
  std::string name;
  bool pass = false;
  std::string detail;
};

// OU self-test: dX = (-aX + A sin(2 pi t / tau)) dt + sigma dW, drift perturbation b = 1.
struct OuOracleOptions {
  OuParams params{1.0, 1.0, 2.0 * std::numbers::pi, 1.0};
  std::uint64_t seed = 20240917;
  std::int64_t steps_per_period = 6400;  // dt = tau / steps_per_period
  double epsilon = 0.1;
  double t_end = 20.0;
  std::size_t direct_paths = 10000;
  std::size_t measure_paths = 10000;
  std::size_t table_trajectories = 500;
  int table_periods = 20;
  std::size_t consistency_trajectories = 2000;  // FDT consistency and FDT II checks
  int consistency_periods = 50;
};

// Direct and qg-predicted response to eps RampedStep(5, 2) against the closed-form
// convolution eps int_0^t e^{-a (t - r)} theta(r) dr; relative L2 <= 5% and <= 8%.
OracleCheck ou_exact_response_check(const OuOracleOptions& options);

// qg response function against e^{-a lag} within 3 standard errors at 8 phases and
// lags 0, tau/4, ..., 3 tau.
OracleCheck ou_fdt_consistency_check(const OuOracleOptions& options);

// Derivative of the score correlation against e^{-a lag} within 3 standard errors plus
// the finite-difference bound at h = 2 dt.
OracleCheck ou_fdt2_check(const OuOracleOptions& options);

std::vector<OracleCheck> ou_oracle_suite(const OuOracleOptions& options);

// eps int_0^t e^{-a (t - r)} theta(r) dr by composite Simpson on 2e5 panels.
double ou_exact_response(const TimeProfile& theta, double epsilon, double a, double t);

}  // namespace rpmeas
