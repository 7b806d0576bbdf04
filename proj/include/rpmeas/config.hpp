#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "rpmeas/dissipativity.hpp"
#include "rpmeas/model.hpp"
#include "rpmeas/noise.hpp"
#include "rpmeas/perturbation.hpp"

namespace rpmeas {

// Schema violation; `pointer` is the JSON pointer of the offending key.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string pointer, const std::string& what)
      : std::runtime_error(pointer + ": " + what), pointer_(std::move(pointer)) {}
  const std::string& pointer() const noexcept { return pointer_; }

 private:
  std::string pointer_;
};

struct SimConfig {
  double dt = 0.0;
  std::uint64_t seed = 1;
  std::size_t n_paths = 1000;
  int burn_in_periods = 50;
  int record_periods = 4;
  int phases = 8;
  std::vector<double> x0;
};

struct PullbackConfig {
  std::size_t n_realizations = 200;
  int n_max_periods = 64;
  double tol = 0.0;
  double tol_relative = 1e-6;
  double contraction_p = 2.0;
  double contraction_horizon_periods = 20.0;
  std::size_t contraction_pairs = 100;
  std::vector<double> eta;  // second start of the contraction pairs
};

struct CheckConfig {
  std::vector<double> p = {2.0};
  std::optional<std::array<double, 3>> envelope;  // L_b1, L_b2, L_sigma
  double kappa1 = 25.0;                           // Lorenz envelope
  double kappa3 = 1.0;
  std::optional<double> kappa;                    // sharp p = 3
  double horizon_periods = 10.0;
  std::size_t n_paths = 200;
};

struct TableConfig {
  int phase_bins = 64;
  int lag_stride_steps = 10;
  double max_lag = 0.0;  // 0 selects three periods
  std::size_t n_trajectories = 500;
  int n_periods = 10;
  bool truncate = false;
  bool kde = false;
};

struct ResponseConfig {
  double t_start = 0.0;
  double t_end = 10.0;
  double t_step = 0.1;
  std::vector<int> observables;  // coordinate indices; empty = all
  std::size_t n_paths = 0;       // 0 selects sim.n_paths
  TableConfig table;
};

struct Config {
  std::string model_type;
  PeriodicSdeModel model;
  SimConfig sim;
  std::optional<PerturbationSpec> perturbation;
  PullbackConfig pullback;
  CheckConfig check;
  ResponseConfig response;
  std::string output_dir = "out";
  nlohmann::json resolved;  // every field, defaults filled in

  NoiseSpec noise_spec() const { return NoiseSpec{sim.seed, sim.dt, model.noise_dim, 0.0}; }
};

// Accepts a config document or a meta.json written by a previous run (its "config" block).
Config parse_config(const nlohmann::json& doc);
Config load_config(const std::string& path);

// The inner config when `doc` is a meta.json document, otherwise `doc` itself.
const nlohmann::json& config_document(const nlohmann::json& doc);

}  // namespace rpmeas
