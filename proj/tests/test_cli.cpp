#include <doctest.h>

#include <charconv>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "rpmeas/commands.hpp"
#include "rpmeas/config.hpp"
#include "rpmeas/io.hpp"

using namespace rpmeas;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string pointer_of(const json& doc) {
  try {
    parse_config(doc);
  } catch (const ConfigError& e) {
    return e.pointer();
  }
  return "<none>";
}

fs::path fresh_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("rpmeas_unit_" + name);
  fs::remove_all(dir);
  return dir;
}

int run(const std::string& command, const json& doc, const fs::path& out, std::string mode = "both") {
  std::ostringstream log;
  RunOptions o;
  o.out_dir = out.string();
  o.mode = std::move(mode);
  o.quiet = true;
  o.log = &log;
  return run_command(command, doc, o);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json small_ou() {
  return {{"model", {{"type", "ou"}, {"params", {{"tau", 1.0}}}}},
          {"sim", {{"dt", 1e-2}, {"seed", 3}, {"n_paths", 200}, {"burn_in_periods", 3}, {"record_periods", 2},
                   {"phases", 4}, {"x0", {0.0}}}}};
}

}  // namespace

TEST_CASE("shortest round-trip formatting") {
  for (double v : {0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, 0.0}) {
    const auto s = format_double(v);
    double back = 0.0;
    std::from_chars(s.data(), s.data() + s.size(), back);
    CHECK(back == v);
  }
  CHECK(format_double(0.1) == "0.1");
  CHECK(format_double(std::nan("")) == "nan");
  CHECK(format_double(-INFINITY) == "-inf");
}

TEST_CASE("csv writer enforces the header width") {
  const auto dir = fresh_dir("csv");
  fs::create_directories(dir);
  {
    CsvWriter w(dir / "a.csv", {"t", "x"});
    w.cell(0.5).cell(std::string("x1")).end_row();
    w.cell(1.0);
    CHECK_THROWS_AS(w.end_row(), std::logic_error);
  }
  CHECK(slurp(dir / "a.csv").rfind("t,x\n0.5,x1\n", 0) == 0);
}

TEST_CASE("config schema") {
  CHECK(pointer_of(json{{"sim", json::object()}}) == "/model");
  CHECK(pointer_of(json{{"model", {{"type", "ou"}}}, {"simm", json::object()}}) == "/simm");
  CHECK(pointer_of(json{{"model", {{"type", "ou"}, {"params", {{"sigma", "big"}}}}}}) == "/model/params/sigma");
  CHECK(pointer_of(json{{"model", {{"type", "ou"}, {"params", {{"tau", 1.0}}}}}, {"sim", {{"phases", 7}}}}) ==
        "/sim/phases");
  CHECK(pointer_of(json{{"model", {{"type", "ou"}, {"params", {{"tau", 1.0}}}}}, {"sim", {{"dt", 0.3}}}}) ==
        "/sim/dt");
  CHECK(pointer_of(json{{"model", {{"type", "lorenz"}}}, {"sim", {{"x0", {1.0}}}}}) == "/sim/x0");
  CHECK(pointer_of(json{{"model", {{"type", "ou"}}},
                        {"perturbation", {{"profile", {{"type", "ramped_step"}, {"delta_t", -1.0}}}}}}) ==
        "/perturbation/profile/delta_t");
  CHECK(pointer_of(json{{"model", {{"type", "ou"}}}, {"perturbation", {{"profile", {{"kind", "x"}}}}}}) ==
        "/perturbation/profile/kind");

  const auto c = parse_config(json{{"model", {{"type", "lorenz"}, {"preset", "regime2"}}}});
  CHECK(c.model.dim == 3);
  CHECK(c.sim.dt == 1e-3);
  CHECK(c.resolved["model"]["params"]["rho_bar"] == 28.0);
  // the resolved document parses to itself
  CHECK(parse_config(c.resolved).resolved == c.resolved);
  const json meta = {{"tool", {{"name", "rpmeas"}}}, {"config", c.resolved}};
  CHECK(parse_config(meta).resolved == c.resolved);
}

TEST_CASE("check command reports") {
  const json anti = {{"model",
                      {{"type", "polynomial"},
                       {"params",
                        {{"dim", 1},
                         {"period", 1.0},
                         {"drift", {{{{"c", 1.0}, {"powers", {1}}}}}},
                         {"diffusion", {{{{"c", 0.5}}}}}}}}},
                     {"check", {{"envelope", {1.0, 0.5, 1.0}}}}};
  const auto dir = fresh_dir("anti");
  CHECK(run("check", anti, dir) == kExitOk);
  const auto report = json::parse(slurp(dir / "dissipativity_report.json"));
  CHECK(report["passes"] == false);
  CHECK(report["grid_check"]["n_violations"].get<int>() > 0);

  json no_env = anti;
  no_env.erase("check");
  CHECK(run("check", no_env, fresh_dir("noenv")) == kExitConfigError);
  CHECK(run("check", json{{"sim", json::object()}}, fresh_dir("nomodel")) == kExitConfigError);
}

TEST_CASE("measure and respond outputs") {
  const auto dir = fresh_dir("measure");
  CHECK(run("measure", small_ou(), dir) == kExitOk);
  for (int k = 0; k < 4; ++k) CHECK(fs::exists(dir / ("measure_phase_" + std::to_string(k) + ".csv")));
  const auto meta = json::parse(slurp(dir / "meta.json"));
  CHECK(meta["command"] == "measure");
  CHECK(meta["seed"] == 3);

  json zero = small_ou();
  zero["perturbation"] = {{"epsilon", 0.0}, {"direction", {1.0}}, {"profile", {{"type", "ramped_step"}, {"t0", 0.5}, {"delta_t", 0.2}}}};
  zero["response"] = {{"t_end", 1.0}, {"n_paths", 1000},
                      {"table", {{"phase_bins", 4}, {"lag_stride_steps", 1}, {"max_lag", 2.0}, {"n_trajectories", 10}, {"n_periods", 2}}}};
  const auto rdir = fresh_dir("respond");
  CHECK(run("respond", zero, rdir) == kExitOk);
  std::istringstream csv(slurp(rdir / "response.csv"));
  std::string line;
  std::getline(csv, line);
  CHECK(line == "t,observable,delta_direct,stderr_direct,delta_fdt_qg");
  int rows = 0;
  while (std::getline(csv, line)) {
    ++rows;
    CHECK(line.substr(line.find(",x1,") + 4) == "0,0,0");
  }
  CHECK(rows == 11);
  CHECK(fs::exists(rdir / "rtable.csv"));

  const auto ddir = fresh_dir("respond_direct");
  CHECK(run("respond", zero, ddir, "direct") == kExitOk);
  CHECK_FALSE(fs::exists(ddir / "rtable.csv"));
  CHECK(run("respond", small_ou(), fresh_dir("respond_nopert")) == kExitConfigError);
}

TEST_CASE("pullback exit codes") {
  json stable = {{"model", {{"type", "ou"}, {"params", {{"tau", 1.0}, {"sigma", 0.0}}}}},
                 {"sim", {{"dt", 1e-2}, {"phases", 4}, {"x0", {3.0}}}},
                 {"pullback", {{"n_realizations", 4}, {"contraction_pairs", 2}, {"contraction_horizon_periods", 2.0}}}};
  const auto dir = fresh_dir("pullback");
  CHECK(run("pullback", stable, dir) == kExitOk);
  CHECK(json::parse(slurp(dir / "pullback_summary.json"))["converged"] == true);
  CHECK(slurp(dir / "contraction.csv").rfind("t,mean_pth_moment,stderr", 0) == 0);

  stable["pullback"]["n_max_periods"] = 2;
  stable["pullback"]["tol"] = 1e-300;
  CHECK(run("pullback", stable, fresh_dir("pullback_strict")) == kExitNonConvergence);
}
