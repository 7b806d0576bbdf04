#include <cstdlib>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "rpmeas/commands.hpp"
#include "rpmeas/parallel.hpp"

namespace {

int env_workers() {
  const char* v = std::getenv("RPMEAS_WORKERS");
  if (!v || !*v) return 0;
  try {
    return std::stoi(v);
  } catch (const std::exception&) {
    return -1;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Random periodic measures and linear response of periodically forced SDEs"};
  app.set_version_flag("--version", std::string(rpmeas::kToolVersion));
  app.require_subcommand(1);

  std::string config_path, out_dir, mode = "both";
  int workers = 0;
  bool quiet = false;
  app.add_option("--workers", workers, "OpenMP worker count (default: RPMEAS_WORKERS, then all cores)")
      ->check(CLI::NonNegativeNumber);
  app.add_flag("--quiet", quiet, "Suppress progress messages");

  struct Sub {
    const char* name;
    const char* help;
    bool config_required;
  };
  const Sub subs[] = {
      {"check", "Dissipativity report for the configured model", true},
      {"pullback", "Pullback estimate of the random periodic path and two-point contraction", true},
      {"measure", "Empirical periodic measure on the Poincare sections", true},
      {"respond", "Direct and/or FDT linear response to the configured perturbation", true},
      {"oracle", "OU self-test (config optional)", false},
      {"rerun", "Repeat the command recorded in a meta.json", true},
  };
  for (const auto& s : subs) {
    auto* sub = app.add_subcommand(s.name, s.help);
    auto* opt = sub->add_option("--config", config_path, "Config JSON or meta.json")->check(CLI::ExistingFile);
    if (s.config_required) opt->required();
    sub->add_option("--out", out_dir, "Output directory (overrides output.dir)");
    sub->add_option("--workers", workers, "OpenMP worker count")->check(CLI::NonNegativeNumber);
    sub->add_flag("--quiet", quiet, "Suppress progress messages");
    if (std::string(s.name) == "respond" || std::string(s.name) == "rerun")
      sub->add_option("--mode", mode, "direct, fdt or both")->check(CLI::IsMember({"direct", "fdt", "both"}));
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : rpmeas::kExitConfigError;
  }

  if (workers == 0) workers = env_workers();
  if (workers < 0) {
    std::cerr << "config error: RPMEAS_WORKERS must be a nonnegative integer\n";
    return rpmeas::kExitConfigError;
  }
  if (workers > 0) rpmeas::set_worker_count(workers);

  nlohmann::json doc;
  if (!config_path.empty()) {
    std::ifstream in(config_path);
    try {
      doc = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
      std::cerr << "config error: " << config_path << " is not valid JSON: " << e.what() << '\n';
      return rpmeas::kExitConfigError;
    }
  }

  std::string command = app.get_subcommands().front()->get_name();
  rpmeas::RunOptions opts;
  opts.out_dir = out_dir;
  opts.mode = mode;
  opts.quiet = quiet;
  if (command == "rerun") {
    if (!doc.contains("tool") || !doc.contains("command") || !doc["command"].is_string()) {
      std::cerr << "config error: " << config_path << " is not a meta.json\n";
      return rpmeas::kExitConfigError;
    }
    command = doc["command"].get<std::string>();
    if (doc.contains("mode") && app.get_subcommand("rerun")->count("--mode") == 0)
      opts.mode = doc["mode"].get<std::string>();
  }
  return rpmeas::run_command(command, doc, opts);
}
