#include <cstdlib>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "storm/experiment.hpp"

namespace {

storm::ExperimentSpec build_spec(const std::string& config, const std::string& preset,
                                 const std::vector<std::string>& sets, const std::string& out,
                                 const std::string& seeds) {
  std::vector<std::string> overrides = sets;
  if (!out.empty()) overrides.push_back("output_dir = " + out);
  if (!seeds.empty()) overrides.push_back("seeds = " + seeds);
  return storm::parse_config(config, overrides, preset);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"STORM noise-robust training toolkit"};
  app.require_subcommand(1);

  std::string config, preset, out, seeds, run_dir, analyze_out;
  std::vector<std::string> sets;

  const char* env_out = std::getenv("STORM_OUTPUT_ROOT");

  auto add_spec_options = [&](CLI::App* cmd) {
    cmd->add_option("--config", config, "flat key=value config file");
    cmd->add_option("--preset", preset, "named preset (see `storm presets`)");
    cmd->add_option("--set", sets, "override, e.g. --set noise.rate=0.2")->take_all();
    cmd->add_option("--out", out, "output directory (overrides output_dir)");
    cmd->add_option("--seeds", seeds, "comma-separated seed list");
  };

  CLI::App* run = app.add_subcommand("run", "run an experiment and write the artifact bundle");
  add_spec_options(run);

  CLI::App* validate = app.add_subcommand("validate", "parse and echo the resolved config");
  add_spec_options(validate);

  CLI::App* aggregate =
      app.add_subcommand("aggregate", "re-reduce an existing bundle directory");
  aggregate->add_option("--out", out, "bundle directory")->required();

  CLI::App* analyze = app.add_subcommand("analyze", "emit analysis tables from a run log");
  analyze->add_option("--run", run_dir, "run directory containing run_log.jsonl")->required();
  analyze->add_option("--out", analyze_out, "directory for the emitted tables")->required();

  CLI::App* presets = app.add_subcommand("presets", "list available presets");

  CLI11_PARSE(app, argc, argv);

  try {
    if (presets->parsed()) {
      for (const auto& name : storm::preset_names()) std::cout << name << "\n";
      return 0;
    }
    if (validate->parsed()) {
      if (out.empty() && env_out != nullptr) out = std::string(env_out);
      storm::ExperimentSpec spec = build_spec(config, preset, sets, out, seeds);
      std::cout << storm::serialize_spec(spec);
      return 0;
    }
    if (run->parsed()) {
      if (out.empty() && env_out != nullptr) out = std::string(env_out);
      storm::ExperimentSpec spec = build_spec(config, preset, sets, out, seeds);
      storm::ExperimentResult result = storm::run_experiment(spec);
      int ok = 0, failed = 0;
      for (const auto& r : result.runs) (r.failed ? failed : ok)++;
      std::cout << "completed " << ok << " runs";
      if (failed) std::cout << ", " << failed << " failed";
      std::cout << "; bundle at " << spec.output_dir << "\n";
      return result.exit_code;
    }
    if (aggregate->parsed()) return storm::aggregate_directory(out);
    if (analyze->parsed()) return storm::analyze_run_directory(run_dir, analyze_out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
