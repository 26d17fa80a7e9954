// skill: command-line runner for shared-knowledge lifelong learning runs.
//
//   skill run <config> [--out dir] [overrides]
//   skill validate <config> [overrides]
//   skill synth <spec> <outdir>
//   skill report <rundir>

#include <filesystem>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "skill/config.hpp"
#include "skill/experiment.hpp"

namespace fs = std::filesystem;

namespace {

void print_summary(const nlohmann::json& s, std::ostream& os) {
  const auto& run = s.at("run");
  os << "run: " << run.at("tasks") << " tasks, " << run.at("agents") << " agents, mapper "
     << run.at("mapper").get<std::string>() << ", bb " << run.at("bb") << ", h2t " << run.at("h2t") << ", seed "
     << run.at("seed") << "\n";
  const auto& acc = s.at("accuracy");
  os << std::fixed << std::setprecision(4);
  os << "  average accuracy     " << acc.at("average").get<double>() << "\n";
  os << "  end-to-end accuracy  " << acc.at("end_to_end").get<double>() << "\n";
  os << "  task-mapper accuracy " << acc.at("mapper").get<double>() << "\n";
  for (const auto& [th, v] : acc.at("corrective").items())
    os << "  corrective @ " << th << std::string(th.size() < 8 ? 8 - th.size() : 0, ' ') << v.get<double>() << "\n";
  if (s.contains("mapper_curve")) {
    const auto& mc = s.at("mapper_curve");
    os << "  mapper trend         slope " << std::setprecision(6) << mc.at("slope").get<double>() << ", intercept "
       << mc.at("intercept").get<double>() << ", zero crossing ";
    if (mc.at("zero_crossing").is_null())
      os << "none\n";
    else
      os << std::setprecision(2) << mc.at("zero_crossing").get<double>() << "\n";
  }
  os << std::setprecision(4);
  for (const auto& [mode, p] : s.at("parallel").items())
    os << "  parallel (" << mode << " bytes)" << std::string(mode.size() < 6 ? 6 - mode.size() : 0, ' ')
       << "speedup " << p.at("speedup").get<double>() << ", efficiency " << p.at("efficiency").get<double>() << "\n";
  const auto& checks = s.at("checks");
  os << "  checks: states identical " << checks.at("states_identical") << ", ledger conserved "
     << checks.at("ledger_conserved") << "\n";
}

int print_errors(const std::vector<std::string>& errors) {
  for (const auto& e : errors) std::cerr << "error: " << e << "\n";
  return 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Shared-knowledge lifelong learning simulator"};
  app.require_subcommand(1);

  skill::ConfigOverrides ov;
  std::string config_path, out_dir, spec_path, synth_out, run_dir;
  auto add_overrides = [&](CLI::App* cmd) {
    cmd->add_option("--seed", ov.seed, "Run seed");
    cmd->add_option("--agents", ov.agents, "Number of agents (uses the block assignment)")->check(CLI::PositiveNumber);
    cmd->add_option("--mapper", ov.mapper, "Task mapper")->check(CLI::IsMember({"gmmc", "maha"}));
    cmd->add_option("--bb", ov.bb, "Train beneficial biases (true|false)");
    cmd->add_option("--h2t", ov.h2t, "Use Head2Toe features (true|false)");
    cmd->add_option("--alpha", ov.alpha, "MACs per communicated byte")->check(CLI::NonNegativeNumber);
    cmd->add_option("--byte-mode", ov.byte_mode, "Byte counting for the headline figures")
        ->check(CLI::IsMember({"exact", "paper"}));
  };

  auto* run = app.add_subcommand("run", "Run an experiment and write its report bundle");
  run->add_option("config", config_path, "Run config")->required();
  run->add_option("--out", out_dir, "Output directory (overrides the config)");
  add_overrides(run);

  auto* validate = app.add_subcommand("validate", "Check a run config and list every problem");
  validate->add_option("config", config_path, "Run config")->required();
  add_overrides(validate);

  auto* synth = app.add_subcommand("synth", "Generate synthetic tasks as EMB1 files and manifests");
  synth->add_option("spec", spec_path, "Config holding a [synth] table")->required();
  synth->add_option("outdir", synth_out, "Output directory")->required();

  auto* report = app.add_subcommand("report", "Print the summary of a finished run");
  report->add_option("rundir", run_dir, "Run output directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*validate) {
      const auto r = skill::validate_config(config_path, ov);
      if (!r.config) return print_errors(r.errors);
      std::cout << config_path << ": ok (" << r.config->task_count() << " tasks, " << r.config->agents
                << " agents)\n";
      return 0;
    }
    if (*run) {
      const auto r = skill::validate_config(config_path, ov);
      if (!r.config) return print_errors(r.errors);
      skill::RunConfig cfg = *r.config;
      if (!out_dir.empty()) cfg.output = out_dir;
      const auto rep = skill::run_experiment(cfg);
      skill::write_report(cfg, rep, cfg.output);
      print_summary(skill::summary_json(cfg, rep), std::cout);
      std::cout << "report written to " << cfg.output.string() << "\n";
      return rep.states_identical && rep.conserved ? 0 : 1;
    }
    if (*synth) {
      const auto r = skill::validate_config(spec_path);
      if (!r.config) return print_errors(r.errors);
      std::ostringstream toml;
      toml << "# generated by skill synth from " << fs::path(spec_path).filename().string() << "\n";
      for (const auto& t : skill::materialize_tasks(*r.config)) {
        const fs::path manifest = skill::write_task(t, fs::path(synth_out) / skill::file_stem_for(t.name));
        toml << "\n[[task]]\nmanifest = \"" << fs::relative(manifest, synth_out).generic_string() << "\"\n";
        std::cout << manifest.string() << "\n";
      }
      skill::write_text(fs::path(synth_out) / "tasks.toml", toml.str());
      return 0;
    }
    if (*report) {
      const fs::path dir(run_dir);
      for (const auto& f : skill::report_files())
        if (!fs::exists(dir / f)) return print_errors({"missing " + (dir / f).string()});
      print_summary(nlohmann::json::parse(skill::read_text(dir / "summary.json")), std::cout);
      std::cout << "\n" << skill::read_text(dir / "summary.csv");
      return 0;
    }
  } catch (const skill::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.code() == skill::ErrorCode::ConfigInvalid ? 2 : 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
