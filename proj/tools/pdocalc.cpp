// pdocalc: runs the named experiments and writes CSV data plus a JSON summary.
// Exit status: 0 all gates pass, 1 a gate failed (or a module error), 2 invalid configuration.

#include <cstdio>
#include <iostream>

#include "CLI11.hpp"
#include "pdo/errors.hpp"
#include "pdo/experiments.hpp"

int main(int argc, char** argv) {
  CLI::App app{"pdocalc - symbol calculus experiments"};
  app.require_subcommand(1);
  app.fallthrough();
  std::string config_path, out_dir = "pdocalc_out";
  std::int64_t seed = -1;
  int jobs = 0;
  bool quiet = false;
  app.add_option("--config", config_path, "experiment configuration (JSON)");
  app.add_option("--out", out_dir, "directory for the CSV and JSON reports");
  app.add_option("--seed", seed, "seed for randomized samples (overrides the config)");
  app.add_option("--jobs", jobs, "worker threads (overrides the config)")->check(CLI::PositiveNumber);
  app.add_flag("-q,--quiet", quiet, "print only the verdict");

  std::string chosen;
  for (const auto& c : pdo::commands()) app.add_subcommand(c.name, c.help)->callback([&, name = c.name] { chosen = name; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    pdo::ExperimentConfig cfg =
        config_path.empty() ? pdo::parse_config(nlohmann::json::object()) : pdo::load_config(config_path);
    if (seed >= 0) {
      cfg.seed = static_cast<std::uint64_t>(seed);
      cfg.doc["seed"] = cfg.seed;
    }
    if (jobs > 0) cfg.jobs = jobs;

    pdo::Report report(chosen);
    try {
      report = pdo::run_command(chosen, cfg);
    } catch (const pdo::Error& e) {
      if (e.kind() == pdo::ErrorKind::ConfigInvalid) throw;
      report.require("completed", false);
      report.data["error"] = e.what();
      std::cerr << e.what() << "\n";
    }
    pdo::write_report(report, cfg, out_dir);
    if (!quiet)
      for (const auto& g : report.gates)
        std::printf("%s  %-60s %s %s %s\n", g.passed ? "PASS" : "FAIL", g.name.c_str(), pdo::num(g.value).c_str(),
                    g.relation.c_str(), g.relation == "true" ? "" : pdo::num(g.threshold).c_str());
    std::printf("%s: %s (%zu gates, %.1f s) -> %s\n", chosen.c_str(), report.passed() ? "PASS" : "FAIL",
                report.gates.size(), report.seconds, out_dir.c_str());
    return report.passed() ? 0 : 1;
  } catch (const pdo::Error& e) {
    std::cerr << e.what() << "\n";
    return e.kind() == pdo::ErrorKind::ConfigInvalid ? 2 : 1;
  }
}
