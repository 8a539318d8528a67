#pragma once

// Named experiments: each produces gates (pass/fail against thresholds),
// plot-ready CSV tables and a JSON summary.

#include <deque>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "json.hpp"
#include "pdo/config.hpp"

namespace pdo {

struct Gate {
  std::string name;
  double value = 0.0;
  std::string relation;  // "<=", ">=", "<", ">", "true"
  double threshold = 0.0;
  bool passed = false;
};

struct Table {
  std::string name;
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;

  void add(std::vector<std::string> row) { rows.push_back(std::move(row)); }
};

/// Shortest round-trip text of a double.
std::string num(double v);

class Report {
 public:
  explicit Report(std::string command) : command(std::move(command)) {}

  std::string command;
  std::vector<Gate> gates;
  std::deque<Table> tables;  // deque: references from table() survive later appends
  nlohmann::json data = nlohmann::json::object();
  double seconds = 0.0;

  bool check(const std::string& name, double value, const std::string& relation, double threshold);
  bool require(const std::string& name, bool ok);
  Table& table(const std::string& name, std::vector<std::string> columns);
  /// Appends the gates (prefixed), tables and data of `o`.
  void merge(const Report& o, const std::string& prefix);

  bool passed() const;
  std::vector<std::string> failing() const;
};

/// Fixed provenance fields: command, module version, config name, hash and seed.
nlohmann::json summary_json(const Report& r, const ExperimentConfig& cfg);
/// <command>.json and one <command>_<table>.csv per table.
void write_report(const Report& r, const ExperimentConfig& cfg, const std::filesystem::path& dir);

const char* module_version();

// ---------------------------------------------------------------------------

using CommandFn = std::function<Report(const ExperimentConfig&)>;

struct Command {
  std::string name;
  std::string help;
  CommandFn run;
};

/// compose, tau-change, adjoint, p-table, sqrt-symbol, c-coeffs, omega-expansion,
/// decompose, pseudolocality, spectral-projection, verify-all.
const std::vector<Command>& commands();
Report run_command(const std::string& name, const ExperimentConfig& cfg);

struct Criterion {
  int id;
  std::string title;
  CommandFn run;
};

/// The twelve acceptance checks, each on its canonical setup (the config
/// supplies seed and jobs).
const std::vector<Criterion>& acceptance_criteria();

// Experiments behind the commands and criteria.
Report compose_experiment(const ExperimentConfig& cfg);
Report tau_change_experiment(const ExperimentConfig& cfg);
Report adjoint_experiment(const ExperimentConfig& cfg);
Report p_table_experiment(const ExperimentConfig& cfg);
Report sqrt_symbol_experiment(const ExperimentConfig& cfg);
Report c_coefficients_experiment(const ExperimentConfig& cfg);
Report omega_experiment(const ExperimentConfig& cfg);
Report decompose_experiment(const ExperimentConfig& cfg);
Report pseudolocality_experiment(const ExperimentConfig& cfg);
Report spectral_projection_experiment(const ExperimentConfig& cfg);
Report cutoff_experiment(const ExperimentConfig& cfg);
Report horizontal_experiment(const ExperimentConfig& cfg);
Report verify_all(const ExperimentConfig& cfg);

}  // namespace pdo
