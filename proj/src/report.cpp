#include <charconv>
#include <fstream>

#include "pdo/errors.hpp"
#include "pdo/experiments.hpp"

namespace pdo {

std::string num(double v) {
  char buf[32];
  auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

const char* module_version() { return "0.1.0"; }

bool Report::check(const std::string& name, double value, const std::string& relation, double threshold) {
  bool ok = false;
  if (relation == "<=") ok = value <= threshold;
  else if (relation == "<") ok = value < threshold;
  else if (relation == ">=") ok = value >= threshold;
  else if (relation == ">") ok = value > threshold;
  else throw Error(ErrorKind::ConfigInvalid, "unknown gate relation " + relation);
  gates.push_back(Gate{name, value, relation, threshold, ok});
  return ok;
}

bool Report::require(const std::string& name, bool ok) {
  gates.push_back(Gate{name, ok ? 1.0 : 0.0, "true", 1.0, ok});
  return ok;
}

Table& Report::table(const std::string& name, std::vector<std::string> columns) {
  tables.push_back(Table{name, std::move(columns), {}});
  return tables.back();
}

void Report::merge(const Report& o, const std::string& prefix) {
  for (auto g : o.gates) {
    g.name = prefix + g.name;
    gates.push_back(std::move(g));
  }
  for (auto t : o.tables) {
    t.name = prefix + t.name;
    tables.push_back(std::move(t));
  }
  if (!o.data.empty()) data[prefix.empty() ? o.command : prefix.substr(0, prefix.size() - 1)] = o.data;
}

bool Report::passed() const {
  for (const auto& g : gates)
    if (!g.passed) return false;
  return true;
}

std::vector<std::string> Report::failing() const {
  std::vector<std::string> f;
  for (const auto& g : gates)
    if (!g.passed) f.push_back(g.name);
  return f;
}

nlohmann::json summary_json(const Report& r, const ExperimentConfig& cfg) {
  nlohmann::json j;
  j["command"] = r.command;
  j["module_version"] = module_version();
  j["config_name"] = cfg.name;
  j["config_hash"] = config_hash(cfg);
  j["seed"] = cfg.seed;
  j["passed"] = r.passed();
  j["failing_gates"] = r.failing();
  auto& gates = j["gates"] = nlohmann::json::array();
  for (const auto& g : r.gates)
    gates.push_back({{"name", g.name}, {"value", g.value}, {"relation", g.relation}, {"threshold", g.threshold},
                     {"passed", g.passed}});
  j["data"] = r.data;
  j["runtime_seconds"] = r.seconds;
  return j;
}

void write_report(const Report& r, const ExperimentConfig& cfg, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorKind::ConfigInvalid, "cannot create " + dir.string() + ": " + ec.message());
  const std::string hash = config_hash(cfg);
  for (const auto& t : r.tables) {
    std::string file = r.command + "_" + t.name + ".csv";
    for (auto& ch : file)
      if (ch == '/' || ch == ' ') ch = '_';
    std::ofstream out(dir / file);
    if (!out) throw Error(ErrorKind::ConfigInvalid, "cannot write " + (dir / file).string());
    out << "# " << r.command << " " << t.name << " config_hash=" << hash << " version=" << module_version()
        << " seed=" << cfg.seed << "\n";
    for (std::size_t i = 0; i < t.columns.size(); ++i) out << (i ? "," : "") << t.columns[i];
    out << "\n";
    for (const auto& row : t.rows) {
      for (std::size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << row[i];
      out << "\n";
    }
  }
  std::ofstream js(dir / (r.command + ".json"));
  if (!js) throw Error(ErrorKind::ConfigInvalid, "cannot write " + (dir / (r.command + ".json")).string());
  js << summary_json(r, cfg).dump(2) << "\n";
}

}  // namespace pdo
