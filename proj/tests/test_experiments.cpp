#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "pdo/errors.hpp"
#include "pdo/experiments.hpp"

using namespace pdo;
using nlohmann::json;

namespace {

bool invalid(const json& doc) {
  try {
    parse_config(doc);
  } catch (const Error& e) {
    return e.kind() == ErrorKind::ConfigInvalid;
  }
  return false;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("config: defaults and overrides") {
  const auto c = parse_config(json::parse(R"({"name": "t", "seed": 7, "oracle": {"N": 64}})"));
  CHECK(c.name == "t");
  CHECK(c.seed == 7);
  CHECK(c.jobs == 1);
  CHECK(c.get<int>("oracle/N", 512) == 64);
  CHECK(c.get<int>("oracle/count", 8) == 8);
  CHECK(c.has("oracle/N"));
  CHECK_FALSE(c.has("oracle/xi_min"));
}

TEST_CASE("config: rejected documents") {
  CHECK(invalid(json::array()));
  CHECK(invalid(json::parse(R"({"jobs": 0})")));
  CHECK(invalid(json::parse(R"({"orders": {"K": 7}})")));
  CHECK(invalid(json::parse(R"({"orders": {"p_order": 5}})")));
  CHECK(invalid(json::parse(R"({"oracle": {"N": 8}})")));
  CHECK(invalid(json::parse(R"({"oracle": {"xi_min": 100, "xi_max": 10}})")));
  CHECK(invalid(json::parse(R"({"oracle": {"N": "big"}})")));
  CHECK(invalid(json::parse(R"({"lambda": {"min": 50, "max": 20}})")));
  CHECK(invalid(json::parse(R"({"manifold": {"dim": 4, "flat": true}})")));
  CHECK(invalid(json::parse(R"({"manifold": {"dim": 2, "christoffel": [0, 0]}})")));
  CHECK(invalid(json::parse(R"({"manifold": {"dim": 2, "period": [1, 2], "flat": true}})")));
  CHECK(invalid(json::parse(R"({"symbols": {"A": [{"coef": 1, "xi": [1, 0]}]}})")));
}

TEST_CASE("config: hash is deterministic and content-sensitive") {
  const auto a = parse_config(json::parse(R"({"seed": 3, "oracle": {"N": 64}})"));
  const auto b = parse_config(json::parse(R"({"oracle": {"N": 64}, "seed": 3})"));
  const auto c = parse_config(json::parse(R"({"seed": 4, "oracle": {"N": 64}})"));
  CHECK(config_hash(a).size() == 16);
  CHECK(config_hash(a) == config_hash(b));
  CHECK(config_hash(a) != config_hash(c));
}

TEST_CASE("config: fields evaluate as written") {
  const auto f = field_from_json(
      json::parse(R"({"constant": 0.5, "trig": [{"k": [2], "cos": 0.3, "sin": -0.1}], "exp": true})"), 1);
  const std::vector<double> L{2 * M_PI};
  for (double x : {0.0, 0.7, 2.2, 5.9})
    CHECK(f.value({x}, L) == doctest::Approx(std::exp(0.5 + 0.3 * std::cos(2 * x) - 0.1 * std::sin(2 * x))).epsilon(1e-14));
  CHECK(field_from_json(json(2.5), 1).value({1.0}, L) == 2.5);
}

TEST_CASE("config: manifolds and symbols") {
  const auto M = manifold_from_json(json::parse(R"({"dim": 1, "christoffel": [{"trig": [{"k": [1], "sin": 0.3}]}]})"));
  CHECK(M.dim == 1);
  const auto E = expansion_from_json(
      json::parse(R"([{"coef": 2, "omega": {"kind": "japanese", "a": 1}}, {"coef": 1, "xi": [1], "imag": true}])"), 1,
      {2 * M_PI});
  const double xi = 3.0;
  const auto v = E({0.4}, {xi});
  CHECK(v.real() == doctest::Approx(2 * std::sqrt(1 + xi * xi)).epsilon(1e-14));
  CHECK(v.imag() == doctest::Approx(xi).epsilon(1e-14));
}

TEST_CASE("config: files with comments load") {
  const auto dir = std::filesystem::temp_directory_path() / "pdo_config_test";
  std::filesystem::create_directories(dir);
  {
    std::ofstream(dir / "c.json") << "// comment\n{\"name\": \"file\", /* inline */ \"seed\": 9}\n";
  }
  const auto c = load_config((dir / "c.json").string());
  CHECK(c.name == "file");
  CHECK(c.seed == 9);
  CHECK_THROWS_AS(load_config((dir / "missing.json").string()), Error);
}

TEST_CASE("report: gates, merge and files") {
  Report r("demo");
  r.check("small", 1e-12, "<=", 1e-10);
  r.check("slope", -2.5, "<", -2.0);
  r.require("flag", true);
  auto& t = r.table("rows", {"x", "y"});
  t.add({"1", "2"});
  Report o("inner");
  o.check("bad", 3.0, ">", 4.0);
  o.table("more", {"a"}).add({"5"});
  r.merge(o, "in.");
  t.add({"3", "4"});  // survives the merge's appends
  CHECK_FALSE(r.passed());
  REQUIRE(r.failing().size() == 1);
  CHECK(r.failing()[0] == "in.bad");

  const auto cfg = parse_config(json::parse(R"({"seed": 5})"));
  const auto dir = std::filesystem::temp_directory_path() / "pdo_report_test";
  std::filesystem::remove_all(dir);
  write_report(r, cfg, dir.string());
  const auto csv = slurp(dir / "demo_rows.csv");
  CHECK(csv.find("seed=5") != std::string::npos);
  CHECK(csv.find("x,y\n1,2\n3,4\n") != std::string::npos);
  CHECK(std::filesystem::exists(dir / "demo_in.more.csv"));
  const auto js = json::parse(slurp(dir / "demo.json"));
  CHECK(js["passed"] == false);
  CHECK(js["failing_gates"][0] == "in.bad");
  CHECK(js["config_hash"] == config_hash(cfg));
  // rewriting gives identical bytes
  write_report(r, cfg, dir.string());
  CHECK(slurp(dir / "demo_rows.csv") == csv);
}

TEST_CASE("commands: registry and quick runs") {
  CHECK_THROWS_AS(run_command("no-such-command", parse_config(json::object())), Error);
  const auto r = run_command("cutoff", parse_config(json::object()));
  CHECK(r.passed());
  CHECK(acceptance_criteria().size() == 12);
}
