#include "pdo/config.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>

#include "pdo/errors.hpp"

namespace pdo {

using nlohmann::json;

namespace {

[[noreturn]] void invalid(const std::string& what) { throw Error(ErrorKind::ConfigInvalid, what); }

void require(bool ok, const std::string& what) {
  if (!ok) invalid(what);
}

double number(const json& j, const char* key, double fallback) {
  if (!j.contains(key)) return fallback;
  require(j[key].is_number(), std::string(key) + " must be a number");
  return j[key].get<double>();
}

std::vector<double> numbers(const json& j, const std::string& what) {
  require(j.is_array(), what + " must be an array");
  std::vector<double> v;
  for (const auto& e : j) {
    require(e.is_number(), what + " must hold numbers");
    v.push_back(e.get<double>());
  }
  return v;
}

std::vector<double> period_of(const json& j, int dim) {
  if (!j.contains("period")) return std::vector<double>(dim, 2 * M_PI);
  auto p = j["period"].is_number() ? std::vector<double>(dim, j["period"].get<double>()) : numbers(j["period"], "period");
  require(static_cast<int>(p.size()) == dim, "period needs one entry per coordinate");
  for (double L : p) require(L > 0.0, "period must be positive");
  return p;
}

std::vector<FieldExpr> fields(const json& j, int dim, std::size_t count, const std::string& what) {
  require(j.is_array() && j.size() == count, what + " needs " + std::to_string(count) + " fields");
  std::vector<FieldExpr> f;
  for (const auto& e : j) f.push_back(field_from_json(e, dim));
  return f;
}

const json* find_path(const json& doc, const std::string& path) {
  const json* cur = &doc;
  std::size_t start = 0;
  while (start <= path.size()) {
    const auto end = path.find('/', start);
    const std::string key = path.substr(start, end == std::string::npos ? std::string::npos : end - start);
    if (!cur->is_object() || !cur->contains(key)) return nullptr;
    cur = &(*cur)[key];
    if (end == std::string::npos) break;
    start = end + 1;
  }
  return cur;
}

}  // namespace

bool ExperimentConfig::has(const std::string& path) const { return find_path(doc, path) != nullptr; }

const json& ExperimentConfig::at(const std::string& path) const {
  const json* j = find_path(doc, path);
  if (!j) invalid("missing key " + path);
  return *j;
}

FieldExpr field_from_json(const json& j, int dim) {
  if (j.is_number()) return FieldExpr::constant(j.get<double>());
  require(j.is_object(), "a field is a number or an object");
  std::vector<TrigTerm> terms;
  if (j.contains("trig")) {
    require(j["trig"].is_array(), "trig must be an array");
    for (const auto& t : j["trig"]) {
      TrigTerm tt;
      require(t.contains("k"), "trig term needs k");
      for (double k : numbers(t["k"], "k")) {
        require(k == std::floor(k), "wave numbers are integers");
        tt.k.push_back(static_cast<int>(k));
      }
      require(static_cast<int>(tt.k.size()) == dim, "wave vector dimension mismatch");
      tt.cos_coef = number(t, "cos", 0.0);
      tt.sin_coef = number(t, "sin", 0.0);
      terms.push_back(tt);
    }
  }
  std::vector<BumpTerm> bumps;
  if (j.contains("bumps")) {
    require(j["bumps"].is_array(), "bumps must be an array");
    for (const auto& b : j["bumps"]) {
      BumpTerm bt;
      require(b.contains("center"), "bump needs center");
      bt.center = numbers(b["center"], "center");
      require(static_cast<int>(bt.center.size()) == dim, "bump centre dimension mismatch");
      bt.radius = number(b, "radius", 1.0);
      bt.amplitude = number(b, "amplitude", 1.0);
      bt.width = number(b, "width", 0.0);
      require(bt.radius > 0.0 && bt.width >= 0.0, "bump radius must be positive, width nonnegative");
      bumps.push_back(bt);
    }
  }
  const bool ex = j.contains("exp") && j["exp"].get<bool>();
  return FieldExpr(number(j, "constant", 0.0), std::move(terms), std::move(bumps), ex);
}

ManifoldModel manifold_from_json(const json& j) {
  require(j.is_object(), "manifold must be an object");
  const int dim = static_cast<int>(number(j, "dim", 1));
  require(dim >= 1 && dim <= 3, "dim must be 1, 2 or 3");
  const auto period = period_of(j, dim);
  const double kappa = number(j, "kappa", 0.5);
  const int kinds = int(j.contains("flat")) + int(j.contains("christoffel")) + int(j.contains("metric_inverse"));
  require(kinds <= 1, "give at most one of flat, christoffel, metric_inverse");
  if (j.contains("christoffel"))
    return ManifoldModel::from_connection(dim, period, fields(j["christoffel"], dim, dim * dim * dim, "christoffel"),
                                          kappa);
  if (j.contains("metric_inverse"))
    return ManifoldModel::from_metric(dim, period, fields(j["metric_inverse"], dim, dim * dim, "metric_inverse"), kappa);
  require(period == std::vector<double>(dim, period[0]), "a flat torus takes one period for all axes");
  auto M = ManifoldModel::flat(dim, period[0]);
  M.kappa = kappa;
  return M;
}

MetricModel metric_model_from_json(const json& j) {
  require(j.is_object(), "manifold must be an object");
  const int dim = static_cast<int>(number(j, "dim", 1));
  require(dim >= 1 && dim <= 3, "dim must be 1, 2 or 3");
  const auto period = period_of(j, dim);
  if (j.contains("metric_inverse")) return MetricModel::make(dim, period, fields(j["metric_inverse"], dim, dim * dim, "metric_inverse"));
  require(!j.contains("christoffel"), "functions of the Laplacian need a metric, not a bare connection");
  std::vector<FieldExpr> id(dim * dim, FieldExpr::constant(0.0));
  for (int i = 0; i < dim; ++i) id[i * dim + i] = FieldExpr::constant(1.0);
  return MetricModel::make(dim, period, id);
}

Perturbation perturbation_from_json(const json& j, int dim, const std::vector<double>& period) {
  if (j.is_null()) return Perturbation::zero(dim);
  if (j.is_number()) return Perturbation::constant(dim, j.get<double>());
  require(j.is_object(), "perturbation must be a number or an object");
  if (j.contains("weyl")) {
    const auto& w = j["weyl"];
    std::vector<FieldExpr> b(dim);
    if (w.contains("b")) b = fields(w["b"], dim, dim, "weyl.b");
    return Perturbation::from_weyl(dim, period, b, w.contains("c") ? field_from_json(w["c"], dim) : FieldExpr());
  }
  return Perturbation::constant(dim, number(j, "constant", 0.0));
}

ScalarFunction scalar_from_json(const json& j) {
  require(j.is_object() && j.contains("kind"), "scalar function needs kind");
  const std::string kind = j["kind"].get<std::string>();
  const double a = number(j, "a", 1.0);
  if (kind == "japanese") return ScalarFunction::japanese(a);
  if (kind == "power") return ScalarFunction::power(a);
  if (kind == "shifted_root") return ScalarFunction::shifted_root(a);
  invalid("unknown scalar function " + kind);
}

Expansion expansion_from_json(const json& j, int dim, const std::vector<double>& period) {
  require(j.is_array() && !j.empty(), "a symbol is a nonempty array of terms");
  std::vector<FieldExpr> id(dim * dim, FieldExpr::constant(0.0));
  for (int i = 0; i < dim; ++i) id[i * dim + i] = FieldExpr::constant(1.0);
  auto euclid = std::make_shared<Metric>(dim, period, id);

  std::map<double, std::vector<std::pair<cplx, Symbol>>> by_order;
  for (const auto& t : j) {
    require(t.is_object(), "symbol term must be an object");
    Symbol s = t.contains("coef") ? field_symbol(dim, field_from_json(t["coef"], dim), period) : constant_symbol(dim, 1.0);
    double order = 0.0;
    if (t.contains("xi")) {
      const auto xi = numbers(t["xi"], "xi");
      require(static_cast<int>(xi.size()) == dim, "xi multi-index dimension mismatch");
      for (int i = 0; i < dim; ++i) {
        require(xi[i] >= 0 && xi[i] == std::floor(xi[i]), "xi exponents are nonnegative integers");
        for (int p = 0; p < xi[i]; ++p) s = s * xi_symbol(dim, i);
        order += xi[i];
      }
    }
    if (t.contains("omega")) {
      const auto w = scalar_from_json(t["omega"]);
      s = s * norm_function(euclid, w);
      order += w.order();
    }
    const cplx c = t.contains("imag") && t["imag"].get<bool>() ? cplx(0.0, 1.0) : cplx(1.0, 0.0);
    by_order[order].emplace_back(c, s);
  }
  Expansion E(dim, 0.0, 0.5);
  for (auto& [order, parts] : by_order)
    E.add(order, linear_combination(parts).with_class({order, 1.0, 0.0}));
  return E;
}

ExperimentConfig parse_config(const json& doc) {
  require(doc.is_object(), "the configuration is a JSON object");
  ExperimentConfig c;
  c.doc = doc;
  c.name = c.get<std::string>("name", "unnamed");
  c.seed = c.get<std::uint64_t>("seed", 1);
  c.jobs = c.get<int>("jobs", 1);
  require(c.jobs >= 1, "jobs must be positive");

  // resolve every referenced spec once so that errors surface before any run
  int dim = 1;
  std::vector<double> period{2 * M_PI};
  for (const char* key : {"manifold", "second_manifold"}) {
    if (!doc.contains(key)) continue;
    auto M = manifold_from_json(doc[key]);
    if (std::string(key) == "manifold") {
      dim = M.dim;
      period = M.period;
    } else {
      require(M.dim == dim, "second_manifold dimension mismatch");
    }
  }
  for (const char* key : {"perturbation", "second_perturbation"})
    if (doc.contains(key)) perturbation_from_json(doc[key], dim, period);
  if (doc.contains("symbols")) {
    require(doc["symbols"].is_object(), "symbols must be an object");
    for (const auto& [k, v] : doc["symbols"].items()) expansion_from_json(v, dim, period);
  }
  if (doc.contains("upsilon")) field_from_json(doc["upsilon"], dim);
  // "omega" doubles as the settings block of omega-expansion; a "kind" makes it a function
  if (doc.contains("omega") && doc["omega"].is_object() && doc["omega"].contains("kind")) scalar_from_json(doc["omega"]);

  const int K = c.get<int>("orders/K", 3), J = c.get<int>("orders/J", 3), P = c.get<int>("orders/p_order", 4);
  require(K >= 1 && K <= 6, "orders.K must lie in 1..6");
  require(J >= 1 && J <= 6, "orders.J must lie in 1..6");
  require(P >= 0 && P <= 4, "orders.p_order must lie in 0..4");
  const int N = c.get<int>("oracle/N", 512);
  require(N >= 16 && N <= 4096, "oracle.N must lie in 16..4096");
  const double lo = c.get<double>("oracle/xi_min", 10.0), hi = c.get<double>("oracle/xi_max", 1e3);
  require(lo > 0.0 && hi > lo, "oracle.xi_min < oracle.xi_max");
  if (c.has("lambda")) {
    const double a = c.get<double>("lambda/min", 20.0), b = c.get<double>("lambda/max", 200.0);
    require(a > 0.0 && b > a && c.get<int>("lambda/count", 24) >= 5, "lambda needs 0 < min < max and count >= 5");
  }
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) invalid("cannot read " + path);
  json doc;
  try {
    doc = json::parse(in, nullptr, true, true);
  } catch (const json::parse_error& e) {
    invalid(path + ": " + e.what());
  }
  return parse_config(doc);
}

std::string config_hash(const ExperimentConfig& cfg) {
  const std::string s = cfg.doc.dump();
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace pdo
