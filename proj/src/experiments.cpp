#include "experiment_util.hpp"
#include "pdo/errors.hpp"

namespace pdo {

using namespace detail;

namespace {

// canonical setups keep only the run-wide settings of the caller's config
ExperimentConfig canonical(const ExperimentConfig& cfg, nlohmann::json doc = nlohmann::json::object()) {
  doc["seed"] = cfg.seed;
  doc["jobs"] = cfg.jobs;
  return parse_config(doc);
}

Report criterion_flat_reduction(const ExperimentConfig&) {
  Report r("criterion-1");
  flat_reduction(r, ManifoldModel::flat(1), default_symbol_a(), default_symbol_b(), {1, 2, 3});
  // the same on the flat 2-torus
  const nlohmann::json A = nlohmann::json::parse(R"([
      {"coef": {"constant": 1, "trig": [{"k": [1, 0], "cos": 0.3}]}, "omega": {"kind": "japanese", "a": 1}},
      {"coef": {"trig": [{"k": [0, 1], "sin": 0.4}]}, "omega": {"kind": "japanese", "a": 0.75}}])");
  const nlohmann::json B = nlohmann::json::parse(R"([
      {"coef": {"constant": 0.5, "trig": [{"k": [1, 1], "sin": 0.2}]}, "omega": {"kind": "japanese", "a": 1}},
      {"coef": {"trig": [{"k": [1, 0], "cos": 0.1}]}, "xi": [0, 1], "imag": true}])");
  const auto T2 = ManifoldModel::flat(2);
  Report r2("criterion-1");
  flat_reduction(r2, T2, expansion_from_json(A, 2, T2.period), expansion_from_json(B, 2, T2.period), {1, 2, 3});
  r.merge(r2, "torus2.");
  return r;
}

Report criterion_composition(const ExperimentConfig& cfg) {
  Report r("criterion-2");
  auto flat = compose_experiment(canonical(cfg));
  auto curved = compose_experiment(canonical(
      cfg, nlohmann::json::parse(R"({"manifold": {"dim": 1, "christoffel": [{"trig": [{"k": [1], "sin": 0.3}]}]}})")));
  // only the order gates belong to this criterion
  for (auto* rep : {&flat, &curved}) {
    std::vector<Gate> keep;
    for (const auto& g : rep->gates)
      if (g.name.rfind("order.", 0) == 0) keep.push_back(g);
    rep->gates = keep;
    // the slope bounds are the declared remainder orders; pin them to 2 − (K + 1)
    const auto rem = rep->data["remainder_orders"].get<std::vector<double>>();
    for (std::size_t i = 0; i < rem.size(); ++i)
      rep->check("order.K" + std::to_string(i + 1) + ".remainder_order", rem[i], "<=", 2.0 - (i + 2) + 1e-12);
  }
  r.merge(flat, "flat.");
  r.merge(curved, "curved.");
  return r;
}

Report criterion_p_table(const ExperimentConfig&) {
  Report r("criterion-5");
  r.merge(p_table_structure(curved_connection_circle(), 4, 6, "circle"), "");
  r.merge(p_table_structure(metric_torus_2d().base, 4, 2, "torus2_symmetric"), "");
  r.merge(p_table_structure(torsionful_torus_2d(), 4, 2, "torus2_torsion"), "");
  return r;
}

template <Report (*F)(const ExperimentConfig&)>
Report canonical_run(const ExperimentConfig& cfg) {
  return F(canonical(cfg));
}

}  // namespace

const std::vector<Criterion>& acceptance_criteria() {
  static const std::vector<Criterion> list{
      {1, "flat-reduction exactness", criterion_flat_reduction},
      {2, "composition order", criterion_composition},
      {3, "tau-change consistency", canonical_run<tau_change_experiment>},
      {4, "adjoint", canonical_run<adjoint_experiment>},
      {5, "P-table structure", criterion_p_table},
      {6, "square root", canonical_run<sqrt_symbol_experiment>},
      {7, "c_j recursion", canonical_run<c_coefficients_experiment>},
      {8, "omega(A) vs eigensolver", canonical_run<omega_experiment>},
      {9, "peel-off", canonical_run<decompose_experiment>},
      {10, "cutoff family", canonical_run<cutoff_experiment>},
      {11, "spectral-projection decay", canonical_run<spectral_projection_experiment>},
      {12, "horizontal derivative of the metric norm", canonical_run<horizontal_experiment>},
  };
  return list;
}

Report verify_all(const ExperimentConfig& cfg) {
  Stopwatch sw;
  Report r("verify-all");
  auto& t = r.table("criteria", {"criterion", "title", "passed", "gates", "seconds"});
  for (const auto& c : acceptance_criteria()) {
    Stopwatch cs;
    const std::string prefix = "c" + std::to_string(c.id) + ".";
    Report cr("criterion-" + std::to_string(c.id));
    try {
      cr = c.run(cfg);
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::ConfigInvalid) throw;
      cr.require("completed", false);
      cr.data["error"] = e.what();
    }
    const double secs = cs.seconds();
    t.add({std::to_string(c.id), c.title, cr.passed() ? "1" : "0", std::to_string(cr.gates.size()), num(secs)});
    r.merge(cr, prefix);
    r.data["criteria"][std::to_string(c.id)] = {{"title", c.title}, {"passed", cr.passed()}, {"seconds", secs}};
  }
  r.seconds = sw.seconds();
  return r;
}

const std::vector<Command>& commands() {
  static const std::vector<Command> list{
      {"compose", "flat/global composition against the plane-wave oracle", compose_experiment},
      {"tau-change", "tau roundtrip and amplitude-vs-connection routes", tau_change_experiment},
      {"adjoint", "adjoint symbols: Weyl exactness and dense conjugate transpose", adjoint_experiment},
      {"p-table", "P_{beta,gamma} entries and their xi-degrees", p_table_experiment},
      {"sqrt-symbol", "symbol of sqrt(-Laplacian + nu)", sqrt_symbol_experiment},
      {"c-coeffs", "coefficients c_j of the functional calculus", c_coefficients_experiment},
      {"omega-expansion", "omega(A) expansion against the eigensolver", omega_experiment},
      {"decompose", "peel-off decomposition and reconstruction", decompose_experiment},
      {"pseudolocality", "norm decay of {u}(omega(A) - omega(A~))", pseudolocality_experiment},
      {"cutoff", "cutoff family: endpoints, factorization, derivative decay", cutoff_experiment},
      {"horizontal", "horizontal derivative of the metric norm at random samples", horizontal_experiment},
      {"spectral-projection", "decay of Pi(lambda){u}(I - Pi~(lambda + c lambda^rho))", spectral_projection_experiment},
      {"verify-all", "the full acceptance suite", verify_all},
  };
  return list;
}

Report run_command(const std::string& name, const ExperimentConfig& cfg) {
  for (const auto& c : commands())
    if (c.name == name) return c.run(cfg);
  throw Error(ErrorKind::ConfigInvalid, "unknown command " + name);
}

}  // namespace pdo
