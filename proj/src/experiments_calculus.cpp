#include <algorithm>
#include <map>
#include <optional>
#include <random>

#include "experiment_util.hpp"
#include "pdo/errors.hpp"

namespace pdo {

namespace detail {

ManifoldModel torsionful_torus_2d() {
  std::vector<FieldExpr> g(8);
  g[0] = FieldExpr(0.10, {TrigTerm{{1, 0}, 0.20, 0.0}});
  g[1] = FieldExpr(0.05, {TrigTerm{{0, 1}, 0.0, 0.15}});
  g[2] = FieldExpr(-0.1, {TrigTerm{{1, 1}, 0.1, 0.0}});
  g[3] = FieldExpr(0.0, {TrigTerm{{1, 0}, 0.0, 0.2}});
  g[4] = FieldExpr(0.0, {TrigTerm{{0, 1}, 0.25, 0.0}});
  g[5] = FieldExpr(0.08, {});
  g[6] = FieldExpr(0.0, {TrigTerm{{1, 0}, 0.1, 0.1}});
  g[7] = FieldExpr(-0.05, {TrigTerm{{0, 1}, 0.0, 0.2}});
  return ManifoldModel::from_connection(2, {kTwoPi, kTwoPi}, g);
}

namespace {
std::shared_ptr<const Metric> euclid_circle() {
  return std::make_shared<Metric>(1, std::vector<double>{kTwoPi}, std::vector<FieldExpr>{FieldExpr(1.0, {})});
}
Symbol field1(const FieldExpr& f) { return field_symbol(1, f, {kTwoPi}); }
Symbol mixed(double b) {
  auto e = euclid_circle();
  return norm_function(e, ScalarFunction::japanese(1.0)) + cplx(b) * norm_function(e, ScalarFunction::japanese(0.75));
}
}  // namespace

Expansion default_symbol_a() {
  auto u = field1(FieldExpr(1.0, {TrigTerm{{1}, 0.3, 0.0}}));
  return Expansion::single((u * mixed(0.5)).with_class({1, 1, 0}), 1.0);
}

Expansion default_symbol_b() {
  auto v = field1(FieldExpr(0.5, {TrigTerm{{2}, 0.0, 0.2}}));
  auto w = field1(FieldExpr(0.0, {TrigTerm{{1}, 0.1, 0.25}}));
  return Expansion::single((v * mixed(0.4) + kI * w * xi_symbol(1, 0)).with_class({1, 1, 0}), 1.0);
}

double term_by_term_error(const Expansion& a, const Expansion& b, const std::vector<Point>& xs,
                          const std::vector<Point>& xis) {
  std::map<double, std::pair<Symbol, Symbol>> by;
  for (const auto& t : a.terms()) by[t.order].first = t.symbol;
  for (const auto& t : b.terms()) by[t.order].second = t.symbol;
  double worst = 0.0;
  for (const auto& [order, p] : by) {
    double diff = 0.0, scale = 0.0;
    for (const auto& x : xs)
      for (const auto& xi : xis) {
        const cplx u = p.first ? p.first(x, xi) : cplx(0.0);
        const cplx v = p.second ? p.second(x, xi) : cplx(0.0);
        diff = std::max(diff, std::abs(u - v));
        scale = std::max(scale, std::abs(v));
      }
    worst = std::max(worst, scale > 0.0 ? diff / scale : diff);
  }
  return worst;
}

double relative_sum_error(const Expansion& a, const Expansion& b, const std::vector<Point>& xs,
                          const std::vector<Point>& xis) {
  double diff = 0.0, scale = 0.0;
  for (const auto& x : xs)
    for (const auto& xi : xis) {
      diff = std::max(diff, std::abs(a(x, xi) - b(x, xi)));
      scale = std::max(scale, std::abs(b(x, xi)));
    }
  return scale > 0.0 ? diff / scale : diff;
}

std::vector<Point> xi_samples(int dim, std::vector<double> magnitudes) {
  std::vector<Point> out;
  for (const auto& d : sample_directions(dim))
    for (double m : magnitudes) {
      Point xi(d);
      for (auto& c : xi) c *= m;
      out.push_back(xi);
    }
  return out;
}

DecayFit record_decay(Table& t, const std::string& label, const std::vector<double>& xs,
                      const std::vector<double>& vs) {
  for (std::size_t i = 0; i < xs.size(); ++i) t.add({label, num(xs[i]), num(vs[i])});
  return fit_decay(xs, vs);
}

void slope_gates(Report& r, const std::string& prefix, const std::vector<int>& Ks, const std::vector<double>& slopes,
                 const std::vector<double>& bounds, double slack, const std::string& index) {
  for (std::size_t i = 0; i < Ks.size(); ++i) {
    const std::string k = prefix + "." + index + std::to_string(Ks[i]);
    r.check(k + ".slope", slopes[i], "<=", bounds[i] + slack);
    if (i > 0) r.check(k + ".slope_decrease", slopes[i] - slopes[i - 1], "<", 0.0);
  }
}

ExperimentConfig default_config() { return parse_config(nlohmann::json::object()); }

}  // namespace detail

using namespace detail;

namespace {

std::vector<int> orders_list(const ExperimentConfig& cfg, const std::string& key, std::vector<int> fallback) {
  auto Ks = cfg.get<std::vector<int>>(key, fallback);
  if (Ks.empty()) throw Error(ErrorKind::ConfigInvalid, key + " is empty");
  for (int K : Ks)
    if (K < 1 || K > 6) throw Error(ErrorKind::ConfigInvalid, key + " entries must lie in 1..6");
  return Ks;
}

ManifoldModel manifold_or(const ExperimentConfig& cfg, ManifoldModel fallback) {
  return cfg.has("manifold") ? manifold_from_json(cfg.at("manifold")) : fallback;
}

Expansion symbol_or(const ExperimentConfig& cfg, const std::string& key, const ManifoldModel& M, Expansion fallback) {
  if (cfg.has("symbols/" + key)) return expansion_from_json(cfg.at("symbols/" + key), M.dim, M.period);
  if (M.dim != 1) throw Error(ErrorKind::ConfigInvalid, "symbols." + key + " is required when dim > 1");
  return fallback;
}

std::vector<double> xi_grid(const ExperimentConfig& cfg) {
  return lambda_grid(cfg.get<double>("oracle/xi_min", 10.0), cfg.get<double>("oracle/xi_max", 1e3),
                     cfg.get<int>("oracle/count", 8));
}

Point along(int dim, double t) {
  // a fixed non-axial direction
  Point e(dim);
  double n = 0.0;
  for (int i = 0; i < dim; ++i) n += (e[i] = 1.0 / (1.0 + 0.6 * i)) * e[i];
  for (auto& c : e) c *= t / std::sqrt(n);
  return e;
}

}  // namespace

void detail::flat_reduction(Report& r, const ManifoldModel& M, const Expansion& A, const Expansion& B,
                            const std::vector<int>& Ks) {
  auto xs = sample_points(M.dim, M.period, 3);
  auto P = p_table(M, M.kappa, xs, 4);
  double p00 = 0.0, others = 0.0;
  for (const auto& [key, e] : P.entries)
    for (const auto& row : e.samples)
      for (std::size_t k = 0; k < row.size(); ++k) {
        if (degree(e.beta) + degree(e.gamma) == 0 && degree(e.monomials[k]) == 0)
          p00 = std::max(p00, std::abs(row[k] - 1.0));
        else
          others = std::max(others, std::abs(row[k]));
      }
  const auto* e00 = P.find(MultiIndex(M.dim, 0), MultiIndex(M.dim, 0));
  r.require("p_table.P00_present", e00 != nullptr && !e00->samples.empty());
  r.check("p_table.P00_minus_one", p00, "<=", 1e-8);
  r.check("p_table.other_entries", others, "<=", 1e-8);

  auto& t = r.table("reduction", {"K", "relative_difference"});
  auto xis = xi_samples(M.dim, {0.5, 3.0, 20.0, 150.0});
  for (int K : Ks) {
    const double d = term_by_term_error(compose_global(A, B, M, P, K), compose_flat(A, B, K), xs, xis);
    t.add({std::to_string(K), num(d)});
    r.check("reduction.K" + std::to_string(K) + ".global_vs_flat", d, "<=", 1e-10);
  }
}

// ---------------------------------------------------------------------------

Report compose_experiment(const ExperimentConfig& cfg) {
  Stopwatch sw;
  Report r("compose");
  const auto M = manifold_or(cfg, ManifoldModel::flat(1));
  const auto A = symbol_or(cfg, "A", M, default_symbol_a());
  const auto B = symbol_or(cfg, "B", M, default_symbol_b());
  const auto Ks = orders_list(cfg, "compose/K", {1, 2, 3});
  const double slack = cfg.get<double>("tolerances/slope_slack", 0.3);
  const bool flat = M.connection->is_flat_chart();
  if (flat) flat_reduction(r, M, A, B, Ks);
  if (!flat && M.dim != 1)
    throw Error(ErrorKind::ConfigInvalid, "the composition oracle covers flat tori and curved circles");

  // oracle: plane-wave probing of Op(σ_A)∘Op(σ_B); a curved circle is first
  // mapped to its flattening chart, where the connection symbol is the flat one
  const auto ts = xi_grid(cfg);
  std::vector<Point> etas;
  for (double t : ts) etas.push_back(along(M.dim, t));
  std::vector<GridFunction> table;
  TorusGrid g;
  std::optional<FlatteningChart> chart;
  if (flat) {
    g = TorusGrid::make(M.dim, cfg.get<int>("compose/N", M.dim == 1 ? 64 : 24), M.period[0]);
    table = effective_symbol(compose(modulated(symbol_fn(A), g), modulated(symbol_fn(B), g)), g, etas);
  } else {
    chart.emplace(M);
    g = TorusGrid::make(1, cfg.get<int>("compose/N", 128), chart->length());
    table = effective_symbol(
        compose(modulated(chart->to_flat(symbol_fn(A)), g), modulated(chart->to_flat(symbol_fn(B)), g)), g, etas);
  }
  const PTable P = flat ? p_table(M, M.kappa, {Point(M.dim, 0.0)}, 4)
                        : p_table(M, M.kappa, sample_points(1, M.period, 6), 6);
  const double m = A.leading_order() + B.leading_order();
  const int stride = std::max(1, g.size() / 40);

  auto& t = r.table("residual", {"K", "xi", "residual"});
  std::vector<double> slopes, bounds;
  for (int K : Ks) {
    const auto C = flat ? compose_flat(A, B, K) : compose_global(A, B, M, P, K);
    std::vector<double> vs;
    for (std::size_t i = 0; i < etas.size(); ++i) {
      double worst = 0.0;
      for (int j = 0; j < g.size(); j += stride) {
        Point x = g.point(j), xi = etas[i];
        if (chart) {
          x = {chart->inverse(x[0])};
          xi = {etas[i][0] * chart->dF(x[0])};
        }
        worst = std::max(worst, std::abs(table[i][j] - C(x, xi)));
      }
      vs.push_back(worst);
    }
    slopes.push_back(record_decay(t, std::to_string(K), ts, vs).slope);
    // terms off the integer order lattice leave a remainder above m − (K + 1)
    bounds.push_back(C.remainder_order() > -1e299 ? C.remainder_order() : m - (K + 1));
  }
  slope_gates(r, "order", Ks, slopes, bounds, slack);
  r.data["remainder_orders"] = bounds;
  r.data["route"] = flat ? "flat" : "flattening chart";
  r.data["slopes"] = slopes;
  r.seconds = sw.seconds();
  return r;
}

Report tau_change_experiment(const ExperimentConfig& cfg) {
  Stopwatch sw;
  Report r("tau-change");
  const auto M = manifold_or(cfg, curved_connection_circle());
  const auto E = symbol_or(cfg, "A", M, default_symbol_a());
  const auto Ks = orders_list(cfg, "tau_change/K", {1, 2, 3});
  const double slack = cfg.get<double>("tolerances/slope_slack", 0.3);
  const double tau = cfg.get<double>("tau_change/tau", 0.5);

  // roundtrip τ = 0 → τ → 0
  const auto ts = xi_grid(cfg);
  const auto xs = sample_points(M.dim, M.period, M.dim == 1 ? 8 : 3);
  auto& t = r.table("roundtrip", {"K", "xi", "residual"});
  std::vector<int> fitted;
  std::vector<double> slopes, bounds;
  for (int K : Ks) {
    const auto back = change_tau(change_tau(E, tau, M, K), 0.0, M, K);
    std::vector<double> vs;
    double rel = 0.0;
    for (double s : ts) {
      double worst = 0.0;
      for (const auto& x : xs) {
        const auto e = E(x, along(M.dim, s));
        const double d = std::abs(back(x, along(M.dim, s)) - e);
        worst = std::max(worst, d);
        rel = std::max(rel, d / std::abs(e));
      }
      vs.push_back(worst);
    }
    // truncated transports compose exactly up to the kept order; then there is nothing to fit
    if (rel <= 1e-13) {
      for (std::size_t i = 0; i < ts.size(); ++i) t.add({std::to_string(K), num(ts[i]), num(vs[i])});
      r.check("roundtrip.K" + std::to_string(K) + ".relative_residual_at_roundoff", rel, "<=", 1e-13);
      continue;
    }
    fitted.push_back(K);
    slopes.push_back(record_decay(t, std::to_string(K), ts, vs).slope);
    bounds.push_back(E.leading_order() - (K + 1));
  }
  if (!fitted.empty()) slope_gates(r, "roundtrip", fitted, slopes, bounds, slack);

  // flat torus: τ-symbol straight from the amplitude vs the τ = 0 symbol moved by change_tau
  const auto F = ManifoldModel::flat(1);
  auto u = field_symbol(1, FieldExpr(1.0, {TrigTerm{{1}, 0.0, 0.4}}), {kTwoPi});
  auto v = field_symbol(1, FieldExpr(0.0, {TrigTerm{{2}, 1.0, 0.0}}), {kTwoPi});
  Symbol cube = (xi_symbol(1, 0) * xi_symbol(1, 0) * xi_symbol(1, 0)).with_class({3, 1, 0});
  auto& rt = r.table("routes", {"amplitude", "K", "term_difference"});
  const auto fxs = sample_points(1, {kTwoPi}, 5);
  const auto fxis = xi_samples(1, {0.4, 3.0, 25.0});
  const std::vector<std::pair<std::string, Symbol>> ws{{"xi^3", cube}, {"mixed", default_symbol_a().sum()}};
  for (const auto& [name, w] : ws) {
    const auto a = separable_amplitude(u, v, w);
    for (int K : Ks) {
      const auto direct = tau_from_amplitude_flat(a, tau, K);
      const auto moved = change_tau(tau_from_amplitude_flat(a, 0.0, K), tau, F, K);
      const double d = term_by_term_error(moved, direct, fxs, fxis);
      rt.add({name, std::to_string(K), num(d)});
      r.check("routes." + name + ".K" + std::to_string(K), d, "<=", 1e-10);
    }
  }
  r.data["roundtrip_slopes"] = slopes;
  r.seconds = sw.seconds();
  return r;
}

Report adjoint_experiment(const ExperimentConfig& cfg) {
  Stopwatch sw;
  Report r("adjoint");
  const auto M = manifold_or(cfg, curved_connection_circle());
  const auto Ks = orders_list(cfg, "adjoint/K", {1, 2, 3});
  const double slack = cfg.get<double>("tolerances/slope_slack", 0.3);

  // a real Weyl symbol is its own adjoint symbol
  Expansion W = cfg.has("symbols/A") ? expansion_from_json(cfg.at("symbols/A"), M.dim, M.period) : default_symbol_a();
  W.set_tau(0.5);
  const auto xs = sample_points(M.dim, M.period, M.dim == 1 ? 8 : 3);
  const auto xis = xi_samples(M.dim, {0.5, 4.0, 60.0, 900.0});
  double imag = 0.0;
  for (const auto& x : xs)
    for (const auto& xi : xis) imag = std::max(imag, std::abs(W(x, xi).imag()) / (1.0 + std::abs(W(x, xi))));
  r.check("weyl.input_is_real", imag, "<=", 1e-15);
  for (int K : Ks) {
    const double d = relative_sum_error(adjoint_symbol(W, M, K), W, xs, xis);
    r.check("weyl.K" + std::to_string(K) + ".adjoint_equals_input", d, "<=", 1e-14);
  }

  // dense cross-check on a flat circle: plane-wave symbol of the conjugate transpose
  const int N = cfg.get<int>("adjoint/N", 128);
  const auto F = ManifoldModel::flat(1);
  const auto E = default_symbol_b();
  const auto g = TorusGrid::make(1, N);
  const Eigen::MatrixXcd H = discretize(E, g).matrix.adjoint();
  std::vector<double> ks;
  for (double k : lambda_grid(8.0, N / 4.0, 7)) {
    const double kk = std::round(k);
    if (ks.empty() || kk > ks.back()) ks.push_back(kk);
  }
  std::vector<Point> etas;
  for (double k : ks) etas.push_back({k});
  const auto table = effective_symbol([&](const GridFunction& u) { return GridFunction(H * u); }, g, etas);
  auto& t = r.table("dense", {"K", "xi", "residual"});
  std::vector<double> slopes, bounds;
  for (int K : Ks) {
    const auto S = adjoint_symbol(E, F, K);
    std::vector<double> vs;
    for (std::size_t i = 0; i < ks.size(); ++i) {
      double worst = 0.0;
      for (int j = 0; j < N; ++j) worst = std::max(worst, std::abs(table[i][j] - S(g.point(j), etas[i])));
      vs.push_back(worst);
    }
    slopes.push_back(record_decay(t, std::to_string(K), ks, vs).slope);
    bounds.push_back(E.leading_order() - K);
  }
  slope_gates(r, "dense", Ks, slopes, bounds, slack);
  r.data["dense_slopes"] = slopes;
  r.seconds = sw.seconds();
  return r;
}

// ---------------------------------------------------------------------------

namespace {

std::string multi(const MultiIndex& m) {
  std::string s;
  for (std::size_t i = 0; i < m.size(); ++i) s += (i ? " " : "") + std::to_string(m[i]);
  return s;
}

// ξ-degree bound recomputed here: min{|β|,|γ|,(|β|+|γ|)/3} (symmetric) or min{|β|,|γ|}
int expected_bound(const MultiIndex& b, const MultiIndex& g, bool symmetric) {
  const int p = degree(b), q = degree(g);
  return symmetric ? std::min({p, q, (p + q) / 3}) : std::min(p, q);
}

}  // namespace

Report detail::p_table_structure(const ManifoldModel& M, int order, int per_axis, const std::string& label) {
  Report r("p-table");
  const auto grid = sample_points(M.dim, M.period, per_axis);
  const auto P = p_table(M, M.kappa, grid, order);
  const bool symmetric = connection_is_symmetric(M, grid);
  auto& t = r.table(label, {"beta", "gamma", "degree", "bound", "max_abs"});
  double one_sided = 0.0, p00 = 0.0;
  int violations = 0;
  for (const auto& [key, e] : P.entries) {
    double mx = 0.0;
    for (const auto& row : e.samples)
      for (const auto& c : row) mx = std::max(mx, std::abs(c));
    const int bound = expected_bound(e.beta, e.gamma, symmetric);
    t.add({multi(e.beta), multi(e.gamma), std::to_string(e.degree), std::to_string(bound), num(mx)});
    const int tot = degree(e.beta) + degree(e.gamma);
    if (tot == 0) {
      for (const auto& row : e.samples) p00 = std::max(p00, std::abs(row[0] - 1.0));
      continue;
    }
    if (degree(e.beta) == 0 || degree(e.gamma) == 0) one_sided = std::max(one_sided, mx);
    if (e.degree > bound) ++violations;
  }
  r.check(label + ".P00_minus_one", p00, "<=", 1e-8);
  r.check(label + ".one_sided_max", one_sided, "<=", 1e-8);
  r.check(label + ".degree_violations", violations, "<=", 0);
  r.data[label] = {{"symmetric", symmetric}, {"order", order}, {"entries", P.entries.size()}};
  return r;
}

Report p_table_experiment(const ExperimentConfig& cfg) {
  Stopwatch sw;
  const auto M = manifold_or(cfg, metric_torus_2d().base);
  Report r = p_table_structure(M, cfg.get<int>("orders/p_order", 4), cfg.get<int>("p_table/points_per_axis", 2),
                               "entries");
  r.seconds = sw.seconds();
  return r;
}

Report horizontal_experiment(const ExperimentConfig& cfg) {
  Stopwatch sw;
  Report r("horizontal");
  std::vector<std::pair<std::string, MetricModel>> models;
  if (cfg.has("manifold"))
    models.emplace_back("config", metric_model_from_json(cfg.at("manifold")));
  else
    models = {{"circle", conformal_metric_circle()}, {"torus2", metric_torus_2d()}};
  const int count = cfg.get<int>("horizontal/samples", 1000);
  std::mt19937_64 gen(cfg.seed);
  auto& t = r.table("defect", {"model", "samples", "max_defect"});
  for (const auto& [name, MM] : models) {
    const int n = MM.dim();
    std::vector<Symbol> d;
    for (int i = 0; i < n; ++i) d.push_back(horizontal_derivative(MM.base, MM.norm, i));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> normal;
    double worst = 0.0;
    for (int s = 0; s < count; ++s) {
      Point x(n), xi(n);
      double len = 0.0;
      for (int i = 0; i < n; ++i) {
        x[i] = MM.base.period[i] * unit(gen);
        xi[i] = normal(gen);
        len += xi[i] * xi[i];
      }
      const double mag = std::pow(10.0, -1.0 + 4.0 * unit(gen)) / std::sqrt(len);
      for (auto& c : xi) c *= mag;
      for (const auto& di : d) worst = std::max(worst, std::abs(di(x, xi)));
    }
    t.add({name, std::to_string(count), num(worst)});
    r.check(name + ".max_defect", worst, "<=", 1e-9);
  }
  r.seconds = sw.seconds();
  return r;
}

}  // namespace pdo
