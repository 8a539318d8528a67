#include <cmath>
#include <random>

#include "doctest.h"
#include "pdo/calculus.hpp"
#include "pdo/errors.hpp"
#include "pdo/geometry.hpp"
#include "pdo/oracle.hpp"

using namespace pdo;

namespace {
const double kTwoPi = 2 * M_PI;
const cplx I(0.0, 1.0);

GridFunction sample(const TorusGrid& g, const std::function<cplx(const Point&)>& f) {
  GridFunction u(g.size());
  for (int j = 0; j < g.size(); ++j) u[j] = f(g.point(j));
  return u;
}

// random trigonometric polynomial with frequencies |k| ≤ kmax
std::vector<std::pair<int, cplx>> random_modes(int kmax, unsigned seed) {
  std::mt19937 gen(seed);
  std::normal_distribution<double> nd;
  std::vector<std::pair<int, cplx>> m;
  for (int k = -kmax; k <= kmax; ++k) m.emplace_back(k, cplx(nd(gen), nd(gen)));
  return m;
}

ManifoldModel conformal_circle() {
  return ManifoldModel::from_connection(1, {kTwoPi}, {FieldExpr(0.0, {TrigTerm{{1}, 0.0, 0.3}})});
}
}  // namespace

TEST_CASE("flat application: identity, derivative, product rule") {
  auto g = TorusGrid::make(1, 64);
  auto u = sample(g, [](const Point& x) { return std::sin(x[0]); });
  CHECK((apply_pdo_flat(Expansion::single(constant_symbol(1, 1.0), 0.0), g, u) - u).cwiseAbs().maxCoeff() < 1e-14);
  auto d = apply_pdo_flat(Expansion::single(I * xi_symbol(1, 0), 1.0), g, u);
  auto c = sample(g, [](const Point& x) { return std::cos(x[0]); });
  CHECK((d - c).cwiseAbs().maxCoeff() < 1e-12);

  // σ = e^{ix}·iξ is the operator u ↦ e^{ix} u'
  auto e = x_function_symbol(
      1, [](const Point& x, int order) { return cos(RJet::variable(JetLayout::dense(1, order), 0, x[0])); }, "cos");
  auto s = x_function_symbol(
      1, [](const Point& x, int order) { return sin(RJet::variable(JetLayout::dense(1, order), 0, x[0])); }, "sin");
  Symbol sym = (e + I * s) * (I * xi_symbol(1, 0));
  auto modes = random_modes(6, 7);
  auto v = sample(g, [&](const Point& x) {
    cplx r{};
    for (auto [k, a] : modes) r += a * std::exp(I * double(k) * x[0]);
    return r;
  });
  auto expect = sample(g, [&](const Point& x) {
    cplx r{};
    for (auto [k, a] : modes) r += a * I * double(k) * std::exp(I * double(k) * x[0]);
    return std::exp(I * x[0]) * r;
  });
  CHECK((apply_pdo_flat(Expansion::single(sym, 1.0), g, v) - expect).cwiseAbs().maxCoeff() < 1e-10);

  // energy at the band edge is reported
  auto edge = sample(g, [](const Point& x) { return std::cos(30 * x[0]); });
  CHECK_THROWS_AS(apply_pdo_flat(Expansion::single(constant_symbol(1, 1.0), 0.0), g, edge), Error);
}

TEST_CASE("effective symbols invert the flat quantisation") {
  auto g = TorusGrid::make(1, 32);
  Symbol sigma = field_symbol(1, FieldExpr(1.0, {TrigTerm{{2}, 0.3, 0.1}}), {kTwoPi}) * xi_symbol(1, 0) * xi_symbol(1, 0);
  auto E = Expansion::single(sigma, 2.0);
  std::vector<Point> etas{{-5.0}, {0.0}, {3.0}, {7.0}};
  auto table = effective_symbol([&](const GridFunction& u) { return apply_pdo_flat(E, g, u); }, g, etas);
  double err = 0;
  for (std::size_t i = 0; i < etas.size(); ++i)
    for (int j = 0; j < g.N; ++j) err = std::max(err, std::abs(table[i][j] - E(g.point(j), etas[i])));
  CHECK(err < 1e-10);

  // modulated probing reaches |η| far beyond the grid band
  auto big = effective_symbol(modulated(symbol_fn(E), g), g, {{1000.5}});
  CHECK(std::abs(big[0][5] - E(g.point(5), {1000.5})) < 1e-8 * std::abs(E(g.point(5), {1000.5})));

  // A∘B for differential operators equals the full flat composition
  auto B = Expansion::single(field_symbol(1, FieldExpr(0.5, {TrigTerm{{1}, 0.0, 0.4}}), {kTwoPi}) * (I * xi_symbol(1, 0)), 1.0);
  auto C = compose_flat(E, B, 4);
  auto AB = effective_symbol(compose(modulated(symbol_fn(E), g), modulated(symbol_fn(B), g)), g, {{40.0}});
  err = 0;
  for (int j = 0; j < g.N; ++j) err = std::max(err, std::abs(AB[0][j] - C(g.point(j), {40.0})) / std::abs(C(g.point(j), {40.0})));
  CHECK(err < 1e-12);
}

TEST_CASE("τ-quantisation on plane waves") {
  auto g = TorusGrid::make(1, 32);
  auto F = ManifoldModel::flat(1);
  Symbol v = field_symbol(1, FieldExpr(1.0, {TrigTerm{{1}, 0.2, 0.3}}), {kTwoPi});
  auto S0 = Expansion::single(v * xi_symbol(1, 0) * xi_symbol(1, 0), 2.0);
  auto Sh = change_tau(S0, 0.5, F, 4);
  auto left = effective_symbol(modulated(symbol_fn(Sh), g, 0.5), g, {{12.0}});
  double err = 0;
  for (int j = 0; j < g.N; ++j) err = std::max(err, std::abs(left[0][j] - S0(g.point(j), {12.0})));
  CHECK(err < 1e-9);
}

TEST_CASE("dense discretisation and spectral projectors") {
  auto g = TorusGrid::make(1, 32);
  auto D = discretize(Expansion::single(I * xi_symbol(1, 0), 1.0), g);
  CHECK((D.matrix + D.matrix.adjoint()).cwiseAbs().maxCoeff() < 1e-10);
  CHECK_THROWS_AS(eigen_decompose(D), Error);

  auto L = discretize(Expansion::single(xi_symbol(1, 0) * xi_symbol(1, 0), 2.0), g);
  auto S = eigen_decompose(L);
  CHECK(spectral_projector(S, -1.0).cwiseAbs().maxCoeff() < 1e-14);
  CHECK((spectral_projector(S, 1e6) - Eigen::MatrixXcd::Identity(g.N, g.N)).cwiseAbs().maxCoeff() < 1e-12);
  // Π(λ) for −Δ keeps the modes |k|² < λ: trace counts them
  CHECK(spectral_projector(S, 10.0).trace().real() == doctest::Approx(7.0));
  auto sq = functional_calculus(S, [](double e) { return cplx(std::sqrt(std::max(e, 0.0))); });
  auto u = sample(g, [](const Point& x) { return std::sin(3 * x[0]); });
  CHECK((sq * u - 3.0 * u).cwiseAbs().maxCoeff() < 1e-11);
}

TEST_CASE("decay fits") {
  std::vector<double> l, v;
  for (int k = 0; k < 8; ++k) {
    l.push_back(10.0 * std::pow(1.5, k));
    v.push_back(3.0 * std::pow(l.back(), -2.5));
  }
  auto f = fit_decay(l, v);
  CHECK(f.slope == doctest::Approx(-2.5).epsilon(1e-4));
  CHECK(f.local_slopes.size() == 7);
  CHECK(f.residual < 1e-10);
  CHECK_THROWS_AS(fit_decay({1, 2, 3}, {1, 2, 3}), Error);
}

TEST_CASE("flattening chart of a curved circle") {
  auto M = conformal_circle();
  FlatteningChart ch(M);
  CHECK(ch.F(0.0) == doctest::Approx(0.0));
  CHECK(ch.F(kTwoPi) == doctest::Approx(ch.length()).epsilon(1e-12));
  for (double x : {0.3, 2.0, 5.5}) {
    CHECK(ch.inverse(ch.F(x)) == doctest::Approx(x).epsilon(1e-13));
    // F″ = Γ F′
    const double h = 1e-4;
    const double d2 = (ch.F(x + h) - 2 * ch.F(x) + ch.F(x - h)) / (h * h);
    CHECK(d2 == doctest::Approx(0.3 * std::sin(x) * ch.dF(x)).epsilon(1e-5));
    // geodesics are straight lines in Y
    const double v = 0.4;
    CHECK(exp_map(M, {x}, {v})[0] == doctest::Approx(ch.inverse(ch.F(x) + ch.dF(x) * v)).epsilon(1e-10));
  }
  SymbolFn s = [](const Point& x, const Point& xi) { return cplx(std::cos(x[0]) * xi[0]); };
  auto back = ch.from_flat(ch.to_flat(s));
  CHECK(std::abs(back({1.2}, {3.0}) - s({1.2}, {3.0})) < 1e-12);
  auto shifted = ManifoldModel::from_connection(1, {kTwoPi}, {FieldExpr(0.1, {})});
  CHECK_THROWS_AS(FlatteningChart{shifted}, Error);
}

TEST_CASE("global application on a flat circle reduces to the lattice sum") {
  auto g = TorusGrid::make(1, 64);
  auto F = ManifoldModel::flat(1);
  F.injectivity_fraction = 0.49;
  auto E = Expansion::single(field_symbol(1, FieldExpr(1.0, {TrigTerm{{1}, 0.3, 0.0}}), {kTwoPi}) * (I * xi_symbol(1, 0)), 1.0);
  auto u = sample(g, [](const Point& x) { return std::sin(2 * x[0]) + 0.5 * std::cos(3 * x[0]); });
  auto a = apply_pdo_flat(E, g, u);
  GlobalApplyOptions opts;
  opts.window = 2.8;
  auto b = apply_pdo_global(E, F, 0.5, 0.0, g, u, opts);
  // the error is the mollified-kernel tail beyond the diagonal window; it shrinks like exp(−c√(Ξ·window))
  CHECK((a - b).cwiseAbs().maxCoeff() < 1e-3);
}

TEST_CASE("artifact cache roundtrip") {
  auto dir = std::filesystem::temp_directory_path() / "pdo_cache_test";
  std::filesystem::remove_all(dir);
  ArtifactCache cache(dir);
  Eigen::MatrixXcd m = Eigen::MatrixXcd::Random(5, 4);
  nlohmann::json meta{{"grid", 5}, {"route", "test"}};
  cache.store("m", m, meta);
  auto r = cache.load("m", meta);
  REQUIRE(r);
  CHECK((*r - m).cwiseAbs().maxCoeff() == 0.0);
  CHECK_FALSE(cache.load("m", nlohmann::json{{"grid", 6}}));
  CHECK_FALSE(cache.load("missing", meta));
  std::filesystem::remove_all(dir);
}
