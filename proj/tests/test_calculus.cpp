#include <cmath>
#include <sstream>

#include "doctest.h"
#include "pdo/calculus.hpp"
#include "pdo/errors.hpp"

using namespace pdo;

namespace {
const double kTwoPi = 2 * M_PI;
const cplx I(0.0, 1.0);

ManifoldModel conformal_circle() {
  return ManifoldModel::from_connection(1, {kTwoPi}, {FieldExpr(0.0, {TrigTerm{{1}, 0.0, 0.3}})});
}

ManifoldModel torsionful_2d() {
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

Symbol field1(double c, double cs, double sn, int k = 1) {
  return field_symbol(1, FieldExpr(c, {TrigTerm{{k}, cs, sn}}), {kTwoPi});
}

Symbol xi_power(int p) {
  Symbol s = constant_symbol(1, 1.0);
  for (int i = 0; i < p; ++i) s = s * xi_symbol(1, 0);
  return s.with_class({double(p), 1.0, 0.0});
}

void check_equal(const Expansion& a, const Expansion& b, double tol) {
  for (double x : {0.3, 1.7, 4.0})
    for (double xi : {-2.5, 0.4, 3.0}) {
      const cplx u = a({x}, {xi}), v = b({x}, {xi});
      CHECK(std::abs(u - v) < tol * (1 + std::abs(v)));
    }
}

// ∂^e f(0) for f: R^4 → R from tensor central-difference stencils (second order).
double mixed_fd(const std::function<double(const std::vector<double>&)>& f, const MultiIndex& e, double h) {
  static const std::vector<std::vector<double>> st = {
      {0, 0, 1, 0, 0}, {0, -0.5, 0, 0.5, 0}, {0, 1, -2, 1, 0}, {-0.5, 1, 0, -1, 0.5}, {1, -4, 6, -4, 1}};
  const int nv = static_cast<int>(e.size());
  double r = 0;
  std::vector<int> idx(nv, 0);
  std::vector<double> v(nv);
  while (true) {
    double w = 1;
    for (int k = 0; k < nv && w != 0; ++k) w *= st[e[k]][idx[k]];
    if (w != 0) {
      for (int k = 0; k < nv; ++k) v[k] = (idx[k] - 2) * h;
      r += w * f(v);
    }
    int k = 0;
    while (k < nv && ++idx[k] == 5) idx[k++] = 0;
    if (k == nv) break;
  }
  return r / std::pow(h, degree(e));
}

ManifoldModel metric_2d() {
  return ManifoldModel::from_metric(2, {kTwoPi, kTwoPi},
                                    {FieldExpr(1.0, {TrigTerm{{1, 0}, 0.3, 0.0}}), FieldExpr(0.0, {TrigTerm{{0, 1}, 0.1, 0.0}}),
                                     FieldExpr(0.0, {TrigTerm{{0, 1}, 0.1, 0.0}}), FieldExpr(1.2, {TrigTerm{{1, 1}, 0.0, 0.2}})});
}
}  // namespace

TEST_CASE("P table: flat chart and vanishing one-sided entries") {
  auto F = ManifoldModel::flat(1);
  auto T = p_table(F, 0.5, {{0.0}}, 4);
  CHECK(T.flat);
  for (const auto& [k, e] : T.entries) {
    if (degree(e.beta) + degree(e.gamma) == 0)
      CHECK(e.degree == 0);
    else
      CHECK(e.degree == -1);
  }

  // every connection on a line is flat, so the table is trivial there too
  auto M = conformal_circle();
  auto P = p_table(M, 0.5, {{0.4}, {1.3}, {2.9}}, 4);
  CHECK(P.symmetric);
  for (const auto& [k, e] : P.entries)
    if (degree(e.beta) + degree(e.gamma) > 0) CHECK(e.degree == -1);

  auto S = p_table(metric_2d(), 0.3, {{0.4, 1.0}, {2.0, 5.0}}, 4);
  int nonzero = 0;
  for (const auto& [k, e] : S.entries) {
    if (degree(e.beta) == 0 || degree(e.gamma) == 0) {
      if (degree(e.beta) + degree(e.gamma) > 0) CHECK(e.degree == -1);
    } else if (e.degree >= 0) {
      ++nonzero;
    }
    CHECK(e.degree <= e.bound);
  }
  CHECK(nonzero > 0);
  std::ostringstream os;
  P.write_csv(os);
  CHECK(os.str().find("beta,gamma") == 0);
}

TEST_CASE("P_{e1,e2} on a curved surface against a finite-difference oracle") {
  auto M = metric_2d();
  const Point x{0.9, 0.4};
  const double kappa = 0.5;
  auto P = p_table(M, kappa, {x}, 2);
  CHECK(P.symmetric);
  // degree 0, so at ξ = 0:  G = Υ + Σ_k ∂_{u_k}(ψ_k Υ),  P = (∂_{u_1} + ∂_{w_1}) ∂_{u_2} G
  auto ups = [&](const std::vector<double>& v) { return upsilon_direct(M, x, kappa, {v[0], v[1]}, {v[2], v[3]}); };
  auto psiu = [&](int k) {
    return [&, k](const std::vector<double>& v) {
      std::vector<double> e(2, 0.0);
      e[k] = 1.0;
      return psi_direct(M, x, e, {v[0], v[1]}, {v[2], v[3]}) * ups(v);
    };
  };
  const double h = 0.04;
  double expected = mixed_fd(ups, {1, 1, 0, 0}, h) + mixed_fd(ups, {0, 1, 1, 0}, h);
  for (int k = 0; k < 2; ++k) {
    MultiIndex a{1, 1, 0, 0}, b{0, 1, 1, 0};
    a[k] += 1;
    b[k] += 1;
    expected += mixed_fd(psiu(k), a, h) + mixed_fd(psiu(k), b, h);
  }
  const auto* e = P.find({1, 0}, {0, 1});
  REQUIRE(e);
  CHECK(e->degree <= 0);
  const cplx got = e->symbol(x, {0.7, -0.3});
  CHECK(std::abs(got.imag()) < 1e-10);
  CHECK(got.real() == doctest::Approx(expected).epsilon(5e-3));
  CHECK(std::abs(got) > 1e-3);
}

TEST_CASE("P table on a torsionful 2-D connection respects the degree bounds") {
  auto M = torsionful_2d();
  auto P = p_table(M, 0.5, {{0.3, 1.1}, {2.0, 4.0}}, 3);
  CHECK_FALSE(P.symmetric);
  int nonzero = 0;
  for (const auto& [k, e] : P.entries) {
    CHECK(e.degree <= e.bound);
    if (degree(e.beta) > 0 && degree(e.gamma) > 0 && e.degree >= 0) ++nonzero;
  }
  CHECK(nonzero > 0);
  // the symbol evaluates the same polynomial away from the grid
  auto e = P.find({1, 0}, {1, 1});
  REQUIRE(e);
  const cplx a = e->symbol({0.3, 1.1}, {0.0, 0.0});
  CHECK(std::abs(a - e->samples[0][0]) < 1e-12);
}

TEST_CASE("flat composition: iξ ∘ v = iξ v + v'") {
  auto v = field1(0.5, 0.3, 0.2, 2);
  auto A = Expansion::single(I * xi_symbol(1, 0).with_class({1, 1, 0}), 1.0);
  auto B = Expansion::single(v, 0.0);
  auto C = compose_flat(A, B, 2);
  for (double x : {0.2, 1.5})
    for (double xi : {-1.0, 2.0}) {
      const double vx = 0.5 + 0.3 * std::cos(2 * x) + 0.2 * std::sin(2 * x);
      const double dv = -0.6 * std::sin(2 * x) + 0.4 * std::cos(2 * x);
      CHECK(std::abs(C({x}, {xi}) - (I * xi * vx + dv)) < 1e-12);
    }
  CHECK(C.leading_order() == doctest::Approx(1.0));

  // the global formula on a flat chart reduces to the flat one
  auto F = ManifoldModel::flat(1);
  auto T = p_table(F, 0.5, {{0.0}}, 4);
  check_equal(compose_global(A, B, F, T, 2), C, 1e-12);
}

TEST_CASE("flat composition: remainder order with terms off the integer lattice") {
  // A = ⟨ξ⟩ + v⟨ξ⟩^{3/4}, B = v⟨ξ⟩: at K = 1 the first dropped term is ∂ξ⟨ξ⟩^{3/4}·D_x(v⟨ξ⟩)
  auto v = field1(0.5, 0.3, 0.2);
  auto jap = [](double a) { return ScalarFunction::japanese(a); };
  auto flat_metric = [] { return std::make_shared<Metric>(1, std::vector<double>{kTwoPi}, std::vector<FieldExpr>{FieldExpr::constant(1.0)}); };
  Expansion A(1, 0.0, 0.5, 1.0, 0.0);
  A.add(1.0, norm_function(flat_metric(), jap(1.0)), {});
  A.add(0.75, v * norm_function(flat_metric(), jap(0.75)), {});
  auto B = Expansion::single((v * norm_function(flat_metric(), jap(1.0))).with_class({1, 1, 0}), 1.0);
  CHECK(compose_flat(A, B, 1).remainder_order() == doctest::Approx(0.75));
  CHECK(compose_flat(A, B, 2).remainder_order() == doctest::Approx(-0.25));
}

TEST_CASE("global composition: identity and associativity for differential operators") {
  auto M = conformal_circle();
  auto P = p_table(M, 0.5, {{0.0}, {1.0}, {2.0}, {3.0}, {4.0}, {5.0}}, 6);
  auto one = Expansion::single(constant_symbol(1, 1.0), 0.0);
  auto A = Expansion::single(field1(1.0, 0.2, 0.0) * xi_power(2), 2.0);
  A.add(1.0, I * field1(0.0, 0.0, 0.5) * xi_power(1));
  check_equal(compose_global(one, A, M, P, 4), A, 1e-12);
  check_equal(compose_global(A, one, M, P, 4), A, 1e-12);

  auto B = Expansion::single(I * xi_power(1), 1.0);
  auto C = Expansion::single(field1(0.5, 0.1, 0.3), 0.0);
  auto AB_C = compose_global(compose_global(A, B, M, P, 6), C, M, P, 6);
  auto A_BC = compose_global(A, compose_global(B, C, M, P, 6), M, P, 6);
  check_equal(AB_C, A_BC, 1e-9);
}

TEST_CASE("composition hypotheses and P coverage") {
  auto M = torsionful_2d();
  auto P = p_table(M, 0.5, {{0.1, 0.2}}, 2);
  auto s = metric_quadratic(std::make_shared<Metric>(2, std::vector<double>{kTwoPi, kTwoPi}, std::vector<FieldExpr>{FieldExpr::constant(1), FieldExpr::constant(0), FieldExpr::constant(0), FieldExpr::constant(1)})).with_class({2.0, 0.4, 0.0});
  Expansion A(2, 0.0, 0.5, 0.4, 0.0);
  A.add(2.0, s);
  CHECK_THROWS_AS(compose_global(A, A, M, P, 2), Error);
  try {
    compose_global(A, A, M, P, 2);
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::HypothesisViolation);
  }
  Expansion D(2, 0.0, 0.5, 0.5, 0.5);
  D.add(1.0, s);
  try {
    compose_flat(D, D, 1);
    FAIL("expected ClassViolation");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::ClassViolation);
  }
  Expansion Q(2, 0.0, 0.5, 1.0, 0.0);
  Q.add(2.0, s.with_class({2.0, 1.0, 0.0}));
  try {
    compose_global(Q, Q, M, P, 4);
    FAIL("expected MissingPEntry");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::MissingPEntry);
  }
}

TEST_CASE("τ-symbols from amplitudes, τ changes and adjoints") {
  // a = u(x) v(y) ξ³ with v = cos(ky):  σ₀ = u(x) [e^{ikx}(ξ+k)³ + e^{−ikx}(ξ−k)³]/2
  const int k = 2;
  auto u = field1(1.0, 0.0, 0.4);
  auto v = field1(0.0, 1.0, 0.0, k);
  auto a = separable_amplitude(u, v, xi_power(3));
  auto S0 = tau_from_amplitude_flat(a, 0.0, 3);
  auto S1 = tau_from_amplitude_flat(a, 1.0, 3);
  for (double x : {0.3, 2.2})
    for (double xi : {-1.5, 0.8}) {
      const double ux = 1.0 + 0.4 * std::sin(x);
      const cplx e = std::exp(I * double(k) * x);
      const cplx s0 = ux * 0.5 * (e * std::pow(xi + k, 3) + std::conj(e) * std::pow(xi - k, 3));
      CHECK(std::abs(S0({x}, {xi}) - s0) < 1e-10);
      // right symbol: σ₁(y, ξ) = v(y)[e^{iy}(ξ−1)³ − e^{−iy}(ξ+1)³] 0.4/(2i) + v(y) ξ³
      const cplx f = std::exp(I * x);
      const double vx = std::cos(k * x);
      const cplx s1 = vx * (std::pow(xi, 3) + 0.4 * (f * std::pow(xi - 1, 3) - std::conj(f) * std::pow(xi + 1, 3)) / (2.0 * I));
      CHECK(std::abs(S1({x}, {xi}) - s1) < 1e-10);
    }

  auto F = ManifoldModel::flat(1);
  auto Sh = tau_from_amplitude_flat(a, 0.5, 3);
  check_equal(change_tau(S0, 0.5, F, 6), Sh, 1e-10);
  check_equal(change_tau(change_tau(S0, 0.7, F, 6), 0.0, F, 6), S0, 1e-10);

  auto adj = adjoint_symbol(S0, F, 6);
  CHECK(adj.kappa() == doctest::Approx(0.5));
  check_equal(adjoint_symbol(adj, F, 6), S0, 1e-10);
  // Weyl quantisation of a real symbol is self-adjoint
  auto W = Expansion::single(field1(1.0, 0.3, 0.0) * xi_power(2), 2.0, 0.5, 0.5);
  check_equal(adjoint_symbol(W, F, 4), W, 1e-14);

  // on a curved circle a τ change is still invertible to the retained order
  auto M = conformal_circle();
  auto E = Expansion::single(field1(1.0, 0.2, 0.1) * xi_power(2), 2.0);
  auto back = change_tau(change_tau(E, 0.5, M, 6), 0.0, M, 6);
  check_equal(back, E, 1e-9);
}

TEST_CASE("kernels: mollified identity and derivative") {
  ManifoldModel F = ManifoldModel::flat(1);
  F.injectivity_fraction = 0.45;
  KernelOptions opts;
  opts.xi_max = 256.0;
  auto K1 = kernel_from_symbol(Expansion::single(constant_symbol(1, 1.0), 0.0), F, 0.5, 0.0, opts);
  auto Kd = kernel_from_symbol(Expansion::single(I * xi_symbol(1, 0).with_class({1, 1, 0}), 1.0), F, 0.5, 0.0, opts);
  const double x = 0.6;
  // trapezoid on [x − 1.5, x + 1.5]; the tails of the mollified kernel decay like exp(−c√(Ξ|x − y|))
  const int N = 300;
  const double h = 3.0 / N;
  cplx mass{}, deriv{};
  for (int j = 0; j <= N; ++j) {
    const double y = x - 1.5 + j * h;
    const double w = (j == 0 || j == N) ? 0.5 * h : h;
    mass += w * K1({x}, {y});
    deriv += w * Kd({x}, {y}) * std::sin(y);
  }
  CHECK(std::abs(mass - 1.0) < 1e-6);
  CHECK(std::abs(deriv - std::cos(x)) < 1e-5);
}

TEST_CASE("kernels: τ = 0 and τ = 1/2 representations agree") {
  ManifoldModel F = ManifoldModel::flat(1);
  F.injectivity_fraction = 0.45;
  KernelOptions opts;
  opts.xi_max = 256.0;
  auto S0 = Expansion::single(field1(1.0, 0.3, 0.0) * (I * xi_power(1)), 1.0);
  auto Sh = change_tau(S0, 0.5, F, 3);
  auto K0 = kernel_from_symbol(S0, F, 0.5, 0.0, opts);
  auto Kh = kernel_from_symbol(Sh, F, 0.5, 0.5, opts);
  // the integrand has no frequencies beyond Ξ + 2 < 2π/h, so a coarse trapezoid suffices
  const double x = 1.1, h = 0.02;
  cplx a{}, b{};
  for (int j = 0; j <= 150; ++j) {
    const double y = x - 1.5 + j * h;
    const double w = (j == 0 || j == 150) ? 0.5 * h : h;
    a += w * K0({x}, {y}) * std::sin(2 * y);
    b += w * Kh({x}, {y}) * std::sin(2 * y);
  }
  const double exact = (1.0 + 0.3 * std::cos(x)) * 2 * std::cos(2 * x);
  CHECK(std::abs(a - exact) < 1e-5);
  CHECK(std::abs(b - exact) < 1e-5);

  KernelOptions coarse;
  coarse.xi_max = 256.0;
  coarse.nodes = 20;
  coarse.tol = 1e-9;
  auto Kc = kernel_from_symbol(S0, F, 0.5, 0.0, coarse);
  CHECK_THROWS_AS(Kc({x}, {x + 1.0}), Error);
}
