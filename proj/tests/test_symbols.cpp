#include <cmath>
#include <random>

#include "doctest.h"
#include "pdo/errors.hpp"
#include "pdo/symbols.hpp"

using namespace pdo;

namespace {
const std::vector<double> kPeriod{2 * M_PI};

Symbol u_times_xi2_plus_ixi() {
  FieldExpr u(2.0, {TrigTerm{{1}, 1.0, 0.0}});
  Symbol xi = xi_symbol(1, 0);
  return field_symbol(1, u, kPeriod) * xi * xi + cplx(0, 1) * xi;
}
}  // namespace

TEST_CASE("Levi-Civita connection of a conformal circle metric") {
  // g^{11} = exp(2φ), φ = 0.3 cos x  ⇒  Γ = −φ' = 0.3 sin x
  auto g = std::make_shared<Metric>(1, kPeriod, std::vector<FieldExpr>{FieldExpr(0.0, {TrigTerm{{1}, 0.6, 0.0}}, true)});
  LeviCivitaConnection lc(g);
  for (double x : {0.0, 0.7, 2.5}) {
    auto G = lc.christoffel({x}, 2);
    CHECK(G[0].value() == doctest::Approx(0.3 * std::sin(x)));
    CHECK(G[0].derivative({1}) == doctest::Approx(0.3 * std::cos(x)));
  }
  CHECK_FALSE(lc.is_flat_chart());
}

TEST_CASE("smooth step and low-frequency cutoff") {
  const auto& th = low_frequency_cutoff();
  CHECK(th(0.3) == 0.0);
  CHECK(th(0.5) == 0.0);
  CHECK(th(1.0) == 1.0);
  CHECK(th(5.0) == 1.0);
  double prev = 0.0;
  for (double s = 0.5; s <= 1.0; s += 0.01) {
    CHECK(th(s) >= prev - 1e-15);
    prev = th(s);
  }
  SmoothStep f(0.4);
  for (double s : {0.05, 0.2, 0.33}) {
    auto d = f.derivatives(s, 3);
    const double h = 1e-5;
    CHECK(d[1] == doctest::Approx((f.derivatives(s + h, 0)[0] - f.derivatives(s - h, 0)[0]) / (2 * h)).epsilon(1e-6));
    CHECK(d[2] == doctest::Approx((f.derivatives(s + h, 1)[1] - f.derivatives(s - h, 1)[1]) / (2 * h)).epsilon(1e-5));
  }
  CHECK(f.derivatives(0.2, 0)[0] == doctest::Approx(0.5));  // symmetric bump
}

TEST_CASE("symbol derivatives are exact") {
  Symbol a = u_times_xi2_plus_ixi();
  const double x = 0.9, k = 3.0;
  CHECK(std::abs(a({x}, {k}) - cplx((2 + std::cos(x)) * k * k, k)) < 1e-12);
  CHECK(std::abs(a.derivative({x}, {k}, {1}, {2}) - cplx(-2 * std::sin(x), 0)) < 1e-12);
  CHECK(std::abs(a.derivative({x}, {k}, {0}, {1}) - cplx(2 * (2 + std::cos(x)) * k, 1)) < 1e-12);
  CHECK(d_xi(a, {3}).is_zero());
  CHECK(d_x(xi_symbol(1, 0), {1}).is_zero());
  CHECK(d_xi(a, {1}).cls().m == doctest::Approx(a.cls().m - 1.0));
}

TEST_CASE("norm functions and cutoffs") {
  auto g = std::make_shared<Metric>(1, kPeriod, std::vector<FieldExpr>{FieldExpr(1.0, {TrigTerm{{1}, 0.3, 0.0}})});
  Symbol n = metric_norm(g);
  const double x = 0.4;
  const double s = std::sqrt(1 + 0.3 * std::cos(x));
  CHECK(n({x}, {4.0}).real() == doctest::Approx(4.0 * s));
  CHECK(n({x}, {-4.0}).real() == doctest::Approx(4.0 * s));
  CHECK(std::abs(n({x}, {0.1})) == 0.0);
  CHECK(std::abs(n({x}, {0.0})) == 0.0);
  CHECK(n.derivative({x}, {4.0}, {0}, {1}).real() == doctest::Approx(s));
  CHECK(n.cls().m == 1.0);
}

TEST_CASE("property: jet derivatives agree with centered differences") {
  auto g = std::make_shared<Metric>(2, std::vector<double>{2 * M_PI, 2 * M_PI},
                                    std::vector<FieldExpr>{FieldExpr(1.0, {TrigTerm{{1, 0}, 0.2, 0.0}}),
                                                           FieldExpr(0.1, {}), FieldExpr(0.1, {}),
                                                           FieldExpr(1.0, {TrigTerm{{0, 1}, 0.0, 0.3}})});
  Symbol a = norm_function(g, ScalarFunction::japanese(0.5)) * field_symbol(2, FieldExpr(0.0, {TrigTerm{{1, 1}, 1.0, 0.0}}, true), g->period());
  std::mt19937 rng(3);
  std::uniform_real_distribution<double> U(-1, 1);
  for (int t = 0; t < 10; ++t) {
    Point x{3 * U(rng), 3 * U(rng)}, xi{5 + 3 * U(rng), 4 * U(rng)};
    const double h = 1e-5;
    for (int i = 0; i < 2; ++i) {
      Point p = xi, m = xi;
      p[i] += h;
      m[i] -= h;
      MultiIndex b(2, 0);
      b[i] = 1;
      const cplx fd = (a(x, p) - a(x, m)) / (2 * h);
      CHECK(std::abs(a.derivative(x, xi, {0, 0}, b) - fd) < 1e-6 * (1 + std::abs(fd)));
    }
  }
}

TEST_CASE("expansions merge equal orders and check tags") {
  Symbol xi = xi_symbol(1, 0);
  Expansion e(1, 0.0, 0.5);
  e.add(0.0, constant_symbol(1, 1.0));
  e.add(1.0, xi);
  e.add(0.0, constant_symbol(1, 2.0));
  REQUIRE(e.terms().size() == 2);
  CHECK(e.terms()[0].order == 1.0);
  CHECK(std::abs(e({0.0}, {2.0}) - cplx(5.0)) < 1e-14);

  Expansion f = Expansion::single(xi * xi, 2.0);
  Expansion p = series_mul(e, f.set_remainder(1.5));
  CHECK(p.terms().front().order == 3.0);
  CHECK(p.remainder_order() == doctest::Approx(2.5));
  CHECK(p.terms().size() == 1);  // the order-2 product term sits below the remainder

  Expansion other(1, 0.5, 0.5);
  other.add(0.0, constant_symbol(1, 1.0));
  CHECK_THROWS_AS(series_add(e, other), Error);
}

TEST_CASE("seminorm report detects class violations and log growth") {
  auto g = std::make_shared<Metric>(1, kPeriod, std::vector<FieldExpr>{FieldExpr::constant(1.0)});
  SeminormGrid grid;
  grid.xs = {{0.0}, {1.0}, {2.0}};
  grid.directions = {{1.0}, {-1.0}};
  grid.xi_max = 1e4;
  grid.count = 20;
  Symbol good = norm_function(g, ScalarFunction::japanese(1.0));
  CHECK_FALSE(seminorm_report(good, grid).any_violation());
  Symbol bad = (xi_symbol(1, 0) * xi_symbol(1, 0)).with_class({1.0, 1.0, 0.0});
  CHECK(seminorm_report(bad, grid).any_violation());

  // variable order (1+ξ²)^{b(x)/2}: x-derivatives pick up log|ξ|
  Symbol var = custom_symbol(
      1,
      [](const Point& x, const Point& xi, int order) {
        auto l = JetLayout::dense(2, order);
        CJet X = CJet::variable(l, 0, x[0]), K = CJet::variable(l, 1, xi[0]);
        CJet b = sin(X) * cplx(0.5) + cplx(1.0);
        return exp(b * log(K * K + cplx(1.0)) * cplx(0.5));
      },
      "var", {1.5, 1.0, 0.0});
  auto rep = seminorm_report(var, grid);
  bool flagged = false;
  for (const auto& e : rep.entries)
    if (e.alpha[0] == 1 && e.beta[0] == 0) flagged = e.log_growth;
  CHECK(flagged);
}

TEST_CASE("scalar functions carry their class") {
  auto r = scalar_seminorm_report(ScalarFunction::shifted_root(2.0), 2.0, 1e4, 20, 4);
  CHECK_FALSE(r.any_violation());
  auto w = ScalarFunction::power(0.5).derivative(2);
  CHECK(w.order() == doctest::Approx(-1.5));
  CHECK(w(4.0) == doctest::Approx(-0.25 * std::pow(4.0, -1.5)));
}
