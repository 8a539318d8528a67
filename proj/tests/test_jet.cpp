#include <cmath>
#include <random>

#include "doctest.h"
#include "pdo/jet.hpp"

using namespace pdo;

TEST_CASE("jet layout enumerates graded multi-indices") {
  auto l = JetLayout::dense(2, 3);
  CHECK(l->size() == 10);
  CHECK(l->exponent(0) == MultiIndex{0, 0});
  CHECK(l->find({1, 2}).has_value());
  CHECK_FALSE(l->find({2, 2}).has_value());
  auto g = JetLayout::make({2, 1}, {2, 1});
  CHECK(g->size() == 6 * 2);
  CHECK(g->find({2, 0, 1}).has_value());
  CHECK_FALSE(g->find({1, 0, 2}).has_value());
}

TEST_CASE("products of polynomials are exact") {
  auto l = JetLayout::dense(2, 4);
  RJet x = RJet::variable(l, 0, 0.0), y = RJet::variable(l, 1, 0.0);
  RJet p = (x + 1.0) * (y * 2.0 + x);  // 2y + x + 2xy + x^2
  CHECK(p.coeff({0, 1}) == doctest::Approx(2.0));
  CHECK(p.coeff({1, 0}) == doctest::Approx(1.0));
  CHECK(p.coeff({1, 1}) == doctest::Approx(2.0));
  CHECK(p.coeff({2, 0}) == doctest::Approx(1.0));
  CHECK(p.coeff({0, 0}) == doctest::Approx(0.0));
}

TEST_CASE("elementary functions match analytic derivatives") {
  const double x0 = 0.3, y0 = -0.7;
  auto l = JetLayout::dense(2, 6);
  RJet x = RJet::variable(l, 0, x0), y = RJet::variable(l, 1, y0);
  RJet f = sin(x) * exp(y);
  // ∂x^a ∂y^b f = sin^{(a)}(x0) e^{y0}
  const double sd[4] = {std::sin(x0), std::cos(x0), -std::sin(x0), -std::cos(x0)};
  for (int a = 0; a <= 3; ++a)
    for (int b = 0; b + a <= 6; ++b) CHECK(f.derivative({a, b}) == doctest::Approx(sd[a % 4] * std::exp(y0)));

  RJet r = exp(log(x + 2.0));
  CHECK(r.value() == doctest::Approx(x0 + 2.0));
  CHECK(r.coeff({1, 0}) == doctest::Approx(1.0));
  CHECK(std::abs(r.coeff({3, 0})) < 1e-13);

  RJet s = sqrt(x * x + 1.0);
  RJet s2 = s * s;
  CHECK(s2.value() == doctest::Approx(x0 * x0 + 1.0));
  CHECK(s2.coeff({1, 0}) == doctest::Approx(2.0 * x0));
  CHECK(s2.coeff({2, 0}) == doctest::Approx(1.0));
  CHECK(std::abs(s2.coeff({4, 0})) < 1e-13);

  RJet q = (x + 3.0) / (x + 3.0);
  CHECK(q.value() == doctest::Approx(1.0));
  CHECK(q.max_abs() == doctest::Approx(1.0));
}

TEST_CASE("diff lowers the order and shifts coefficients") {
  auto l = JetLayout::dense(1, 5);
  RJet x = RJet::variable(l, 0, 0.4);
  RJet e = exp(x * 2.0);
  RJet d = e.diff(0);
  CHECK(d.layout()->cap(0) == 4);
  for (int k = 0; k <= 4; ++k) CHECK(d.derivative({k}) == doctest::Approx(std::pow(2.0, k + 1) * std::exp(0.8)));
}

TEST_CASE("substitution composes jets (chain rule)") {
  // f(u) = u1^2 + 3 u1 u2 around 0, u1 = sin t, u2 = t^2; compare with direct jets.
  auto lf = JetLayout::dense(2, 4);
  RJet u1 = RJet::variable(lf, 0, 0.0), u2 = RJet::variable(lf, 1, 0.0);
  RJet f = u1 * u1 + u1 * u2 * 3.0;
  auto lt = JetLayout::dense(1, 4);
  RJet t = RJet::variable(lt, 0, 0.0);
  RJet h1 = sin(t), h2 = t * t;
  RJet comp = substitute(f, {h1, h2});
  RJet direct = h1 * h1 + h1 * h2 * 3.0;
  for (std::size_t i = 0; i < comp.size(); ++i) CHECK(comp[i] == doctest::Approx(direct[i]));
}

TEST_CASE("multi-group layouts keep covector variables as exact polynomials") {
  // exp(i u^2 ξ) with u truncated at 4 and ξ capped at 2: coefficients of u^2 ξ, u^4 ξ^2.
  auto l = JetLayout::make({1, 1}, {4, 2});
  CJet u = CJet::variable(l, 0, 0.0), xi = CJet::variable(l, 1, 0.0);
  CJet psi = u * u * xi;
  CJet e = exp(psi * cplx(0, 1));
  CHECK(std::abs(e.coeff({2, 1}) - cplx(0, 1)) < 1e-14);
  CHECK(std::abs(e.coeff({4, 2}) - cplx(-0.5, 0)) < 1e-14);
  CHECK(std::abs(e.coeff({4, 1})) < 1e-14);
}

TEST_CASE("property: jets of random polynomials reproduce exact products") {
  std::mt19937 rng(7);
  std::uniform_real_distribution<double> U(-1, 1);
  auto l = JetLayout::dense(2, 6);
  for (int trial = 0; trial < 20; ++trial) {
    RJet a(l), b(l);
    // degree-3 random polynomials: product is degree 6 and fully retained
    for (std::size_t i = 0; i < l->size(); ++i)
      if (degree(l->exponent(i)) <= 3) {
        a[i] = U(rng);
        b[i] = U(rng);
      }
    RJet p = a * b;
    const double h[2] = {U(rng), U(rng)};
    CHECK(p.eval(h) == doctest::Approx(a.eval(h) * b.eval(h)).epsilon(1e-12));
  }
}
