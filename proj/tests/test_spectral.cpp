#include <cmath>

#include "doctest.h"
#include "pdo/errors.hpp"
#include "pdo/spectral.hpp"

using namespace pdo;

namespace {
const double kTwoPi = 2 * M_PI;

MetricModel flat_circle() { return MetricModel::make(1, {kTwoPi}, {FieldExpr(1.0, {})}); }

MetricModel wavy_circle(std::vector<BumpTerm> bumps = {}) {
  return MetricModel::make(1, {kTwoPi}, {FieldExpr(0.0, {TrigTerm{{1}, 0.2, 0.0}}, std::move(bumps), true)});
}

Perturbation cos_potential() {
  return Perturbation::from_weyl(1, {kTwoPi}, {FieldExpr()}, FieldExpr(1.0, {TrigTerm{{1}, 0.3, 0.0}}));
}
}  // namespace

TEST_CASE("smooth cutoff family") {
  const auto CF = make_cutoff(0.5, 0.5);
  CHECK(CF.f(-1.0) == 1.0);
  CHECK(CF.f(1.5) == 0.0);
  double prev = 1.0;
  for (int k = 0; k <= 1000; ++k) {
    const double v = CF.f(-0.1 + 0.7 * k / 1000.0);
    CHECK(v <= prev + 1e-15);
    CHECK(v >= 0.0);
    prev = v;
  }
  for (double lam : {10.0, 100.0}) {
    CHECK(CF.chi(lam, lam) == 1.0);
    CHECK(CF.chi(lam, lam + CF.eps * std::sqrt(lam)) == 0.0);
    // χ(λ,s) = χ(λ,s)·χ(λ,s − ελ^ρ)
    for (int k = 0; k < 50; ++k) {
      const double s = lam - 2.0 + (3.0 + CF.eps * std::sqrt(lam)) * k / 49.0;
      CHECK(std::abs(CF.chi(lam, s) - CF.chi(lam, s) * CF.chi(lam, s - CF.eps * std::sqrt(lam))) < 1e-15);
    }
  }

  // analytic derivatives against central differences
  const double lam = 20.0, s0 = lam + 0.3 * CF.eps * std::sqrt(lam), h = 1e-4;
  auto d = CF.chi_derivatives(lam, s0, 2);
  CHECK(d[1] == doctest::Approx((CF.chi(lam, s0 + h) - CF.chi(lam, s0 - h)) / (2 * h)).epsilon(1e-6));
  CHECK(d[2] == doctest::Approx((CF.chi(lam, s0 + h) - 2 * d[0] + CF.chi(lam, s0 - h)) / (h * h)).epsilon(1e-4));

  // max_s |∂_s^j χ(λ,s)| ∝ λ^{−jρ}, and the bound C̃_j (|s| + λ)^{−jρ}
  for (double rho : {0.5, 1.0}) {
    const auto G = make_cutoff(0.5, rho);
    for (int j = 1; j <= 4; ++j) {
      std::vector<double> ls, ms;
      double lo = 1e300, hi = 0.0;
      for (double l : {10.0, 30.0, 100.0, 300.0, 1000.0}) {
        double m = 0.0, b = 0.0;
        const double w = G.eps * std::pow(l, rho);
        for (int k = 1; k < 2000; ++k) {
          const double s = l + w * k / 2000.0;
          const double v = std::abs(G.chi_derivatives(l, s, j)[j]);
          m = std::max(m, v);
          b = std::max(b, v * std::pow(std::abs(s) + l, j * rho));
        }
        ls.push_back(l);
        ms.push_back(m);
        lo = std::min(lo, b);
        hi = std::max(hi, b);
      }
      CHECK(std::abs(fit_decay(ls, ms).slope + j * rho) < 0.1);
      CHECK(hi / lo < std::pow(2.5, j));
    }
  }
  CHECK_THROWS_AS(make_cutoff(0.5, 1.5), Error);
  CHECK_THROWS_AS(make_cutoff(0.0, 0.5), Error);
}

TEST_CASE("parameter-dependent expansion of chi(lambda, A)") {
  const auto CF = make_cutoff(1.0, 0.5);
  // flat, ν = 0: χ(λ,|ξ|) alone
  auto F = flat_circle();
  auto S0 = sqrt_symbol(F, Perturbation::zero(1), 3);
  auto C0 = c_coefficients(S0, 3);
  auto E0 = chi_symbol_expansion(F, C0, CF, 10.0, 3);
  for (double xi : {0.0, 0.3, 5.0, 10.5, 11.0, 13.5, 40.0}) CHECK(std::abs(E0({0.7}, {xi}) - CF.chi(10.0, xi)) < 1e-12);

  // corrections live on λ < |ξ|_x < λ + ελ^ρ
  auto M = wavy_circle();
  auto S = sqrt_symbol(M, cos_potential(), 4);
  auto C = c_coefficients(S, 3);
  const double lam = 12.0, top = lam + CF.eps * std::sqrt(lam);
  auto E = chi_symbol_expansion(M, C, CF, lam, 3);
  for (double x : {0.4, 2.5, 5.0})
    for (double xi : {-30.0, -8.0, 0.0, 2.0, 9.0, 25.0, 60.0}) {
      const double s = M.metric()->norm({x}, {xi});
      if (s > lam && s < top) continue;
      CHECK(std::abs(E({x}, {xi}) - CF.chi(lam, s)) < 1e-12);
    }
  bool inside = false;
  for (double xi = 10.0; xi < 16.0; xi += 0.1) {
    const double s = M.metric()->norm({1.0}, {xi});
    if (s > lam && s < top && std::abs(E({1.0}, {xi}) - CF.chi(lam, s)) > 1e-6) inside = true;
  }
  CHECK(inside);
}

TEST_CASE("chi expansion against the dense functional calculus") {
  // flat circle with ν = 1 + 0.3 cos x: the Levi-Civita symbol is the ordinary one, so the
  // lattice quantisation of the truncated expansion is compared with χ(λ, A) from the eigenbasis
  const auto CF = make_cutoff(1.0, 0.5);
  auto F = flat_circle();
  auto S = sqrt_symbol(F, cos_potential(), 6);
  auto C = c_coefficients(S, 3);
  const int N = 96;
  auto g = TorusGrid::make(1, N);
  auto A = SqrtSpectrum::of(F, cos_potential(), g);

  // c_j do not depend on λ: tabulate them on grid × lattice, lazily, since χ^{(j)}
  // vanishes outside λ < |ξ| < λ + ελ^ρ
  std::vector<std::vector<cplx>> cj(3, std::vector<cplx>(N * N, cplx(NAN, 0.0)));
  auto c_at = [&](int j, const Point& x, const Point& xi) {
    const int p = static_cast<int>(std::lround(x[0] / (kTwoPi / N))) % N;
    const int k = (static_cast<int>(std::lround(xi[0])) + N) % N;
    cplx& v = cj[j][p * N + k];
    if (std::isnan(v.real())) v = C.c[j](x, xi);
    return v;
  };
  auto tabulated = [&](double lam, int J) -> SymbolFn {
    return [&, lam, J](const Point& x, const Point& xi) {
      const double s = std::abs(xi[0]);
      const auto d = CF.chi_derivatives(lam, s, J);
      cplx v = d[0];
      for (int j = 1; j <= J; ++j)
        if (d[j] != 0.0) v += c_at(j - 1, x, xi) * d[j];
      return v;
    };
  };
  // the tabulated form is the library expansion
  for (int J : {1, 3}) {
    auto E = chi_symbol_expansion(F, C, CF, 9.0, J);
    auto T = tabulated(9.0, J);
    for (int p : {3, 40})
      for (int k : {8, 9, 10, 11, 12})
        CHECK(std::abs(E(g.point(p), {double(k)}) - T(g.point(p), {double(k)})) < 1e-12);
  }

  double prev = 1.0;
  for (int J : {0, 1, 2}) {
    std::vector<double> ls, vs;
    for (double lam = 6.0; lam < N / 4.5; lam *= 1.25) {
      auto D = discretize(tabulated(lam, J), g);
      Eigen::MatrixXcd X = A.apply([&](double a) { return CF.chi(lam, a); });
      ls.push_back(lam);
      vs.push_back(Eigen::JacobiSVD<Eigen::MatrixXcd>(D.matrix - X).singularValues()[0]);
    }
    auto fit = fit_decay(ls, vs);
    CHECK(fit.slope <= -(J + 1) * 0.5 + 0.3);
    CHECK(vs.back() < prev);
    prev = vs.back();
  }
}

TEST_CASE("projection experiment") {
  const int N = 128;
  auto M1 = wavy_circle();
  auto M2 = wavy_circle({BumpTerm{{M_PI}, M_PI / 2, 0.4}});
  auto nu = Perturbation::constant(1, 1.0);
  FieldExpr ups(0.0, {}, {BumpTerm{{0.0}, 1.5, 1.0, 0.3}});
  const auto lams = lambda_grid(6.0, 24.0, 8);
  ProjectionOptions o;
  o.N = N;

  // identical operators and υ ≡ 1: the projections nest exactly
  auto same = projection_experiment(M1, M1, nu, nu, FieldExpr(1.0, {}), lams, o);
  CHECK(same.exact_zero);
  auto none = projection_experiment(M1, M2, nu, nu, FieldExpr(0.0, {}), lams, o);
  CHECK(none.exact_zero);

  auto r = projection_experiment(M1, M2, nu, Perturbation::constant(1, 2.0), ups, lams, o);
  CHECK_FALSE(r.exact_zero);
  CHECK(r.max_identity_error < 1e-8);
  for (const auto& p : r.points) CHECK(p.projector_defect < 1e-10);
  CHECK(r.band_ratio < 1.0);
  CHECK(r.points.back().norm < r.points.front().norm);

  // nesting: range Π(λ) ⊆ range Π(λ′)
  auto g = TorusGrid::make(1, N);
  auto A = SqrtSpectrum::of(M1, nu, g);
  auto pair = projector_pair(A, A, 10.0, 1.0, 0.5);
  CHECK((pair.proj_shifted * pair.proj - pair.proj).norm() < 1e-10);

  FieldExpr wide(0.0, {}, {BumpTerm{{0.0}, 2.5, 1.0}});
  CHECK_THROWS_AS(projection_experiment(M1, M2, nu, nu, wide, lams, o), Error);
  o.eps = 0.5;
  CHECK_THROWS_AS(projection_experiment(M1, M2, nu, nu, ups, lams, o), Error);
}
