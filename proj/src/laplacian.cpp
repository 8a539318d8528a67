#include "pdo/laplacian.hpp"

#include <algorithm>
#include <cmath>

#include "pdo/errors.hpp"

namespace pdo {

namespace {

const cplx I(0.0, 1.0);
constexpr double kOrderEps = 1e-9;

const Term* term_of_order(const Expansion& E, double order) {
  for (const auto& t : E.terms())
    if (std::abs(t.order - order) < kOrderEps) return &t;
  return nullptr;
}

Expansion norm_power(const MetricModel& MM, double p) {
  Expansion e(MM.dim(), 0.0, 0.5);
  const auto w = ScalarFunction::power(p);
  e.add(p, norm_function(MM.metric(), w), {Factor{constant_symbol(MM.dim(), 1.0), w}});
  return e;
}

// b^j = g^{κ−1} Σ_i [∂_i(g g^{ij} h) + g g^{ij} ∂_i h],  c = g^{κ−1} Σ_{ij} ∂_i(g g^{ij} ∂_j h),  h = g^{−κ}
struct LapCoeffs {
  std::vector<RJet> b;
  RJet c;
};

LapCoeffs lap_coeffs(const Metric& g, double kappa, const Point& x, int order) {
  const int n = g.dim();
  auto lo = JetLayout::dense(n, order), l1 = JetLayout::dense(n, order + 1);
  RJet G = g.density(x, order + 2);
  auto inv = g.inverse(x, order + 2);
  RJet h = pow(G, -kappa);
  RJet pre = pow(G, kappa - 1.0).restrict_to(lo);
  LapCoeffs r;
  r.c = RJet(lo);
  for (int j = 0; j < n; ++j) {
    RJet bj(lo);
    for (int i = 0; i < n; ++i) {
      RJet a = G * inv[i * n + j];
      bj += (a * h).diff(i).restrict_to(lo) + a.restrict_to(lo) * h.diff(i).restrict_to(lo);
      r.c += (a.restrict_to(l1) * h.diff(j).restrict_to(l1)).diff(i).restrict_to(lo);
    }
    r.b.push_back(pre * bj);
  }
  r.c = pre * r.c;
  return r;
}

bool same_field(const FieldExpr& a, const FieldExpr& b, const std::vector<Point>& xs, const std::vector<double>& period) {
  for (const auto& x : xs)
    if (std::abs(a.value(x, period) - b.value(x, period)) > 1e-12 * (1.0 + std::abs(a.value(x, period)))) return false;
  return true;
}

}  // namespace

// ---------------------------------------------------------------------------

MetricModel MetricModel::make(int dim, std::vector<double> period, std::vector<FieldExpr> metric_inverse) {
  MetricModel mm;
  mm.base = ManifoldModel::from_metric(dim, std::move(period), std::move(metric_inverse), 0.5);
  mm.norm = metric_norm(mm.base.metric);
  return mm;
}

double MetricModel::density(const Point& x) const { return metric()->density(x, 0).value(); }

double MetricModel::norm_parallel_defect(const std::vector<Point>& xs, const std::vector<Point>& xis) const {
  double m = 0.0;
  for (int i = 0; i < dim(); ++i) {
    Symbol d = horizontal_derivative(base, norm, i);
    for (const auto& x : xs)
      for (const auto& xi : xis) m = std::max(m, std::abs(d(x, xi)));
  }
  return m;
}

Expansion laplacian_symbol(const MetricModel& MM, double kappa, double tau) {
  const int n = MM.dim();
  auto g = MM.metric();
  Expansion E(n, 0.0, kappa);
  E.add(2.0, constant_symbol(n, -1.0) * metric_quadratic(g));
  std::vector<std::pair<cplx, Symbol>> first;
  for (int j = 0; j < n; ++j) {
    Symbol b = x_function_symbol(
        n, [g, kappa, j](const Point& x, int order) { return lap_coeffs(*g, kappa, x, order).b[j]; }, "b");
    first.emplace_back(I, b * xi_symbol(n, j));
  }
  E.add(1.0, linear_combination(first));
  E.add(0.0, x_function_symbol(
                 n, [g, kappa](const Point& x, int order) { return lap_coeffs(*g, kappa, x, order).c; }, "c"));
  if (tau == 0.0) return E;
  return change_tau(E, tau, ManifoldModel::flat(n, g->period()[0]), 2);
}

Expansion laplacian_global_symbol(const MetricModel& MM, double kappa) {
  const int n = MM.dim();
  const Symbol chart = laplacian_symbol(MM, kappa).sum();
  Expansion E(n, 0.0, kappa);
  E.add(2.0, constant_symbol(n, -1.0) * metric_quadratic(MM.metric()));
  E.add(1.0, differential_operator_symbol(chart, MM.base, kappa, 2, 1));
  E.add(0.0, differential_operator_symbol(chart, MM.base, kappa, 2, 0));
  return E;
}

// ---------------------------------------------------------------------------

Perturbation Perturbation::zero(int dim) { return Perturbation{Expansion(dim, 0.0, 0.5)}; }

Perturbation Perturbation::constant(int dim, double c) {
  Perturbation p = zero(dim);
  if (c != 0.0) p.chart.add(0.0, constant_symbol(dim, c));
  return p;
}

Perturbation Perturbation::from_weyl(int dim, const std::vector<double>& period, const std::vector<FieldExpr>& b,
                                     const FieldExpr& c) {
  if (static_cast<int>(b.size()) != dim) throw Error(ErrorKind::ConfigInvalid, "perturbation needs one b_j per axis");
  Expansion W(dim, 0.5, 0.5);
  std::vector<std::pair<cplx, Symbol>> parts;
  for (int j = 0; j < dim; ++j)
    if (!b[j].is_zero()) parts.emplace_back(1.0, field_symbol(dim, b[j], period) * xi_symbol(dim, j));
  if (!parts.empty()) W.add(1.0, linear_combination(parts));
  if (!c.is_zero()) W.add(0.0, field_symbol(dim, c, period));
  Perturbation p = zero(dim);
  if (W.empty()) return p;
  // the τ-change of a first-order polynomial stops after one term
  p.chart = change_tau(W, 0.0, ManifoldModel::flat(dim, period[0]), 1);
  return p;
}

DenseOperator shifted_laplacian_matrix(const MetricModel& MM, const Perturbation& nu, const TorusGrid& g) {
  const int n = MM.dim(), S = g.size();
  const auto& metric = *MM.metric();
  std::vector<Eigen::MatrixXcd> Xi;
  for (int i = 0; i < n; ++i)
    Xi.push_back(discretize([i](const Point&, const Point& xi) { return cplx(xi[i]); }, g, "D").matrix);
  Eigen::VectorXd ginv_half(S);
  std::vector<Eigen::VectorXd> a(n * n, Eigen::VectorXd(S));
  for (int p = 0; p < S; ++p) {
    const Point x = g.point(p);
    const double G = metric.density(x, 0).value();
    ginv_half[p] = 1.0 / std::sqrt(G);
    auto inv = metric.inverse(x, 0);
    for (int k = 0; k < n * n; ++k) a[k][p] = G * inv[k].value();
  }
  Eigen::MatrixXcd M = Eigen::MatrixXcd::Zero(S, S);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) M += Xi[i] * a[i * n + j].asDiagonal() * Xi[j];
  M = ginv_half.asDiagonal() * M * ginv_half.asDiagonal();
  if (!nu.is_zero()) {
    Eigen::MatrixXcd V = discretize(nu.chart, g).matrix;
    M += 0.5 * (V + V.adjoint());
  }
  return DenseOperator{g, 0.5 * (M + M.adjoint()), "-laplacian+nu"};
}

// ---------------------------------------------------------------------------

std::vector<Point> sample_points(int dim, const std::vector<double>& period, int per_axis) {
  std::vector<Point> xs;
  const int total = dim == 1 ? per_axis : per_axis * per_axis;
  for (int k = 0; k < total; ++k) {
    Point p(dim);
    int r = k;
    for (int a = 0; a < dim; ++a) {
      p[a] = period[a] * (r % per_axis + 0.37) / per_axis;
      r /= per_axis;
    }
    xs.push_back(p);
  }
  return xs;
}

std::vector<Point> sample_directions(int dim) {
  if (dim == 1) return {{1.0}, {-1.0}};
  const double s = std::sqrt(0.5);
  return {{1.0, 0.0}, {0.0, 1.0}, {-1.0, 0.0}, {s, s}, {s, -s}, {0.6, 0.8}};
}

namespace {

void check_positive(const MetricModel& MM, const Perturbation& nu, int N) {
  auto g = TorusGrid::make(MM.dim(), N, MM.base.period[0]);
  auto D = shifted_laplacian_matrix(MM, nu, g);
  auto S = eigen_decompose(D);
  // the kernel of −Δ (constants) is admitted: ν = 0 is a legitimate square root
  const double floor = -1e-9 * std::max(1.0, S.values.cwiseAbs().maxCoeff());
  if (!(S.values.minCoeff() > floor))
    throw Error(ErrorKind::PositivityViolation,
                "-laplacian + nu has eigenvalue " + std::to_string(S.values.minCoeff()) + " on the dense grid");
}

void check_weyl_real(const Perturbation& nu, const std::vector<double>& period) {
  if (nu.is_zero()) return;
  const int n = nu.chart.dim();
  auto W = change_tau(nu.chart, 0.5, ManifoldModel::flat(n, period[0]), 1);
  for (const auto& x : sample_points(n, period, 5))
    for (const auto& d : sample_directions(n)) {
      Point xi = d;
      for (auto& v : xi) v *= 3.0;
      const cplx w = W(x, xi);
      if (std::abs(w.imag()) > 1e-10 * (1.0 + std::abs(w)))
        throw Error(ErrorKind::HypothesisViolation, "nu is not self-adjoint (complex Weyl symbol)");
    }
}

}  // namespace

SqrtSymbol sqrt_symbol(const MetricModel& MM, const Perturbation& nu, int K, SqrtOptions opts) {
  const int n = MM.dim();
  if (K < 0) throw Error(ErrorKind::ConfigInvalid, "sqrt depth must be non-negative");
  if (!nu.is_zero() && nu.chart.leading_order() > 1.0 + kOrderEps)
    throw Error(ErrorKind::ClassViolation, "nu must be of order at most one");
  check_weyl_real(nu, MM.base.period);
  check_positive(MM, nu, opts.positivity_grid);

  SqrtSymbol S;
  S.mm = MM;
  S.nu = nu;
  S.depth = K;
  // the residual check composes at depth K + 1
  // 1-D tables are cheap; in higher dimension the entry count grows quickly
  const int p_order = opts.p_order >= 0 ? opts.p_order : std::min(n == 1 ? 12 : 6, (3 * (K + 1) + 1) / 2);
  S.P = p_table(MM.base, 0.5, sample_points(n, MM.base.period, 2), std::max(p_order, 1));

  // σ_{−Δ+ν} in the Levi-Civita calculus
  Expansion L(n, 0.0, 0.5);
  const auto lap = laplacian_global_symbol(MM, 0.5);
  for (const auto& t : lap.terms()) L.add(t.order, constant_symbol(n, -1.0) * t.symbol);
  if (!nu.is_zero()) {
    const Symbol chart = nu.chart.sum();
    L.add(1.0, differential_operator_symbol(chart, MM.base, 0.5, 1, 1));
    L.add(0.0, differential_operator_symbol(chart, MM.base, 0.5, 1, 0));
  }
  S.operator_symbol = L;

  Expansion A(n, 0.0, 0.5, 1.0, 0.0);
  A.add(1.0, MM.norm);
  const Symbol half_inv = constant_symbol(n, 0.5) * norm_function(MM.metric(), ScalarFunction::power(-1.0));
  for (int k = 1; k <= K; ++k) {
    const double o = 2.0 - k;
    Expansion C = compose_global(A, A, MM.base, S.P, k);
    const Term* lt = term_of_order(L, o);
    const Term* ct = term_of_order(C, o);
    if (!lt && !ct) continue;
    Symbol d = lt ? (ct ? lt->symbol - ct->symbol : lt->symbol) : constant_symbol(n, -1.0) * ct->symbol;
    A.add(1.0 - k, d * half_inv);
  }
  A.set_remainder(-static_cast<double>(K));
  S.expansion = A;

  if (opts.verify && K >= 1) {
    auto r = sqrt_residual(S);
    if (!r.exact && r.fit.slope > 2.0 - (K + 1) + 0.3)
      throw Error(ErrorKind::DefectNotDecaying, "square-root residual slope " + std::to_string(r.fit.slope));
  }
  return S;
}

ResidualFit sqrt_residual(const SqrtSymbol& S, double xi_min, double xi_max, int count) {
  const int n = S.mm.dim();
  Expansion C = compose_global(S.expansion, S.expansion, S.mm.base, S.P, S.depth + 1);
  auto xs = sample_points(n, S.mm.base.period, 3);
  auto dirs = sample_directions(n);
  ResidualFit r;
  std::vector<double> ls, vs;
  bool exact = true;
  for (int k = 0; k < count; ++k) {
    const double s = xi_min * std::pow(xi_max / xi_min, k / (count - 1.0));
    double m = 0.0;
    for (const auto& x : xs)
      for (const auto& d : dirs) {
        Point xi = d;
        for (auto& v : xi) v *= s;
        m = std::max(m, std::abs(C(x, xi) - S.operator_symbol(x, xi)));
      }
    if (m > 1e-12 * s * s) exact = false;
    ls.push_back(s);
    vs.push_back(m);
  }
  r.exact = exact;
  if (!exact) r.fit = fit_decay(ls, vs);
  return r;
}

CCoefficients c_coefficients(const SqrtSymbol& S, int J) {
  if (J > S.depth) throw Error(ErrorKind::HypothesisViolation, "square root depth below J");
  const auto& MM = S.mm;
  const int n = MM.dim(), K = S.depth;
  CCoefficients C;
  C.metric = MM.metric();
  C.depth = K;
  C.powers.push_back(S.expansion);
  for (int k = 2; k <= J; ++k) C.powers.push_back(compose_global(S.expansion, C.powers.back(), MM.base, S.P, K));

  auto xs = sample_points(n, MM.base.period, 3);
  std::vector<Point> xis;
  for (const auto& d : sample_directions(n))
    for (double s : {3.0, 30.0}) {
      Point xi = d;
      for (auto& v : xi) v *= s;
      xis.push_back(xi);
    }
  for (int k = 1; k <= J; ++k) {
    Expansion R = series_sub(C.powers[k - 1], norm_power(MM, k));
    for (int j = 1; j < k; ++j)
      R = series_sub(R, series_mul(norm_power(MM, k - j), C.c[j - 1]).scaled(factorial(k) / factorial(k - j)));
    R = R.scaled(1.0 / factorial(k));
    Expansion c(n, 0.0, 0.5, 1.0, 0.0);
    for (const auto& t : R.terms()) {
      if (t.order > kOrderEps) {
        // cancelled exactly in theory; verify on samples
        for (const auto& x : xs)
          for (const auto& xi : xis) {
            double nx = 0.0;
            for (double v : xi) nx += v * v;
            if (std::abs(t.symbol(x, xi)) > 1e-8 * std::pow(std::sqrt(nx), t.order))
              throw Error(ErrorKind::DefectNotDecaying, "c_" + std::to_string(k) + " has a term of positive order");
          }
        continue;
      }
      if (t.order < k - K - kOrderEps) continue;
      c.add(t.order, t.symbol, t.factors);
    }
    c.set_remainder(k - K - 1.0);
    C.c.push_back(c);
  }
  return C;
}

Expansion omega_symbol(const MetricModel& MM, const CCoefficients& C, const ScalarFunction& omega, int J) {
  if (J > static_cast<int>(C.c.size())) throw Error(ErrorKind::HypothesisViolation, "not enough c_j coefficients");
  if (scalar_seminorm_report(omega, 10.0, 1e4, 16, 4).any_violation())
    throw Error(ErrorKind::ClassViolation, omega.name() + " fails its declared class estimates");
  return function_expansion(MM, C, omega, J);
}

Expansion function_expansion(const MetricModel& MM, const CCoefficients& C, const ScalarFunction& omega, int J) {
  if (J > static_cast<int>(C.c.size())) throw Error(ErrorKind::HypothesisViolation, "not enough c_j coefficients");
  const int n = MM.dim();
  const double m = omega.order(), rho = omega.rho();
  Expansion E(n, 0.0, 0.5, rho, 0.0);
  E.add(m, norm_function(MM.metric(), omega), {Factor{constant_symbol(n, 1.0), omega}});
  double rem = m - (J + 1) * rho;
  for (int j = 1; j <= J; ++j) {
    const auto wj = omega.derivative(j);
    for (const auto& t : C.c[j - 1].terms()) {
      // hints carry order-0 coefficients: c·ω^{(j)} = (c|ξ|^{−o})·(s^o ω^{(j)})
      Factor f{t.symbol, wj};
      if (t.order != 0.0)
        f = Factor{t.symbol * norm_function(MM.metric(), ScalarFunction::power(-t.order)),
                   ScalarFunction::product(wj, ScalarFunction::power(t.order))};
      E.add(t.order + m - j * rho, t.symbol * norm_function(MM.metric(), wj), {f});
    }
    rem = std::max(rem, C.c[j - 1].remainder_order() + m - j * rho);
  }
  E.set_remainder(rem);
  return E;
}

// ---------------------------------------------------------------------------

namespace {

double max_norm_ratio(const Symbol& s, double order, const std::vector<Point>& xs, const std::vector<Point>& xis) {
  double m = 0.0;
  for (const auto& x : xs)
    for (const auto& xi : xis) {
      double nx = 0.0;
      for (double v : xi) nx += v * v;
      m = std::max(m, std::abs(s(x, xi)) / std::pow(std::sqrt(nx), order));
    }
  return m;
}

}  // namespace

Decomposition decompose(const Expansion& E, const SqrtSymbol& S, const CCoefficients& C, int depth) {
  const auto& MM = S.mm;
  const int n = MM.dim();
  const double rho = E.rho();
  auto xs = sample_points(n, MM.base.period, 3);
  std::vector<Point> xis;
  for (const auto& d : sample_directions(n))
    for (double s : {5.0, 50.0, 500.0}) {
      Point xi = d;
      for (auto& v : xi) v *= s;
      xis.push_back(xi);
    }
  double scale = 0.0;
  for (const auto& t : E.terms()) scale = std::max(scale, max_norm_ratio(t.symbol, t.order, xs, xis));

  Decomposition D;
  Expansion R = E.pruned(xs, xis, 1e-9, scale);
  const int J = static_cast<int>(C.c.size());
  for (int step = 0; step < depth && !R.empty(); ++step) {
    const Term lead = R.terms().front();
    const double l = lead.order;
    const double next = R.terms().size() > 1 ? R.terms()[1].order : -1e300;
    std::vector<Factor> factors = lead.factors;
    if (factors.empty()) {
      const auto w = ScalarFunction::power(l);
      factors.push_back({lead.symbol * norm_function(MM.metric(), ScalarFunction::power(-l)), w});
    }
    Expansion sub(n, 0.0, 0.5, rho, 0.0);
    for (const auto& f : factors) {
      PeelStep p;
      p.C = Expansion(n, 0.0, 0.5, 1.0, 0.0);
      p.C.add(0.0, f.coeff);
      p.omega = f.omega;
      p.order = l;
      Expansion W = omega_symbol(MM, C, f.omega, J);
      sub = series_add(sub, compose_global(p.C, W, MM.base, S.P, depth + 1));
      D.steps.push_back(std::move(p));
    }
    R = series_sub(R, sub).pruned(xs, xis, 1e-9, scale);
    const double nl = R.empty() ? -1e300 : R.leading_order();
    const double drop = std::min(l - next, rho);
    if (nl > l - drop + kOrderEps) {
      const Term* t = term_of_order(R, nl);
      throw Error(ErrorKind::ResidualNotDropping, "peel step " + std::to_string(step) + " left order " +
                                                      std::to_string(nl) + " (size " +
                                                      std::to_string(max_norm_ratio(t->symbol, nl, xs, xis)) + ")");
    }
    D.leading_orders.push_back(nl);
  }
  D.residual = R;
  D.residual_order = R.empty() ? R.remainder_order() : R.leading_order();
  return D;
}

Expansion reconstruct(const Decomposition& D, const SqrtSymbol& S, const CCoefficients& C, int K) {
  const int n = S.mm.dim();
  Expansion out(n, 0.0, 0.5, 1.0, 0.0);
  bool first = true;
  for (const auto& p : D.steps) {
    auto W = omega_symbol(S.mm, C, p.omega, static_cast<int>(C.c.size()));
    auto T = compose_global(p.C, W, S.mm.base, S.P, K);
    out = first ? T : series_add(out, T);
    first = false;
  }
  return out;
}

// ---------------------------------------------------------------------------

void require_agreement_on_support(const MetricModel& M1, const MetricModel& M2, const Perturbation* nu1,
                                  const Perturbation* nu2, const FieldExpr& upsilon, int samples) {
  const auto& period = M1.base.period;
  std::vector<Point> supp;
  for (int k = 0; k < samples; ++k) {
    Point x{period[0] * k / samples};
    if (upsilon.value(x, period) != 0.0) supp.push_back(x);
  }
  for (std::size_t k = 0; k < M1.metric()->inverse_fields().size(); ++k)
    if (!same_field(M1.metric()->inverse_fields()[k], M2.metric()->inverse_fields()[k], supp, period))
      throw Error(ErrorKind::SupportViolation, "metrics differ on the support of the cut-off");
  if (!nu1 || !nu2) return;
  for (const auto& x : supp)
    for (double s : {-7.0, 3.0}) {
      const cplx a = nu1->is_zero() ? cplx{} : nu1->chart(x, {s});
      const cplx b = nu2->is_zero() ? cplx{} : nu2->chart(x, {s});
      if (std::abs(a - b) > 1e-12 * (1.0 + std::abs(a)))
        throw Error(ErrorKind::SupportViolation, "perturbations differ on the support of the cut-off");
    }
}

PseudolocalityReport pseudolocality_check(const MetricModel& M1, const MetricModel& M2, const Perturbation& nu1,
                                          const Perturbation& nu2, const FieldExpr& upsilon, const ScalarFunction& omega,
                                          const std::vector<double>& lambdas, int N) {
  if (M1.dim() != 1 || M2.dim() != 1) throw Error(ErrorKind::ConfigInvalid, "pseudolocality runs on circles");
  const auto& period = M1.base.period;
  auto g = TorusGrid::make(1, N, period[0]);
  require_agreement_on_support(M1, M2, &nu1, &nu2, upsilon, 8 * N);

  auto f = [&omega](double e) { return cplx(omega(std::sqrt(std::max(e, 0.0)))); };
  auto E1 = eigen_decompose(shifted_laplacian_matrix(M1, nu1, g));
  auto E2 = eigen_decompose(shifted_laplacian_matrix(M2, nu2, g));
  Eigen::VectorXd u(N);
  for (int j = 0; j < N; ++j) u[j] = upsilon.value(g.point(j), period);
  Eigen::MatrixXcd Dm = u.asDiagonal() * (functional_calculus(E1, f) - functional_calculus(E2, f));

  PseudolocalityReport rep;
  rep.exact_zero = Dm.cwiseAbs().maxCoeff() == 0.0;
  std::vector<double> ls, vs;
  for (double lam : lambdas) {
    std::vector<int> ks;
    for (int k = 0; k < N; ++k) {
      const double fr = std::abs(g.frequency(k));
      if (fr >= lam && fr < 2 * lam) ks.push_back(k);
    }
    double norm = 0.0;
    if (!ks.empty()) {
      Eigen::MatrixXcd B(N, ks.size());
      for (std::size_t c = 0; c < ks.size(); ++c)
        for (int j = 0; j < N; ++j) B(j, c) = std::exp(I * g.frequency(ks[c]) * g.point(j)[0]) / std::sqrt(double(N));
      Eigen::JacobiSVD<Eigen::MatrixXcd> svd(Dm * B);
      norm = svd.singularValues().size() ? svd.singularValues()[0] : 0.0;
    }
    rep.lambdas.push_back(lam);
    rep.norms.push_back(norm);
    if (norm > 1e-13) {
      ls.push_back(lam);
      vs.push_back(norm);
    }
  }
  if (ls.size() >= 4) rep.fit = fit_decay(ls, vs);
  return rep;
}

}  // namespace pdo
