#include "pdo/calculus.hpp"

#include <boost/math/quadrature/gauss.hpp>
#include <cmath>
#include <iomanip>
#include <mutex>
#include <numbers>

#include "pdo/errors.hpp"

namespace pdo {

namespace {

constexpr double kOrderEps = 1e-9;
const cplx I(0.0, 1.0);

cplx ipow(cplx base, int k) {
  cplx r = 1.0;
  for (int i = 0; i < k; ++i) r *= base;
  return r;
}

double rpow(double b, int k) { return k == 0 ? 1.0 : std::pow(b, k); }

double multi_binom(const MultiIndex& b, const MultiIndex& d) {
  double r = 1.0;
  for (std::size_t i = 0; i < b.size(); ++i) r *= factorial(b[i]) / (factorial(d[i]) * factorial(b[i] - d[i]));
  return r;
}

MultiIndex add(const MultiIndex& a, const MultiIndex& b) {
  MultiIndex r(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) r[i] = a[i] + b[i];
  return r;
}

void check_class(double rho, double delta) {
  if (!(delta < rho)) throw Error(ErrorKind::ClassViolation, "calculus requires delta < rho");
}

/// D_ξ^β a = (−i)^{|β|} ∂_ξ^β a.
Symbol D_xi(const Symbol& a, const MultiIndex& beta) { return ipow(-I, degree(beta)) * d_xi(a, beta); }

}  // namespace

// ---------------------------------------------------------------------------
// τ-symbols.

Amplitude separable_amplitude(const Symbol& u, const Symbol& v, const Symbol& w) {
  const int n = w.dim();
  Amplitude a;
  a.dim = n;
  a.cls = {u.cls().m + v.cls().m + w.cls().m, w.cls().rho, w.cls().delta};
  a.name = "u(x)v(y)w";
  a.jet = [u, v, w, n](const Point& x, const Point& y, const Point& xi, int order) {
    auto l = JetLayout::dense(3 * n, order);
    std::vector<int> mx(2 * n), my(2 * n);
    for (int i = 0; i < n; ++i) {
      mx[i] = i;
      mx[n + i] = 2 * n + i;
      my[i] = n + i;
      my[n + i] = 2 * n + i;
    }
    return u.jet(x, xi, order).embed(l, mx) * v.jet(y, xi, order).embed(l, my) * w.jet(x, xi, order).embed(l, mx);
  };
  return a;
}

Expansion tau_from_amplitude_flat(const Amplitude& a, double tau, int K) {
  check_class(a.cls.rho, a.cls.delta);
  const int n = a.dim;
  const double gap = a.cls.rho - a.cls.delta;
  Expansion E(n, tau, 0.5, a.cls.rho, a.cls.delta);
  for (const auto& al : multi_indices_up_to(n, K))
    for (const auto& be : multi_indices_up_to(n, K - degree(al))) {
      const int p = degree(al), q = degree(be);
      // Taylor expansion at z_τ: x − z = −τ(y − x), y − z = (1 − τ)(y − x)
      const cplx c = ipow(I, p) * ipow(-I, q) * rpow(tau, p) * rpow(1.0 - tau, q) /
                     (multi_factorial(al) * multi_factorial(be));
      if (c == cplx{}) continue;
      MultiIndex e;
      e.insert(e.end(), al.begin(), al.end());
      e.insert(e.end(), be.begin(), be.end());
      auto ab = add(al, be);
      e.insert(e.end(), ab.begin(), ab.end());
      auto jet = a.jet;
      Symbol s = custom_symbol(
          n,
          [jet, e, c, n](const Point& x, const Point& xi, int order) {
            CJet j = jet(x, x, xi, order + degree(e)).diff(e);
            std::vector<int> diag(3 * n);
            for (int i = 0; i < n; ++i) {
              diag[i] = i;
              diag[n + i] = i;
              diag[2 * n + i] = n + i;
            }
            return j.embed(JetLayout::dense(2 * n, order), diag) * c;
          },
          a.name + "_tau", {a.cls.m - gap * (p + q), a.cls.rho, a.cls.delta});
      E.add(a.cls.m - gap * (p + q), s);
    }
  E.set_remainder(a.cls.m - (K + 1) * gap);
  return E;
}

namespace {

// Σ_α c^{|α|}/α! ∂_ξ^α ∇^α f(σ) applied term by term, truncated at K(ρ−δ) below the lead.
Expansion horizontal_series(const Expansion& E, cplx c, const ManifoldModel& M, int K, bool conjugate) {
  check_class(E.rho(), E.delta());
  const double gap = E.rho() - E.delta();
  const double lead = E.leading_order();
  const double T = lead - K * gap;
  Expansion R(E.dim(), E.tau(), E.kappa(), E.rho(), E.delta());
  double rem = std::max(E.remainder_order(), lead - (K + 1) * gap);
  for (const auto& t : E.terms()) {
    Symbol base = conjugate ? conj(t.symbol) : t.symbol;
    for (const auto& al : multi_indices_up_to(E.dim(), K)) {
      const double order = t.order - gap * degree(al);
      if (order < T - kOrderEps) {
        rem = std::max(rem, order);
        continue;
      }
      const cplx coef = ipow(c, degree(al)) / multi_factorial(al);
      if (coef == cplx{}) continue;
      if (degree(al) == 0) {
        std::vector<Factor> f;
        for (const auto& g : t.factors) f.push_back({conjugate ? conj(g.coeff) : g.coeff, g.omega});
        R.add(order, base, std::move(f));
        continue;
      }
      R.add(order, coef * d_xi(horizontal_derivative_multi(M, base, al), al));
    }
  }
  R.set_remainder(rem);
  return R;
}

}  // namespace

Expansion change_tau(const Expansion& E, double s, const ManifoldModel& M, int K) {
  if (s == E.tau()) return E;
  Expansion R = horizontal_series(E, -I * (E.tau() - s), M, K, false);
  R.set_tau(s);
  return R;
}

Expansion adjoint_symbol(const Expansion& E, const ManifoldModel& M, int K) {
  Expansion R = horizontal_series(E, -I * (1.0 - 2.0 * E.tau()), M, K, true);
  Expansion out(R.dim(), R.tau(), 1.0 - E.kappa(), R.rho(), R.delta());
  for (const auto& t : R.terms()) out.add(t.order, t.symbol, t.factors);
  out.set_remainder(R.remainder_order());
  return out;
}

namespace {

class DifferentialNode final : public SymbolNode {
 public:
  DifferentialNode(Symbol chart, ManifoldModel M, double kappa, int degree, int keep)
      : SymbolNode(chart.dim()), chart_(std::move(chart)), M_(std::move(M)), kappa_(kappa), d_(degree), keep_(keep) {}
  int xi_degree() const override { return keep_ >= 0 ? keep_ : d_; }
  std::string describe() const override { return "gamma-symbol(" + chart_.describe() + ")"; }

 protected:
  CJet compute(const Point& x, const Point& xi, int order) const override {
    const int n = dim(), d = d_;
    auto probe = symbol_probe(M_, x, kappa_, d, order);
    auto L3 = JetLayout::make({n, n, n}, {order, d, d});
    std::vector<int> id2(2 * n);
    for (int i = 0; i < 2 * n; ++i) id2[i] = i;
    CJet phase(L3);
    for (int j = 0; j < n; ++j) phase += complexify(probe.w[j]).embed(L3, id2) * CJet::variable(L3, 2 * n + j, 0.0);
    CJet f = exp(phase * I) * complexify(probe.weight).embed(L3, id2);

    // chart coefficients ã_α(x + hx) = ∂_ξ^α σ_c(x + hx, 0)/α!
    CJet c = chart_.jet(x, Point(n, 0.0), order + d);
    auto L4 = JetLayout::make({n, n}, {order, d});
    auto alphas = multi_indices_up_to(n, d);
    std::vector<CJet> a(alphas.size(), CJet(L4)), fa(alphas.size(), CJet(L4));
    auto index_of = [&](const MultiIndex& al) { return std::find(alphas.begin(), alphas.end(), al) - alphas.begin(); };
    MultiIndex eh(n), ea(n), e4(2 * n);
    for (std::size_t k = 0; k < c.size(); ++k) {
      const auto& e = c.layout()->exponent(k);
      for (int i = 0; i < n; ++i) {
        eh[i] = e[i];
        ea[i] = e[n + i];
      }
      if (degree(eh) > order || degree(ea) > d) continue;
      for (int i = 0; i < n; ++i) {
        e4[i] = eh[i];
        e4[n + i] = 0;
      }
      a[index_of(ea)][*L4->find(e4)] += c[k];
    }
    for (std::size_t k = 0; k < f.size(); ++k) {
      const auto& e = L3->exponent(k);
      for (int i = 0; i < n; ++i) {
        ea[i] = e[n + i];
        e4[i] = e[i];
        e4[n + i] = e[2 * n + i];
      }
      fa[index_of(ea)][*L4->find(e4)] += f[k];
    }
    // Σ_α a_α ∂^α with a_α = ã_α (−i)^{|α|}; ∂^α f(0) = α!·[Y^α]f
    CJet R(L4);
    for (std::size_t k = 0; k < alphas.size(); ++k)
      if (a[k].max_abs() > 0.0) R += a[k] * fa[k] * (ipow(-I, degree(alphas[k])) * multi_factorial(alphas[k]));

    auto l = layout(order);
    CJet out(l);
    MultiIndex mu(n);
    for (std::size_t k = 0; k < R.size(); ++k) {
      if (R[k] == cplx{}) continue;
      const auto& e = L4->exponent(k);
      for (int i = 0; i < n; ++i) mu[i] = e[n + i];
      if (keep_ >= 0 && degree(mu) != keep_) continue;
      CJet term = CJet::constant(l, R[k]);
      for (int i = 0; i < n; ++i)
        for (int r = 0; r < e[i]; ++r) term = term * CJet::variable(l, i, 0.0);
      for (int j = 0; j < n; ++j)
        for (int r = 0; r < mu[j]; ++r) term = term * CJet::variable(l, n + j, xi[j]);
      out += term;
    }
    return out;
  }

 private:
  Symbol chart_;
  ManifoldModel M_;
  double kappa_;
  int d_, keep_;
};

}  // namespace

Symbol differential_operator_symbol(const Symbol& chart, const ManifoldModel& M, double kappa, int degree, int keep) {
  const double m = keep >= 0 ? keep : degree;
  return Symbol(std::make_shared<DifferentialNode>(chart, M, kappa, degree, keep), {m, 1.0, 0.0});
}

// ---------------------------------------------------------------------------
// P table.

class PEvaluator {
 public:
  using Key = std::pair<MultiIndex, MultiIndex>;

  PEvaluator(ManifoldModel M, double kappa, std::vector<Key> keys) : M_(std::move(M)), kappa_(kappa), keys_(std::move(keys)) {
    L_ = 0;
    for (const auto& [b, g] : keys_) L_ = std::max(L_, 2 * degree(b) + degree(g));
    xi_cap_ = L_ / 2;
    monomials_ = multi_indices_up_to(M_.dim, xi_cap_);
  }

  const std::vector<Key>& keys() const { return keys_; }
  const std::vector<MultiIndex>& monomials() const { return monomials_; }
  int key_index(const Key& k) const {
    for (std::size_t i = 0; i < keys_.size(); ++i)
      if (keys_[i] == k) return static_cast<int>(i);
    return -1;
  }

  /// coeffs[key][monomial] as jets in hx (dense(n, x_order)).
  std::vector<std::vector<CJet>> evaluate(const Point& x, int x_order) const {
    {
      std::lock_guard<std::mutex> lock(mu_);
      if (cached_ && cx_ == x && corder_ >= x_order) {
        if (corder_ == x_order) return cvals_;
        auto l = JetLayout::dense(M_.dim, x_order);
        auto r = cvals_;
        for (auto& row : r)
          for (auto& j : row) j = j.restrict_to(l);
        return r;
      }
    }
    auto vals = compute(x, x_order);
    std::lock_guard<std::mutex> lock(mu_);
    cached_ = true;
    cx_ = x;
    corder_ = x_order;
    cvals_ = vals;
    return vals;
  }

 private:
  std::vector<std::vector<CJet>> compute(const Point& x, int q) const {
    const int n = M_.dim;
    auto dj = diagonal_jets(M_, x, L_, kappa_, q);
    auto FL = JetLayout::make({n, 2 * n, n}, {q, L_, xi_cap_});
    std::vector<int> id(3 * n);
    for (int i = 0; i < 3 * n; ++i) id[i] = i;
    CJet psi(FL);
    for (int j = 0; j < n; ++j) psi += complexify(dj.psi[j]).embed(FL, id) * CJet::variable(FL, 3 * n + j, 0.0);
    CJet F = exp(psi * I) * complexify(dj.upsilon).embed(FL, id);

    auto hl = JetLayout::dense(n, q);
    std::vector<std::vector<CJet>> out(keys_.size(), std::vector<CJet>(monomials_.size(), CJet(hl)));
    std::vector<int> mono_index;
    MultiIndex eh(n), eu(n), ew(n), ex(n), delta(n), bp(n), mu(n);
    for (std::size_t c = 0; c < FL->size(); ++c) {
      if (F[c] == cplx{}) continue;
      const auto& e = FL->exponent(c);
      for (int i = 0; i < n; ++i) {
        eh[i] = e[i];
        eu[i] = e[n + i];
        ew[i] = e[2 * n + i];
        ex[i] = e[3 * n + i];
      }
      const auto hidx = hl->find(eh);
      if (!hidx) continue;
      for (std::size_t k = 0; k < keys_.size(); ++k) {
        const auto& [beta, gamma] = keys_[k];
        bool ok = true;
        for (int i = 0; i < n && ok; ++i) {
          delta[i] = beta[i] - ew[i];
          bp[i] = eu[i] - delta[i] - gamma[i];
          ok = delta[i] >= 0 && bp[i] >= 0 && ex[i] >= bp[i];
        }
        if (!ok || degree(bp) > degree(beta)) continue;
        double w = multi_binom(beta, delta) / multi_factorial(bp) * multi_factorial(eu) * multi_factorial(ew);
        for (int i = 0; i < n; ++i) {
          w *= factorial(ex[i]) / factorial(ex[i] - bp[i]);
          mu[i] = ex[i] - bp[i];
        }
        const auto m = std::find(monomials_.begin(), monomials_.end(), mu) - monomials_.begin();
        out[k][m][*hidx] += F[c] * ipow(-I, degree(bp)) * w;
      }
    }
    return out;
  }

  ManifoldModel M_;
  double kappa_;
  std::vector<Key> keys_;
  int L_ = 0, xi_cap_ = 0;
  std::vector<MultiIndex> monomials_;
  mutable std::mutex mu_;
  mutable bool cached_ = false;
  mutable Point cx_;
  mutable int corder_ = -1;
  mutable std::vector<std::vector<CJet>> cvals_;
};

const PEntry* PTable::find(const MultiIndex& beta, const MultiIndex& gamma) const {
  auto it = entries.find({beta, gamma});
  return it == entries.end() ? nullptr : &it->second;
}

void PTable::write_csv(std::ostream& os) const {
  os << "beta,gamma,degree,bound,point,monomial,re,im\n";
  os << std::setprecision(17);
  auto mi = [](const MultiIndex& m) {
    std::string s;
    for (std::size_t i = 0; i < m.size(); ++i) s += (i ? " " : "") + std::to_string(m[i]);
    return s;
  };
  for (const auto& [key, e] : entries)
    for (std::size_t p = 0; p < e.samples.size(); ++p)
      for (std::size_t k = 0; k < e.monomials.size(); ++k)
        os << mi(e.beta) << ',' << mi(e.gamma) << ',' << e.degree << ',' << e.bound << ',' << p << ','
           << mi(e.monomials[k]) << ',' << e.samples[p][k].real() << ',' << e.samples[p][k].imag() << '\n';
}

bool connection_is_symmetric(const ManifoldModel& M, const std::vector<Point>& samples) {
  if (dynamic_cast<const LeviCivitaConnection*>(M.connection.get())) return true;
  auto f = dynamic_cast<const FieldConnection*>(M.connection.get());
  if (f)
    for (const auto& c : f->components())
      if (!c.bumps().empty()) f = nullptr;  // compared on samples below
  if (f) {
    // compare the component definitions directly
    const int n = M.dim;
    auto same = [](const FieldExpr& a, const FieldExpr& b) {
      if (a.constant_part() != b.constant_part() || a.terms().size() != b.terms().size() ||
          a.exponentiated() != b.exponentiated())
        return false;
      for (std::size_t i = 0; i < a.terms().size(); ++i) {
        const auto &s = a.terms()[i], &t = b.terms()[i];
        if (s.k != t.k || s.cos_coef != t.cos_coef || s.sin_coef != t.sin_coef) return false;
      }
      return true;
    };
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        for (int k = j + 1; k < n; ++k)
          if (!same(f->components()[(i * n + j) * n + k], f->components()[(i * n + k) * n + j])) return false;
    return true;
  }
  for (const auto& x : samples)
    for (double t : torsion(M, x))
      if (std::abs(t) > 1e-12) return false;
  return true;
}

namespace {

std::string mi_string(const MultiIndex& m) {
  std::string s = "(";
  for (std::size_t i = 0; i < m.size(); ++i) s += (i ? "," : "") + std::to_string(m[i]);
  return s + ")";
}

int degree_bound(const MultiIndex& b, const MultiIndex& g, bool symmetric) {
  const int p = degree(b), q = degree(g);
  if (p == 0 && q == 0) return 0;
  if (p == 0 || q == 0) return -1;
  int d = std::min(p, q);
  if (symmetric) d = std::min(d, (p + q) / 3);
  return d;
}

int degree_bound_nonneg(int p, int q, bool symmetric) {
  int d = std::min(p, q);
  if (symmetric) d = std::min(d, (p + q) / 3);
  return d;
}

class PNode final : public SymbolNode {
 public:
  PNode(int dim, std::shared_ptr<PEvaluator> ev, int key) : SymbolNode(dim), ev_(std::move(ev)), key_(key) {}
  int xi_degree() const override { return static_cast<int>(ev_->monomials().empty() ? 0 : degree(ev_->monomials().back())); }
  std::string describe() const override { return "P" + std::to_string(key_); }

 protected:
  CJet compute(const Point& x, const Point& xi, int order) const override {
    const int n = dim();
    auto vals = ev_->evaluate(x, order);
    auto l = layout(order);
    std::vector<int> id(n);
    for (int i = 0; i < n; ++i) id[i] = i;
    CJet acc(l);
    const auto& monos = ev_->monomials();
    for (std::size_t m = 0; m < monos.size(); ++m) {
      const CJet& c = vals[key_][m];
      if (c.max_abs() == 0.0) continue;
      CJet term = c.embed(l, id);
      for (int j = 0; j < n; ++j)
        for (int k = 0; k < monos[m][j]; ++k) term = term * CJet::variable(l, n + j, xi[j]);
      acc += term;
    }
    return acc;
  }

 private:
  std::shared_ptr<PEvaluator> ev_;
  int key_;
};

}  // namespace

PTable p_table(const ManifoldModel& M, double kappa, const std::vector<Point>& grid, int max_order) {
  const int n = M.dim;
  PTable T;
  T.kappa = kappa;
  T.max_order = max_order;
  T.grid = grid;
  T.flat = M.connection->is_flat_chart();
  T.symmetric = connection_is_symmetric(M, grid);
  std::vector<PEvaluator::Key> keys;
  for (const auto& b : multi_indices_up_to(n, max_order))
    for (const auto& g : multi_indices_up_to(n, max_order - degree(b)))
      if (degree(b) + degree(g) >= 1) keys.emplace_back(b, g);

  PEntry one;
  one.beta = one.gamma = MultiIndex(n, 0);
  one.degree = 0;
  one.bound = 0;
  one.monomials = {MultiIndex(n, 0)};
  one.samples.assign(grid.size(), {cplx(1.0)});
  one.symbol = constant_symbol(n, 1.0);
  T.entries[{one.beta, one.gamma}] = one;

  if (T.flat || keys.empty()) {
    for (const auto& [b, g] : keys) {
      PEntry e;
      e.beta = b;
      e.gamma = g;
      e.bound = degree_bound(b, g, T.symmetric);
      e.symbol = zero_symbol(n);
      e.monomials = {MultiIndex(n, 0)};
      e.samples.assign(grid.size(), {cplx{}});
      T.entries[{b, g}] = e;
    }
    return T;
  }
  T.evaluator = std::make_shared<PEvaluator>(M, kappa, keys);
  std::vector<std::vector<std::vector<cplx>>> samples(keys.size());  // [key][point][monomial]
  double scale = 1.0;
  for (const auto& x : grid) {
    auto vals = T.evaluator->evaluate(x, 0);
    for (std::size_t k = 0; k < keys.size(); ++k) {
      std::vector<cplx> row;
      for (const auto& c : vals[k]) {
        row.push_back(c.value());
        scale = std::max(scale, std::abs(c.value()));
      }
      samples[k].push_back(row);
    }
  }
  const double thr = 1e-8 * scale;
  const auto& monos = T.evaluator->monomials();
  for (std::size_t k = 0; k < keys.size(); ++k) {
    PEntry e;
    e.beta = keys[k].first;
    e.gamma = keys[k].second;
    e.bound = degree_bound(e.beta, e.gamma, T.symmetric);
    e.monomials = monos;
    e.samples = samples[k];
    // entries are (|β|+|γ|)-th derivatives: magnitudes and round-off both scale like (|β|+|γ|)!
    const double tk = thr * std::tgamma(degree(e.beta) + degree(e.gamma) + 1.0);
    double largest = 0.0;
    for (const auto& row : e.samples)
      for (std::size_t m = 0; m < row.size(); ++m)
        if (std::abs(row[m]) > tk) {
          e.degree = std::max(e.degree, degree(monos[m]));
          largest = std::max(largest, std::abs(row[m]));
        }
    if (e.degree > e.bound)
      throw Error(ErrorKind::DegreeViolation, "P entry " + mi_string(e.beta) + ";" + mi_string(e.gamma) + " has degree " +
                                                  std::to_string(e.degree) + " above the bound " + std::to_string(e.bound) +
                                                  " (|c| = " + std::to_string(largest) + ", threshold " + std::to_string(tk) + ")");
    e.symbol = e.degree < 0 ? zero_symbol(n)
                            : Symbol(std::make_shared<PNode>(n, T.evaluator, static_cast<int>(k)),
                                     {static_cast<double>(e.degree), 1.0, 0.0});
    T.entries[{e.beta, e.gamma}] = e;
  }
  return T;
}

// ---------------------------------------------------------------------------
// Composition.

namespace {

bool norm_is_parallel(const ManifoldModel* M) {
  if (!M || !M->metric) return false;
  if (auto lc = dynamic_cast<const LeviCivitaConnection*>(M->connection.get())) return &lc->metric() == M->metric.get();
  if (!M->connection->is_flat_chart()) return false;
  for (const auto& f : M->metric->inverse_fields())
    if (!f.is_constant()) return false;
  return true;
}

std::vector<Factor> product_factors(const Term& a, const Term& b) {
  std::vector<Factor> f;
  if (a.factors.empty() && b.factors.empty()) return f;
  if (a.factors.empty()) {
    for (const auto& g : b.factors) f.push_back({a.symbol * g.coeff, g.omega});
  } else if (b.factors.empty()) {
    for (const auto& g : a.factors) f.push_back({g.coeff * b.symbol, g.omega});
  } else {
    for (const auto& p : a.factors)
      for (const auto& q : b.factors) f.push_back({p.coeff * q.coeff, ScalarFunction::product(p.omega, q.omega)});
  }
  return f;
}

Expansion compose_impl(const Expansion& A, const Expansion& B, int K, const ManifoldModel* M, const PTable* P) {
  if (std::abs(A.tau()) > 1e-12 || std::abs(B.tau()) > 1e-12 || std::abs(A.kappa() - B.kappa()) > 1e-12)
    throw Error(ErrorKind::TagMismatch, "composition expects tau = 0 symbols with equal kappa");
  const double rho = std::min(A.rho(), B.rho()), delta = std::max(A.delta(), B.delta());
  check_class(rho, delta);
  const int n = A.dim();
  const double gap = rho - delta;
  const double rhoA = A.rho(), rhoB = B.rho(), deltaB = B.delta();
  const double leadA = A.leading_order(), leadB = B.leading_order();
  const double T = leadA + leadB - K * gap;
  double rem = leadA + leadB - (K + 1) * gap;
  if (A.remainder_order() > -1e299) rem = std::max(rem, A.remainder_order() + leadB);
  if (B.remainder_order() > -1e299) rem = std::max(rem, B.remainder_order() + leadA);
  const bool parallel = M ? norm_is_parallel(M) : false;
  const bool curved = P && !P->flat;
  Expansion R(n, 0.0, A.kappa(), rho, delta);

  for (const auto& a : A.terms())
    for (const auto& b : B.terms()) {
      const double base = a.order + b.order;
      if (base < T - kOrderEps) {
        rem = std::max(rem, base);
        continue;
      }
      const int amax = static_cast<int>(std::floor((base - T) / gap + kOrderEps));
      // the first α beyond the cut is part of the remainder
      rem = std::max(rem, base - (amax + 1) * gap);
      for (const auto& al : multi_indices_up_to(n, amax)) {
        const int p = degree(al);
        const Symbol nb = M ? horizontal_derivative_multi(*M, b.symbol, al) : d_x(b.symbol, al);
        if (nb.is_zero()) continue;
        const Symbol da = D_xi(a.symbol, al);
        if (da.is_zero()) continue;
        const double o0 = base - (rhoA - deltaB) * p;
        const double c0 = 1.0 / multi_factorial(al);
        // β = γ = 0
        if (o0 >= T - kOrderEps) {
          std::vector<Factor> f;
          if (p == 0) {
            f = product_factors(a, b);
          } else if (!b.factors.empty() && (parallel || !M)) {
            if (parallel || b.symbol.node().x_independent())
              for (const auto& g : b.factors) {
                const Symbol ng = M ? horizontal_derivative_multi(*M, g.coeff, al) : d_x(g.coeff, al);
                f.push_back({c0 * (da * ng), g.omega});
              }
          }
          R.add(o0, c0 * (da * nb), std::move(f));
        } else {
          rem = std::max(rem, o0);
        }
        if (!curved) continue;
        // |β|, |γ| ≥ 1; the order bound decreases in |β| + |γ| under the hypotheses
        auto level_bound = [&](int pb, int q) { return o0 - rhoA * pb - rhoB * q + degree_bound_nonneg(pb, q, P->symmetric); };
        int misses = 0;
        for (int s = 2; s < 64 && misses < 3; ++s) {
          double best = -1e300;
          for (int pb = 1; pb < s; ++pb) best = std::max(best, level_bound(pb, s - pb));
          if (best < T - kOrderEps) {
            ++misses;
            continue;
          }
          misses = 0;
          for (int pb = 1; pb < s; ++pb) {
            if (level_bound(pb, s - pb) < T - kOrderEps) continue;
            for (const auto& be : multi_indices_of_degree(n, pb)) {
              const Symbol dab = D_xi(a.symbol, add(al, be));
              if (dab.is_zero()) continue;
              for (const auto& ga : multi_indices_of_degree(n, s - pb)) {
                const Symbol dg = D_xi(nb, ga);
                if (dg.is_zero()) continue;
                const PEntry* e = P->find(be, ga);
                if (!e) throw Error(ErrorKind::MissingPEntry, "P table does not cover the requested truncation");
                if (e->degree < 0) continue;
                const double order = o0 - rhoA * pb - rhoB * (s - pb) + e->degree;
                if (order < T - kOrderEps) {
                  rem = std::max(rem, order);
                  continue;
                }
                const cplx c = c0 / (multi_factorial(be) * multi_factorial(ga));
                R.add(order, c * (e->symbol * dab * dg));
              }
            }
          }
        }
      }
    }
  R.set_remainder(rem);
  return R.truncated(T);
}

}  // namespace

Expansion compose_flat(const Expansion& A, const Expansion& B, int K) { return compose_impl(A, B, K, nullptr, nullptr); }

Expansion compose_global(const Expansion& A, const Expansion& B, const ManifoldModel& M, const PTable& P, int K) {
  const double rho = std::min(A.rho(), B.rho()), delta = std::max(A.delta(), B.delta());
  check_class(rho, delta);
  if (!P.flat) {
    const bool one_classical = (A.rho() == 1.0 && A.delta() == 0.0) || (B.rho() == 1.0 && B.delta() == 0.0);
    if (!(rho > 0.5 || (P.symmetric && rho > 1.0 / 3.0) || one_classical))
      throw Error(ErrorKind::HypothesisViolation, "composition hypotheses (rho > 1/2, symmetric and rho > 1/3, or a classical factor) fail");
  }
  if (std::abs(P.kappa - A.kappa()) > 1e-12) throw Error(ErrorKind::TagMismatch, "P table built for another kappa");
  return compose_impl(A, B, K, &M, &P);
}

// ---------------------------------------------------------------------------
// Kernels.

namespace {

// C^∞ radial cutoff: 1 on [0, 1/2], 0 on [1, ∞)
double mollifier(double r) {
  if (r <= 0.5) return 1.0;
  if (r >= 1.0) return 0.0;
  const double t = 2.0 * (1.0 - r);  // 1 at r = 1/2, 0 at r = 1
  const double f = std::exp(-1.0 / t), g = std::exp(-1.0 / (1.0 - t));
  return f / (f + g);
}

}  // namespace

KernelFn kernel_from_symbol(const Expansion& E, const ManifoldModel& M, double kappa, double tau, KernelOptions opts) {
  const Symbol s = E.sum();
  const int n = M.dim;
  if (n > 2) throw Error(ErrorKind::ConfigInvalid, "kernels are implemented for n <= 2");
  return [s, M, kappa, tau, opts, n](const Point& x, const Point& y) -> cplx {
    auto g = solve_geodesic(M, x, y);
    auto sz = shoot(M, x, g.velocity, tau);
    double p = 1.0;
    if (!M.connection->is_flat_chart()) {
      Eigen::MatrixXd B = shoot(M, x, g.velocity, 1.0).transport;
      const double ups_zx = std::abs(sz.transport.determinant());
      const double ups_yz = std::abs((B * sz.transport.inverse()).determinant());
      p = std::pow(ups_yz, 1.0 - kappa) * std::pow(ups_zx, -kappa);
    }
    const Point& z = sz.end;
    const auto& vt = sz.end_velocity;
    double speed = 0.0;
    for (double v : vt) speed = std::max(speed, std::abs(v));
    const double Xi = opts.xi_max;
    using GL = boost::math::quadrature::gauss<double, 20>;
    // 20-point Gauss–Legendre nodes on [−1, 1]
    std::vector<double> nodes, weights;
    for (std::size_t i = 0; i < GL::abscissa().size(); ++i) {
      nodes.push_back(GL::abscissa()[i]);
      weights.push_back(GL::weights()[i]);
      if (GL::abscissa()[i] != 0.0) {
        nodes.push_back(-GL::abscissa()[i]);
        weights.push_back(GL::weights()[i]);
      }
    }
    auto integrate = [&](int panels) {
      const double hw = Xi / panels;  // half-width of a panel
      std::vector<double> z1, w1;
      for (int k = 0; k < panels; ++k) {
        const double c = -Xi + (2 * k + 1) * hw;
        for (std::size_t i = 0; i < nodes.size(); ++i) {
          z1.push_back(c + hw * nodes[i]);
          w1.push_back(hw * weights[i]);
        }
      }
      std::vector<double> chi;
      if (n == 1) {
        for (double z : z1) chi.push_back(mollifier(std::abs(z) / Xi));
      } else {
        for (double a : z1)
          for (double b : z1) chi.push_back(mollifier(std::hypot(a, b) / Xi));
      }
      cplx acc{};
      Point zeta(n);
      const std::size_t N = z1.size();
      if (n == 1) {
        for (std::size_t i = 0; i < N; ++i) {
          if (chi[i] == 0.0) continue;
          zeta[0] = z1[i];
          acc += w1[i] * chi[i] * std::exp(-I * (vt[0] * z1[i])) * s(z, zeta);
        }
      } else {
        for (std::size_t i = 0; i < N; ++i)
          for (std::size_t j = 0; j < N; ++j) {
            const double c = chi[i * N + j];
            if (c == 0.0) continue;
            zeta[0] = z1[i];
            zeta[1] = z1[j];
            acc += w1[i] * w1[j] * c * std::exp(-I * (vt[0] * z1[i] + vt[1] * z1[j])) * s(z, zeta);
          }
      }
      return acc;
    };
    int panels = opts.nodes > 0 ? std::max(1, opts.nodes / 20) : 8 + static_cast<int>(std::ceil(Xi * speed));
    cplx v = integrate(panels);
    if (opts.tol > 0) {
      const cplx v2 = integrate(2 * panels);
      if (std::abs(v2 - v) > opts.tol * (1.0 + std::abs(v2)))
        throw Error(ErrorKind::QuadratureNotConverged, "kernel quadrature changed under node doubling");
      v = v2;
    }
    return p * v / std::pow(2 * std::numbers::pi, n);
  };
}

}  // namespace pdo
