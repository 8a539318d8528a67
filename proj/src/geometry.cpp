#include "pdo/geometry.hpp"

#include <algorithm>
#include <boost/numeric/odeint.hpp>
#include <cmath>
#include <map>

#include "pdo/errors.hpp"

namespace pdo {

namespace odeint = boost::numeric::odeint;
using State = std::vector<double>;

namespace {

constexpr double kOdeTol = 1e-13;

bool flat(const ManifoldModel& M) { return M.connection->is_flat_chart(); }

// Γ^i_{jk} at (i*n + j)*n + k
double G(const std::vector<double>& g, int n, int i, int j, int k) { return g[(i * n + j) * n + k]; }

template <class Sys>
void integrate(Sys sys, State& s, double t0, double t1) {
  if (t1 == t0) return;
  auto stepper = odeint::make_controlled<odeint::runge_kutta_dopri5<State>>(kOdeTol, kOdeTol);
  odeint::integrate_adaptive(stepper, sys, s, t0, t1, (t1 - t0) / 16);
}

void check_neighbourhood(const ManifoldModel& M, const std::vector<double>& d) {
  for (int i = 0; i < M.dim; ++i)
    if (std::abs(d[i]) > M.injectivity_fraction * M.period[i])
      throw Error(ErrorKind::OutOfNeighbourhood, "points farther apart than the injectivity guard");
}

// geodesic + covector transport: (γ, γ̇, Φ row-major)
struct TransportSystem {
  const Connection* conn;
  int n;
  void operator()(const State& s, State& ds, double) const {
    Point y(s.begin(), s.begin() + n);
    auto g = conn->christoffel_values(y);
    const double* v = s.data() + n;
    const double* P = s.data() + 2 * n;
    for (int k = 0; k < n; ++k) {
      ds[k] = v[k];
      double acc = 0.0;
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) acc += G(g, n, k, i, j) * v[i] * v[j];
      ds[n + k] = -acc;
    }
    // dΦ_{jm}/dt = Σ_i C_{ij} Φ_{im},  C_{ij} = Σ_k Γ^i_{kj} γ̇^k
    for (int j = 0; j < n; ++j)
      for (int m = 0; m < n; ++m) {
        double acc = 0.0;
        for (int i = 0; i < n; ++i) {
          double c = 0.0;
          for (int k = 0; k < n; ++k) c += G(g, n, i, k, j) * v[k];
          acc += c * P[i * n + m];
        }
        ds[2 * n + j * n + m] = acc;
      }
  }
};

// geodesic + variational equations: (γ, γ̇, J = ∂γ/∂v, K = ∂γ̇/∂v)
struct VariationalSystem {
  const Connection* conn;
  int n;
  void operator()(const State& s, State& ds, double) const {
    Point y(s.begin(), s.begin() + n);
    auto jets = conn->christoffel(y, 1);
    const double* v = s.data() + n;
    const double* J = s.data() + 2 * n;
    const double* K = s.data() + 2 * n + n * n;
    MultiIndex e(n, 0);
    auto dG = [&](int c, int l) {
      std::fill(e.begin(), e.end(), 0);
      e[l] = 1;
      return jets[c].coeff(e);
    };
    for (int k = 0; k < n; ++k) {
      ds[k] = v[k];
      double acc = 0.0;
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) acc += jets[(k * n + i) * n + j].value() * v[i] * v[j];
      ds[n + k] = -acc;
    }
    for (int a = 0; a < n * n; ++a) ds[2 * n + a] = K[a];
    for (int k = 0; k < n; ++k)
      for (int m = 0; m < n; ++m) {
        double acc = 0.0;
        for (int i = 0; i < n; ++i)
          for (int j = 0; j < n; ++j) {
            const int c = (k * n + i) * n + j;
            double dg = 0.0;
            for (int l = 0; l < n; ++l) dg += dG(c, l) * J[l * n + m];
            acc += dg * v[i] * v[j] + jets[c].value() * (K[i * n + m] * v[j] + v[i] * K[j * n + m]);
          }
        ds[2 * n + n * n + k * n + m] = -acc;
      }
  }
};

Eigen::MatrixXd to_matrix(const double* p, int n) {
  Eigen::MatrixXd m(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) m(i, j) = p[i * n + j];
  return m;
}

}  // namespace

Shot shoot(const ManifoldModel& M, const Point& x, const std::vector<double>& v, double t1) {
  const int n = M.dim;
  Shot r;
  if (flat(M)) {
    r.end.resize(n);
    for (int i = 0; i < n; ++i) r.end[i] = x[i] + t1 * v[i];
    r.end_velocity = v;
    r.transport = Eigen::MatrixXd::Identity(n, n);
    return r;
  }
  State s(2 * n + n * n, 0.0);
  for (int i = 0; i < n; ++i) {
    s[i] = x[i];
    s[n + i] = v[i];
    s[2 * n + i * n + i] = 1.0;
  }
  integrate(TransportSystem{M.connection.get(), n}, s, 0.0, t1);
  r.end.assign(s.begin(), s.begin() + n);
  r.end_velocity.assign(s.begin() + n, s.begin() + 2 * n);
  r.transport = to_matrix(s.data() + 2 * n, n);
  return r;
}

Point exp_map(const ManifoldModel& M, const Point& x, const std::vector<double>& v) {
  check_neighbourhood(M, v);
  return shoot(M, x, v).end;
}

Point GeodesicSolution::position(double t) const {
  const std::size_t n = x.size();
  auto it = std::upper_bound(ts.begin(), ts.end(), t);
  std::size_t k = std::clamp<std::size_t>(it - ts.begin(), 1, ts.size() - 1) - 1;
  const double h = ts[k + 1] - ts[k], s = (t - ts[k]) / h;
  const double h00 = 2 * s * s * s - 3 * s * s + 1, h10 = s * s * s - 2 * s * s + s, h01 = -2 * s * s * s + 3 * s * s,
               h11 = s * s * s - s * s;
  Point p(n);
  for (std::size_t i = 0; i < n; ++i)
    p[i] = h00 * states[k][i] + h10 * h * states[k][n + i] + h01 * states[k + 1][i] + h11 * h * states[k + 1][n + i];
  return p;
}

std::vector<double> GeodesicSolution::velocity_at(double t) const {
  const std::size_t n = x.size();
  auto it = std::upper_bound(ts.begin(), ts.end(), t);
  std::size_t k = std::clamp<std::size_t>(it - ts.begin(), 1, ts.size() - 1) - 1;
  const double h = ts[k + 1] - ts[k], s = (t - ts[k]) / h;
  const double d00 = (6 * s * s - 6 * s) / h, d10 = 3 * s * s - 4 * s + 1, d01 = (-6 * s * s + 6 * s) / h,
               d11 = 3 * s * s - 2 * s;
  std::vector<double> v(n);
  for (std::size_t i = 0; i < n; ++i)
    v[i] = d00 * states[k][i] + d10 * states[k][n + i] + d01 * states[k + 1][i] + d11 * states[k + 1][n + i];
  return v;
}

GeodesicSolution solve_geodesic(const ManifoldModel& M, const Point& x, const Point& y, double tol) {
  const int n = M.dim;
  auto d = M.chart_difference(x, y);
  check_neighbourhood(M, d);
  GeodesicSolution sol;
  sol.x = x;
  sol.y.resize(n);
  for (int i = 0; i < n; ++i) sol.y[i] = x[i] + d[i];
  std::vector<double> v = d;
  if (!flat(M)) {
    bool ok = false;
    for (int it = 0; it < 50; ++it) {
      State s(2 * n + 2 * n * n, 0.0);
      for (int i = 0; i < n; ++i) {
        s[i] = x[i];
        s[n + i] = v[i];
        s[2 * n + n * n + i * n + i] = 1.0;  // K(0) = I
      }
      integrate(VariationalSystem{M.connection.get(), n}, s, 0.0, 1.0);
      Eigen::VectorXd F(n);
      for (int i = 0; i < n; ++i) F(i) = s[i] - sol.y[i];
      sol.tol = F.cwiseAbs().maxCoeff();
      if (!std::isfinite(sol.tol)) break;
      if (sol.tol < tol) {
        ok = true;
        break;
      }
      Eigen::VectorXd dv = to_matrix(s.data() + 2 * n, n).partialPivLu().solve(F);
      for (int i = 0; i < n; ++i) v[i] -= dv(i);
    }
    if (!ok) throw Error(ErrorKind::NoConvergence, "geodesic shooting did not converge");
  }
  sol.velocity = v;
  // sampled path
  const int samples = 17;
  State s(2 * n);
  for (int i = 0; i < n; ++i) {
    s[i] = x[i];
    s[n + i] = v[i];
  }
  for (int k = 0; k < samples; ++k) sol.ts.push_back(double(k) / (samples - 1));
  if (flat(M)) {
    for (double t : sol.ts) {
      State st(2 * n);
      for (int i = 0; i < n; ++i) {
        st[i] = x[i] + t * v[i];
        st[n + i] = v[i];
      }
      sol.states.push_back(st);
    }
    return sol;
  }
  auto conn = M.connection.get();
  auto sys = [conn, n](const State& st, State& ds, double) {
    auto g = conn->christoffel_values(Point(st.begin(), st.begin() + n));
    for (int k = 0; k < n; ++k) {
      ds[k] = st[n + k];
      double acc = 0.0;
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) acc += G(g, n, k, i, j) * st[n + i] * st[n + j];
      ds[n + k] = -acc;
    }
  };
  auto stepper = odeint::make_controlled<odeint::runge_kutta_dopri5<State>>(kOdeTol, kOdeTol);
  odeint::integrate_times(stepper, sys, s, sol.ts.begin(), sol.ts.end(), 1.0 / 32,
                          [&](const State& st, double) { sol.states.push_back(st); });
  return sol;
}

Transport parallel_displacement(const ManifoldModel& M, const GeodesicSolution& geod) {
  Transport t;
  t.matrix = shoot(M, geod.x, geod.velocity).transport;
  t.ups = std::abs(t.matrix.determinant());
  return t;
}

// ---------------------------------------------------------------------------
// Exact jets of exp and transport.

namespace {

// v-degree of a (hp, v) exponent
int v_degree(const MultiIndex& e, int n) {
  int d = 0;
  for (int i = n; i < 2 * n; ++i) d += e[i];
  return d;
}

RJet euler_v(const RJet& f, int n) {
  RJet r = f;
  for (std::size_t i = 0; i < r.size(); ++i) r[i] *= v_degree(f.layout()->exponent(i), n);
  return r;
}

// Keep only coefficients where the dropped variables have exponent zero.
template <class T>
Jet<T> slice(const Jet<T>& f, LayoutPtr target, const std::vector<int>& keep) {
  Jet<T> r(target);
  const auto& l = *f.layout();
  MultiIndex e(target->nvars());
  for (std::size_t i = 0; i < l.size(); ++i) {
    const auto& s = l.exponent(i);
    int kept = 0;
    for (int v : keep) kept += s[v];
    if (kept != degree(s)) continue;
    for (std::size_t k = 0; k < keep.size(); ++k) e[k] = s[keep[k]];
    if (auto idx = target->find(e)) r[*idx] = f[i];
  }
  return r;
}

std::vector<RJet> compose_all(const std::vector<RJet>& fs, const std::vector<RJet>& shifts) {
  std::vector<RJet> out;
  out.reserve(fs.size());
  for (const auto& f : fs) out.push_back(substitute(f, shifts));
  return out;
}

RJet det(const std::vector<RJet>& Q, int n) {
  if (n == 1) return Q[0];
  return Q[0] * Q[3] - Q[1] * Q[2];
}

}  // namespace

ExpJets exp_jets(const Connection& conn, const Point& x, int order) {
  const int n = conn.dim();
  auto l = JetLayout::dense(2 * n, order);
  ExpJets r;
  for (int i = 0; i < n; ++i) r.E.push_back(RJet::variable(l, i, x[i]) + RJet::variable(l, n + i, 0.0));
  for (int a = 0; a < n * n; ++a) r.Q.push_back(RJet::constant(l, a / n == a % n ? 1.0 : 0.0));
  if (conn.is_flat_chart()) return r;
  const auto gam = conn.christoffel(x, order);
  auto shifts = [&]() {
    std::vector<RJet> s;
    for (int i = 0; i < n; ++i) s.push_back(r.E[i] - x[i]);
    return s;
  };
  // k(k−1) E_k = [−Γ(E)(Ė, Ė)]_k
  std::vector<RJet> gE;
  for (int k = 2; k <= order; ++k) {
    gE = compose_all(gam, shifts());
    std::vector<RJet> Ed;
    for (int i = 0; i < n; ++i) Ed.push_back(euler_v(r.E[i], n));
    for (int i = 0; i < n; ++i) {
      RJet R(l);
      for (int a = 0; a < n; ++a)
        for (int b = 0; b < n; ++b) R -= gE[(i * n + a) * n + b] * Ed[a] * Ed[b];
      for (std::size_t c = 0; c < l->size(); ++c)
        if (v_degree(l->exponent(c), n) == k) r.E[i][c] = R[c] / (k * (k - 1.0));
    }
  }
  gE = compose_all(gam, shifts());
  std::vector<RJet> Ed;
  for (int i = 0; i < n; ++i) Ed.push_back(euler_v(r.E[i], n));
  // C_{ij} = Σ_k Γ^i_{kj}(E) Ė^k;  k Q_k = [C^T Q]_k
  std::vector<RJet> C(n * n, RJet(l));
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      for (int k = 0; k < n; ++k) C[i * n + j] += gE[(i * n + k) * n + j] * Ed[k];
  for (int k = 1; k <= order; ++k) {
    std::vector<RJet> rhs(n * n, RJet(l));
    for (int j = 0; j < n; ++j)
      for (int m = 0; m < n; ++m)
        for (int i = 0; i < n; ++i) rhs[j * n + m] += C[i * n + j] * r.Q[i * n + m];
    for (int a = 0; a < n * n; ++a)
      for (std::size_t c = 0; c < l->size(); ++c)
        if (v_degree(l->exponent(c), n) == k) r.Q[a][c] = rhs[a][c] / double(k);
  }
  return r;
}

// ---------------------------------------------------------------------------
// Finite-difference jets.

FdJet fd_jet(const std::function<std::vector<double>(const Point&)>& f, const Point& x, int m, int order, double h) {
  const int n = static_cast<int>(x.size());
  auto l = JetLayout::dense(n, order);
  FdJet out;
  out.jets.assign(m, RJet(l));
  // offsets in units of step/2
  std::map<std::pair<int, std::vector<int>>, std::vector<double>> cache;
  auto eval = [&](int level, const std::vector<int>& off) -> const std::vector<double>& {
    auto key = std::make_pair(level, off);
    auto it = cache.find(key);
    if (it != cache.end()) return it->second;
    const double step = h / (1 << level);
    Point p = x;
    for (int i = 0; i < n; ++i) p[i] += 0.5 * step * off[i];
    return cache.emplace(key, f(p)).first->second;
  };
  auto central = [&](int level, const MultiIndex& e) {
    std::vector<double> acc(m, 0.0);
    const double step = h / (1 << level);
    std::vector<int> j(n, 0), off(n);
    while (true) {
      double w = 1.0;
      for (int i = 0; i < n; ++i) {
        w *= ((j[i] % 2) ? -1.0 : 1.0) * factorial(e[i]) / (factorial(j[i]) * factorial(e[i] - j[i]));
        off[i] = e[i] - 2 * j[i];
      }
      const auto& v = eval(level, off);
      for (int c = 0; c < m; ++c) acc[c] += w * v[c];
      int i = 0;
      while (i < n && ++j[i] > e[i]) j[i++] = 0;
      if (i == n) break;
    }
    for (auto& a : acc) a /= std::pow(step, degree(e));
    return acc;
  };
  for (std::size_t idx = 0; idx < l->size(); ++idx) {
    const auto& e = l->exponent(idx);
    auto d0 = central(0, e), d1 = central(1, e);
    const double ef = multi_factorial(e);
    for (int c = 0; c < m; ++c) {
      out.jets[c][idx] = (4.0 * d1[c] - d0[c]) / 3.0 / ef;
      out.error_estimate = std::max(out.error_estimate, std::abs(d1[c] - d0[c]) / 3.0 / ef);
    }
  }
  return out;
}

NormalChart normal_coordinates(const ManifoldModel& M, const Point& x, int order, JetMethod method, double h,
                               double jet_tol) {
  const int n = M.dim;
  NormalChart c;
  c.x = x;
  c.order = order;
  auto lv = JetLayout::dense(n, order);
  if (method == JetMethod::FiniteDifference) {
    auto inv = fd_jet(
        [&](const Point& v) {
          Point y = shoot(M, x, v).end;
          for (int i = 0; i < n; ++i) y[i] -= x[i];
          return y;
        },
        Point(n, 0.0), n, order, h);
    auto fwd = fd_jet([&](const Point& y) { return solve_geodesic(M, x, y).velocity; }, x, n, order, h);
    c.inverse_jet = inv.jets;
    c.forward_jet = fwd.jets;
    c.error_estimate = std::max(inv.error_estimate, fwd.error_estimate);
    if (c.error_estimate > jet_tol) throw Error(ErrorKind::JetUnstable, "Richardson estimate above tolerance");
    return c;
  }
  auto ej = exp_jets(*M.connection, x, order);
  std::vector<int> vs;
  for (int i = 0; i < n; ++i) vs.push_back(n + i);
  std::vector<RJet> N;
  for (int i = 0; i < n; ++i) {
    c.inverse_jet.push_back(slice(ej.E[i], lv, vs) - x[i]);
    N.push_back(c.inverse_jet[i] - RJet::variable(lv, i, 0.0));
  }
  // V = h − N(V)
  std::vector<RJet> V;
  for (int i = 0; i < n; ++i) V.push_back(RJet::variable(lv, i, 0.0));
  for (int it = 0; it < order; ++it) {
    auto NV = compose_all(N, V);
    for (int i = 0; i < n; ++i) V[i] = RJet::variable(lv, i, 0.0) - NV[i];
  }
  c.forward_jet = V;
  return c;
}

std::vector<double> torsion(const ManifoldModel& M, const Point& x) {
  const int n = M.dim;
  auto g = M.connection->christoffel_values(x);
  std::vector<double> T(n * n * n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      for (int k = 0; k < n; ++k) T[(i * n + j) * n + k] = G(g, n, i, j, k) - G(g, n, i, k, j);
  return T;
}

std::vector<double> curvature(const ManifoldModel& M, const Point& x) {
  const int n = M.dim;
  auto jets = M.connection->christoffel(x, 1);
  auto val = [&](int i, int j, int k) { return jets[(i * n + j) * n + k].value(); };
  auto d = [&](int l, int i, int j, int k) {
    MultiIndex e(n, 0);
    e[l] = 1;
    return jets[(i * n + j) * n + k].coeff(e);
  };
  std::vector<double> R(n * n * n * n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      for (int k = 0; k < n; ++k)
        for (int l = 0; l < n; ++l) {
          double r = d(k, i, l, j) - d(l, i, k, j);
          for (int p = 0; p < n; ++p) r += val(i, k, p) * val(p, l, j) - val(i, l, p) * val(p, k, j);
          R[((i * n + j) * n + k) * n + l] = r;
        }
  return R;
}

// ---------------------------------------------------------------------------
// Horizontal derivatives.

namespace {

CJet lift(const RJet& f, LayoutPtr l) {
  std::vector<int> id(f.layout()->nvars());
  for (std::size_t i = 0; i < id.size(); ++i) id[i] = static_cast<int>(i);
  return complexify(f).embed(std::move(l), id);
}

// H_i F for a jet F of order one higher than the result.
CJet apply_horizontal(const CJet& F, int i, const std::vector<RJet>& gam, const Point& xi, int n) {
  CJet r = F.diff(i);
  auto l = r.layout();
  for (int j = 0; j < n; ++j) {
    CJet dF = F.diff(n + j);
    CJet coef(l);
    for (int k = 0; k < n; ++k) {
      const auto& g = gam[(k * n + i) * n + j];
      if (g.max_abs() == 0.0) continue;
      coef += lift(g.restrict_to(JetLayout::dense(n, l->cap(0))), l) * CJet::variable(l, n + k, xi[k]);
    }
    r += coef * dF;
  }
  return r;
}

class CovariantNode final : public SymbolNode {
 public:
  CovariantNode(std::shared_ptr<const Connection> conn, Symbol a, MultiIndex alpha)
      : SymbolNode(a.dim()), conn_(std::move(conn)), a_(std::move(a)), alpha_(std::move(alpha)) {}
  // the horizontal lift preserves ξ-polynomial degree
  int xi_degree() const override { return a_.node().xi_degree(); }
  std::string describe() const override {
    std::string r = "Nabla[";
    for (int v : alpha_) r += std::to_string(v);
    return r + "](" + a_.describe() + ")";
  }

 protected:
  CJet compute(const Point& x, const Point& xi, int order) const override {
    const int n = dim(), q = degree(alpha_);
    const auto gam = conn_->christoffel(x, order + q);
    // T_r indexed by tuples (i_1..i_r) encoded base n
    std::vector<CJet> T{a_.jet(x, xi, order + q)};
    for (int r = 1; r <= q; ++r) {
      const int count = static_cast<int>(std::pow(n, r)), prev = count / n, ord = order + q - r;
      auto l = layout(ord);
      std::vector<CJet> next(count);
      for (int code = 0; code < count; ++code) {
        const int i1 = code / prev, rest = code % prev;
        CJet t = apply_horizontal(T[rest], i1, gam, xi, n);
        // − Σ_s Γ^k_{i1 i_s} T[.. k ..]
        for (int s = 0; s < r - 1; ++s) {
          const int place = static_cast<int>(std::pow(n, r - 2 - s));
          const int is = (rest / place) % n;
          for (int k = 0; k < n; ++k) {
            const auto& g = gam[(k * n + i1) * n + is];
            if (g.max_abs() == 0.0) continue;
            const int swapped = rest + (k - is) * place;
            t -= lift(g.restrict_to(JetLayout::dense(n, ord)), l) * T[swapped].restrict_to(l);
          }
        }
        next[code] = std::move(t);
      }
      T = std::move(next);
    }
    // average over distinct orderings of the index multiset
    std::vector<int> idx;
    for (int i = 0; i < n; ++i)
      for (int k = 0; k < alpha_[i]; ++k) idx.push_back(i);
    CJet acc(layout(order));
    int count = 0;
    do {
      int code = 0;
      for (int v : idx) code = code * n + v;
      acc += T[code];
      ++count;
    } while (std::next_permutation(idx.begin(), idx.end()));
    return acc * cplx(1.0 / count);
  }

 private:
  std::shared_ptr<const Connection> conn_;
  Symbol a_;
  MultiIndex alpha_;
};

}  // namespace

Symbol horizontal_derivative(const ManifoldModel& M, const Symbol& a, int i) {
  MultiIndex e(M.dim, 0);
  e[i] = 1;
  return horizontal_derivative_multi(M, a, e);
}

Symbol horizontal_derivative_multi(const ManifoldModel& M, const Symbol& a, const MultiIndex& alpha) {
  if (degree(alpha) == 0) return a;
  if (flat(M) || a.is_zero()) return d_x(a, alpha);
  SymbolClass c = a.cls();
  c.m += c.delta * degree(alpha);
  return Symbol(std::make_shared<CovariantNode>(M.connection, a, alpha), c);
}

CJet horizontal_taylor(const ManifoldModel& M, const Symbol& a, const Point& x, const Point& xi, int order) {
  const int n = M.dim;
  auto l = JetLayout::dense(n, order);
  CJet r(l);
  for (std::size_t i = 0; i < l->size(); ++i) {
    const auto& al = l->exponent(i);
    r[i] = horizontal_derivative_multi(M, a, al)(x, xi) / multi_factorial(al);
  }
  return r;
}

// ---------------------------------------------------------------------------
// Phase and weight.

double phase(const ManifoldModel& M, const Point& x, const std::vector<double>& zeta, const Point& y, double tau) {
  auto g = solve_geodesic(M, x, y);
  auto s = shoot(M, x, g.velocity, tau);
  double p = 0.0;
  for (int i = 0; i < M.dim; ++i) p -= s.end_velocity[i] * zeta[i];
  return p;
}

double weight(const ManifoldModel& M, const Point& x, const Point& y, double kappa, double tau) {
  if (flat(M)) return 1.0;
  auto g = solve_geodesic(M, x, y);
  Eigen::MatrixXd A = shoot(M, x, g.velocity, tau).transport;
  Eigen::MatrixXd B = shoot(M, x, g.velocity, 1.0).transport;
  const double ups_zx = std::abs(A.determinant());
  const double ups_yz = std::abs((B * A.inverse()).determinant());
  return std::pow(ups_yz, 1.0 - kappa) * std::pow(ups_zx, -kappa);
}

// ---------------------------------------------------------------------------
// Diagonal jets.

DiagonalJets diagonal_jets(const ManifoldModel& M, const Point& x, int order, double kappa, int x_order) {
  const int n = M.dim;
  DiagonalJets d;
  d.dim = n;
  d.order = order;
  d.x_order = x_order;
  d.kappa = kappa;
  d.x = x;
  d.layout = JetLayout::make({n, 2 * n}, {x_order, order});
  const auto& l = d.layout;
  std::vector<RJet> hx, u, w;
  for (int i = 0; i < n; ++i) {
    hx.push_back(RJet::variable(l, i, 0.0));
    u.push_back(RJet::variable(l, n + i, 0.0));
    w.push_back(RJet::variable(l, 2 * n + i, 0.0));
  }
  if (flat(M)) {
    for (int j = 0; j < n; ++j) d.psi.push_back(RJet(l));
    d.upsilon = RJet::constant(l, 1.0);
    return d;
  }
  auto ej = exp_jets(*M.connection, x, order + x_order + 1);
  // Jacobian ∂E/∂v, then drop the extra order
  auto lE = JetLayout::dense(2 * n, order + x_order);
  std::vector<RJet> Jv;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) Jv.push_back(ej.E[i].diff(n + j).restrict_to(lE));
  for (auto& e : ej.E) e = e.restrict_to(lE);
  for (auto& q : ej.Q) q = q.restrict_to(lE);
  std::vector<RJet> Em;  // E − x
  for (int i = 0; i < n; ++i) Em.push_back(ej.E[i] - x[i]);
  auto cat = [](std::vector<RJet> a, const std::vector<RJet>& b) {
    a.insert(a.end(), b.begin(), b.end());
    return a;
  };
  auto y = compose_all(Em, cat(hx, u));  // y − x
  auto z = compose_all(Em, cat(hx, w));  // z − x
  // N(p, v) = E(p, v) − p − v;  V = (y − z) − N(z, V)
  std::vector<RJet> N;
  for (int i = 0; i < n; ++i) N.push_back(Em[i] - RJet::variable(lE, i, 0.0) - RJet::variable(lE, n + i, 0.0));
  std::vector<RJet> V;
  for (int i = 0; i < n; ++i) V.push_back(y[i] - z[i]);
  for (int it = 0; it < order + x_order; ++it) {
    auto NV = compose_all(N, cat(z, V));
    for (int i = 0; i < n; ++i) V[i] = y[i] - z[i] - NV[i];
  }
  auto Qw = compose_all(ej.Q, cat(hx, w));
  auto Qu = compose_all(ej.Q, cat(hx, u));
  auto Qzv = compose_all(ej.Q, cat(z, V));
  for (int j = 0; j < n; ++j) {
    RJet p = u[j] - w[j];
    for (int i = 0; i < n; ++i) p -= V[i] * Qw[i * n + j];
    d.psi.push_back(p);
  }
  // Υ_κ has density weight one in z; the last factor expresses it in the normal coordinates w
  d.upsilon = pow(det(Qzv, n), 1.0 - kappa) * pow(det(Qw, n), 2.0 - kappa) * pow(det(Qu, n), kappa - 1.0) *
              det(compose_all(Jv, cat(hx, w)), n);
  return d;
}

SymbolProbe symbol_probe(const ManifoldModel& M, const Point& x, double kappa, int order, int x_order) {
  const int n = M.dim;
  SymbolProbe p;
  p.layout = JetLayout::make({n, n}, {x_order, order});
  const auto& l = p.layout;
  if (flat(M)) {
    for (int i = 0; i < n; ++i) p.w.push_back(RJet::variable(l, n + i, 0.0));
    p.weight = RJet::constant(l, 1.0);
    return p;
  }
  // one extra Y-order for the Jacobian
  auto l1 = JetLayout::make({n, n}, {x_order, order + 1});
  auto ej = exp_jets(*M.connection, x, order + x_order + 1);
  std::vector<RJet> hx, Y, N;
  for (int i = 0; i < n; ++i) {
    hx.push_back(RJet::variable(l1, i, 0.0));
    Y.push_back(RJet::variable(l1, n + i, 0.0));
    N.push_back(ej.E[i] - x[i] - RJet::variable(ej.E[i].layout(), i, 0.0) - RJet::variable(ej.E[i].layout(), n + i, 0.0));
  }
  auto cat = [](std::vector<RJet> a, const std::vector<RJet>& b) {
    a.insert(a.end(), b.begin(), b.end());
    return a;
  };
  // exp_{x+hx}(V) = x + hx + Y  ⇔  V = Y − N(hx, V)
  std::vector<RJet> V = Y;
  for (int it = 0; it <= order + x_order; ++it) {
    auto NV = compose_all(N, cat(hx, V));
    for (int i = 0; i < n; ++i) V[i] = Y[i] - NV[i];
  }
  std::vector<RJet> J;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) J.push_back(V[i].diff(n + j).restrict_to(l));
  auto Q = compose_all(ej.Q, cat(hx, V));
  for (auto& q : Q) q = q.restrict_to(l);
  for (auto& v : V) p.w.push_back(v.restrict_to(l));
  p.weight = det(J, n) * pow(det(Q, n), kappa - 1.0);
  return p;
}

double psi_direct(const ManifoldModel& M, const Point& x, const std::vector<double>& xi, const std::vector<double>& u,
                  const std::vector<double>& w) {
  const int n = M.dim;
  Point y = exp_map(M, x, u);
  auto sz = shoot(M, x, w);
  auto V = solve_geodesic(M, sz.end, y).velocity;
  Eigen::VectorXd e = Eigen::Map<const Eigen::VectorXd>(xi.data(), n);
  Eigen::VectorXd q = sz.transport * e;
  double p = 0.0;
  for (int i = 0; i < n; ++i) p += (u[i] - w[i]) * xi[i] - V[i] * q(i);
  return p;
}

double upsilon_direct(const ManifoldModel& M, const Point& x, double kappa, const std::vector<double>& u,
                      const std::vector<double>& w) {
  Point y = exp_map(M, x, u);
  auto sz = shoot(M, x, w);
  auto gzy = solve_geodesic(M, sz.end, y);
  const double ups_yz = parallel_displacement(M, gzy).ups;
  const double ups_zx = std::abs(sz.transport.determinant());
  const double ups_xy = parallel_displacement(M, solve_geodesic(M, y, x)).ups;
  // |det ∂z/∂w| by fourth-order central differences
  const int n = M.dim;
  const double h = 1e-3;
  Eigen::MatrixXd Jac(n, n);
  for (int j = 0; j < n; ++j) {
    auto at = [&](double s) {
      auto v = w;
      v[j] += s;
      return exp_map(M, x, v);
    };
    auto p1 = at(h), m1 = at(-h), p2 = at(2 * h), m2 = at(-2 * h);
    for (int i = 0; i < n; ++i) Jac(i, j) = (8 * (p1[i] - m1[i]) - (p2[i] - m2[i])) / (12 * h);
  }
  return std::pow(ups_yz, 1.0 - kappa) * std::pow(ups_zx, 2.0 - kappa) * std::pow(ups_xy, 1.0 - kappa) *
         std::abs(Jac.determinant());
}

}  // namespace pdo
