#include "pdo/symbols.hpp"

#include <boost/math/quadrature/gauss.hpp>
#include <cmath>
#include <sstream>

#include "pdo/errors.hpp"

namespace pdo {

// ---------------------------------------------------------------------------
// Node evaluation and caching.

CJet SymbolNode::jet(const Point& x, const Point& xi, int order) const {
  {
    std::lock_guard<std::mutex> lock(mu_);
    if (cached_ && cjet_.layout()->cap(0) >= order && cx_ == x && cxi_ == xi) {
      if (cjet_.layout()->cap(0) == order) return cjet_;
      return cjet_.restrict_to(layout(order));
    }
  }
  CJet j = compute(x, xi, order);
  std::lock_guard<std::mutex> lock(mu_);
  cached_ = true;
  cx_ = x;
  cxi_ = xi;
  cjet_ = j;
  return j;
}

cplx Symbol::derivative(const Point& x, const Point& xi, const MultiIndex& alpha, const MultiIndex& beta) const {
  const int n = dim();
  MultiIndex e(2 * n, 0);
  for (int i = 0; i < n; ++i) {
    e[i] = i < static_cast<int>(alpha.size()) ? alpha[i] : 0;
    e[n + i] = i < static_cast<int>(beta.size()) ? beta[i] : 0;
  }
  return jet(x, xi, degree(e)).derivative(e);
}

namespace {

std::vector<int> identity_map(int n) {
  std::vector<int> m(n);
  for (int i = 0; i < n; ++i) m[i] = i;
  return m;
}

CJet lift_x(const RJet& f, LayoutPtr target) { return complexify(f).embed(std::move(target), identity_map(f.layout()->nvars())); }

class ConstNode final : public SymbolNode {
 public:
  ConstNode(int dim, cplx c) : SymbolNode(dim), c_(c) {}
  bool is_zero() const override { return c_ == cplx{}; }
  std::optional<cplx> constant_value() const override { return c_; }
  bool x_independent() const override { return true; }
  int xi_degree() const override { return 0; }
  std::string describe() const override {
    std::ostringstream os;
    os << c_;
    return os.str();
  }

 protected:
  CJet compute(const Point&, const Point&, int order) const override { return CJet::constant(layout(order), c_); }

 private:
  cplx c_;
};

class XFunctionNode final : public SymbolNode {
 public:
  XFunctionNode(int dim, std::function<RJet(const Point&, int)> f, std::string name, bool constant)
      : SymbolNode(dim), f_(std::move(f)), name_(std::move(name)), constant_(constant) {}
  bool x_independent() const override { return constant_; }
  int xi_degree() const override { return 0; }
  std::string describe() const override { return name_; }

 protected:
  CJet compute(const Point& x, const Point&, int order) const override { return lift_x(f_(x, order), layout(order)); }

 private:
  std::function<RJet(const Point&, int)> f_;
  std::string name_;
  bool constant_;
};

class XiNode final : public SymbolNode {
 public:
  XiNode(int dim, int i) : SymbolNode(dim), i_(i) {}
  bool x_independent() const override { return true; }
  int xi_degree() const override { return 1; }
  std::string describe() const override { return "xi" + std::to_string(i_ + 1); }

 protected:
  CJet compute(const Point&, const Point& xi, int order) const override {
    return CJet::variable(layout(order), dim() + i_, xi[i_]);
  }

 private:
  int i_;
};

CJet quadratic_jet(const Metric& g, const Point& x, const Point& xi, LayoutPtr l) {
  const int n = g.dim();
  auto gi = g.inverse(x, l->cap(0));
  CJet acc(l);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      acc += lift_x(gi[i * n + j], l) * CJet::variable(l, n + i, xi[i]) * CJet::variable(l, n + j, xi[j]);
  return acc;
}

bool metric_constant(const Metric& g) {
  for (const auto& f : g.inverse_fields())
    if (!f.is_constant()) return false;
  return true;
}

class MetricQuadraticNode final : public SymbolNode {
 public:
  explicit MetricQuadraticNode(std::shared_ptr<const Metric> g) : SymbolNode(g->dim()), g_(std::move(g)) {}
  bool x_independent() const override { return metric_constant(*g_); }
  int xi_degree() const override { return 2; }
  std::string describe() const override { return "|xi|^2"; }

 protected:
  CJet compute(const Point& x, const Point& xi, int order) const override {
    return quadratic_jet(*g_, x, xi, layout(order));
  }

 private:
  std::shared_ptr<const Metric> g_;
};

class NormFunctionNode final : public SymbolNode {
 public:
  NormFunctionNode(std::shared_ptr<const Metric> g, ScalarFunction w)
      : SymbolNode(g->dim()), g_(std::move(g)), w_(std::move(w)) {}
  bool x_independent() const override { return metric_constant(*g_); }
  std::string describe() const override { return "theta*" + w_.name() + "(|xi|)"; }

 protected:
  CJet compute(const Point& x, const Point& xi, int order) const override {
    auto l = layout(order);
    const double s0 = g_->norm(x, xi);
    if (!(s0 > 0.5)) return CJet(l);
    CJet s = sqrt(quadratic_jet(*g_, x, xi, l));
    auto th = low_frequency_cutoff().derivatives(s0, order);
    auto om = w_.derivatives(s0, order);
    std::vector<cplx> d(order + 1);
    for (int k = 0; k <= order; ++k) {
      double acc = 0.0;
      for (int j = 0; j <= k; ++j) acc += std::tgamma(k + 1.0) / (std::tgamma(j + 1.0) * std::tgamma(k - j + 1.0)) * th[j] * om[k - j];
      d[k] = acc;
    }
    return s.compose(d);
  }

 private:
  std::shared_ptr<const Metric> g_;
  ScalarFunction w_;
};

class LinearNode final : public SymbolNode {
 public:
  LinearNode(int dim, std::vector<std::pair<cplx, Symbol>> parts) : SymbolNode(dim), parts_(std::move(parts)) {}
  bool x_independent() const override {
    for (const auto& [c, s] : parts_)
      if (!s.node().x_independent()) return false;
    return true;
  }
  int xi_degree() const override {
    int d = 0;
    for (const auto& [c, s] : parts_) {
      if (s.node().xi_degree() < 0) return -1;
      d = std::max(d, s.node().xi_degree());
    }
    return d;
  }
  std::string describe() const override {
    std::string r = "(";
    for (std::size_t i = 0; i < parts_.size(); ++i) r += (i ? " + " : "") + parts_[i].second.describe();
    return r + ")";
  }

 protected:
  CJet compute(const Point& x, const Point& xi, int order) const override {
    CJet acc(layout(order));
    for (const auto& [c, s] : parts_) acc += s.jet(x, xi, order) * c;
    return acc;
  }

 private:
  std::vector<std::pair<cplx, Symbol>> parts_;
};

class ProductNode final : public SymbolNode {
 public:
  ProductNode(Symbol a, Symbol b) : SymbolNode(a.dim()), a_(std::move(a)), b_(std::move(b)) {}
  bool x_independent() const override { return a_.node().x_independent() && b_.node().x_independent(); }
  int xi_degree() const override {
    const int da = a_.node().xi_degree(), db = b_.node().xi_degree();
    return da < 0 || db < 0 ? -1 : da + db;
  }
  std::string describe() const override { return a_.describe() + "*" + b_.describe(); }

 protected:
  CJet compute(const Point& x, const Point& xi, int order) const override {
    return a_.jet(x, xi, order) * b_.jet(x, xi, order);
  }

 private:
  Symbol a_, b_;
};

class ConjNode final : public SymbolNode {
 public:
  explicit ConjNode(Symbol a) : SymbolNode(a.dim()), a_(std::move(a)) {}
  bool x_independent() const override { return a_.node().x_independent(); }
  int xi_degree() const override { return a_.node().xi_degree(); }
  std::string describe() const override { return "conj(" + a_.describe() + ")"; }

 protected:
  CJet compute(const Point& x, const Point& xi, int order) const override { return conj(a_.jet(x, xi, order)); }

 private:
  Symbol a_;
};

class DerivNode final : public SymbolNode {
 public:
  // e indexes all 2n variables
  DerivNode(Symbol a, MultiIndex e) : SymbolNode(a.dim()), a_(std::move(a)), e_(std::move(e)) {}
  bool x_independent() const override { return a_.node().x_independent(); }
  int xi_degree() const override {
    const int d = a_.node().xi_degree();
    if (d < 0) return -1;
    int b = 0;
    for (int i = dim(); i < 2 * dim(); ++i) b += e_[i];
    return std::max(0, d - b);
  }
  std::string describe() const override {
    std::string r = "D[";
    for (int v : e_) r += std::to_string(v);
    return r + "](" + a_.describe() + ")";
  }

 protected:
  CJet compute(const Point& x, const Point& xi, int order) const override {
    return a_.jet(x, xi, order + degree(e_)).diff(e_);
  }

 private:
  Symbol a_;
  MultiIndex e_;
};

class CustomNode final : public SymbolNode {
 public:
  CustomNode(int dim, std::function<CJet(const Point&, const Point&, int)> f, std::string name)
      : SymbolNode(dim), f_(std::move(f)), name_(std::move(name)) {}
  std::string describe() const override { return name_; }

 protected:
  CJet compute(const Point& x, const Point& xi, int order) const override { return f_(x, xi, order); }

 private:
  std::function<CJet(const Point&, const Point&, int)> f_;
  std::string name_;
};

double binom(int n, int k) { return factorial(n) / (factorial(k) * factorial(n - k)); }

}  // namespace

// ---------------------------------------------------------------------------
// Scalar functions.

namespace {

class JetScalar final : public ScalarImpl {
 public:
  JetScalar(std::string name, std::function<RJet(const RJet&)> f) : name_(std::move(name)), f_(std::move(f)) {}
  std::vector<double> derivatives(double s, int jmax) const override {
    RJet t = RJet::variable(JetLayout::dense(1, jmax), 0, s);
    RJet r = f_(t);
    std::vector<double> d(jmax + 1);
    for (int k = 0; k <= jmax; ++k) d[k] = r.derivative({k});
    return d;
  }
  std::string name() const override { return name_; }

 private:
  std::string name_;
  std::function<RJet(const RJet&)> f_;
};

class ProductScalar final : public ScalarImpl {
 public:
  ProductScalar(ScalarFunction a, ScalarFunction b) : a_(std::move(a)), b_(std::move(b)) {}
  std::vector<double> derivatives(double s, int jmax) const override {
    auto da = a_.derivatives(s, jmax), db = b_.derivatives(s, jmax);
    std::vector<double> d(jmax + 1, 0.0);
    for (int k = 0; k <= jmax; ++k)
      for (int j = 0; j <= k; ++j) d[k] += binom(k, j) * da[j] * db[k - j];
    return d;
  }
  std::string name() const override { return a_.name() + "*" + b_.name(); }

 private:
  ScalarFunction a_, b_;
};

std::string fmt(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

}  // namespace

ScalarFunction ScalarFunction::from_jet(std::string name, std::function<RJet(const RJet&)> f, double m, double rho) {
  return ScalarFunction(std::make_shared<JetScalar>(std::move(name), std::move(f)), m, rho);
}

ScalarFunction ScalarFunction::power(double a) {
  return from_jet("s^" + fmt(a), [a](const RJet& t) { return pow(t, a); }, a, 1.0);
}

ScalarFunction ScalarFunction::japanese(double a) {
  return from_jet("<s>^" + fmt(a), [a](const RJet& t) { return pow(t * t + 1.0, 0.5 * a); }, a, 1.0);
}

ScalarFunction ScalarFunction::shifted_root(double c) {
  return from_jet("sqrt(s^2+" + fmt(c) + ")", [c](const RJet& t) { return sqrt(t * t + c); }, 1.0, 1.0);
}

ScalarFunction ScalarFunction::polynomial(std::vector<double> coeffs) {
  std::string name = "poly" + std::to_string(coeffs.size() ? coeffs.size() - 1 : 0);
  const double m = coeffs.empty() ? 0.0 : static_cast<double>(coeffs.size() - 1);
  return from_jet(
      name,
      [coeffs](const RJet& t) {
        RJet r = RJet::constant(t.layout(), 0.0);
        for (auto it = coeffs.rbegin(); it != coeffs.rend(); ++it) r = r * t + *it;
        return r;
      },
      m, 1.0);
}

ScalarFunction ScalarFunction::product(const ScalarFunction& a, const ScalarFunction& b) {
  return ScalarFunction(std::make_shared<ProductScalar>(a, b), a.order() + b.order(), std::min(a.rho(), b.rho()));
}

std::vector<double> ScalarFunction::derivatives(double s, int jmax) const {
  auto d = impl_->derivatives(s, jmax + shift_);
  return std::vector<double>(d.begin() + shift_, d.end());
}

std::string ScalarFunction::name() const {
  if (shift_ == 0) return impl_->name();
  return impl_->name() + "^(" + std::to_string(shift_) + ")";
}

namespace {

double step_bump(double e, double t) {
  const double d = t * (e - t);
  return d <= 0 ? 0.0 : std::exp(-1.0 / d);
}

}  // namespace

SmoothStep::SmoothStep(double eps) : eps_(eps), total_(0.0) {
  if (!(eps > 0)) throw Error(ErrorKind::HypothesisViolation, "step width must be positive");
  // cumulative Gauss–Legendre panels; the bump is analytic inside (0, ε) and flat at the
  // ends, so halving the panel count certifies the total
  auto bump = [eps](double t) { return step_bump(eps, t); };
  const int m = 256;
  cum_.assign(m + 1, 0.0);
  for (int k = 0; k < m; ++k)
    cum_[k + 1] = cum_[k] + boost::math::quadrature::gauss<double, 20>::integrate(bump, eps * k / m, eps * (k + 1) / m);
  double coarse = 0.0;
  for (int k = 0; k < m / 2; ++k)
    coarse += boost::math::quadrature::gauss<double, 20>::integrate(bump, 2 * eps * k / m, 2 * eps * (k + 1) / m);
  total_ = cum_[m];
  if (!(total_ > 0) || std::abs(total_ - coarse) > 1e-12 * total_)
    throw Error(ErrorKind::QuadratureNotConverged, "bump integral");
}

double SmoothStep::integral(double s) const {
  if (s <= 0) return 0.0;
  if (s >= eps_) return total_;
  const int m = static_cast<int>(cum_.size()) - 1;
  const double h = eps_ / m;
  const int k = std::min(m - 1, static_cast<int>(s / h));
  const double e = eps_;
  return cum_[k] + boost::math::quadrature::gauss<double, 20>::integrate([e](double t) { return step_bump(e, t); }, k * h, s);
}

std::vector<double> SmoothStep::derivatives(double s, int jmax) const {
  std::vector<double> d(jmax + 1, 0.0);
  if (s <= 0) {
    d[0] = 1.0;
    return d;
  }
  if (s >= eps_) return d;
  d[0] = 1.0 - integral(s) / total_;
  if (jmax == 0) return d;
  // f^{(k)} = −b^{(k−1)}/Z with b(t) = exp(−1/(t(ε−t)))
  RJet t = RJet::variable(JetLayout::dense(1, jmax - 1), 0, s);
  RJet u = reciprocal(t * (t * -1.0 + eps_)) * -1.0;
  if (u.value() < -700.0) return d;
  RJet b = exp(u);
  for (int k = 1; k <= jmax; ++k) d[k] = -b.derivative({k - 1}) / total_;
  return d;
}

std::string SmoothStep::name() const { return "step" + fmt(eps_); }

namespace {

class CutoffImpl final : public ScalarImpl {
 public:
  CutoffImpl() : step_(0.5) {}
  std::vector<double> derivatives(double s, int jmax) const override {
    auto d = step_.derivatives(1.0 - s, jmax);
    for (int k = 1; k <= jmax; k += 2) d[k] = -d[k];
    return d;
  }
  std::string name() const override { return "theta"; }

 private:
  SmoothStep step_;
};

}  // namespace

const ScalarFunction& low_frequency_cutoff() {
  static const ScalarFunction f(std::make_shared<CutoffImpl>(), 0.0, 1.0);
  return f;
}

// ---------------------------------------------------------------------------
// Builders.

Symbol constant_symbol(int dim, cplx c, double order) {
  return Symbol(std::make_shared<ConstNode>(dim, c), {order, 1.0, 0.0});
}

Symbol zero_symbol(int dim) { return Symbol(std::make_shared<ConstNode>(dim, cplx{}), {-1e300, 1.0, 0.0}); }

Symbol field_symbol(int dim, const FieldExpr& f, const std::vector<double>& period) {
  if (f.is_constant() && !f.exponentiated()) return constant_symbol(dim, f.constant_part());
  return x_function_symbol(
      dim, [f, period](const Point& x, int order) { return f.jet(x, period, order); }, "u(x)", f.is_constant());
}

Symbol x_function_symbol(int dim, std::function<RJet(const Point&, int)> f, std::string name, bool constant) {
  return Symbol(std::make_shared<XFunctionNode>(dim, std::move(f), std::move(name), constant), {0.0, 1.0, 0.0});
}

Symbol xi_symbol(int dim, int i) { return Symbol(std::make_shared<XiNode>(dim, i), {1.0, 1.0, 0.0}); }

Symbol metric_quadratic(std::shared_ptr<const Metric> metric) {
  return Symbol(std::make_shared<MetricQuadraticNode>(std::move(metric)), {2.0, 1.0, 0.0});
}

Symbol norm_function(std::shared_ptr<const Metric> metric, const ScalarFunction& omega) {
  const double m = omega.order(), rho = omega.rho();
  return Symbol(std::make_shared<NormFunctionNode>(std::move(metric), omega), {m, rho, 1.0 - rho});
}

Symbol metric_norm(std::shared_ptr<const Metric> metric) {
  static const ScalarFunction id = ScalarFunction::power(1.0);
  return norm_function(std::move(metric), id);
}

Symbol linear_combination(const std::vector<std::pair<cplx, Symbol>>& parts) {
  if (parts.empty()) throw std::invalid_argument("linear_combination of nothing");
  const int dim = parts.front().second.dim();
  std::vector<std::pair<cplx, Symbol>> kept;
  cplx c0{};
  SymbolClass cls{-1e300, 1.0, 0.0};
  bool any = false;
  for (const auto& [c, s] : parts) {
    if (c == cplx{} || s.is_zero()) continue;
    if (auto v = s.node().constant_value()) {
      c0 += c * *v;
      cls.m = std::max(cls.m, s.cls().m);
      continue;
    }
    if (!any) {
      cls.rho = s.cls().rho;
      cls.delta = s.cls().delta;
    }
    any = true;
    cls.m = std::max(cls.m, s.cls().m);
    cls.rho = std::min(cls.rho, s.cls().rho);
    cls.delta = std::max(cls.delta, s.cls().delta);
    kept.emplace_back(c, s);
  }
  if (kept.empty()) return c0 == cplx{} ? zero_symbol(dim) : constant_symbol(dim, c0, std::max(cls.m, 0.0));
  if (c0 != cplx{}) {
    kept.emplace_back(1.0, constant_symbol(dim, c0));
    cls.m = std::max(cls.m, 0.0);
  }
  if (kept.size() == 1 && kept[0].first == cplx(1.0)) return kept[0].second;
  return Symbol(std::make_shared<LinearNode>(dim, std::move(kept)), cls);
}

Symbol operator+(const Symbol& a, const Symbol& b) { return linear_combination({{1.0, a}, {1.0, b}}); }
Symbol operator-(const Symbol& a, const Symbol& b) { return linear_combination({{1.0, a}, {-1.0, b}}); }
Symbol operator*(cplx c, const Symbol& a) { return linear_combination({{c, a}}); }

Symbol operator*(const Symbol& a, const Symbol& b) {
  if (a.is_zero() || b.is_zero()) return zero_symbol(a.dim());
  if (auto v = a.node().constant_value()) return (*v * b).with_class({b.cls().m + a.cls().m, b.cls().rho, b.cls().delta});
  if (auto v = b.node().constant_value()) return (*v * a).with_class({a.cls().m + b.cls().m, a.cls().rho, a.cls().delta});
  SymbolClass c{a.cls().m + b.cls().m, std::min(a.cls().rho, b.cls().rho), std::max(a.cls().delta, b.cls().delta)};
  return Symbol(std::make_shared<ProductNode>(a, b), c);
}

Symbol conj(const Symbol& a) {
  if (auto v = a.node().constant_value()) return constant_symbol(a.dim(), std::conj(*v), a.cls().m);
  return Symbol(std::make_shared<ConjNode>(a), a.cls());
}

Symbol d_xi(const Symbol& a, const MultiIndex& beta) {
  const int n = a.dim(), b = degree(beta);
  if (b == 0) return a;
  if (a.is_zero() || a.node().constant_value()) return zero_symbol(n);
  const int d = a.node().xi_degree();
  if (d >= 0 && d < b) return zero_symbol(n);
  MultiIndex e(2 * n, 0);
  for (int i = 0; i < n && i < static_cast<int>(beta.size()); ++i) e[n + i] = beta[i];
  SymbolClass c = a.cls();
  c.m -= c.rho * b;
  return Symbol(std::make_shared<DerivNode>(a, e), c);
}

Symbol d_x(const Symbol& a, const MultiIndex& alpha) {
  const int n = a.dim(), k = degree(alpha);
  if (k == 0) return a;
  if (a.is_zero() || a.node().x_independent()) return zero_symbol(n);
  MultiIndex e(2 * n, 0);
  for (int i = 0; i < n && i < static_cast<int>(alpha.size()); ++i) e[i] = alpha[i];
  SymbolClass c = a.cls();
  c.m += c.delta * k;
  return Symbol(std::make_shared<DerivNode>(a, e), c);
}

Symbol custom_symbol(int dim, std::function<CJet(const Point&, const Point&, int)> f, std::string name,
                     SymbolClass cls) {
  return Symbol(std::make_shared<CustomNode>(dim, std::move(f), std::move(name)), cls);
}

// ---------------------------------------------------------------------------
// Expansions.

namespace {
constexpr double kOrderTol = 1e-9;
constexpr double kNoRemainder = -1e300;
}  // namespace

Expansion Expansion::single(const Symbol& s, double order, double tau, double kappa) {
  Expansion e(s.dim(), tau, kappa, s.cls().rho, s.cls().delta);
  e.add(order, s);
  return e;
}

double Expansion::leading_order() const { return terms_.empty() ? remainder_ : terms_.front().order; }

void Expansion::add(double order, const Symbol& s, std::vector<Factor> factors) {
  if (s.is_zero()) return;
  for (auto& t : terms_) {
    if (std::abs(t.order - order) > kOrderTol) continue;
    t.symbol = t.symbol + s;
    const bool hinted = !t.factors.empty() && !factors.empty();
    if (!hinted) {
      t.factors.clear();
      return;
    }
    for (auto& f : factors) {
      bool merged = false;
      for (auto& g : t.factors)
        if (g.omega.same_as(f.omega)) {
          g.coeff = g.coeff + f.coeff;
          merged = true;
          break;
        }
      if (!merged) t.factors.push_back(f);
    }
    return;
  }
  Term t{order, s, std::move(factors)};
  auto it = std::find_if(terms_.begin(), terms_.end(), [&](const Term& u) { return u.order < order; });
  terms_.insert(it, std::move(t));
}

Expansion Expansion::truncated(double min_order) const {
  Expansion r(dim_, tau_, kappa_, rho_, delta_);
  r.remainder_ = remainder_;
  for (const auto& t : terms_) {
    if (t.order >= min_order - kOrderTol)
      r.terms_.push_back(t);
    else
      r.remainder_ = std::max(r.remainder_, t.order);
  }
  return r;
}

Expansion Expansion::scaled(cplx c) const {
  Expansion r(dim_, tau_, kappa_, rho_, delta_);
  r.remainder_ = remainder_;
  for (const auto& t : terms_) {
    std::vector<Factor> f;
    for (const auto& g : t.factors) f.push_back({c * g.coeff, g.omega});
    r.add(t.order, c * t.symbol, std::move(f));
  }
  return r;
}

Symbol Expansion::sum() const {
  std::vector<std::pair<cplx, Symbol>> parts;
  for (const auto& t : terms_) parts.emplace_back(1.0, t.symbol);
  if (parts.empty()) return zero_symbol(dim_);
  return linear_combination(parts);
}

cplx Expansion::operator()(const Point& x, const Point& xi) const { return partial_sum(x, xi, kNoRemainder); }

cplx Expansion::partial_sum(const Point& x, const Point& xi, double above) const {
  cplx acc{};
  for (const auto& t : terms_)
    if (t.order > above) acc += t.symbol(x, xi);
  return acc;
}

Expansion Expansion::pruned(const std::vector<Point>& xs, const std::vector<Point>& xis, double rel_tol,
                            double scale) const {
  Expansion r(dim_, tau_, kappa_, rho_, delta_);
  r.remainder_ = remainder_;
  for (const auto& t : terms_) {
    double m = 0.0;
    for (const auto& x : xs)
      for (const auto& xi : xis) {
        double nx = 0.0;
        for (double v : xi) nx += v * v;
        m = std::max(m, std::abs(t.symbol(x, xi)) / std::pow(1.0 + std::sqrt(nx), t.order));
      }
    if (m > rel_tol * scale) r.terms_.push_back(t);
  }
  return r;
}

namespace {
void check_tags(const Expansion& a, const Expansion& b) {
  if (a.dim() != b.dim() || std::abs(a.tau() - b.tau()) > 1e-12 || std::abs(a.kappa() - b.kappa()) > 1e-12)
    throw Error(ErrorKind::TagMismatch, "expansions carry different (tau, kappa) tags");
}
}  // namespace

Expansion series_add(const Expansion& a, const Expansion& b) {
  check_tags(a, b);
  Expansion r(a.dim(), a.tau(), a.kappa(), std::min(a.rho(), b.rho()), std::max(a.delta(), b.delta()));
  r.set_remainder(std::max(a.remainder_order(), b.remainder_order()));
  for (const auto* e : {&a, &b})
    for (const auto& t : e->terms()) r.add(t.order, t.symbol, t.factors);
  return r.truncated(r.remainder_order());
}

Expansion series_sub(const Expansion& a, const Expansion& b) { return series_add(a, b.scaled(-1.0)); }

Expansion series_mul(const Expansion& a, const Expansion& b) {
  check_tags(a, b);
  Expansion r(a.dim(), a.tau(), a.kappa(), std::min(a.rho(), b.rho()), std::max(a.delta(), b.delta()));
  double rem = kNoRemainder;
  if (a.remainder_order() > kNoRemainder && !b.empty()) rem = std::max(rem, a.remainder_order() + b.leading_order());
  if (b.remainder_order() > kNoRemainder && !a.empty()) rem = std::max(rem, b.remainder_order() + a.leading_order());
  r.set_remainder(rem);
  for (const auto& s : a.terms())
    for (const auto& t : b.terms()) {
      std::vector<Factor> f;
      if (!s.factors.empty() && !t.factors.empty())
        for (const auto& p : s.factors)
          for (const auto& q : t.factors) f.push_back({p.coeff * q.coeff, ScalarFunction::product(p.omega, q.omega)});
      r.add(s.order + t.order, s.symbol * t.symbol, std::move(f));
    }
  return r.truncated(rem);
}

// ---------------------------------------------------------------------------
// Seminorm reports.

bool SeminormReport::any_violation() const {
  for (const auto& e : entries)
    if (e.violation) return true;
  return false;
}

namespace {

void classify(SeminormEntry& e, const std::vector<double>& r, const std::vector<double>& M, double fit_from,
              double slack) {
  std::vector<double> lx, ly;
  e.constant = 0.0;
  for (std::size_t i = 0; i < r.size(); ++i) {
    e.constant = std::max(e.constant, M[i] / std::pow(1.0 + r[i], e.bound));
    if (r[i] >= fit_from && M[i] > 1e-300) {
      lx.push_back(std::log(r[i]));
      ly.push_back(std::log(M[i]));
    }
  }
  if (lx.size() < 2) {
    e.fitted_exponent = -1e9;
    return;
  }
  const double n = static_cast<double>(lx.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    sx += lx[i];
    sy += ly[i];
    sxx += lx[i] * lx[i];
    sxy += lx[i] * ly[i];
  }
  e.fitted_exponent = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  e.violation = e.fitted_exponent > e.bound + slack;
  // log factors: local slopes sit above the bound and drift down towards it
  const std::size_t k = lx.size();
  const double first = (ly[1] - ly[0]) / (lx[1] - lx[0]) - e.bound;
  const double last = (ly[k - 1] - ly[k - 2]) / (lx[k - 1] - lx[k - 2]) - e.bound;
  e.log_growth = last > 0.01 && first > last;
}

std::vector<double> log_grid(double a, double b, int count) {
  std::vector<double> r(count);
  for (int i = 0; i < count; ++i) r[i] = a * std::pow(b / a, count == 1 ? 0.0 : double(i) / (count - 1));
  return r;
}

}  // namespace

SeminormReport seminorm_report(const Symbol& a, const SeminormGrid& grid) {
  const int n = a.dim();
  const auto radii = log_grid(grid.xi_min, grid.xi_max, grid.count);
  const int order = grid.max_x_order + grid.max_xi_order;
  std::vector<std::pair<MultiIndex, MultiIndex>> idx;
  for (const auto& al : multi_indices_up_to(n, grid.max_x_order))
    for (const auto& be : multi_indices_up_to(n, grid.max_xi_order)) idx.emplace_back(al, be);
  std::vector<std::vector<double>> M(idx.size(), std::vector<double>(radii.size(), 0.0));
  for (std::size_t ri = 0; ri < radii.size(); ++ri)
    for (const auto& x : grid.xs)
      for (const auto& d : grid.directions) {
        Point xi(n);
        for (int i = 0; i < n; ++i) xi[i] = radii[ri] * d[i];
        CJet j = a.jet(x, xi, order);
        for (std::size_t k = 0; k < idx.size(); ++k) {
          MultiIndex e = idx[k].first;
          e.insert(e.end(), idx[k].second.begin(), idx[k].second.end());
          M[k][ri] = std::max(M[k][ri], std::abs(j.derivative(e)));
        }
      }
  SeminormReport rep;
  const auto& c = a.cls();
  for (std::size_t k = 0; k < idx.size(); ++k) {
    SeminormEntry e;
    e.alpha = idx[k].first;
    e.beta = idx[k].second;
    e.bound = c.m + c.delta * degree(e.alpha) - c.rho * degree(e.beta);
    classify(e, radii, M[k], grid.fit_from, grid.slack);
    rep.entries.push_back(e);
  }
  return rep;
}

SeminormReport scalar_seminorm_report(const ScalarFunction& f, double s_min, double s_max, int count, int jmax,
                                      double slack) {
  const auto radii = log_grid(s_min, s_max, count);
  std::vector<std::vector<double>> M(jmax + 1, std::vector<double>(radii.size()));
  for (std::size_t i = 0; i < radii.size(); ++i) {
    auto d = f.derivatives(radii[i], jmax);
    for (int j = 0; j <= jmax; ++j) M[j][i] = std::abs(d[j]);
  }
  SeminormReport rep;
  for (int j = 0; j <= jmax; ++j) {
    SeminormEntry e;
    e.beta = {j};
    e.bound = f.order() - f.rho() * j;
    classify(e, radii, M[j], s_min, slack);
    rep.entries.push_back(e);
  }
  return rep;
}

}  // namespace pdo
