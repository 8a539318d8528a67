#pragma once

// Symbols on T*M, scalar functions, and truncated asymptotic expansions.

#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "pdo/fields.hpp"
#include "pdo/jet.hpp"

namespace pdo {

/// Class tags (m, ρ, δ) of S^m_{ρ,δ}.
struct SymbolClass {
  double m = 0.0;
  double rho = 1.0;
  double delta = 0.0;
};

/// Evaluates jets of a function a(x, ξ) on the variables (x_1..x_n, ξ_1..ξ_n).
class SymbolNode {
 public:
  explicit SymbolNode(int dim) : dim_(dim) {}
  virtual ~SymbolNode() = default;
  SymbolNode(const SymbolNode&) = delete;
  SymbolNode& operator=(const SymbolNode&) = delete;

  int dim() const { return dim_; }
  /// Jet of total order `order` at (x, ξ); memoised on the last point.
  CJet jet(const Point& x, const Point& xi, int order) const;

  virtual bool is_zero() const { return false; }
  virtual std::optional<cplx> constant_value() const { return std::nullopt; }
  virtual bool x_independent() const { return false; }
  /// Degree as a polynomial in ξ, or -1 when not polynomial.
  virtual int xi_degree() const { return -1; }
  virtual std::string describe() const = 0;

 protected:
  virtual CJet compute(const Point& x, const Point& xi, int order) const = 0;
  LayoutPtr layout(int order) const { return JetLayout::dense(2 * dim_, order); }

 private:
  int dim_;
  mutable std::mutex mu_;
  mutable bool cached_ = false;
  mutable Point cx_, cxi_;
  mutable CJet cjet_;
};

class Symbol {
 public:
  Symbol() = default;
  Symbol(std::shared_ptr<const SymbolNode> node, SymbolClass cls) : node_(std::move(node)), cls_(cls) {}

  int dim() const { return node_->dim(); }
  const SymbolClass& cls() const { return cls_; }
  Symbol with_class(SymbolClass c) const { return Symbol(node_, c); }
  const SymbolNode& node() const { return *node_; }
  const std::shared_ptr<const SymbolNode>& node_ptr() const { return node_; }
  explicit operator bool() const { return static_cast<bool>(node_); }

  CJet jet(const Point& x, const Point& xi, int order) const { return node_->jet(x, xi, order); }
  cplx operator()(const Point& x, const Point& xi) const { return jet(x, xi, 0).value(); }
  /// ∂_x^α ∂_ξ^β a(x, ξ).
  cplx derivative(const Point& x, const Point& xi, const MultiIndex& alpha, const MultiIndex& beta) const;

  bool is_zero() const { return node_->is_zero(); }
  std::string describe() const { return node_->describe(); }

 private:
  std::shared_ptr<const SymbolNode> node_;
  SymbolClass cls_;
};

// ---------------------------------------------------------------------------
// Scalar functions ω(s) with exact derivatives.

class ScalarImpl {
 public:
  virtual ~ScalarImpl() = default;
  /// ω^{(k)}(s) for k = 0..jmax.
  virtual std::vector<double> derivatives(double s, int jmax) const = 0;
  virtual std::string name() const = 0;
};

class ScalarFunction {
 public:
  ScalarFunction() = default;
  ScalarFunction(std::shared_ptr<const ScalarImpl> impl, double m, double rho, int shift = 0)
      : impl_(std::move(impl)), m_(m), rho_(rho), shift_(shift) {}

  /// Functions defined through a jet expression in one variable.
  static ScalarFunction from_jet(std::string name, std::function<RJet(const RJet&)> f, double m, double rho);
  static ScalarFunction power(double a);               // s^a (s > 0)
  static ScalarFunction japanese(double a);            // (1 + s²)^{a/2}
  static ScalarFunction shifted_root(double c);        // √(s² + c)
  static ScalarFunction polynomial(std::vector<double> coeffs);  // Σ a_k s^k
  static ScalarFunction product(const ScalarFunction& a, const ScalarFunction& b);

  std::vector<double> derivatives(double s, int jmax) const;
  double operator()(double s) const { return derivatives(s, 0)[0]; }
  /// ω^{(j)} as a function of class S^{m − jρ}_ρ.
  ScalarFunction derivative(int j) const { return ScalarFunction(impl_, m_ - j * rho_, rho_, shift_ + j); }

  double order() const { return m_; }
  double rho() const { return rho_; }
  int shift() const { return shift_; }
  bool same_as(const ScalarFunction& o) const { return impl_ == o.impl_ && shift_ == o.shift_; }
  std::string name() const;
  const std::shared_ptr<const ScalarImpl>& impl() const { return impl_; }

 private:
  std::shared_ptr<const ScalarImpl> impl_;
  double m_ = 0.0;
  double rho_ = 1.0;
  int shift_ = 0;
};

/// Nonincreasing C^∞ step: 1 for s ≤ 0, 0 for s ≥ ε, built as the normalised
/// integral of the bump exp(−1/(t(ε−t))) on (0, ε).
class SmoothStep final : public ScalarImpl {
 public:
  explicit SmoothStep(double eps);
  std::vector<double> derivatives(double s, int jmax) const override;
  std::string name() const override;
  double eps() const { return eps_; }

 private:
  double integral(double s) const;
  double eps_;
  double total_;
  std::vector<double> cum_;  // integral up to each panel boundary
};

/// Low-frequency cutoff θ: 0 for s ≤ 1/2, 1 for s ≥ 1.
const ScalarFunction& low_frequency_cutoff();

// ---------------------------------------------------------------------------
// Symbol builders.

Symbol constant_symbol(int dim, cplx c, double order = 0.0);
Symbol zero_symbol(int dim);
/// Multiplication by a field u(x).
Symbol field_symbol(int dim, const FieldExpr& f, const std::vector<double>& period);
/// Multiplication by a function given through its x-jets.
Symbol x_function_symbol(int dim, std::function<RJet(const Point&, int)> f, std::string name,
                         bool constant = false);
/// The coordinate ξ_i.
Symbol xi_symbol(int dim, int i);
/// Σ g^{ij}(x) ξ_i ξ_j (exact polynomial).
Symbol metric_quadratic(std::shared_ptr<const Metric> metric);
/// θ(|ξ|_x) ω(|ξ|_x) with the low-frequency cutoff θ.
Symbol norm_function(std::shared_ptr<const Metric> metric, const ScalarFunction& omega);
/// θ(|ξ|_x) |ξ|_x.
Symbol metric_norm(std::shared_ptr<const Metric> metric);
/// Σ c_k a_k.
Symbol linear_combination(const std::vector<std::pair<cplx, Symbol>>& parts);
Symbol operator+(const Symbol& a, const Symbol& b);
Symbol operator-(const Symbol& a, const Symbol& b);
Symbol operator*(const Symbol& a, const Symbol& b);
Symbol operator*(cplx c, const Symbol& a);
Symbol conj(const Symbol& a);
Symbol d_xi(const Symbol& a, const MultiIndex& beta);
Symbol d_x(const Symbol& a, const MultiIndex& alpha);
/// Generic node from a jet callback (used by modules that build their own primitives).
Symbol custom_symbol(int dim, std::function<CJet(const Point&, const Point&, int)> f, std::string name,
                     SymbolClass cls);

// ---------------------------------------------------------------------------
// Asymptotic expansions.

/// Hint that a term equals Σ coeff · ω(|ξ|_x).
struct Factor {
  Symbol coeff;
  ScalarFunction omega;
};

struct Term {
  double order = 0.0;
  Symbol symbol;
  std::vector<Factor> factors;
};

class Expansion {
 public:
  Expansion() = default;
  Expansion(int dim, double tau, double kappa, double rho = 1.0, double delta = 0.0)
      : dim_(dim), tau_(tau), kappa_(kappa), rho_(rho), delta_(delta) {}

  static Expansion single(const Symbol& s, double order, double tau = 0.0, double kappa = 0.5);

  int dim() const { return dim_; }
  double tau() const { return tau_; }
  double kappa() const { return kappa_; }
  double rho() const { return rho_; }
  double delta() const { return delta_; }
  double remainder_order() const { return remainder_; }
  const std::vector<Term>& terms() const { return terms_; }
  bool empty() const { return terms_.empty(); }
  double leading_order() const;

  Expansion& set_tau(double t) {
    tau_ = t;
    return *this;
  }
  Expansion& set_remainder(double r) {
    remainder_ = r;
    return *this;
  }
  Expansion& set_class(double rho, double delta) {
    rho_ = rho;
    delta_ = delta;
    return *this;
  }

  /// Adds a term; terms of equal order are merged and the list stays sorted.
  void add(double order, const Symbol& s, std::vector<Factor> factors = {});
  /// Drops every term with order below `min_order` and records it as remainder.
  Expansion truncated(double min_order) const;
  Expansion scaled(cplx c) const;

  Symbol sum() const;
  cplx operator()(const Point& x, const Point& xi) const;
  /// Sum of the terms with order > `above`.
  cplx partial_sum(const Point& x, const Point& xi, double above) const;

  /// Removes leading terms that vanish numerically (relative to `scale`) on the sample grid.
  Expansion pruned(const std::vector<Point>& xs, const std::vector<Point>& xis, double rel_tol, double scale) const;

 private:
  int dim_ = 1;
  double tau_ = 0.0;
  double kappa_ = 0.5;
  double rho_ = 1.0;
  double delta_ = 0.0;
  double remainder_ = -1e300;
  std::vector<Term> terms_;
};

Expansion series_add(const Expansion& a, const Expansion& b);
Expansion series_sub(const Expansion& a, const Expansion& b);
Expansion series_mul(const Expansion& a, const Expansion& b);

// ---------------------------------------------------------------------------
// Class-membership report.

struct SeminormGrid {
  std::vector<Point> xs;
  std::vector<Point> directions;  // unit covectors
  double xi_min = 1.0;
  double xi_max = 1e3;
  int count = 16;
  int max_x_order = 1;
  int max_xi_order = 2;
  double fit_from = 10.0;  // only |ξ| >= fit_from enters the exponent fit
  double slack = 0.2;
};

struct SeminormEntry {
  MultiIndex alpha, beta;
  double constant = 0.0;          // max |∂a| / (1+|ξ|)^{bound}
  double fitted_exponent = 0.0;
  double bound = 0.0;             // m + δ|α| − ρ|β|
  bool violation = false;
  bool log_growth = false;
};

struct SeminormReport {
  std::vector<SeminormEntry> entries;
  bool any_violation() const;
};

SeminormReport seminorm_report(const Symbol& a, const SeminormGrid& grid);

/// Same check for ScalarFunction classes S^m_ρ on s ∈ [s_min, s_max].
SeminormReport scalar_seminorm_report(const ScalarFunction& f, double s_min, double s_max, int count, int jmax,
                                      double slack = 0.2);

}  // namespace pdo
