#pragma once

// Differentiable primitives on a periodic box: trigonometric-polynomial
// fields, metrics and linear connections with exact jets.

#include <memory>
#include <vector>

#include "pdo/jet.hpp"

namespace pdo {

using Point = std::vector<double>;

struct TrigTerm {
  std::vector<int> k;  // wave numbers, one per coordinate
  double cos_coef = 0.0;
  double sin_coef = 0.0;
};

/// a·b(|x − c|/r) with the C^∞ bump b(t) = exp(1 − 1/(1 − t²)) on t < 1 (b(0) = 1);
/// x − c is wrapped to the shortest representative per axis.  A positive `width`
/// multiplies by the Gaussian profile exp(−|x − c|²/(2·width²)).
struct BumpTerm {
  std::vector<double> center;
  double radius = 1.0;
  double amplitude = 1.0;
  double width = 0.0;
};

/// c + Σ (a cos(2π k·x/L) + b sin(2π k·x/L)) + Σ bumps, optionally exponentiated.
class FieldExpr {
 public:
  FieldExpr() = default;
  FieldExpr(double constant, std::vector<TrigTerm> terms, bool exponentiate = false)
      : constant_(constant), terms_(std::move(terms)), exp_(exponentiate) {}
  FieldExpr(double constant, std::vector<TrigTerm> terms, std::vector<BumpTerm> bumps, bool exponentiate = false)
      : constant_(constant), terms_(std::move(terms)), bumps_(std::move(bumps)), exp_(exponentiate) {}

  static FieldExpr constant(double c) { return FieldExpr(c, {}); }

  /// Jet in the coordinates x (dense layout, `order`).
  RJet jet(const Point& x, const std::vector<double>& period, int order) const;
  double value(const Point& x, const std::vector<double>& period) const;
  bool is_zero() const { return !exp_ && constant_ == 0.0 && terms_.empty() && bumps_.empty(); }
  bool is_constant() const { return terms_.empty() && bumps_.empty(); }

  double constant_part() const { return constant_; }
  const std::vector<TrigTerm>& terms() const { return terms_; }
  const std::vector<BumpTerm>& bumps() const { return bumps_; }
  bool exponentiated() const { return exp_; }

 private:
  double constant_ = 0.0;
  std::vector<TrigTerm> terms_;
  std::vector<BumpTerm> bumps_;
  bool exp_ = false;
};

class Metric {
 public:
  /// `inverse` holds g^{ij} row-major (n*n entries, symmetric).
  Metric(int dim, std::vector<double> period, std::vector<FieldExpr> inverse);

  int dim() const { return dim_; }
  const std::vector<double>& period() const { return period_; }
  const std::vector<FieldExpr>& inverse_fields() const { return inv_; }

  std::vector<RJet> inverse(const Point& x, int order) const;
  std::vector<RJet> lower(const Point& x, int order) const;
  /// Canonical density g = |det g^{ij}|^{-1/2}.
  RJet density(const Point& x, int order) const;
  double norm(const Point& x, const std::vector<double>& xi) const;

 private:
  int dim_;
  std::vector<double> period_;
  std::vector<FieldExpr> inv_;
};

class Connection {
 public:
  virtual ~Connection() = default;
  virtual int dim() const = 0;
  /// Γ^i_{jk} stored at (i*n + j)*n + k, as jets in x (dense layout, `order`).
  virtual std::vector<RJet> christoffel(const Point& x, int order) const = 0;
  virtual bool is_flat_chart() const { return false; }
  std::vector<double> christoffel_values(const Point& x) const;
};

/// Christoffel symbols given component-wise as fields.
class FieldConnection final : public Connection {
 public:
  FieldConnection(int dim, std::vector<double> period, std::vector<FieldExpr> components);
  static std::shared_ptr<FieldConnection> flat(int dim, std::vector<double> period);

  int dim() const override { return dim_; }
  std::vector<RJet> christoffel(const Point& x, int order) const override;
  bool is_flat_chart() const override;
  const std::vector<FieldExpr>& components() const { return comps_; }

 private:
  int dim_;
  std::vector<double> period_;
  std::vector<FieldExpr> comps_;
};

/// Γ^k_{ij} = ½ g^{kl} (∂_i g_{jl} + ∂_j g_{il} − ∂_l g_{ij}).
class LeviCivitaConnection final : public Connection {
 public:
  explicit LeviCivitaConnection(std::shared_ptr<const Metric> metric) : metric_(std::move(metric)) {}
  int dim() const override { return metric_->dim(); }
  std::vector<RJet> christoffel(const Point& x, int order) const override;
  bool is_flat_chart() const override;
  const Metric& metric() const { return *metric_; }

 private:
  std::shared_ptr<const Metric> metric_;
};

struct ManifoldModel {
  int dim = 1;
  std::vector<double> period;
  std::shared_ptr<const Connection> connection;
  std::shared_ptr<const Metric> metric;  // optional
  double kappa = 0.5;
  double injectivity_fraction = 0.25;

  static ManifoldModel flat(int dim, double period = 6.283185307179586);
  static ManifoldModel from_connection(int dim, std::vector<double> period, std::vector<FieldExpr> christoffel,
                                       double kappa = 0.5);
  static ManifoldModel from_metric(int dim, std::vector<double> period, std::vector<FieldExpr> metric_inverse,
                                   double kappa = 0.5);

  /// Shortest representative of y − x modulo the period.
  std::vector<double> chart_difference(const Point& x, const Point& y) const;
};

}  // namespace pdo
