#include "pdo/fields.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "pdo/errors.hpp"

namespace pdo {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::NoConvergence: return "NoConvergence";
    case ErrorKind::OutOfNeighbourhood: return "OutOfNeighbourhood";
    case ErrorKind::JetUnstable: return "JetUnstable";
    case ErrorKind::TagMismatch: return "TagMismatch";
    case ErrorKind::ClassViolation: return "ClassViolation";
    case ErrorKind::HypothesisViolation: return "HypothesisViolation";
    case ErrorKind::MissingPEntry: return "MissingPEntry";
    case ErrorKind::DegreeViolation: return "DegreeViolation";
    case ErrorKind::QuadratureNotConverged: return "QuadratureNotConverged";
    case ErrorKind::PositivityViolation: return "PositivityViolation";
    case ErrorKind::DefectNotDecaying: return "DefectNotDecaying";
    case ErrorKind::ResidualNotDropping: return "ResidualNotDropping";
    case ErrorKind::SupportViolation: return "SupportViolation";
    case ErrorKind::EigenFailure: return "EigenFailure";
    case ErrorKind::InsufficientPoints: return "InsufficientPoints";
    case ErrorKind::AliasRisk: return "AliasRisk";
    case ErrorKind::ConfigInvalid: return "ConfigInvalid";
  }
  return "Unknown";
}

namespace {

double wrap(double d, double L) { return d - L * std::round(d / L); }

RJet bump_jet(const BumpTerm& b, const Point& x, const std::vector<double>& period, const LayoutPtr& layout) {
  const int n = static_cast<int>(x.size());
  RJet t2(layout), d2(layout);
  double v = 0.0;
  for (int i = 0; i < n; ++i) {
    const double c = i < static_cast<int>(b.center.size()) ? b.center[i] : 0.0;
    const double d = wrap(x[i] - c, period[i]);
    v += d * d;
    RJet e = RJet::variable(layout, i, d);
    d2 += e * e;
  }
  t2 = d2 * (1.0 / (b.radius * b.radius));
  const double s = 1.0 - v / (b.radius * b.radius);
  if (s <= 0.0 || 1.0 - 1.0 / s < -700.0) return RJet(layout);
  RJet e = reciprocal(t2 * -1.0 + 1.0) * -1.0 + 1.0;
  if (b.width > 0.0) e += d2 * (-0.5 / (b.width * b.width));
  return exp(e) * b.amplitude;
}

}  // namespace

RJet FieldExpr::jet(const Point& x, const std::vector<double>& period, int order) const {
  const int n = static_cast<int>(x.size());
  auto layout = JetLayout::dense(n, order);
  RJet acc = RJet::constant(layout, constant_);
  for (const auto& t : terms_) {
    RJet arg(layout);
    for (int i = 0; i < n; ++i) {
      const int k = i < static_cast<int>(t.k.size()) ? t.k[i] : 0;
      if (k == 0) continue;
      arg += RJet::variable(layout, i, x[i]) * (2.0 * std::numbers::pi * k / period[i]);
    }
    if (t.cos_coef != 0.0) acc += cos(arg) * t.cos_coef;
    if (t.sin_coef != 0.0) acc += sin(arg) * t.sin_coef;
  }
  for (const auto& b : bumps_) acc += bump_jet(b, x, period, layout);
  return exp_ ? exp(acc) : acc;
}

double FieldExpr::value(const Point& x, const std::vector<double>& period) const {
  double acc = constant_;
  for (const auto& t : terms_) {
    double arg = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const int k = i < t.k.size() ? t.k[i] : 0;
      arg += 2.0 * std::numbers::pi * k * x[i] / period[i];
    }
    acc += t.cos_coef * std::cos(arg) + t.sin_coef * std::sin(arg);
  }
  for (const auto& b : bumps_) acc += bump_jet(b, x, period, JetLayout::dense(static_cast<int>(x.size()), 0)).value();
  return exp_ ? std::exp(acc) : acc;
}

Metric::Metric(int dim, std::vector<double> period, std::vector<FieldExpr> inverse)
    : dim_(dim), period_(std::move(period)), inv_(std::move(inverse)) {
  if (dim_ < 1 || dim_ > 2) throw Error(ErrorKind::ConfigInvalid, "metric dimension must be 1 or 2");
  if (static_cast<int>(inv_.size()) != dim_ * dim_) throw Error(ErrorKind::ConfigInvalid, "metric needs n*n entries");
}

std::vector<RJet> Metric::inverse(const Point& x, int order) const {
  std::vector<RJet> out;
  for (const auto& f : inv_) out.push_back(f.jet(x, period_, order));
  return out;
}

std::vector<RJet> Metric::lower(const Point& x, int order) const {
  auto gi = inverse(x, order);
  if (dim_ == 1) return {reciprocal(gi[0])};
  RJet det = gi[0] * gi[3] - gi[1] * gi[2];
  RJet inv_det = reciprocal(det);
  return {gi[3] * inv_det, -gi[1] * inv_det, -gi[2] * inv_det, gi[0] * inv_det};
}

RJet Metric::density(const Point& x, int order) const {
  auto gi = inverse(x, order);
  RJet det = dim_ == 1 ? gi[0] : gi[0] * gi[3] - gi[1] * gi[2];
  return pow(det, -0.5);
}

double Metric::norm(const Point& x, const std::vector<double>& xi) const {
  double s = 0.0;
  for (int i = 0; i < dim_; ++i)
    for (int j = 0; j < dim_; ++j) s += inv_[i * dim_ + j].value(x, period_) * xi[i] * xi[j];
  return std::sqrt(s);
}

std::vector<double> Connection::christoffel_values(const Point& x) const {
  auto jets = christoffel(x, 0);
  std::vector<double> v;
  v.reserve(jets.size());
  for (const auto& j : jets) v.push_back(j.value());
  return v;
}

FieldConnection::FieldConnection(int dim, std::vector<double> period, std::vector<FieldExpr> components)
    : dim_(dim), period_(std::move(period)), comps_(std::move(components)) {
  if (dim_ < 1 || dim_ > 2) throw Error(ErrorKind::ConfigInvalid, "connection dimension must be 1 or 2");
  if (static_cast<int>(comps_.size()) != dim_ * dim_ * dim_)
    throw Error(ErrorKind::ConfigInvalid, "connection needs n^3 components");
  for (const auto& c : comps_)
    if (c.exponentiated()) throw Error(ErrorKind::ConfigInvalid, "Christoffel components must be trig polynomials");
}

std::shared_ptr<FieldConnection> FieldConnection::flat(int dim, std::vector<double> period) {
  return std::make_shared<FieldConnection>(dim, std::move(period), std::vector<FieldExpr>(dim * dim * dim));
}

std::vector<RJet> FieldConnection::christoffel(const Point& x, int order) const {
  std::vector<RJet> out;
  out.reserve(comps_.size());
  auto layout = JetLayout::dense(dim_, order);
  for (const auto& c : comps_) out.push_back(c.is_zero() ? RJet(layout) : c.jet(x, period_, order));
  return out;
}

bool FieldConnection::is_flat_chart() const {
  for (const auto& c : comps_)
    if (!c.is_zero()) return false;
  return true;
}

std::vector<RJet> LeviCivitaConnection::christoffel(const Point& x, int order) const {
  const int n = metric_->dim();
  auto gi = metric_->inverse(x, order);
  auto gl = metric_->lower(x, order + 1);
  // dg[(a*n+b)*n + c] = ∂_c g_{ab}
  std::vector<RJet> dg;
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b)
      for (int c = 0; c < n; ++c) dg.push_back(gl[a * n + b].diff(c));
  auto layout = JetLayout::dense(n, order);
  std::vector<RJet> out;
  for (int k = 0; k < n; ++k)
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        RJet acc(layout);
        for (int l = 0; l < n; ++l)
          acc += gi[k * n + l] * (dg[(j * n + l) * n + i] + dg[(i * n + l) * n + j] - dg[(i * n + j) * n + l]);
        out.push_back(acc * 0.5);
      }
  return out;
}

bool LeviCivitaConnection::is_flat_chart() const {
  for (const auto& f : metric_->inverse_fields())
    if (!f.is_constant()) return false;
  return true;
}

ManifoldModel ManifoldModel::flat(int dim, double period) {
  ManifoldModel m;
  m.dim = dim;
  m.period.assign(dim, period);
  m.connection = FieldConnection::flat(dim, m.period);
  std::vector<FieldExpr> id(dim * dim);
  for (int i = 0; i < dim; ++i) id[i * dim + i] = FieldExpr::constant(1.0);
  m.metric = std::make_shared<Metric>(dim, m.period, id);
  return m;
}

ManifoldModel ManifoldModel::from_connection(int dim, std::vector<double> period, std::vector<FieldExpr> christoffel,
                                             double kappa) {
  ManifoldModel m;
  m.dim = dim;
  m.period = std::move(period);
  m.connection = std::make_shared<FieldConnection>(dim, m.period, std::move(christoffel));
  m.kappa = kappa;
  return m;
}

ManifoldModel ManifoldModel::from_metric(int dim, std::vector<double> period, std::vector<FieldExpr> metric_inverse,
                                         double kappa) {
  ManifoldModel m;
  m.dim = dim;
  m.period = std::move(period);
  m.metric = std::make_shared<Metric>(dim, m.period, std::move(metric_inverse));
  m.connection = std::make_shared<LeviCivitaConnection>(m.metric);
  m.kappa = kappa;
  return m;
}

std::vector<double> ManifoldModel::chart_difference(const Point& x, const Point& y) const {
  std::vector<double> d(dim);
  for (int i = 0; i < dim; ++i) {
    const double L = period[i];
    double v = std::fmod(y[i] - x[i], L);
    if (v > 0.5 * L) v -= L;
    if (v < -0.5 * L) v += L;
    d[i] = v;
  }
  return d;
}

}  // namespace pdo
