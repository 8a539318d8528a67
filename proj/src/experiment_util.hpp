#pragma once

// Shared pieces of the experiment drivers (not installed).

#include <chrono>
#include <cmath>
#include <string>
#include <vector>

#include "pdo/experiments.hpp"
#include "pdo/spectral.hpp"

namespace pdo::detail {

inline const double kTwoPi = 2 * M_PI;
inline const cplx kI(0.0, 1.0);

class Stopwatch {
 public:
  double seconds() const { return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_).count(); }

 private:
  std::chrono::steady_clock::time_point t0_ = std::chrono::steady_clock::now();
};

/// Γ¹₁₁ = 0.3 sin x on the circle.
inline ManifoldModel curved_connection_circle() {
  return ManifoldModel::from_connection(1, {kTwoPi}, {FieldExpr(0.0, {TrigTerm{{1}, 0.0, 0.3}})});
}

/// g¹¹ = exp(0.6 cos x).
inline MetricModel conformal_metric_circle() {
  return MetricModel::make(1, {kTwoPi}, {FieldExpr(0.0, {TrigTerm{{1}, 0.6, 0.0}}, true)});
}

inline MetricModel metric_torus_2d() {
  return MetricModel::make(2, {kTwoPi, kTwoPi},
                           {FieldExpr(1.0, {TrigTerm{{1, 0}, 0.2, 0.0}}), FieldExpr(0.0, {TrigTerm{{0, 1}, 0.1, 0.0}}),
                            FieldExpr(0.0, {TrigTerm{{0, 1}, 0.1, 0.0}}),
                            FieldExpr(1.0, {TrigTerm{{1, 1}, 0.0, 0.15}})});
}

ManifoldModel torsionful_torus_2d();

/// Default order-1 symbols on the circle (mixing ⟨ξ⟩ and ⟨ξ⟩^{3/4} so that
/// no ξ-derivative degenerates).
Expansion default_symbol_a();
Expansion default_symbol_b();

/// max over samples of |a − b| / max |b|, per order present in either expansion.
double term_by_term_error(const Expansion& a, const Expansion& b, const std::vector<Point>& xs,
                          const std::vector<Point>& xis);
/// Same for the full sums.
double relative_sum_error(const Expansion& a, const Expansion& b, const std::vector<Point>& xs,
                          const std::vector<Point>& xis);

std::vector<Point> xi_samples(int dim, std::vector<double> magnitudes);

/// Writes (label, abscissa, value) rows and returns the fit.
DecayFit record_decay(Table& t, const std::string& label, const std::vector<double>& xs,
                      const std::vector<double>& vs);

/// Gate set for slopes of truncation residuals: slope_K ≤ bound_K + slack and
/// strictly decreasing in K.
void slope_gates(Report& r, const std::string& prefix, const std::vector<int>& Ks, const std::vector<double>& slopes,
                 const std::vector<double>& bounds, double slack, const std::string& index = "K");

ExperimentConfig default_config();

/// P-table gates: P_{0,0} = 1, one-sided entries vanish, ξ-degrees within the bound
/// for the connection type.  Rows go to table `label`.
Report p_table_structure(const ManifoldModel& M, int order, int per_axis, const std::string& label);
/// Gates comparing compose_global with compose_flat on a flat torus.
void flat_reduction(Report& r, const ManifoldModel& M, const Expansion& A, const Expansion& B,
                    const std::vector<int>& Ks);

}  // namespace pdo::detail
