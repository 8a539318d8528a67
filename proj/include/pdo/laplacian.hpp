#pragma once

// Functions of the Laplacian on a model Riemannian manifold: Δ on κ-densities,
// the square root A_ν = √(−Δ+ν), the coefficients c_{j,ν}, ω(A_ν) expansions,
// the peel-off decomposition and the pseudolocality experiment.

#include <memory>
#include <vector>

#include "pdo/calculus.hpp"
#include "pdo/oracle.hpp"

namespace pdo {

/// Metric g together with its Levi-Civita connection.
struct MetricModel {
  ManifoldModel base;  // connection: Levi-Civita of base.metric
  Symbol norm;         // θ(|ξ|_x)|ξ|_x

  static MetricModel make(int dim, std::vector<double> period, std::vector<FieldExpr> metric_inverse);

  int dim() const { return base.dim; }
  const std::shared_ptr<const Metric>& metric() const { return base.metric; }
  /// g = |det g^{ij}|^{-1/2}.
  double density(const Point& x) const;
  /// max |∇_i |ξ|_x| over the samples.
  double norm_parallel_defect(const std::vector<Point>& xs, const std::vector<Point>& xis) const;
};

/// Chart symbol of Δu = g^{κ−1} Σ ∂_i(g g^{ij} ∂_j(g^{−κ}u)): terms of order 2, 1, 0.
/// τ ≠ 0 is reached by the (finite) flat τ-change.
Expansion laplacian_symbol(const MetricModel& MM, double kappa, double tau = 0.0);

/// Levi-Civita symbol (τ = 0) of the same operator, terms of order 2, 1, 0.
Expansion laplacian_global_symbol(const MetricModel& MM, double kappa);

/// Self-adjoint first-order perturbation ν on half-densities, stored through its
/// τ = 0 chart symbol.
struct Perturbation {
  Expansion chart;

  static Perturbation zero(int dim);
  static Perturbation constant(int dim, double c);
  /// ν with real Weyl symbol Σ_j b_j(x) ξ_j + c(x).
  static Perturbation from_weyl(int dim, const std::vector<double>& period, const std::vector<FieldExpr>& b,
                                const FieldExpr& c);
  bool is_zero() const { return chart.empty(); }
};

/// Collocation matrix of −Δ + ν on half-densities: g^{-1/2} Σ Ξ_i (g g^{ij}) Ξ_j g^{-1/2}
/// with spectral Ξ_i = D_{x_i}, plus the Hermitian part of the lattice quantisation of ν.
DenseOperator shifted_laplacian_matrix(const MetricModel& MM, const Perturbation& nu, const TorusGrid& g);

// ---------------------------------------------------------------------------

struct SqrtOptions {
  int positivity_grid = 48;  // dense check of −Δ + ν > 0 (points per axis)
  int p_order = -1;          // P-table order (−1: automatic)
  bool verify = true;        // residual decay fit, DefectNotDecaying on failure
};

/// Levi-Civita symbol of A_ν: |ξ|_x + s_1 + … + s_K with s_k of order 1 − k.
struct SqrtSymbol {
  MetricModel mm;
  Perturbation nu;
  int depth = 0;
  PTable P;
  Expansion operator_symbol;  // σ_{−Δ+ν}
  Expansion expansion;
};

SqrtSymbol sqrt_symbol(const MetricModel& MM, const Perturbation& nu, int K, SqrtOptions opts = {});

/// max over the sample points of |σ_{S∘S} − σ_{−Δ+ν}| against |ξ| ∈ [xi_min, xi_max].
/// `exact` is set when every value sits at round-off level.
struct ResidualFit {
  DecayFit fit;
  bool exact = false;
};
ResidualFit sqrt_residual(const SqrtSymbol& S, double xi_min = 10.0, double xi_max = 1e3, int count = 8);

/// c_{1,ν}, …, c_{J,ν} from σ_{A^k} = |ξ|^k + Σ_j k!/(k−j)! |ξ|^{k−j} c_j, k = 1..J.
struct CCoefficients {
  std::shared_ptr<const Metric> metric;
  int depth = 0;
  std::vector<Expansion> c;  // c[j − 1]; terms of order ≤ 0 down to j − depth
  std::vector<Expansion> powers;  // σ_{A^k}
};
CCoefficients c_coefficients(const SqrtSymbol& S, int J);

/// ω(|ξ|_x) + Σ_{j ≤ J} c_j ω^{(j)}(|ξ|_x); every term carries its (c, ω) factors.
Expansion omega_symbol(const MetricModel& MM, const CCoefficients& C, const ScalarFunction& omega, int J);

// ---------------------------------------------------------------------------

struct PeelStep {
  Expansion C;  // Ψ⁰_{1,0} factor
  ScalarFunction omega;
  double order = 0.0;
};

struct Decomposition {
  std::vector<PeelStep> steps;
  Expansion residual;
  double residual_order = 0.0;
  std::vector<double> leading_orders;  // residual order after each step
};

/// A ∼ Σ_j C_j ω̃_j(A_ν) by repeated peel-off of the leading term.  Terms without
/// factor hints are peeled as (a·|ξ|_x^{−l}, s^l).  ResidualNotDropping when the
/// residual order does not fall by min{gap, ρ}.
Decomposition decompose(const Expansion& E, const SqrtSymbol& S, const CCoefficients& C, int depth);

/// Σ_j compose(C_j, ω̃_j(A_ν)).
Expansion reconstruct(const Decomposition& D, const SqrtSymbol& S, const CCoefficients& C, int K);

// ---------------------------------------------------------------------------

struct PseudolocalityReport {
  std::vector<double> lambdas;
  std::vector<double> norms;
  DecayFit fit;  // over the points above round-off
  bool exact_zero = false;
};

/// ‖{υ}(ω(A_ν) − ω(Ã_ν̃))‖ restricted to the Fourier band λ ≤ |k| < 2λ, by dense
/// eigendecomposition on N points.  SupportViolation when g ≠ g̃ or ν ≠ ν̃ on supp υ.
PseudolocalityReport pseudolocality_check(const MetricModel& M1, const MetricModel& M2, const Perturbation& nu1,
                                          const Perturbation& nu2, const FieldExpr& upsilon, const ScalarFunction& omega,
                                          const std::vector<double>& lambdas, int N);

/// SupportViolation unless g = g̃ (and ν = ν̃ when both are given) on supp υ, sampled
/// at `samples` points of the circle.
void require_agreement_on_support(const MetricModel& M1, const MetricModel& M2, const Perturbation* nu1,
                                  const Perturbation* nu2, const FieldExpr& upsilon, int samples);

/// ω(|ξ|_x) + Σ_{j ≤ J} c_j ω^{(j)}(|ξ|_x) without the class check on ω; used for
/// parameter-dependent families whose estimates hold uniformly in a parameter.
Expansion function_expansion(const MetricModel& MM, const CCoefficients& C, const ScalarFunction& omega, int J);

/// Sample points on the torus (`per_axis` points per coordinate).
std::vector<Point> sample_points(int dim, const std::vector<double>& period, int per_axis);
/// Unit covector directions (±e_i and diagonals).
std::vector<Point> sample_directions(int dim);

}  // namespace pdo
