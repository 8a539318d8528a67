#pragma once

// Approximate spectral projections χ(λ, A_ν) and the decay experiment for
// Π_ν(λ){υ}(I − Π̃_ν̃(λ + cλ^ρ)) on circles.

#include <Eigen/Dense>
#include <functional>
#include <memory>
#include <vector>

#include "pdo/laplacian.hpp"

namespace pdo {

/// χ(λ, s) = f(λ^{−ρ}(s − λ)) with f the smooth step of width ε.
struct CutoffFamily {
  double eps = 0.1;
  double rho = 1.0;
  ScalarFunction f;

  double chi(double lam, double s) const;
  /// ∂_s^j χ(λ, s), j = 0..jmax (exact, through the bump jet).
  std::vector<double> chi_derivatives(double lam, double s, int jmax) const;
  /// s ↦ χ(λ, s) at fixed λ, tagged of order 0 and type ρ.
  ScalarFunction at(double lam) const;
};

CutoffFamily make_cutoff(double eps, double rho);

/// χ(λ,|ξ|_x) + Σ_{j ≤ J} c_j χ^{(j)}(λ,|ξ|_x).
Expansion chi_symbol_expansion(const MetricModel& MM, const CCoefficients& C, const CutoffFamily& CF, double lam,
                               int J);

// ---------------------------------------------------------------------------

/// Π_ν(λ) (interval (−∞, λ) of A_ν) and Π̃_ν̃(λ + cλ^ρ).
struct ProjectorPair {
  double lam = 0.0;
  Eigen::MatrixXcd proj;
  Eigen::MatrixXcd proj_shifted;
};

/// Spectral data of A = √(−Δ + ν) on a grid: eigenvalues of A, orthonormal eigenvectors.
struct SqrtSpectrum {
  Eigen::VectorXd values;
  Eigen::MatrixXcd vectors;

  static SqrtSpectrum of(const MetricModel& MM, const Perturbation& nu, const TorusGrid& g);
  Eigen::MatrixXcd projector(double lam) const;
  Eigen::MatrixXcd apply(const std::function<double(double)>& f) const;
};

ProjectorPair projector_pair(const SqrtSpectrum& A, const SqrtSpectrum& At, double lam, double c, double rho);

struct ProjectionOptions {
  double c = 1.0;
  double rho = 0.5;
  double eps = 0.0;      // 0: c/4 (the argument needs ε < c/3)
  int N = 512;
  bool identities = true;  // dense-matrix check of the two projection identities
  int jobs = 1;            // λ-points evaluated concurrently
};

struct ProjectionPoint {
  double lam = 0.0;
  double norm = 0.0;           // ‖Π(λ){υ}(I − Π̃(λ + cλ^ρ))‖
  double factorization = 0.0;  // ‖χ(λ,A){υ}(I − χ(λ, Ã − ελ^ρ))‖
  double identity_lower = 0.0; // ‖Π(λ)χ(λ,A) − Π(λ)‖
  double identity_upper = 0.0; // ‖χ(λ, Ã − ελ^ρ)(I − Π̃(λ + cλ^ρ))‖
  double projector_defect = 0.0;
};

struct ProjectionReport {
  std::vector<ProjectionPoint> points;
  DecayFit fit;                        // adjacent local slopes and the linear fit
  std::vector<double> window_slopes;   // least-squares slopes on disjoint λ-windows
  double curvature = 0.0;              // coefficient of (log λ)² in a quadratic fit of log‖·‖
  double slope_low = 0.0, slope_high = 0.0;  // derivative of that fit at the ends of the grid
  double band_ratio = 0.0;             // highest mode needed / Nyquist
  double max_identity_error = 0.0;
  bool exact_zero = false;
};

/// λ-grid of `count` geometrically spaced points.
std::vector<double> lambda_grid(double lo, double hi, int count);

/// SupportViolation when g̃ ≠ g on supp υ; EigenFailure from the dense solver.
ProjectionReport projection_experiment(const MetricModel& M1, const MetricModel& M2, const Perturbation& nu1,
                                       const Perturbation& nu2, const FieldExpr& upsilon,
                                       const std::vector<double>& lambdas, ProjectionOptions opts = {});

}  // namespace pdo
