#pragma once

// Linear-connection geometry on periodic model manifolds: geodesics, parallel
// displacement, normal coordinates, horizontal derivatives, and the
// diagonal jets of the phase ψ and density Υ_κ used by the composition formula.

#include <Eigen/Dense>
#include <vector>

#include "pdo/fields.hpp"
#include "pdo/jet.hpp"
#include "pdo/symbols.hpp"

namespace pdo {

struct GeodesicSolution {
  Point x, y;                    // y is the unwrapped chart end point
  std::vector<double> velocity;  // γ̇(0)
  std::vector<double> ts;        // sample times on [0, 1]
  std::vector<std::vector<double>> states;  // (γ, γ̇) at ts
  double tol = 0.0;              // achieved end-point residual

  Point position(double t) const;
  std::vector<double> velocity_at(double t) const;
};

struct Transport {
  Eigen::MatrixXd matrix;  // Φ_{y,x}: T*_x → T*_y
  double ups = 1.0;        // |det Φ_{y,x}|
};

/// End point, end velocity and covector transport of t ↦ exp_x(t v), t ∈ [0, t1].
struct Shot {
  Point end;
  std::vector<double> end_velocity;
  Eigen::MatrixXd transport;
};

Shot shoot(const ManifoldModel& M, const Point& x, const std::vector<double>& v, double t1 = 1.0);

GeodesicSolution solve_geodesic(const ManifoldModel& M, const Point& x, const Point& y, double tol = 1e-10);
Transport parallel_displacement(const ManifoldModel& M, const GeodesicSolution& geod);

/// exp_x(v) (unwrapped chart coordinates).
Point exp_map(const ManifoldModel& M, const Point& x, const std::vector<double>& v);

enum class JetMethod { Exact, FiniteDifference };

struct NormalChart {
  Point x;
  int order = 0;
  std::vector<RJet> inverse_jet;  // exp_x(v) − x in v (dense(n, order))
  std::vector<RJet> forward_jet;  // exp_x^{-1}(x + h) in h
  double error_estimate = 0.0;    // extrapolation estimate (finite differences only)
};

/// Jets at x of exp_x and exp_x^{-1}.  FiniteDifference uses central divided
/// differences on geodesic solves with one Richardson step; throws JetUnstable
/// when the extrapolation estimate exceeds `jet_tol`.
NormalChart normal_coordinates(const ManifoldModel& M, const Point& x, int order, JetMethod method = JetMethod::Exact,
                               double h = 0.05, double jet_tol = 1e-5);

/// T^i_{jk} stored at (i*n + j)*n + k.
std::vector<double> torsion(const ManifoldModel& M, const Point& x);
/// R^i_{jkl} stored at ((i*n + j)*n + k)*n + l.
std::vector<double> curvature(const ManifoldModel& M, const Point& x);

/// ∇_i a = ∂_{x^i} a + Σ Γ^k_{ij} ξ_k ∂_{ξ_j} a.
Symbol horizontal_derivative(const ManifoldModel& M, const Symbol& a, int i);
/// Symmetrised iterated covariant derivative, averaged over the distinct
/// orderings of α; equals ∂_x^α a for a flat chart.
Symbol horizontal_derivative_multi(const ManifoldModel& M, const Symbol& a, const MultiIndex& alpha);
/// Σ_{|α|≤J} u^α/α! ∇^α a(x, ξ) as a jet in normal coordinates u centred at x.
CJet horizontal_taylor(const ManifoldModel& M, const Symbol& a, const Point& x, const Point& xi, int order);

/// φ_τ = −⟨γ̇_{y,x}(τ), ζ⟩ with ζ ∈ T*_{z_τ}.
double phase(const ManifoldModel& M, const Point& x, const std::vector<double>& zeta, const Point& y, double tau);
/// p_{κ,τ} = Υ_{y,z_τ}^{1−κ} Υ_{z_τ,x}^{−κ}.
double weight(const ManifoldModel& M, const Point& x, const Point& y, double kappa, double tau);

/// Jets of ψ and Υ_κ at y = z = x.  Variables, in order: base-point shift
/// hx (n, cap x_order), normal coordinates u of y (n) and w of z (n), the
/// latter two sharing the cap `order`.  ψ = Σ_j ξ_j psi[j].  Υ_κ carries
/// density weight one in z and is expressed in the normal coordinates w.
struct DiagonalJets {
  int dim = 1;
  int order = 0;
  int x_order = 0;
  double kappa = 0.5;
  Point x;
  LayoutPtr layout;
  std::vector<RJet> psi;
  RJet upsilon;
};

DiagonalJets diagonal_jets(const ManifoldModel& M, const Point& x, int order, double kappa, int x_order = 0);

/// Probe y ↦ e^{i⟨w(y),ζ⟩} weight(y) whose image under a differential operator,
/// evaluated at the base point, is the operator's τ = 0 symbol on κ-densities:
/// w = exp_{x'}^{-1}(y) and weight = det(∂w/∂y)·Υ_{y,x'}^{κ−1}.  Jets in
/// (hx, Y) with caps (x_order, order), base point x' = x + hx, y = x' + Y.
struct SymbolProbe {
  LayoutPtr layout;
  std::vector<RJet> w;
  RJet weight;
};
SymbolProbe symbol_probe(const ManifoldModel& M, const Point& x, double kappa, int order, int x_order = 0);

/// Direct (ODE-based) evaluation of ψ and Υ_κ at y = exp_x(u), z = exp_x(w).
double psi_direct(const ManifoldModel& M, const Point& x, const std::vector<double>& xi, const std::vector<double>& u,
                  const std::vector<double>& w);
double upsilon_direct(const ManifoldModel& M, const Point& x, double kappa, const std::vector<double>& u,
                      const std::vector<double>& w);

/// Exact jets of exp_p(v) and of the covector transport along t ↦ exp_p(tv),
/// in (hp, v) ∈ R^{2n} at (x, 0), dense order L.  Q is row-major n×n.
struct ExpJets {
  std::vector<RJet> E;
  std::vector<RJet> Q;
};
ExpJets exp_jets(const Connection& conn, const Point& x, int order);

/// Central divided-difference jet (one Richardson step) of f: R^n → R^m at x.
struct FdJet {
  std::vector<RJet> jets;
  double error_estimate = 0.0;
};
FdJet fd_jet(const std::function<std::vector<double>(const Point&)>& f, const Point& x, int m, int order, double h);

}  // namespace pdo
