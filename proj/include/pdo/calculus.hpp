#pragma once

// τ-symbols, adjoints, the P^(κ)_{β,γ} table and the composition formulas.

#include <functional>
#include <map>
#include <memory>
#include <ostream>
#include <vector>

#include "pdo/geometry.hpp"
#include "pdo/symbols.hpp"

namespace pdo {

/// Two-point amplitude a(x, y, ξ): jets on (x_1..x_n, y_1..y_n, ξ_1..ξ_n).
struct Amplitude {
  int dim = 1;
  std::function<CJet(const Point& x, const Point& y, const Point& xi, int order)> jet;
  SymbolClass cls;
  std::string name = "a";
};

/// Amplitude u(x) v(y) w(x, ξ) (w given as a Symbol, u and v as fields).
Amplitude separable_amplitude(const Symbol& u, const Symbol& v, const Symbol& w);

/// τ-symbol of the operator with amplitude a, terms with |α|+|β| ≤ K.
Expansion tau_from_amplitude_flat(const Amplitude& a, double tau, int K);

/// σ_{A,s} from σ_{A,τ}: Σ_α (−i)^{|α|}(τ−s)^{|α|}/α! ∂_ξ^α ∇_x^α σ.
Expansion change_tau(const Expansion& E, double s, const ManifoldModel& M, int K);

/// τ-symbol of A* (on (1−κ)-densities): Σ_α (−i)^{|α|}(1−2τ)^{|α|}/α! ∂_ξ^α ∇_x^α conj(σ).
Expansion adjoint_symbol(const Expansion& E, const ManifoldModel& M, int K);

/// τ = 0 symbol on κ-densities of the differential operator whose chart symbol
/// is the ξ-polynomial `chart` of degree ≤ `degree`.  With `keep` ≥ 0 only the
/// part homogeneous of that degree in ξ is returned.
Symbol differential_operator_symbol(const Symbol& chart, const ManifoldModel& M, double kappa, int degree,
                                    int keep = -1);

// ---------------------------------------------------------------------------

/// P_{β,γ}(x, ξ) = Σ_μ c_μ(x) ξ^μ.
struct PEntry {
  MultiIndex beta, gamma;
  int degree = -1;  // −1: identically zero on the grid
  int bound = 0;    // degree bound from the connection type
  std::vector<MultiIndex> monomials;
  std::vector<std::vector<cplx>> samples;  // [grid point][monomial]
  Symbol symbol;                           // evaluates P at any x (exact ξ-polynomial)
};

class PEvaluator;

struct PTable {
  double kappa = 0.5;
  int max_order = 0;
  bool symmetric = false;
  bool flat = false;
  std::vector<Point> grid;
  std::map<std::pair<MultiIndex, MultiIndex>, PEntry> entries;
  std::shared_ptr<PEvaluator> evaluator;

  const PEntry* find(const MultiIndex& beta, const MultiIndex& gamma) const;
  void write_csv(std::ostream& os) const;
};

/// Builds P^(κ)_{β,γ} for all |β| + |γ| ≤ max_order from the exact diagonal jets
/// of e^{iψ}Υ_κ.  Throws DegreeViolation when a degree exceeds its bound.
PTable p_table(const ManifoldModel& M, double kappa, const std::vector<Point>& grid, int max_order);

/// True when the torsion vanishes at every sample point.
bool connection_is_symmetric(const ManifoldModel& M, const std::vector<Point>& samples);

// ---------------------------------------------------------------------------

/// Σ_α ((−i)^{|α|}/α!) ∂_ξ^α σ_A ∂_x^α σ_B, terms of order ≥ m₁ + m₂ − K(ρ−δ).
Expansion compose_flat(const Expansion& A, const Expansion& B, int K);

/// Σ (1/α!β!γ!) P_{β,γ} D_ξ^{α+β} σ_A D_ξ^γ ∇^α σ_B with D = −i∂.
Expansion compose_global(const Expansion& A, const Expansion& B, const ManifoldModel& M, const PTable& P, int K);

// ---------------------------------------------------------------------------

struct KernelOptions {
  double xi_max = 64.0;       // mollifier radius Ξ
  int nodes = 0;              // ζ quadrature nodes per axis (0: automatic)
  double tol = 0.0;           // > 0: verify by node doubling, throw QuadratureNotConverged
};

/// 𝒜(x, y) = (2π)^{-n} p_{κ,τ}(x,y) ∫ e^{iφ_τ(x,ζ,y)} σ(z_τ, ζ) χ(|ζ|/Ξ) dζ near the diagonal.
using KernelFn = std::function<cplx(const Point&, const Point&)>;
KernelFn kernel_from_symbol(const Expansion& E, const ManifoldModel& M, double kappa, double tau,
                            KernelOptions opts = {});

}  // namespace pdo
