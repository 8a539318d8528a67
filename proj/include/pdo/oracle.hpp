#pragma once

// Independent numerical oracles on flat tori: plane-wave application of
// symbols, effective-symbol extraction, dense discretisations, spectral
// projectors, decay fits, and the flattening chart of a curved circle.

#include <Eigen/Dense>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "pdo/fields.hpp"
#include "pdo/symbols.hpp"

namespace pdo {

/// Uniform grid with N points per axis on R^dim / (period·Z^dim).
struct TorusGrid {
  int dim = 1;
  int N = 64;
  std::vector<double> period{6.283185307179586};

  static TorusGrid make(int dim, int N, double period = 6.283185307179586);
  int size() const;
  Point point(int idx) const;
  /// Lattice frequency of FFT index `k` along `axis` (signed, 2π/period units).
  double frequency(int k, int axis = 0) const;
};

using GridFunction = Eigen::VectorXcd;
using SymbolFn = std::function<cplx(const Point& x, const Point& xi)>;

SymbolFn symbol_fn(const Expansion& E);
SymbolFn symbol_fn(const Symbol& s);

/// Forward / inverse DFT on the grid (û_k = N^{-dim} Σ_j u_j e^{−i x_j·ξ_k}).
GridFunction fft_forward(const TorusGrid& g, const GridFunction& u);
GridFunction fft_inverse(const TorusGrid& g, const GridFunction& uhat);

/// Modulated application: returns f ↦ e^{−ix·η} Op_τ(σ)(e^{ix·η} f) for
/// band-limited f.  With η = 0 and τ = 0 this is the lattice sum
/// (Au)(x) = Σ_ξ e^{ix·ξ} σ(x, ξ) û(ξ).
GridFunction apply_modulated(const SymbolFn& sigma, const TorusGrid& g, const GridFunction& f, const Point& eta,
                             double tau = 0.0);

/// Op_0(σ) u for a τ = 0 expansion on a flat torus.  Throws AliasRisk when the
/// result carries relative energy above 1e−8 in the top tenth of the band.
GridFunction apply_pdo_flat(const Expansion& E, const TorusGrid& g, const GridFunction& u);

/// Op_τ(E) u on a curved circle by y-quadrature of the kernel against u,
/// restricted to |x − y| < window by a smooth diagonal cutoff (1 on [0, window/2]).
struct GlobalApplyOptions {
  double xi_max = 0.0;  // 0: Ξ = 0.8π/h; u must then be band-limited below 0.4π/h
  double window = 2.4;  // support of the diagonal cutoff (full width 2·window)
  double tol = 0.0;     // forwarded to kernel_from_symbol
};
GridFunction apply_pdo_global(const Expansion& E, const ManifoldModel& M, double kappa, double tau, const TorusGrid& g,
                              const GridFunction& u, GlobalApplyOptions opts = {});

/// Operator acting on modulated plane waves: (η, f) ↦ e^{−ix·η} A(e^{ix·η} f).
using ModulatedOp = std::function<GridFunction(const Point& eta, const GridFunction& f)>;

/// σ(x_j, η) = e^{−ix_j·η}(A e^{i⟨·,η⟩})(x_j) for every grid point and every η.
/// Returns table[η index][grid index].
std::vector<GridFunction> effective_symbol(const ModulatedOp& A, const TorusGrid& g, const std::vector<Point>& etas);
/// Plane-wave probing of a plain grid operator; η must lie on the lattice.
std::vector<GridFunction> effective_symbol(const std::function<GridFunction(const GridFunction&)>& A,
                                           const TorusGrid& g, const std::vector<Point>& etas);

ModulatedOp modulated(const SymbolFn& sigma, const TorusGrid& g, double tau = 0.0);
ModulatedOp compose(const ModulatedOp& A, const ModulatedOp& B);

// ---------------------------------------------------------------------------

struct DenseOperator {
  TorusGrid grid;
  Eigen::MatrixXcd matrix;
  std::string meta;

  GridFunction apply(const GridFunction& u) const { return matrix * u; }
};

/// Matrix of Op_0(σ) in the nodal basis (columns: the operator applied to basis exponentials).
DenseOperator discretize(const SymbolFn& sigma, const TorusGrid& g, const std::string& meta = "symbol");
DenseOperator discretize(const Expansion& E, const TorusGrid& g);

/// Eigendecomposition of a Hermitian dense operator (EigenFailure otherwise).
struct SpectralDecomposition {
  Eigen::VectorXd values;
  Eigen::MatrixXcd vectors;
};
SpectralDecomposition eigen_decompose(const DenseOperator& D, double hermitian_tol = 1e-8);
/// Π(λ): projection onto the eigenvectors with eigenvalue < λ.
Eigen::MatrixXcd spectral_projector(const SpectralDecomposition& S, double lambda);
Eigen::MatrixXcd spectral_projector(const DenseOperator& D, double lambda);
/// f(D) by the spectral theorem.
Eigen::MatrixXcd functional_calculus(const SpectralDecomposition& S, const std::function<cplx(double)>& f);

/// Log-log decay fit.
struct DecayFit {
  std::vector<double> abscissae, values;
  std::vector<double> local_slopes;  // between consecutive points
  double slope = 0.0;                // least-squares slope
  double intercept = 0.0;
  double residual = 0.0;             // RMS residual of the fit in log space
};
DecayFit fit_decay(const std::vector<double>& lambda, const std::vector<double>& values);

// ---------------------------------------------------------------------------

/// Chart Y = F(x) with F' = exp(∫_0^x Γ) in which a 1-D connection with zero
/// mean vanishes; the circle becomes flat of length L.
class FlatteningChart {
 public:
  explicit FlatteningChart(const ManifoldModel& M, int samples = 256);

  double length() const { return L_; }
  double F(double x) const;
  double dF(double x) const;
  double inverse(double Y) const;

  /// σ̃(Y, η) = σ(F^{-1}(Y), F'·η) and back.
  SymbolFn to_flat(const SymbolFn& sigma) const;
  SymbolFn from_flat(const SymbolFn& sigma_flat) const;

 private:
  double period_;
  double c0_ = 1.0;               // mean of F'
  std::vector<cplx> coef_;        // Fourier coefficients of F', k = −K..K
  std::vector<cplx> gcoef_;       // Fourier coefficients of ∫Γ
  int K_ = 0;
  double L_ = 0.0;
};

// ---------------------------------------------------------------------------

/// Disk cache of dense arrays: <key>.bin holds raw complex doubles, <key>.json
/// the shape, metadata and an FNV-1a checksum.
class ArtifactCache {
 public:
  explicit ArtifactCache(std::filesystem::path dir);
  void store(const std::string& key, const Eigen::MatrixXcd& m, const nlohmann::json& meta) const;
  std::optional<Eigen::MatrixXcd> load(const std::string& key, const nlohmann::json& meta) const;
  static std::string checksum(const Eigen::MatrixXcd& m);

 private:
  std::filesystem::path dir_;
};

}  // namespace pdo
