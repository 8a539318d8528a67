#include "pdo/oracle.hpp"

#include <unsupported/Eigen/FFT>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "pdo/calculus.hpp"
#include "pdo/errors.hpp"

namespace pdo {

namespace {
const cplx I(0.0, 1.0);
}

TorusGrid TorusGrid::make(int dim, int N, double period) {
  if (dim < 1 || dim > 2 || N < 2) throw Error(ErrorKind::ConfigInvalid, "torus grids need dim 1 or 2 and N >= 2");
  return TorusGrid{dim, N, std::vector<double>(dim, period)};
}

int TorusGrid::size() const { return dim == 1 ? N : N * N; }

Point TorusGrid::point(int idx) const {
  Point p(dim);
  for (int a = 0; a < dim; ++a) {
    p[a] = period[a] * (idx % N) / N;
    idx /= N;
  }
  return p;
}

double TorusGrid::frequency(int k, int axis) const {
  const int s = k < N / 2 ? k : k - N;
  return 2 * std::numbers::pi * s / period[axis];
}

SymbolFn symbol_fn(const Expansion& E) {
  return [E](const Point& x, const Point& xi) { return E(x, xi); };
}

SymbolFn symbol_fn(const Symbol& s) {
  return [s](const Point& x, const Point& xi) { return s(x, xi); };
}

namespace {

// 1-D transform along one axis of an N^dim array (axis 0 fastest).
void fft_axis(const TorusGrid& g, GridFunction& u, int axis, bool forward) {
  Eigen::FFT<double> fft;
  const int N = g.N;
  const int stride = axis == 0 ? 1 : N;
  const int lines = g.size() / N;
  std::vector<cplx> in(N), out(N);
  for (int l = 0; l < lines; ++l) {
    const int base = axis == 0 ? l * N : l;
    for (int k = 0; k < N; ++k) in[k] = u[base + k * stride];
    if (forward)
      fft.fwd(out, in);
    else
      fft.inv(out, in);
    for (int k = 0; k < N; ++k) u[base + k * stride] = out[k];
  }
}

Point frequency_vector(const TorusGrid& g, int idx) {
  Point k(g.dim);
  for (int a = 0; a < g.dim; ++a) {
    k[a] = g.frequency(idx % g.N, a);
    idx /= g.N;
  }
  return k;
}

double dot(const Point& a, const Point& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace

GridFunction fft_forward(const TorusGrid& g, const GridFunction& u) {
  GridFunction r = u;
  for (int a = 0; a < g.dim; ++a) fft_axis(g, r, a, true);
  return r / static_cast<double>(g.size());
}

GridFunction fft_inverse(const TorusGrid& g, const GridFunction& uhat) {
  GridFunction r = uhat;
  for (int a = 0; a < g.dim; ++a) fft_axis(g, r, a, false);
  return r * static_cast<double>(g.size());
}

GridFunction apply_modulated(const SymbolFn& sigma, const TorusGrid& g, const GridFunction& f, const Point& eta_in,
                             double tau) {
  const int S = g.size();
  const Point eta = eta_in.empty() ? Point(g.dim, 0.0) : eta_in;
  const GridFunction fh = fft_forward(g, f);
  const double cut = 1e-15 * fh.cwiseAbs().maxCoeff();
  GridFunction out = GridFunction::Zero(S);
  std::vector<int> active;
  for (int k = 0; k < S; ++k)
    if (std::abs(fh[k]) > cut) active.push_back(k);
  if (tau == 0.0) {
    for (int j = 0; j < S; ++j) {
      const Point x = g.point(j);
      cplx acc{};
      for (int k : active) {
        Point th = frequency_vector(g, k);
        const double phase = dot(x, th);
        for (int a = 0; a < g.dim; ++a) th[a] += eta[a];
        acc += fh[k] * std::exp(I * phase) * sigma(x, th);
      }
      out[j] = acc;
    }
    return out;
  }
  if (g.dim != 1) throw Error(ErrorKind::ConfigInvalid, "tau != 0 plane-wave application is 1-D only");
  // Op_τ e^{iyθ} = e^{ixθ} Σ_m ŝ_m(θ + τ m) e^{imx}, ŝ_m the x-Fourier coefficients of σ(·, ζ)
  for (int k : active) {
    const double th = frequency_vector(g, k)[0] + eta[0];
    GridFunction h = GridFunction::Zero(S);
    for (int m = 0; m < S; ++m) {
      const double fm = g.frequency(m);
      GridFunction col(S);
      for (int j = 0; j < S; ++j) col[j] = sigma(g.point(j), {th + tau * fm});
      h[m] = fft_forward(g, col)[m];
    }
    GridFunction hx = fft_inverse(g, h);
    for (int j = 0; j < S; ++j) out[j] += fh[k] * std::exp(I * (frequency_vector(g, k)[0] * g.point(j)[0])) * hx[j];
  }
  return out;
}

GridFunction apply_pdo_flat(const Expansion& E, const TorusGrid& g, const GridFunction& u) {
  if (E.tau() != 0.0) throw Error(ErrorKind::TagMismatch, "apply_pdo_flat expects a tau = 0 symbol");
  GridFunction r = apply_modulated(symbol_fn(E), g, u, Point(g.dim, 0.0), 0.0);
  const GridFunction rh = fft_forward(g, r);
  double total = 0, top = 0;
  for (int k = 0; k < g.size(); ++k) {
    const double e = std::norm(rh[k]);
    total += e;
    const Point q = frequency_vector(g, k);
    double qmax = 0;
    for (int a = 0; a < g.dim; ++a) qmax = std::max(qmax, std::abs(q[a]) * g.period[a] / (2 * std::numbers::pi));
    if (qmax >= 0.4 * g.N) top += e;
  }
  if (total > 0 && top > 1e-8 * total) throw Error(ErrorKind::AliasRisk, "result has energy near the Nyquist band");
  return r;
}

namespace {

double diagonal_cutoff(double d, double window) {
  const double r = std::abs(d) / window;
  if (r <= 0.5) return 1.0;
  if (r >= 1.0) return 0.0;
  const double t = 2.0 * (1.0 - r);
  const double f = std::exp(-1.0 / t), h = std::exp(-1.0 / (1.0 - t));
  return f / (f + h);
}

}  // namespace

GridFunction apply_pdo_global(const Expansion& E, const ManifoldModel& M, double kappa, double tau, const TorusGrid& g,
                              const GridFunction& u, GlobalApplyOptions opts) {
  if (M.dim != 1 || g.dim != 1) throw Error(ErrorKind::ConfigInvalid, "apply_pdo_global is 1-D only");
  const double h = g.period[0] / g.N;
  KernelOptions ko;
  // trapezoid rule in y is exact for frequencies below 2π/h; Ξ = 0.8π/h keeps bands up to 0.4π/h intact
  ko.xi_max = opts.xi_max > 0 ? opts.xi_max : 0.8 * std::numbers::pi / h;
  ko.tol = opts.tol;
  auto K = kernel_from_symbol(E, M, kappa, tau, ko);
  GridFunction out = GridFunction::Zero(g.N);
  const int half = static_cast<int>(std::ceil(opts.window / h));
  for (int j = 0; j < g.N; ++j) {
    const double x = g.point(j)[0];
    cplx acc{};
    for (int l = -half; l <= half; ++l) {
      const double w = diagonal_cutoff(l * h, opts.window);
      if (w == 0.0) continue;
      const int idx = ((j + l) % g.N + g.N) % g.N;
      acc += w * K({x}, {x + l * h}) * u[idx];
    }
    out[j] = acc * h;
  }
  return out;
}

std::vector<GridFunction> effective_symbol(const ModulatedOp& A, const TorusGrid& g, const std::vector<Point>& etas) {
  std::vector<GridFunction> table;
  const GridFunction ones = GridFunction::Ones(g.size());
  for (const auto& eta : etas) table.push_back(A(eta, ones));
  return table;
}

std::vector<GridFunction> effective_symbol(const std::function<GridFunction(const GridFunction&)>& A,
                                           const TorusGrid& g, const std::vector<Point>& etas) {
  std::vector<GridFunction> table;
  for (const auto& eta : etas) {
    GridFunction e(g.size());
    for (int j = 0; j < g.size(); ++j) e[j] = std::exp(I * dot(g.point(j), eta));
    GridFunction r = A(e);
    for (int j = 0; j < g.size(); ++j) r[j] *= std::conj(e[j]);
    table.push_back(r);
  }
  return table;
}

ModulatedOp modulated(const SymbolFn& sigma, const TorusGrid& g, double tau) {
  return [sigma, g, tau](const Point& eta, const GridFunction& f) { return apply_modulated(sigma, g, f, eta, tau); };
}

ModulatedOp compose(const ModulatedOp& A, const ModulatedOp& B) {
  return [A, B](const Point& eta, const GridFunction& f) { return A(eta, B(eta, f)); };
}

// ---------------------------------------------------------------------------

DenseOperator discretize(const SymbolFn& sigma, const TorusGrid& g, const std::string& meta) {
  const int S = g.size();
  Eigen::MatrixXcd Sx(S, S), F(S, S);
  for (int j = 0; j < S; ++j) {
    const Point x = g.point(j);
    for (int k = 0; k < S; ++k) {
      const Point xi = frequency_vector(g, k);
      Sx(j, k) = std::exp(I * dot(x, xi)) * sigma(x, xi);
      F(k, j) = std::exp(-I * dot(x, xi)) / static_cast<double>(S);
    }
  }
  return DenseOperator{g, Sx * F, meta};
}

DenseOperator discretize(const Expansion& E, const TorusGrid& g) {
  if (E.tau() != 0.0) throw Error(ErrorKind::TagMismatch, "discretize expects a tau = 0 symbol");
  return discretize(symbol_fn(E), g, "expansion");
}

SpectralDecomposition eigen_decompose(const DenseOperator& D, double hermitian_tol) {
  const double scale = std::max(1.0, D.matrix.cwiseAbs().maxCoeff());
  if ((D.matrix - D.matrix.adjoint()).cwiseAbs().maxCoeff() > hermitian_tol * scale)
    throw Error(ErrorKind::EigenFailure, "operator is not Hermitian: " + D.meta);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(0.5 * (D.matrix + D.matrix.adjoint()));
  if (es.info() != Eigen::Success) throw Error(ErrorKind::EigenFailure, "eigensolver failed: " + D.meta);
  return {es.eigenvalues(), es.eigenvectors()};
}

Eigen::MatrixXcd spectral_projector(const SpectralDecomposition& S, double lambda) {
  std::vector<int> keep;
  for (int i = 0; i < S.values.size(); ++i)
    if (S.values[i] < lambda) keep.push_back(i);
  Eigen::MatrixXcd V(S.vectors.rows(), keep.size());
  for (std::size_t c = 0; c < keep.size(); ++c) V.col(c) = S.vectors.col(keep[c]);
  return V * V.adjoint();
}

Eigen::MatrixXcd spectral_projector(const DenseOperator& D, double lambda) {
  return spectral_projector(eigen_decompose(D), lambda);
}

Eigen::MatrixXcd functional_calculus(const SpectralDecomposition& S, const std::function<cplx(double)>& f) {
  Eigen::VectorXcd d(S.values.size());
  for (int i = 0; i < d.size(); ++i) d[i] = f(S.values[i]);
  return S.vectors * d.asDiagonal() * S.vectors.adjoint();
}

DecayFit fit_decay(const std::vector<double>& lambda, const std::vector<double>& values) {
  if (lambda.size() != values.size()) throw Error(ErrorKind::ConfigInvalid, "fit_decay: size mismatch");
  DecayFit f;
  std::vector<double> lx, ly;
  for (std::size_t i = 0; i < lambda.size(); ++i)
    if (lambda[i] > 0 && values[i] > 0 && std::isfinite(values[i])) {
      f.abscissae.push_back(lambda[i]);
      f.values.push_back(values[i]);
      lx.push_back(std::log(lambda[i]));
      ly.push_back(std::log(values[i]));
    }
  if (lx.size() < 4) throw Error(ErrorKind::InsufficientPoints, "decay fits need at least 4 positive points");
  for (std::size_t i = 1; i < lx.size(); ++i) f.local_slopes.push_back((ly[i] - ly[i - 1]) / (lx[i] - lx[i - 1]));
  const double n = static_cast<double>(lx.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    sx += lx[i];
    sy += ly[i];
    sxx += lx[i] * lx[i];
    sxy += lx[i] * ly[i];
  }
  f.slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  f.intercept = (sy - f.slope * sx) / n;
  double r = 0;
  for (std::size_t i = 0; i < lx.size(); ++i) r += std::pow(ly[i] - f.intercept - f.slope * lx[i], 2);
  f.residual = std::sqrt(r / n);
  return f;
}

// ---------------------------------------------------------------------------

FlatteningChart::FlatteningChart(const ManifoldModel& M, int samples) : period_(M.period.at(0)) {
  if (M.dim != 1) throw Error(ErrorKind::ConfigInvalid, "the flattening chart is 1-D only");
  const TorusGrid g = TorusGrid::make(1, samples, period_);
  GridFunction gam(samples);
  for (int j = 0; j < samples; ++j) gam[j] = M.connection->christoffel_values(g.point(j))[0];
  GridFunction gh = fft_forward(g, gam);
  if (std::abs(gh[0]) > 1e-10) throw Error(ErrorKind::ConfigInvalid, "the flattening chart needs a zero-mean connection");
  K_ = samples / 2 - 1;
  // G = ∫_0^x Γ: coefficients of e^{iω_k x}/(iω_k), constant fixed by G(0) = 0
  gcoef_.assign(2 * K_ + 1, 0.0);
  cplx g0{};
  for (int k = -K_; k <= K_; ++k) {
    if (k == 0) continue;
    const double w = 2 * std::numbers::pi * k / period_;
    gcoef_[k + K_] = gh[(k + samples) % samples] / (I * w);
    g0 += gcoef_[k + K_];
  }
  gcoef_[K_] = -g0;
  GridFunction fp(samples);
  for (int j = 0; j < samples; ++j) {
    const double x = g.point(j)[0];
    cplx G{};
    for (int k = -K_; k <= K_; ++k) G += gcoef_[k + K_] * std::exp(I * (2 * std::numbers::pi * k / period_ * x));
    fp[j] = std::exp(G.real());
  }
  GridFunction fh = fft_forward(g, fp);
  coef_.assign(2 * K_ + 1, 0.0);
  for (int k = -K_; k <= K_; ++k) coef_[k + K_] = fh[(k + samples) % samples];
  c0_ = coef_[K_].real();
  L_ = c0_ * period_;
}

double FlatteningChart::dF(double x) const {
  cplx G{};
  for (int k = -K_; k <= K_; ++k) G += gcoef_[k + K_] * std::exp(I * (2 * std::numbers::pi * k / period_ * x));
  return std::exp(G.real());
}

double FlatteningChart::F(double x) const {
  cplx r = c0_ * x;
  for (int k = -K_; k <= K_; ++k) {
    if (k == 0) continue;
    const double w = 2 * std::numbers::pi * k / period_;
    r += coef_[k + K_] * (std::exp(I * (w * x)) - 1.0) / (I * w);
  }
  return r.real();
}

double FlatteningChart::inverse(double Y) const {
  const double turns = std::floor(Y / L_);
  const double y = Y - turns * L_;
  double x = y / c0_;
  for (int it = 0; it < 60; ++it) {
    const double dx = (F(x) - y) / dF(x);
    x -= dx;
    if (std::abs(dx) < 1e-15 * (1 + std::abs(x))) break;
  }
  return x + turns * period_;
}

SymbolFn FlatteningChart::to_flat(const SymbolFn& sigma) const {
  return [this, sigma](const Point& Y, const Point& eta) {
    const double x = inverse(Y[0]);
    return sigma({x}, {dF(x) * eta[0]});
  };
}

SymbolFn FlatteningChart::from_flat(const SymbolFn& sigma_flat) const {
  return [this, sigma_flat](const Point& x, const Point& xi) { return sigma_flat({F(x[0])}, {xi[0] / dF(x[0])}); };
}

// ---------------------------------------------------------------------------

ArtifactCache::ArtifactCache(std::filesystem::path dir) : dir_(std::move(dir)) { std::filesystem::create_directories(dir_); }

std::string ArtifactCache::checksum(const Eigen::MatrixXcd& m) {
  std::uint64_t h = 1469598103934665603ULL;
  const auto* p = reinterpret_cast<const unsigned char*>(m.data());
  for (std::size_t i = 0; i < static_cast<std::size_t>(m.size()) * sizeof(cplx); ++i) {
    h ^= p[i];
    h *= 1099511628211ULL;
  }
  std::ostringstream os;
  os << std::hex << h;
  return os.str();
}

void ArtifactCache::store(const std::string& key, const Eigen::MatrixXcd& m, const nlohmann::json& meta) const {
  std::ofstream bin(dir_ / (key + ".bin"), std::ios::binary);
  bin.write(reinterpret_cast<const char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(cplx)));
  nlohmann::json side{{"rows", m.rows()}, {"cols", m.cols()}, {"checksum", checksum(m)}, {"meta", meta}};
  std::ofstream(dir_ / (key + ".json")) << side.dump(2) << '\n';
}

std::optional<Eigen::MatrixXcd> ArtifactCache::load(const std::string& key, const nlohmann::json& meta) const {
  std::ifstream js(dir_ / (key + ".json"));
  if (!js) return std::nullopt;
  nlohmann::json side;
  try {
    js >> side;
  } catch (const std::exception&) {
    return std::nullopt;
  }
  if (side.value("meta", nlohmann::json()) != meta) return std::nullopt;
  Eigen::MatrixXcd m(side.at("rows").get<int>(), side.at("cols").get<int>());
  std::ifstream bin(dir_ / (key + ".bin"), std::ios::binary);
  bin.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(cplx)));
  if (!bin || checksum(m) != side.at("checksum").get<std::string>()) return std::nullopt;
  return m;
}

}  // namespace pdo
