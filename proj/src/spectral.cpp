#include "pdo/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <thread>

#include "pdo/errors.hpp"

namespace pdo {

namespace {

class ChiImpl final : public ScalarImpl {
 public:
  ChiImpl(ScalarFunction f, double lam, double rho) : f_(std::move(f)), lam_(lam), rho_(rho) {}
  std::vector<double> derivatives(double s, int jmax) const override {
    const double scale = std::pow(lam_, -rho_);
    auto d = f_.derivatives(scale * (s - lam_), jmax);
    double p = 1.0;
    for (int k = 0; k <= jmax; ++k, p *= scale) d[k] *= p;
    return d;
  }
  std::string name() const override { return "chi(" + std::to_string(lam_) + ")"; }

 private:
  ScalarFunction f_;
  double lam_, rho_;
};

// largest singular value via the smaller Gram matrix
double spectral_norm(const Eigen::MatrixXcd& M) {
  if (M.size() == 0) return 0.0;
  Eigen::MatrixXcd G = M.rows() <= M.cols() ? Eigen::MatrixXcd(M * M.adjoint()) : Eigen::MatrixXcd(M.adjoint() * M);
  const double top = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd>(G, Eigen::EigenvaluesOnly).eigenvalues().maxCoeff();
  return std::sqrt(std::max(top, 0.0));
}

int count_below(const Eigen::VectorXd& v, double t) {
  return static_cast<int>(std::lower_bound(v.data(), v.data() + v.size(), t) - v.data());
}

}  // namespace

double CutoffFamily::chi(double lam, double s) const { return f(std::pow(lam, -rho) * (s - lam)); }

std::vector<double> CutoffFamily::chi_derivatives(double lam, double s, int jmax) const {
  return ChiImpl(f, lam, rho).derivatives(s, jmax);
}

ScalarFunction CutoffFamily::at(double lam) const {
  return ScalarFunction(std::make_shared<ChiImpl>(f, lam, rho), 0.0, rho);
}

CutoffFamily make_cutoff(double eps, double rho) {
  if (!(rho > 0.0 && rho <= 1.0)) throw Error(ErrorKind::HypothesisViolation, "rho must lie in (0, 1]");
  CutoffFamily cf;
  cf.eps = eps;
  cf.rho = rho;
  cf.f = ScalarFunction(std::make_shared<SmoothStep>(eps), 0.0, 1.0);
  return cf;
}

Expansion chi_symbol_expansion(const MetricModel& MM, const CCoefficients& C, const CutoffFamily& CF, double lam,
                               int J) {
  // χ(λ,·) ≡ 1 near s = 0, so the low-frequency cutoff inside the norm functions is
  // compensated exactly by 1 − θ(|ξ|_x) (λ ≥ 1)
  auto E = function_expansion(MM, C, CF.at(lam), J);
  E.add(0.0, constant_symbol(MM.dim(), 1.0) - norm_function(MM.metric(), ScalarFunction::power(0.0)));
  return E;
}

// ---------------------------------------------------------------------------

SqrtSpectrum SqrtSpectrum::of(const MetricModel& MM, const Perturbation& nu, const TorusGrid& g) {
  auto S = eigen_decompose(shifted_laplacian_matrix(MM, nu, g));
  SqrtSpectrum A;
  A.values = S.values.unaryExpr([](double e) { return std::sqrt(std::max(e, 0.0)); });
  A.vectors = std::move(S.vectors);
  return A;
}

Eigen::MatrixXcd SqrtSpectrum::projector(double lam) const {
  const int k = count_below(values, lam);
  const auto V = vectors.leftCols(k);
  return V * V.adjoint();
}

Eigen::MatrixXcd SqrtSpectrum::apply(const std::function<double(double)>& f) const {
  Eigen::VectorXd d = values.unaryExpr(f);
  return vectors * d.asDiagonal() * vectors.adjoint();
}

ProjectorPair projector_pair(const SqrtSpectrum& A, const SqrtSpectrum& At, double lam, double c, double rho) {
  return ProjectorPair{lam, A.projector(lam), At.projector(lam + c * std::pow(lam, rho))};
}

std::vector<double> lambda_grid(double lo, double hi, int count) {
  if (count < 2 || !(lo > 0.0) || !(hi > lo)) throw Error(ErrorKind::ConfigInvalid, "lambda grid needs 0 < lo < hi, count >= 2");
  std::vector<double> l(count);
  for (int k = 0; k < count; ++k) l[k] = lo * std::pow(hi / lo, double(k) / (count - 1));
  return l;
}

ProjectionReport projection_experiment(const MetricModel& M1, const MetricModel& M2, const Perturbation& nu1,
                                       const Perturbation& nu2, const FieldExpr& upsilon,
                                       const std::vector<double>& lambdas, ProjectionOptions opts) {
  if (M1.dim() != 1 || M2.dim() != 1) throw Error(ErrorKind::ConfigInvalid, "the projection experiment runs on circles");
  const double eps = opts.eps > 0.0 ? opts.eps : opts.c / 4.0;
  if (!(eps < opts.c / 3.0)) throw Error(ErrorKind::HypothesisViolation, "the cutoff width must satisfy eps < c/3");
  const auto CF = make_cutoff(eps, opts.rho);
  const int N = opts.N;
  const auto& period = M1.base.period;
  require_agreement_on_support(M1, M2, nullptr, nullptr, upsilon, 8 * N);

  auto g = TorusGrid::make(1, N, period[0]);
  const auto A = SqrtSpectrum::of(M1, nu1, g);
  const auto At = SqrtSpectrum::of(M2, nu2, g);
  Eigen::VectorXd u(N);
  double gmin = 1e300;
  for (int j = 0; j < N; ++j) {
    const Point x = g.point(j);
    u[j] = upsilon.value(x, period);
    gmin = std::min({gmin, M1.metric()->norm(x, {1.0}), M2.metric()->norm(x, {1.0})});
  }
  const Eigen::MatrixXcd B = A.vectors.adjoint() * u.asDiagonal() * At.vectors;

  ProjectionReport rep;
  double lmax = 0.0;
  for (double l : lambdas) lmax = std::max(lmax, l);
  rep.band_ratio = (lmax + opts.c * std::pow(lmax, opts.rho)) / gmin / std::abs(g.frequency(N / 2));

  rep.points.resize(lambdas.size());
  auto work = [&](std::size_t i) {
    ProjectionPoint& p = rep.points[i];
    const double lam = lambdas[i];
    const double shifted = lam + opts.c * std::pow(lam, opts.rho);
    const double lift = eps * std::pow(lam, opts.rho);
    const int k1 = count_below(A.values, lam), k2 = count_below(At.values, shifted);
    p.lam = lam;
    p.norm = spectral_norm(B.block(0, k2, k1, N - k2));

    Eigen::VectorXd w1 = A.values.unaryExpr([&](double a) { return CF.chi(lam, a); });
    Eigen::VectorXd w2 = At.values.unaryExpr([&](double a) { return CF.chi(lam, a - lift); });
    p.factorization = spectral_norm(w1.asDiagonal() * B * (Eigen::VectorXd::Ones(N) - w2).asDiagonal());

    if (!opts.identities) return;
    // the identities on the assembled matrices (Frobenius norms bound the spectral ones)
    const Eigen::MatrixXcd P = A.projector(lam), Q = At.projector(shifted);
    const Eigen::MatrixXcd X = A.vectors * w1.asDiagonal() * A.vectors.adjoint();
    const Eigen::MatrixXcd Y = At.vectors * w2.asDiagonal() * At.vectors.adjoint();
    const Eigen::MatrixXcd Id = Eigen::MatrixXcd::Identity(N, N);
    p.identity_lower = (P * X - P).norm();
    p.identity_upper = (Y * (Id - Q)).norm();
    p.projector_defect = std::max({(P * P - P).norm(), (P - P.adjoint()).norm(), (Q * Q - Q).norm(),
                                   (Q - Q.adjoint()).norm()});
  };
  const int jobs = std::max(1, std::min<int>(opts.jobs, static_cast<int>(lambdas.size())));
  if (jobs == 1) {
    for (std::size_t i = 0; i < lambdas.size(); ++i) work(i);
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < jobs; ++t)
      pool.emplace_back([&, t] {
        for (std::size_t i = t; i < lambdas.size(); i += jobs) work(i);
      });
    for (auto& th : pool) th.join();
  }

  std::vector<double> ls, vs;
  rep.exact_zero = true;
  for (const auto& p : rep.points) {
    rep.max_identity_error = std::max({rep.max_identity_error, p.identity_lower, p.identity_upper});
    if (p.norm > 1e-13) {
      rep.exact_zero = false;
      ls.push_back(p.lam);
      vs.push_back(p.norm);
    }
  }
  if (ls.size() >= 4) rep.fit = fit_decay(ls, vs);
  if (ls.size() >= 5) {
    // the spectrum is discrete, so adjacent slopes follow a staircase; the trend is read
    // from a quadratic fit in log-log coordinates and from disjoint windows
    const int n = static_cast<int>(ls.size());
    Eigen::MatrixXd X(n, 3);
    Eigen::VectorXd y(n);
    for (int k = 0; k < n; ++k) {
      const double t = std::log(ls[k]);
      X(k, 0) = 1.0;
      X(k, 1) = t;
      X(k, 2) = t * t;
      y[k] = std::log(vs[k]);
    }
    const Eigen::Vector3d q = X.colPivHouseholderQr().solve(y);
    rep.curvature = q[2];
    rep.slope_low = q[1] + 2.0 * q[2] * std::log(ls.front());
    rep.slope_high = q[1] + 2.0 * q[2] * std::log(ls.back());
    const int windows = std::min(5, n / 3);
    for (int w = 0; w < windows; ++w) {
      const int a = w * n / windows, b = (w + 1) * n / windows;
      rep.window_slopes.push_back(
          fit_decay({ls.begin() + a, ls.begin() + b}, {vs.begin() + a, vs.begin() + b}).slope);
    }
  }
  return rep;
}

}  // namespace pdo
