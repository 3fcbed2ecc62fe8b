#include "tocp/spectral_heat.hpp"

#include <algorithm>
#include <cmath>
#include <iterator>
#include <string>

#include "tocp/error.hpp"

namespace tocp {

namespace {

double sine_product_primitive(int j, int k, double L, double x) {
  // Antiderivative of (2/L) sin(j pi x/L) sin(k pi x/L).
  const double w = M_PI / L;
  if (j == k) return (x - std::sin(2.0 * j * w * x) / (2.0 * j * w)) / L;
  const double dm = (j - k) * w;
  const double dp = (j + k) * w;
  return (std::sin(dm * x) / dm - std::sin(dp * x) / dp) / L;
}

}  // namespace

SpectralDomain build_domain(double length, Interval omega, int modes) {
  if (!(length > 0.0) || !std::isfinite(length)) {
    fail(ErrorCode::kArgument, "build_domain: length must be positive and finite");
  }
  if (modes < 1) fail(ErrorCode::kArgument, "build_domain: need at least one mode");
  if (!(omega.a >= 0.0 && omega.a < omega.b && omega.b <= length)) {
    fail(ErrorCode::kArgument, "build_domain: control region must satisfy 0 <= a < b <= L");
  }
  SpectralDomain dom;
  dom.length_ = length;
  dom.omega_ = omega;
  dom.lambdas_.resize(modes);
  for (int k = 0; k < modes; ++k) {
    const double w = (k + 1) * M_PI / length;
    dom.lambdas_(k) = w * w;
  }
  dom.full_ = omega.a == 0.0 && omega.b == length;
  if (dom.full_) {
    dom.gram_ = Matrix::Identity(modes, modes);
  } else {
    dom.gram_.resize(modes, modes);
    for (int j = 1; j <= modes; ++j) {
      for (int k = j; k <= modes; ++k) {
        const double g = sine_product_primitive(j, k, length, omega.b) -
                         sine_product_primitive(j, k, length, omega.a);
        dom.gram_(j - 1, k - 1) = g;
        dom.gram_(k - 1, j - 1) = g;
      }
    }
  }
  return dom;
}

SpectralVector::SpectralVector(Matrix coeffs) : coeffs_(std::move(coeffs)) {
  if (!coeffs_.allFinite()) fail(ErrorCode::kDomain, "SpectralVector: non-finite coefficient");
}

SpectralVector SpectralVector::single_mode(int modes, int mode, const Vector& v) {
  if (mode < 1 || mode > modes) fail(ErrorCode::kArgument, "SpectralVector: mode out of range");
  Matrix c = Matrix::Zero(modes, v.size());
  c.row(mode - 1) = v.transpose();
  return SpectralVector(std::move(c));
}

double SpectralVector::dot(const SpectralVector& other) const {
  if (other.coeffs_.rows() != coeffs_.rows() || other.coeffs_.cols() != coeffs_.cols()) {
    fail(ErrorCode::kDimension, "SpectralVector::dot: shape mismatch");
  }
  long double acc = 0.0L;
  for (Eigen::Index j = 0; j < coeffs_.cols(); ++j) {
    for (Eigen::Index i = 0; i < coeffs_.rows(); ++i) {
      acc += static_cast<long double>(coeffs_(i, j)) * other.coeffs_(i, j);
    }
  }
  return static_cast<double>(acc);
}

double ControlTrajectory::norm_consistency() const {
  double worst = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    worst = std::max(worst, std::abs(norms[i] - values[i].norm()));
  }
  return worst;
}

double ControlTrajectory::max_norm() const {
  double worst = 0.0;
  for (double v : norms) worst = std::max(worst, v);
  return worst;
}

namespace {

void check_shape(const SpectralDomain& dom, const ControlPair& pair, const SpectralVector& v,
                 const char* who) {
  if (v.modes() != dom.modes() || v.components() != pair.n()) {
    fail(ErrorCode::kDimension, std::string(who) + ": spectral vector must be K x n");
  }
}

}  // namespace

SpectralVector semigroup_apply(const SpectralDomain& dom, const ControlPair& pair,
                               const SpectralVector& v, double t, bool adjoint) {
  if (!(t >= 0.0) || !std::isfinite(t)) fail(ErrorCode::kDomain, "semigroup_apply: t must be >= 0");
  check_shape(dom, pair, v, "semigroup_apply");
  const Matrix E = mat_exp(adjoint ? Matrix(pair.A().transpose()) : pair.A(), t);
  Matrix out = v.coeffs() * E.transpose();
  for (int k = 0; k < dom.modes(); ++k) out.row(k) *= std::exp(-dom.lambda(k) * t);
  return SpectralVector(std::move(out));
}

ObservationMap::ObservationMap(const SpectralDomain& dom, const ControlPair& pair,
                               SpectralVector xi, double horizon)
    : dom_(dom), pair_(pair), xi_(std::move(xi)), horizon_(horizon) {
  check_shape(dom_, pair_, xi_, "ObservationMap");
  if (!(horizon_ > 0.0) || !std::isfinite(horizon_)) {
    fail(ErrorCode::kDomain, "ObservationMap: horizon must be positive");
  }
}

void ObservationMap::check_time(double t) const {
  if (!(t >= 0.0 && t <= horizon_)) fail(ErrorCode::kDomain, "observation: t outside [0, T]");
}

Matrix ObservationMap::adjoint_state(double t) const {
  check_time(t);
  const double s = horizon_ - t;
  // Row k of the result is (e^{s(A-lambda_k)^T} xi_k)^T = xi_k^T e^{s(A-lambda_k)}.
  Matrix phi = xi_.coeffs() * mat_exp(pair_.A(), s);
  for (int k = 0; k < dom_.modes(); ++k) phi.row(k) *= std::exp(-dom_.lambda(k) * s);
  return phi;
}

Matrix ObservationMap::value(double t) const {
  const Matrix W = adjoint_state(t) * pair_.B();
  if (dom_.full_control_region()) return W;
  return dom_.gram() * W;
}

Matrix ObservationMap::derivative(double t) const {
  check_time(t);
  const double s = horizon_ - t;
  const Matrix E = mat_exp(pair_.A(), s);
  Matrix W(dom_.modes(), pair_.m());
  const Matrix EA = E * pair_.A();
  const Matrix EB = E * pair_.B();
  const Matrix EAB = EA * pair_.B();
  for (int k = 0; k < dom_.modes(); ++k) {
    const double d = std::exp(-dom_.lambda(k) * s);
    // d/dt = -d/ds of d(s) xi_k^T e^{sA} B.
    W.row(k) = -d * (xi_.coeffs().row(k) * EAB - dom_.lambda(k) * xi_.coeffs().row(k) * EB);
  }
  if (dom_.full_control_region()) return W;
  return dom_.gram() * W;
}

Matrix observation(const SpectralDomain& dom, const ControlPair& pair, const SpectralVector& xi,
                   double horizon, double t) {
  return ObservationMap(dom, pair, xi, horizon).value(t);
}

namespace {

struct ModePropagator {
  Matrix E;     // e^{hM}
  Matrix phi1;  // phi_1(hM)
  Matrix phi2;  // phi_2(hM)
};

std::vector<ModePropagator> propagators(const SpectralDomain& dom, const ControlPair& pair,
                                        double h) {
  const int n = pair.n();
  std::vector<ModePropagator> out(dom.modes());
  Matrix aug = Matrix::Zero(3 * n, 3 * n);
  aug.block(0, n, n, n) = Matrix::Identity(n, n);
  aug.block(n, 2 * n, n, n) = Matrix::Identity(n, n);
  for (int k = 0; k < dom.modes(); ++k) {
    aug.topLeftCorner(n, n) = h * (pair.A() - dom.lambda(k) * Matrix::Identity(n, n));
    const Matrix X = mat_exp(aug, 1.0);
    out[k] = {X.topLeftCorner(n, n), X.block(0, n, n, n), X.block(0, 2 * n, n, n)};
  }
  return out;
}

}  // namespace

SpectralVector solve_forward(const SpectralDomain& dom, const ControlPair& pair,
                             const SpectralVector& y0, const ControlTrajectory& u) {
  check_shape(dom, pair, y0, "solve_forward");
  const std::size_t N = u.grid.size();
  if (N < 2 || u.values.size() != N) fail(ErrorCode::kArgument, "solve_forward: malformed control grid");
  if (u.grid.front() != 0.0) fail(ErrorCode::kArgument, "solve_forward: grid must start at 0");
  for (std::size_t i = 0; i < N; ++i) {
    if (u.values[i].rows() != dom.modes() || u.values[i].cols() != pair.m()) {
      fail(ErrorCode::kArgument, "solve_forward: control values must be K x m");
    }
    if (i > 0 && !(u.grid[i] > u.grid[i - 1])) {
      fail(ErrorCode::kArgument, "solve_forward: grid must be strictly increasing");
    }
  }
  const Matrix Bt = pair.B().transpose();
  auto input = [&](std::size_t i) -> Matrix {
    // Row j is (B (G U)_j)^T.
    if (dom.full_control_region()) return u.values[i] * Bt;
    return dom.gram() * u.values[i] * Bt;
  };

  // Steps equal to within 1e-12 relative share one set of propagators.
  std::vector<std::pair<double, std::vector<ModePropagator>>> cache;
  Matrix Z = y0.coeffs();
  Matrix bl = input(0);
  for (std::size_t i = 0; i + 1 < N; ++i) {
    const double h = u.grid[i + 1] - u.grid[i];
    auto it = std::find_if(cache.begin(), cache.end(),
                           [h](const auto& e) { return std::abs(e.first - h) <= 1e-12 * h; });
    if (it == cache.end()) {
      cache.emplace_back(h, propagators(dom, pair, h));
      it = std::prev(cache.end());
    }
    const auto& props = it->second;
    const Matrix br = input(i + 1);
    for (int k = 0; k < dom.modes(); ++k) {
      const auto& p = props[k];
      Z.row(k) = Z.row(k) * p.E.transpose() +
                 h * (bl.row(k) * (p.phi1 - p.phi2).transpose() + br.row(k) * p.phi2.transpose());
    }
    bl = br;
  }
  return SpectralVector(std::move(Z));
}

}  // namespace tocp
