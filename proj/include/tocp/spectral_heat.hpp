#pragma once

// Spectral truncation of the coupled heat system y_t = Delta y + A y + chi_omega B u
// on the interval (0, L) with Dirichlet conditions. Everything is expressed in
// the sine eigenbasis e_k(x) = sqrt(2/L) sin(k pi x / L), where the semigroup is
// block diagonal and exactly computable.

#include <map>
#include <vector>

#include "tocp/linalg_control.hpp"

namespace tocp {

struct Interval {
  double a = 0.0;
  double b = 0.0;
};

class SpectralDomain {
 public:
  double length() const { return length_; }
  Interval omega() const { return omega_; }
  int modes() const { return static_cast<int>(lambdas_.size()); }
  const Vector& lambdas() const { return lambdas_; }
  double lambda(int k) const { return lambdas_(k); }
  /// G_jk = int_omega e_j e_k dx.
  const Matrix& gram() const { return gram_; }
  /// True when omega is the whole interval; the Gram matrix is then exactly I.
  bool full_control_region() const { return full_; }

 private:
  friend SpectralDomain build_domain(double length, Interval omega, int modes);
  double length_ = 0.0;
  Interval omega_;
  Vector lambdas_;
  Matrix gram_;
  bool full_ = false;
};

SpectralDomain build_domain(double length, Interval omega, int modes);

/// Mode-by-component coefficients: row k is the R^n coefficient of e_{k+1}.
class SpectralVector {
 public:
  SpectralVector() = default;
  explicit SpectralVector(Matrix coeffs);
  static SpectralVector zero(int modes, int n) { return SpectralVector(Matrix::Zero(modes, n)); }
  /// v * e_mode for a 1-based mode index.
  static SpectralVector single_mode(int modes, int mode, const Vector& v);

  const Matrix& coeffs() const { return coeffs_; }
  int modes() const { return static_cast<int>(coeffs_.rows()); }
  int components() const { return static_cast<int>(coeffs_.cols()); }
  /// Frobenius norm, equal to the L^2(Omega; R^n) norm.
  double norm() const { return coeffs_.norm(); }
  double dot(const SpectralVector& other) const;

 private:
  Matrix coeffs_;
};

/// Time-gridded control coefficients; values[i] is the K x m matrix u(grid[i]).
struct ControlTrajectory {
  double horizon = 0.0;
  std::vector<double> grid;
  std::vector<Matrix> values;
  std::vector<double> norms;

  std::size_t size() const { return grid.size(); }
  /// Largest |norms[i] - ||values[i]|||, used to audit stored norms.
  double norm_consistency() const;
  /// Max over grid of norms[i]; admissible trajectories stay <= 1 + 1e-9.
  double max_norm() const;
};

/// Row k -> e^{t(A - lambda_k I)} z_k, or with A^T when adjoint is set.
SpectralVector semigroup_apply(const SpectralDomain& dom, const ControlPair& pair,
                               const SpectralVector& v, double t, bool adjoint = false);

/// t -> B^* e^{(T-t) A^*} xi with the truncated chi_omega projection, for a
/// fixed multiplier xi and horizon T. Evaluations are exact for the truncated model.
class ObservationMap {
 public:
  ObservationMap(const SpectralDomain& dom, const ControlPair& pair, SpectralVector xi,
                 double horizon);

  double horizon() const { return horizon_; }
  const SpectralVector& multiplier() const { return xi_; }
  const SpectralDomain& domain() const { return dom_; }
  const ControlPair& pair() const { return pair_; }

  /// K x m observation at time t in [0, T].
  Matrix value(double t) const;
  /// d/dt of value(t).
  Matrix derivative(double t) const;
  /// Adjoint state e^{(T-t) A^*} xi as K x n coefficients (before B^T and chi_omega).
  Matrix adjoint_state(double t) const;
  double norm(double t) const { return value(t).norm(); }

 private:
  void check_time(double t) const;
  SpectralDomain dom_;
  ControlPair pair_;
  SpectralVector xi_;
  double horizon_;
};

Matrix observation(const SpectralDomain& dom, const ControlPair& pair,
                   const SpectralVector& xi, double horizon, double t);

/// y(T; y0, u) with exact exponential propagation per mode and the control
/// treated as piecewise linear in time between grid points.
SpectralVector solve_forward(const SpectralDomain& dom, const ControlPair& pair,
                             const SpectralVector& y0, const ControlTrajectory& u);

}  // namespace tocp
