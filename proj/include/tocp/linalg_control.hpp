#pragma once

// Dense matrix algebra behind the structural theory of coupled heat systems:
// matrix exponentials, numerical ranks, the Kalman controllability matrix and
// decomposition, the window length d_A and the single-column rank q_{A,B}.

#include <algorithm>
#include <span>
#include <string>

#include <Eigen/Dense>

namespace tocp {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Relative singular-value cutoff used for every numerical rank.
inline constexpr double kDefaultRankTol = 1e-10;

/// The coupling matrix A (n x n) and the nonzero input matrix B (n x m).
class ControlPair {
 public:
  ControlPair(Matrix A, Matrix B);

  const Matrix& A() const { return A_; }
  const Matrix& B() const { return B_; }
  int n() const { return static_cast<int>(A_.rows()); }
  int m() const { return static_cast<int>(B_.cols()); }

 private:
  Matrix A_;
  Matrix B_;
};

/// A positive real or +infinity. Never encoded as a sentinel float.
class ExtendedReal {
 public:
  static ExtendedReal infinity() { return ExtendedReal(true, 0.0); }
  static ExtendedReal finite(double value);

  bool is_finite() const { return !infinite_; }
  /// Throws a domain error when the value is +infinity.
  double value() const;
  /// min(this, x) as a plain double.
  double min_with(double x) const { return infinite_ ? x : std::min(value_, x); }
  std::string to_string() const;

 private:
  ExtendedReal(bool infinite, double value) : infinite_(infinite), value_(value) {}
  bool infinite_;
  double value_;
};

/// Orthogonal change of basis P with P^T A P = [A1 A2; 0 A3], P^T B = [B1; 0].
struct KalmanDecomposition {
  Matrix P;
  Matrix A1;
  Matrix A2;  // k x (n-k), empty when k == n
  Matrix A3;  // (n-k) x (n-k), empty when k == n
  Matrix B1;
  int k = 0;

  /// First k columns of P: an orthonormal basis of the controllable subspace.
  Matrix controllable_basis() const { return P.leftCols(k); }
};

/// Largest deviation from the block structure, reported by check_decomposition.
struct DecompositionResiduals {
  double orthogonality = 0.0;    // ||P^T P - I||
  double block_form_A = 0.0;     // ||P^T A P - [A1 A2; 0 A3]||, relative
  double block_form_B = 0.0;     // ||P^T B - [B1; 0]||, relative
  double reconstruction = 0.0;   // max relative error of P (.) P^T back to A, B
  int reduced_kalman_rank = 0;   // rank(B1, A1 B1, ..., A1^{k-1} B1)
};

/// e^{tM} by scaling and squaring with a diagonal Pade approximant.
Matrix mat_exp(const Matrix& M, double t);

/// Count of singular values >= rel_tol * sigma_max (0 for the zero matrix).
int numerical_rank(const Matrix& M, double rel_tol = kDefaultRankTol);

/// (B, AB, ..., A^{n-1}B) for an n x n matrix A and n x p matrix B.
Matrix kalman_matrix(const Matrix& A, const Matrix& B);

int kalman_rank(const ControlPair& pair, double rel_tol = kDefaultRankTol);

/// min over eigenvalues of pi/|Im lambda|, or +infinity when the spectrum is
/// real up to 1e-9 (1 + ||A||).
ExtendedReal compute_dA(const ControlPair& pair);

/// max over columns b of B of rank(b, Ab, ..., A^{n-1}b).
int compute_qAB(const ControlPair& pair, double rel_tol = kDefaultRankTol);

KalmanDecomposition kalman_decompose(const ControlPair& pair,
                                     double rel_tol = kDefaultRankTol);

DecompositionResiduals check_decomposition(const KalmanDecomposition& dec,
                                           const ControlPair& pair,
                                           double rel_tol = kDefaultRankTol);

/// rank(e^{A t_1} B, ..., e^{A t_p} B); times must be strictly increasing.
int sampled_kalman_rank(const ControlPair& pair, std::span<const double> times,
                        double rel_tol = kDefaultRankTol);

/// Logarithmic 2-norm: largest eigenvalue of (M + M^T)/2.
double log_norm(const Matrix& M);

}  // namespace tocp
