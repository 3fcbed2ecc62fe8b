#include "tocp/linalg_control.hpp"

#include <array>
#include <cmath>
#include <complex>
#include <limits>
#include <sstream>

#include <Eigen/Eigenvalues>
#include <Eigen/QR>
#include <Eigen/SVD>

#include "tocp/error.hpp"

namespace tocp {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kDimension: return "dimension error";
    case ErrorCode::kDomain: return "domain error";
    case ErrorCode::kArgument: return "argument error";
    case ErrorCode::kNumerical: return "numerical error";
    case ErrorCode::kConvergence: return "convergence error";
    case ErrorCode::kFeasibility: return "feasibility error";
    case ErrorCode::kHorizon: return "horizon error";
    case ErrorCode::kDegenerate: return "degenerate multiplier";
    case ErrorCode::kDiagnostic: return "diagnostic error";
    case ErrorCode::kSchema: return "schema error";
    case ErrorCode::kIo: return "I/O error";
  }
  return "unknown error";
}

ControlPair::ControlPair(Matrix A, Matrix B) : A_(std::move(A)), B_(std::move(B)) {
  if (A_.rows() == 0 || A_.rows() != A_.cols()) {
    fail(ErrorCode::kDimension, "ControlPair: A must be a nonempty square matrix");
  }
  if (B_.rows() != A_.rows() || B_.cols() == 0) {
    fail(ErrorCode::kDimension, "ControlPair: B must be n x m with m >= 1");
  }
  if (!A_.allFinite() || !B_.allFinite()) {
    fail(ErrorCode::kDomain, "ControlPair: non-finite entries");
  }
  if (B_.cwiseAbs().maxCoeff() == 0.0) {
    fail(ErrorCode::kArgument, "ControlPair: B must have a nonzero entry");
  }
}

ExtendedReal ExtendedReal::finite(double value) {
  if (!std::isfinite(value) || value <= 0.0) {
    fail(ErrorCode::kDomain, "ExtendedReal::finite expects a positive finite value");
  }
  return ExtendedReal(false, value);
}

double ExtendedReal::value() const {
  if (infinite_) fail(ErrorCode::kDomain, "ExtendedReal: value of +infinity requested");
  return value_;
}

std::string ExtendedReal::to_string() const {
  if (infinite_) return "+inf";
  std::ostringstream os;
  os.precision(17);
  os << value_;
  return os.str();
}

namespace {

// Pade coefficients and 1-norm thresholds (Higham, 2005) for degrees 3..13.
constexpr std::array<double, 4> kPade3 = {120.0, 60.0, 12.0, 1.0};
constexpr std::array<double, 6> kPade5 = {30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0};
constexpr std::array<double, 8> kPade7 = {17297280.0, 8648640.0, 1995840.0, 277200.0,
                                          25200.0,    1512.0,    56.0,      1.0};
constexpr std::array<double, 10> kPade9 = {17643225600.0, 8821612800.0, 2075673600.0,
                                           302702400.0,   30270240.0,   2162160.0,
                                           110880.0,      3960.0,       90.0,
                                           1.0};
constexpr std::array<double, 14> kPade13 = {
    64764752532480000.0, 32382376266240000.0, 7771770303897600.0,
    1187353796428800.0,  129060195264000.0,   10559470521600.0,
    670442572800.0,      33522128640.0,       1323241920.0,
    40840800.0,          960960.0,            16380.0,
    182.0,               1.0};
constexpr double kTheta3 = 1.495585217958292e-2;
constexpr double kTheta5 = 2.539398330063230e-1;
constexpr double kTheta7 = 9.504178996162932e-1;
constexpr double kTheta9 = 2.097847961257068e0;
constexpr double kTheta13 = 5.371920351148152e0;

template <std::size_t N>
Matrix pade_low(const Matrix& X, const std::array<double, N>& c) {
  const auto n = X.rows();
  const Matrix I = Matrix::Identity(n, n);
  const Matrix X2 = X * X;
  Matrix even = c[0] * I;
  Matrix odd = c[1] * I;
  Matrix power = I;
  for (std::size_t j = 2; j + 1 < N + 1; j += 2) {
    power = power * X2;
    even += c[j] * power;
    if (j + 1 < N) odd += c[j + 1] * power;
  }
  const Matrix U = X * odd;
  return (even - U).partialPivLu().solve(even + U);
}

Matrix pade13(const Matrix& X) {
  const auto n = X.rows();
  const auto& b = kPade13;
  const Matrix I = Matrix::Identity(n, n);
  const Matrix X2 = X * X;
  const Matrix X4 = X2 * X2;
  const Matrix X6 = X4 * X2;
  const Matrix U =
      X * (X6 * (b[13] * X6 + b[11] * X4 + b[9] * X2) + b[7] * X6 + b[5] * X4 +
           b[3] * X2 + b[1] * I);
  const Matrix V = X6 * (b[12] * X6 + b[10] * X4 + b[8] * X2) + b[6] * X6 +
                   b[4] * X4 + b[2] * X2 + b[0] * I;
  return (V - U).partialPivLu().solve(V + U);
}


}  // namespace

Matrix mat_exp(const Matrix& M, double t) {
  if (M.rows() != M.cols()) fail(ErrorCode::kDimension, "mat_exp: matrix must be square");
  if (!std::isfinite(t)) fail(ErrorCode::kDomain, "mat_exp: non-finite time");
  const auto n = M.rows();
  if (n == 0) return Matrix(0, 0);
  const Matrix X = t * M;
  if (!X.allFinite()) fail(ErrorCode::kDomain, "mat_exp: non-finite entries");
  const double norm1 = X.cwiseAbs().colwise().sum().maxCoeff();
  if (norm1 == 0.0) return Matrix::Identity(n, n);
  if (norm1 <= kTheta3) return pade_low(X, kPade3);
  if (norm1 <= kTheta5) return pade_low(X, kPade5);
  if (norm1 <= kTheta7) return pade_low(X, kPade7);
  if (norm1 <= kTheta9) return pade_low(X, kPade9);
  int squarings = 0;
  if (norm1 > kTheta13) {
    squarings = std::max(0, static_cast<int>(std::ceil(std::log2(norm1 / kTheta13))));
  }
  Matrix E = pade13(X / std::ldexp(1.0, squarings));
  for (int i = 0; i < squarings; ++i) E = E * E;
  return E;
}

int numerical_rank(const Matrix& M, double rel_tol) {
  if (M.size() == 0) return 0;
  Eigen::JacobiSVD<Matrix> svd(M);
  const Vector& s = svd.singularValues();
  if (s.size() == 0 || s(0) == 0.0) return 0;
  const double cutoff = rel_tol * s(0);
  int rank = 0;
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    if (s(i) >= cutoff) ++rank;
  }
  return rank;
}

Matrix kalman_matrix(const Matrix& A, const Matrix& B) {
  if (A.rows() != A.cols() || B.rows() != A.rows()) {
    fail(ErrorCode::kDimension, "kalman_matrix: inconsistent dimensions");
  }
  const auto n = A.rows();
  const auto p = B.cols();
  Matrix C(n, n * p);
  C.leftCols(p) = B;
  for (Eigen::Index i = 1; i < n; ++i) {
    C.middleCols(i * p, p) = A * C.middleCols((i - 1) * p, p);
  }
  return C;
}

int kalman_rank(const ControlPair& pair, double rel_tol) {
  return numerical_rank(kalman_matrix(pair.A(), pair.B()), rel_tol);
}

ExtendedReal compute_dA(const ControlPair& pair) {
  const Matrix& A = pair.A();
  Eigen::EigenSolver<Matrix> es(A, /*computeEigenvectors=*/false);
  if (es.info() != Eigen::Success) {
    fail(ErrorCode::kNumerical, "compute_dA: eigenvalue solver failed");
  }
  const double imag_tol = 1e-9 * (1.0 + A.norm());
  double max_imag = 0.0;
  for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) {
    const double im = std::abs(es.eigenvalues()(i).imag());
    if (im > imag_tol) max_imag = std::max(max_imag, im);
  }
  if (max_imag == 0.0) return ExtendedReal::infinity();
  return ExtendedReal::finite(M_PI / max_imag);
}

int compute_qAB(const ControlPair& pair, double rel_tol) {
  int q = 0;
  for (int j = 0; j < pair.m(); ++j) {
    q = std::max(q, numerical_rank(kalman_matrix(pair.A(), pair.B().col(j)), rel_tol));
  }
  return q;
}

namespace {

// Flip column signs so that the largest-magnitude entry of each column is
// positive (first one on ties); makes P independent of Householder signs.
void canonicalize_signs(Matrix& P) {
  for (Eigen::Index j = 0; j < P.cols(); ++j) {
    Eigen::Index best = 0;
    double best_abs = -1.0;
    for (Eigen::Index i = 0; i < P.rows(); ++i) {
      if (std::abs(P(i, j)) > best_abs + 1e-14) {
        best_abs = std::abs(P(i, j));
        best = i;
      }
    }
    if (P(best, j) < 0.0) P.col(j) *= -1.0;
  }
}

}  // namespace

KalmanDecomposition kalman_decompose(const ControlPair& pair, double rel_tol) {
  const int n = pair.n();
  const Matrix C = kalman_matrix(pair.A(), pair.B());
  Eigen::JacobiSVD<Matrix> svd(C, Eigen::ComputeFullU);
  const Vector& s = svd.singularValues();
  int k = 0;
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    if (s(i) >= rel_tol * s(0)) ++k;
  }

  // QR of [range basis | identity] completes the basis in a fixed column order.
  Matrix stacked(n, k + n);
  stacked.leftCols(k) = svd.matrixU().leftCols(k);
  stacked.rightCols(n) = Matrix::Identity(n, n);
  Eigen::HouseholderQR<Matrix> qr(stacked);
  Matrix P = qr.householderQ() * Matrix::Identity(n, n);
  canonicalize_signs(P);

  const Matrix At = P.transpose() * pair.A() * P;
  const Matrix Bt = P.transpose() * pair.B();
  KalmanDecomposition dec;
  dec.P = P;
  dec.k = k;
  dec.A1 = At.topLeftCorner(k, k);
  dec.B1 = Bt.topRows(k);
  if (k < n) {
    dec.A2 = At.topRightCorner(k, n - k);
    dec.A3 = At.bottomRightCorner(n - k, n - k);
  }
  return dec;
}

DecompositionResiduals check_decomposition(const KalmanDecomposition& dec,
                                           const ControlPair& pair, double rel_tol) {
  const int n = pair.n();
  const int m = pair.m();
  const int k = dec.k;
  DecompositionResiduals r;
  r.orthogonality = (dec.P.transpose() * dec.P - Matrix::Identity(n, n)).norm();

  Matrix blockA = Matrix::Zero(n, n);
  blockA.topLeftCorner(k, k) = dec.A1;
  if (k < n) {
    blockA.topRightCorner(k, n - k) = dec.A2;
    blockA.bottomRightCorner(n - k, n - k) = dec.A3;
  }
  Matrix blockB = Matrix::Zero(n, m);
  blockB.topRows(k) = dec.B1;

  const double scaleA = std::max(pair.A().norm(), 1.0);
  const double scaleB = pair.B().norm();
  r.block_form_A = (dec.P.transpose() * pair.A() * dec.P - blockA).norm() / scaleA;
  r.block_form_B = (dec.P.transpose() * pair.B() - blockB).norm() / scaleB;
  const double recA = (dec.P * blockA * dec.P.transpose() - pair.A()).norm() / scaleA;
  const double recB = (dec.P * blockB - pair.B()).norm() / scaleB;
  r.reconstruction = std::max(recA, recB);
  r.reduced_kalman_rank = k == 0 ? 0 : numerical_rank(kalman_matrix(dec.A1, dec.B1), rel_tol);
  return r;
}

int sampled_kalman_rank(const ControlPair& pair, std::span<const double> times,
                        double rel_tol) {
  if (times.empty()) fail(ErrorCode::kArgument, "sampled_kalman_rank: no sample times");
  for (std::size_t i = 0; i < times.size(); ++i) {
    if (!std::isfinite(times[i])) fail(ErrorCode::kArgument, "sampled_kalman_rank: non-finite time");
    if (i > 0 && !(times[i] > times[i - 1])) {
      fail(ErrorCode::kArgument, "sampled_kalman_rank: times must be strictly increasing");
    }
  }
  const int n = pair.n();
  const int m = pair.m();
  Matrix stacked(n, m * static_cast<Eigen::Index>(times.size()));
  for (std::size_t i = 0; i < times.size(); ++i) {
    stacked.middleCols(static_cast<Eigen::Index>(i) * m, m) =
        mat_exp(pair.A(), times[i] - times[0]) * pair.B();
  }
  // e^{t_1 A} is invertible, so factoring it out and normalizing columns leaves the rank unchanged.
  for (Eigen::Index j = 0; j < stacked.cols(); ++j) {
    const double c = stacked.col(j).norm();
    if (c > 0.0) stacked.col(j) /= c;
  }
  return numerical_rank(stacked, rel_tol);
}

double log_norm(const Matrix& M) {
  const Matrix S = 0.5 * (M + M.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> es(S, Eigen::EigenvaluesOnly);
  return es.eigenvalues().maxCoeff();
}

}  // namespace tocp
