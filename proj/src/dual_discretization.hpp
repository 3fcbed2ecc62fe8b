#pragma once

#include <vector>

#include "tocp/spectral_heat.hpp"

namespace tocp::detail {

// Quadrature of int_0^T ||obs(t)||_eps dt for obs(t) = G D(s) eta C(s)^T, where
// s = T - t, D(s) = diag(e^{-lambda_k s}), C(s) = B^T e^{s A^T} V and the multiplier
// is xi = eta V^T for an orthonormal basis V of the controllable subspace.
//
// Each grid cell carries a 3-point Gauss rule. Around every local minimum of the
// grid norms the cells are replaced by a 5-point Gauss rule on pieces graded
// geometrically toward the refined minimizer, so the kink of ||obs|| at a zero
// (and the eps-wide curvature spike of the smoothed norm) is resolved.
class DualDiscretization {
 public:
  // `active` lists the 0-based modes kept as variables (all when empty). Only
  // meaningful when omega is the whole interval, where modes decouple.
  DualDiscretization(const SpectralDomain& dom, const ControlPair& pair, const Matrix& basis,
                     double horizon, int intervals, std::vector<int> active = {});

  struct Evaluation {
    long double F = 0.0L;
    Matrix grad;   // K x r, gradient of F
    Matrix hess;   // Kr x Kr, column-major vec(eta) ordering
    double max_grid_norm = 0.0;
    int graded_regions = 0;
  };

  Evaluation evaluate(const Matrix& eta, double eps, bool with_grad, bool with_hess) const;

  int modes() const { return modes_; }
  int rank() const { return rank_; }
  double horizon() const { return horizon_; }

 private:
  struct Node {
    double t = 0.0;
    double weight = 0.0;
    Vector decay;  // K
    Matrix C;      // m x r
  };

  Node node_at(double t, double weight) const;
  void node_slope(double t, const Matrix& eta, Matrix* obs, Matrix* dobs_ds) const;
  Matrix node_obs(const Node& node, const Matrix& eta) const;
  struct Accumulator;
  void accumulate(const Node& node, double weight, const Matrix& eta, double eps,
                  Accumulator& acc) const;
  bool find_minimizer(double a, double b, const Matrix& eta, double* t_min, double* slope) const;

  SpectralDomain dom_;
  ControlPair pair_;
  Matrix basis_;
  std::vector<int> active_;
  Vector lambdas_;  // of the active modes
  bool full_;
  Matrix gram_;
  Matrix gram_sq_;
  Matrix Bt_;
  Matrix BtAt_;
  double horizon_;
  int intervals_;
  int modes_;
  int rank_;
  double h_;
  std::vector<Node> grid_nodes_;               // intervals + 1 points, weight 0
  std::vector<std::vector<Node>> cell_nodes_;  // 3 Gauss nodes per cell
};

}  // namespace tocp::detail
