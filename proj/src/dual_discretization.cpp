#include "dual_discretization.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>

#include <boost/math/tools/roots.hpp>

#include "quadrature.hpp"
#include "tocp/error.hpp"

namespace tocp::detail {

struct DualDiscretization::Accumulator {
  bool with_grad = false;
  bool with_hess = false;
  long double F = 0.0L;
  Matrix grad;                       // K x r
  Matrix kron_diag;                  // K x r^2, full control region
  std::vector<Matrix> kron_blocks;   // r^2 blocks of K x K otherwise
  std::vector<Vector> rank_one;      // sqrt(w / s^3) vec(g)
};

DualDiscretization::DualDiscretization(const SpectralDomain& dom, const ControlPair& pair,
                                       const Matrix& basis, double horizon, int intervals,
                                       std::vector<int> active)
    : dom_(dom),
      pair_(pair),
      basis_(basis),
      active_(std::move(active)),
      full_(dom.full_control_region()),
      horizon_(horizon),
      intervals_(intervals),
      rank_(static_cast<int>(basis.cols())) {
  if (!(horizon > 0.0) || !std::isfinite(horizon)) {
    fail(ErrorCode::kDomain, "dual functional: horizon must be positive");
  }
  if (intervals < 4) fail(ErrorCode::kArgument, "dual functional: need at least 4 grid intervals");
  if (basis.rows() != pair.n() || rank_ < 1) {
    fail(ErrorCode::kDimension, "dual functional: basis must be n x r with r >= 1");
  }
  if (active_.empty()) {
    active_.resize(dom.modes());
    std::iota(active_.begin(), active_.end(), 0);
  } else if (!full_ && static_cast<int>(active_.size()) != dom.modes()) {
    fail(ErrorCode::kArgument, "dual functional: mode reduction needs omega equal to the interval");
  }
  modes_ = static_cast<int>(active_.size());
  lambdas_.resize(modes_);
  for (int k = 0; k < modes_; ++k) {
    if (active_[k] < 0 || active_[k] >= dom.modes()) {
      fail(ErrorCode::kArgument, "dual functional: active mode out of range");
    }
    lambdas_(k) = dom.lambda(active_[k]);
  }
  if (!full_) {
    gram_ = dom.gram();
    gram_sq_ = gram_ * gram_;
  }
  Bt_ = pair.B().transpose();
  BtAt_ = Bt_ * pair.A().transpose();
  h_ = horizon / intervals;

  using Rule = GaussRule3;
  const Matrix At = pair.A().transpose();
  const Matrix step = mat_exp(At, h_);
  std::vector<Matrix> offsets;
  for (int q = 0; q < Rule::kPoints; ++q) offsets.push_back(mat_exp(At, (1.0 - Rule::nodes[q]) * h_));

  auto decay = [&](double s) {
    Vector d(modes_);
    for (int k = 0; k < modes_; ++k) d(k) = std::exp(-lambdas_(k) * s);
    return d;
  };

  grid_nodes_.resize(intervals + 1);
  cell_nodes_.assign(intervals, std::vector<Node>(Rule::kPoints));
  // power = e^{j h A^T} for s = j h, built by repeated multiplication.
  Matrix power = Matrix::Identity(pair.n(), pair.n());
  for (int j = 0; j <= intervals; ++j) {
    const int i = intervals - j;  // grid index with s = T - tau_i = j h
    Node& g = grid_nodes_[i];
    g.t = (i == intervals) ? horizon : i * h_;
    g.weight = 0.0;
    g.decay = decay(j * h_);
    g.C = Bt_ * power * basis_;
    if (j < intervals) {
      // Cell i - 1 spans s in [j h, (j + 1) h]; its nodes sit at s = j h + (1 - c_q) h.
      const int cell = i - 1;
      for (int q = 0; q < Rule::kPoints; ++q) {
        Node& c = cell_nodes_[cell][q];
        c.t = cell * h_ + Rule::nodes[q] * h_;
        c.weight = Rule::weights[q] * h_;
        c.decay = decay((j + 1.0 - Rule::nodes[q]) * h_);
        c.C = Bt_ * power * offsets[q] * basis_;
      }
      power = power * step;
    }
  }
}

DualDiscretization::Node DualDiscretization::node_at(double t, double weight) const {
  const double s = horizon_ - t;
  Node node;
  node.t = t;
  node.weight = weight;
  node.decay.resize(modes_);
  for (int k = 0; k < modes_; ++k) node.decay(k) = std::exp(-lambdas_(k) * s);
  node.C = Bt_ * mat_exp(pair_.A().transpose(), s) * basis_;
  return node;
}

Matrix DualDiscretization::node_obs(const Node& node, const Matrix& eta) const {
  Matrix W = node.decay.asDiagonal() * (eta * node.C.transpose());
  if (full_) return W;
  return gram_ * W;
}

void DualDiscretization::node_slope(double t, const Matrix& eta, Matrix* obs,
                                    Matrix* dobs_ds) const {
  const double s = horizon_ - t;
  const Matrix E = mat_exp(pair_.A().transpose(), s);
  const Matrix C = Bt_ * E * basis_;
  const Matrix dC = BtAt_ * E * basis_;
  Vector d(modes_);
  for (int k = 0; k < modes_; ++k) d(k) = std::exp(-lambdas_(k) * s);
  Matrix W = d.asDiagonal() * (eta * C.transpose());
  Matrix dW = d.asDiagonal() * (eta * dC.transpose());
  for (int k = 0; k < modes_; ++k) dW.row(k) -= lambdas_(k) * W.row(k);
  if (full_) {
    *obs = W;
    *dobs_ds = dW;
  } else {
    *obs = gram_ * W;
    *dobs_ds = gram_ * dW;
  }
}

bool DualDiscretization::find_minimizer(double a, double b, const Matrix& eta, double* t_min,
                                        double* slope) const {
  Matrix v, dv;
  auto g = [&](double t) {
    node_slope(t, eta, &v, &dv);
    return -2.0 * (v.array() * dv.array()).sum();  // d/dt ||obs||^2
  };
  const double ga = g(a);
  const double gb = g(b);
  if (!(ga < 0.0 && gb > 0.0)) return false;
  std::uintmax_t max_iter = 200;
  const double tol = 1e-14 * std::max(1.0, horizon_);
  auto stop = [tol](double lo, double hi) { return hi - lo <= tol; };
  const auto r = boost::math::tools::toms748_solve(g, a, b, ga, gb, stop, max_iter);
  *t_min = 0.5 * (r.first + r.second);
  node_slope(*t_min, eta, &v, &dv);
  *slope = dv.norm();
  return true;
}

void DualDiscretization::accumulate(const Node& node, double weight, const Matrix& eta, double eps,
                                    Accumulator& acc) const {
  const Matrix obs = node_obs(node, eta);
  const double s2 = obs.squaredNorm() + eps * eps;
  if (s2 == 0.0) return;
  const double sq = std::sqrt(s2);
  acc.F += static_cast<long double>(weight) * sq;
  if (!acc.with_grad && !acc.with_hess) return;

  const Matrix Gobs = full_ ? obs : Matrix(gram_ * obs);
  const Matrix g = node.decay.asDiagonal() * (Gobs * node.C);  // K x r
  if (acc.with_grad) acc.grad.noalias() += (weight / sq) * g;
  if (!acc.with_hess) return;

  const double c = weight / sq;
  const Matrix CtC = node.C.transpose() * node.C;
  if (full_) {
    const Vector d2 = node.decay.array().square();
    const Eigen::Map<const Vector> ctc(CtC.data(), CtC.size());
    acc.kron_diag.noalias() += d2 * (c * ctc).transpose();
  } else {
    const Matrix dd = node.decay * node.decay.transpose();
    for (int pq = 0; pq < rank_ * rank_; ++pq) {
      const double v = c * CtC(pq % rank_, pq / rank_);
      if (v != 0.0) acc.kron_blocks[pq] += v * dd;
    }
  }
  const Eigen::Map<const Vector> gv(g.data(), g.size());
  acc.rank_one.push_back(std::sqrt(weight / (sq * s2)) * gv);
}

DualDiscretization::Evaluation DualDiscretization::evaluate(const Matrix& eta, double eps,
                                                            bool with_grad, bool with_hess) const {
  if (eta.rows() != modes_ || eta.cols() != rank_) {
    fail(ErrorCode::kDimension, "dual functional: multiplier has the wrong shape");
  }
  Evaluation ev;
  Accumulator acc;
  acc.with_grad = with_grad;
  acc.with_hess = with_hess;
  if (with_grad) acc.grad = Matrix::Zero(modes_, rank_);
  if (with_hess) {
    if (full_) {
      acc.kron_diag = Matrix::Zero(modes_, rank_ * rank_);
    } else {
      acc.kron_blocks.assign(rank_ * rank_, Matrix::Zero(modes_, modes_));
    }
  }

  const int N = intervals_;
  std::vector<double> norms(N + 1);
  for (int i = 0; i <= N; ++i) {
    norms[i] = node_obs(grid_nodes_[i], eta).norm();
    ev.max_grid_norm = std::max(ev.max_grid_norm, norms[i]);
  }

  std::vector<char> graded(N, 0);
  using Rule = GaussRule;
  auto gauss_piece = [&](double a, double b) {
    const double len = std::abs(b - a);
    for (int q = 0; q < Rule::kPoints; ++q) {
      const double w = len * Rule::weights[q];
      accumulate(node_at(a + (b - a) * Rule::nodes[q], w), w, eta, eps, acc);
    }
  };
  // Pieces of [from, to] halving toward `to` until they are narrower than w_min.
  auto graded_side = [&](double from, double to, double w_min) {
    double far = from;
    double remaining = std::abs(to - from);
    const double sign = to >= from ? 1.0 : -1.0;
    if (remaining == 0.0) return;
    for (int level = 0; level < 80 && remaining > w_min; ++level) {
      const double piece = 0.5 * remaining;
      gauss_piece(far, far + sign * piece);
      far += sign * piece;
      remaining -= piece;
    }
    gauss_piece(far, to);
  };

  for (int i = 1; i < N; ++i) {
    if (!(norms[i] <= norms[i - 1] && norms[i] < norms[i + 1])) continue;
    const double a = grid_nodes_[i - 1].t;
    const double b = grid_nodes_[i + 1].t;
    double t_min = 0.0, slope = 0.0;
    if (!find_minimizer(a, b, eta, &t_min, &slope)) continue;
    const double floor_width = 1e-15 * std::max(1.0, horizon_);
    const double w_min = std::max(floor_width, slope > 0.0 ? 0.02 * eps / slope : floor_width);
    graded_side(a, t_min, w_min);
    graded_side(b, t_min, w_min);
    graded[i - 1] = graded[i] = 1;
    ++ev.graded_regions;
  }

  for (int cell = 0; cell < N; ++cell) {
    if (graded[cell]) continue;
    for (const Node& node : cell_nodes_[cell]) accumulate(node, node.weight, eta, eps, acc);
  }

  ev.F = acc.F;
  if (with_grad) ev.grad = std::move(acc.grad);
  if (with_hess) {
    const int K = modes_;
    const int dim = K * rank_;
    ev.hess = Matrix::Zero(dim, dim);
    for (int q = 0; q < rank_; ++q) {
      for (int p = 0; p < rank_; ++p) {
        const int pq = p + q * rank_;
        if (full_) {
          ev.hess.block(p * K, q * K, K, K).diagonal() += acc.kron_diag.col(pq);
        } else {
          ev.hess.block(p * K, q * K, K, K) += acc.kron_blocks[pq].cwiseProduct(gram_sq_);
        }
      }
    }
    if (!acc.rank_one.empty()) {
      Matrix cols(dim, static_cast<Eigen::Index>(acc.rank_one.size()));
      for (std::size_t j = 0; j < acc.rank_one.size(); ++j) cols.col(j) = acc.rank_one[j];
      ev.hess.noalias() -= cols * cols.transpose();
    }
  }
  return ev;
}

}  // namespace tocp::detail
