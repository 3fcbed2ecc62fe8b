#include "tocp/steering_dual.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <sstream>

#include <boost/math/tools/roots.hpp>

#include "dual_discretization.hpp"
#include "tocp/error.hpp"

namespace tocp {

namespace {

using detail::DualDiscretization;

long double frob_dot(const Matrix& a, const Matrix& b) {
  long double acc = 0.0L;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    acc += static_cast<long double>(a.data()[i]) * static_cast<long double>(b.data()[i]);
  }
  return acc;
}

void check_state(const SpectralDomain& dom, const ControlPair& pair, const SpectralVector& v,
                 const char* what) {
  if (v.modes() != dom.modes() || v.components() != pair.n()) {
    std::ostringstream msg;
    msg << what << ": expected " << dom.modes() << " x " << pair.n() << " coefficients, got "
        << v.modes() << " x " << v.components();
    fail(ErrorCode::kDimension, msg.str());
  }
}

void check_horizon(double T) {
  if (!(T > 0.0) || !std::isfinite(T)) fail(ErrorCode::kDomain, "horizon must be positive and finite");
}

// Newton on the eps-smoothed reduced functional
//   J(eta) = 1/2 F_eps(eta)^2 + <alpha, eta>.
struct NewtonOutcome {
  int iterations = 0;
  bool converged = false;
  double gradient = 0.0;
  long double value = 0.0L;
};

NewtonOutcome newton_stage(const DualDiscretization& disc, const Matrix& alpha, double eps,
                           const SteeringOptions& opts, Matrix& eta) {
  NewtonOutcome out;
  const int dim = static_cast<int>(eta.size());
  auto value_at = [&](const Matrix& x) {
    const auto ev = disc.evaluate(x, eps, false, false);
    return 0.5L * ev.F * ev.F + frob_dot(alpha, x);
  };

  long double J_prev = std::numeric_limits<long double>::infinity();
  for (int it = 0; it < opts.max_newton_iterations; ++it) {
    const auto ev = disc.evaluate(eta, eps, true, true);
    const double F = static_cast<double>(ev.F);
    const long double J = 0.5L * ev.F * ev.F + frob_dot(alpha, eta);
    const Matrix g = F * ev.grad + alpha;
    const double scale = 1.0 + std::abs(static_cast<double>(J));
    const double gnorm = g.norm();
    out.iterations = it;
    out.gradient = gnorm / scale;
    out.value = J;

    const bool small_gradient = gnorm <= opts.grad_tol * scale;
    const bool stalled_value = static_cast<double>(J_prev - J) <= opts.rel_decrease_tol * scale;
    if (small_gradient && std::isfinite(static_cast<double>(J_prev)) && stalled_value) {
      out.converged = true;
      return out;
    }

    const Eigen::Map<const Vector> gv(g.data(), dim);
    const Eigen::Map<const Vector> fg(ev.grad.data(), dim);
    Matrix H = F * ev.hess;
    H.noalias() += fg * fg.transpose();
    H = 0.5 * (H + H.transpose()).eval();

    Vector p = H.ldlt().solve(-gv);
    if (!p.allFinite() || gv.dot(p) >= 0.0) {
      double mu = 1e-10 * std::max(1.0, H.diagonal().cwiseAbs().maxCoeff());
      for (int tries = 0; tries < 40; ++tries, mu *= 10.0) {
        Eigen::LLT<Matrix> llt(H + mu * Matrix::Identity(dim, dim));
        if (llt.info() != Eigen::Success) continue;
        p = llt.solve(-gv);
        if (p.allFinite() && gv.dot(p) < 0.0) break;
      }
      if (!p.allFinite() || gv.dot(p) >= 0.0) p = -gv;
    }

    const double slope = gv.dot(p);
    // A predicted decrease below 1e-18 |J| is beyond what the quadrature resolves:
    // the remaining gradient then comes from the graded nodes moving with eta.
    if ((small_gradient && -slope <= 2.0 * opts.rel_decrease_tol * scale) ||
        -slope <= 1e-18 * scale) {
      out.converged = true;
      return out;
    }

    const Eigen::Map<const Matrix> step(p.data(), eta.rows(), eta.cols());
    double t = 1.0;
    bool accepted = false;
    Matrix trial;
    long double J_trial = 0.0L;
    for (int ls = 0; ls < 60; ++ls, t *= 0.5) {
      trial = eta + t * step;
      J_trial = value_at(trial);
      if (J_trial <= J + 1e-4L * t * slope) {
        accepted = true;
        break;
      }
    }
    if (accepted && !(J_trial < J)) {
      out.converged = -slope <= 1e-14 * scale;
      return out;
    }
    if (!accepted) {
      // No representable decrease left along a descent direction.
      out.converged = gnorm <= std::sqrt(opts.grad_tol) * scale;
      return out;
    }
    eta = trial;
    J_prev = J;
  }
  out.iterations = opts.max_newton_iterations;
  return out;
}

}  // namespace

DualEvaluation dual_functional(const SpectralDomain& dom, const ControlPair& pair,
                               const SpectralVector& xi, double horizon,
                               const SpectralVector& y0, double smoothing, int grid_intervals) {
  check_horizon(horizon);
  check_state(dom, pair, xi, "dual functional multiplier");
  check_state(dom, pair, y0, "dual functional initial state");
  if (!(smoothing >= 0.0)) fail(ErrorCode::kArgument, "smoothing must be nonnegative");
  const Matrix I = Matrix::Identity(pair.n(), pair.n());
  DualDiscretization disc(dom, pair, I, horizon, grid_intervals);
  const Matrix a = semigroup_apply(dom, pair, y0, horizon).coeffs();
  const auto ev = disc.evaluate(xi.coeffs(), smoothing, true, false);
  DualEvaluation out;
  out.value = static_cast<double>(0.5L * ev.F * ev.F + frob_dot(a, xi.coeffs()));
  out.subgradient = SpectralVector(static_cast<double>(ev.F) * ev.grad + a);
  return out;
}

FeasibilityResult feasibility_check(const ControlPair& pair, const SpectralVector& y0, double tol,
                                    double rank_tol) {
  if (y0.components() != pair.n()) {
    fail(ErrorCode::kDimension, "feasibility: initial state has the wrong number of components");
  }
  FeasibilityResult out;
  const KalmanDecomposition dec = kalman_decompose(pair, rank_tol);
  out.controllable_dim = dec.k;
  const double norm = y0.norm();
  if (norm == 0.0) {
    out.feasible = true;
    out.trivial = true;
    return out;
  }
  const Matrix Z = y0.coeffs() * dec.P;
  out.residual = (dec.k < pair.n()) ? Z.rightCols(pair.n() - dec.k).norm() : 0.0;
  out.feasible = out.residual <= tol * norm;
  return out;
}

SteeringResult min_norm(const SpectralDomain& dom, const ControlPair& pair,
                        const SpectralVector& y0, double horizon, const SteeringOptions& opts,
                        const SpectralVector* warm_start) {
  check_horizon(horizon);
  check_state(dom, pair, y0, "min_norm initial state");
  if (y0.norm() == 0.0) fail(ErrorCode::kArgument, "min_norm: initial state is zero");
  if (opts.smoothing.empty()) fail(ErrorCode::kArgument, "min_norm: empty smoothing schedule");

  const FeasibilityResult feas = feasibility_check(pair, y0, opts.feasibility_tol, opts.rank_tol);
  if (!feas.feasible) {
    std::ostringstream msg;
    msg.precision(17);
    msg << "initial state leaves the controllable subspace (residual " << feas.residual << ")";
    fail(ErrorCode::kFeasibility, msg.str());
  }
  const KalmanDecomposition dec = kalman_decompose(pair, opts.rank_tol);
  const Matrix V = dec.controllable_basis();

  // With omega = Omega the modes only interact through the norm, so modes absent
  // from y0 stay zero at the minimizer and are dropped from the variables.
  std::vector<int> active;
  for (int k = 0; k < dom.modes(); ++k) {
    if (!dom.full_control_region() || y0.coeffs().row(k).squaredNorm() > 0.0) active.push_back(k);
  }
  DualDiscretization disc(dom, pair, V, horizon, opts.grid_intervals, active);
  const int Ka = static_cast<int>(active.size());

  const Matrix a_full = semigroup_apply(dom, pair, y0, horizon).coeffs() * V;
  Matrix alpha(Ka, V.cols());
  for (int i = 0; i < Ka; ++i) alpha.row(i) = a_full.row(active[i]);
  if (alpha.norm() == 0.0) fail(ErrorCode::kNumerical, "min_norm: propagated state vanished");

  auto F0 = [&](const Matrix& x) { return static_cast<double>(disc.evaluate(x, 0.0, false, false).F); };

  Matrix dir = -alpha / alpha.norm();
  if (opts.init_seed) {
    std::mt19937_64 rng(*opts.init_seed);
    std::normal_distribution<double> normal;
    for (Eigen::Index i = 0; i < dir.size(); ++i) dir.data()[i] = normal(rng);
    if (frob_dot(alpha, dir) > 0.0L) dir = -dir;
    dir /= dir.norm();
  }
  if (warm_start != nullptr) {
    check_state(dom, pair, *warm_start, "min_norm warm start");
    const Matrix w = warm_start->coeffs() * V;
    Matrix cand(Ka, V.cols());
    for (int i = 0; i < Ka; ++i) cand.row(i) = w.row(active[i]);
    if (cand.norm() > 0.0 && frob_dot(alpha, cand) < 0.0L) dir = cand / cand.norm();
  }
  double Fd = F0(dir);
  if (!(Fd > 0.0) || frob_dot(alpha, dir) >= 0.0L) {
    dir = -alpha / alpha.norm();
    Fd = F0(dir);
  }
  if (!(Fd > 0.0)) fail(ErrorCode::kDegenerate, "min_norm: observation of the start vanishes");

  // Rescale y0 so that N is about 1; J, its gradient and N scale by c^2, c, c.
  const double N_start = static_cast<double>(-frob_dot(alpha, dir)) / Fd;
  const double c = 1.0 / N_start;
  const Matrix alpha_s = c * alpha;
  Matrix eta = (static_cast<double>(-frob_dot(alpha_s, dir)) / (Fd * Fd)) * dir;

  SteeringResult out;
  out.horizon = horizon;
  NewtonOutcome last;
  for (double rel : opts.smoothing) {
    const double eps = rel * disc.evaluate(eta, 0.0, false, false).max_grid_norm;
    last = newton_stage(disc, alpha_s, eps, opts, eta);
    out.newton_iterations += last.iterations;
  }
  out.converged = last.converged;
  out.gradient_norm = last.gradient;

  const double F_final = F0(eta);
  const double N_s = static_cast<double>(-frob_dot(alpha_s, eta)) / F_final;
  if (!(N_s > 0.0) || !std::isfinite(N_s)) {
    fail(ErrorCode::kConvergence, "min_norm: optimizer ended at a non-descent multiplier");
  }
  if (!out.converged) {
    std::ostringstream msg;
    msg.precision(6);
    msg << "min_norm: Newton did not converge at T = " << horizon << " after "
        << out.newton_iterations << " iterations (relative gradient " << last.gradient << ")";
    fail(ErrorCode::kConvergence, msg.str());
  }

  Matrix xi = Matrix::Zero(dom.modes(), pair.n());
  const Matrix eta_full = eta * V.transpose();
  for (int i = 0; i < Ka; ++i) xi.row(active[i]) = eta_full.row(i);
  const double xi_norm = xi.norm();
  out.xi = SpectralVector(xi / xi_norm);
  out.min_norm = N_s / c;
  out.primal_norm = F_final / c;
  out.dual_value = static_cast<double>((0.5L * F_final * F_final + frob_dot(alpha_s, eta)) /
                                       (static_cast<long double>(c) * c));
  if (opts.compute_residual) {
    out.terminal_residual = steering_residual(dom, pair, y0, out.xi, horizon, out.min_norm,
                                              opts.grid_intervals, opts.switching);
  }
  return out;
}

ControlTrajectory synthesize_control(const SpectralDomain& dom, const ControlPair& pair,
                                     const SpectralVector& xi, double horizon, double scale,
                                     int grid_intervals, std::span<const double> extra_times,
                                     const SwitchOptions& switching) {
  check_horizon(horizon);
  check_state(dom, pair, xi, "synthesis multiplier");
  if (xi.norm() == 0.0) fail(ErrorCode::kArgument, "synthesis: multiplier is zero");
  if (!(scale >= 0.0) || !std::isfinite(scale)) fail(ErrorCode::kArgument, "synthesis: bad scale");
  if (grid_intervals < 1) fail(ErrorCode::kArgument, "synthesis: need at least one interval");

  std::vector<double> times;
  times.reserve(grid_intervals + 1 + extra_times.size());
  for (int i = 0; i <= grid_intervals; ++i) {
    times.push_back(i == grid_intervals ? horizon : horizon * i / grid_intervals);
  }
  for (double t : extra_times) {
    if (!(t >= 0.0 && t <= horizon)) fail(ErrorCode::kDomain, "synthesis: extra time outside [0, T]");
    times.push_back(t);
  }
  std::sort(times.begin(), times.end());
  times.erase(std::unique(times.begin(), times.end()), times.end());

  const ObservationMap obs(dom, pair, xi, horizon);
  double reference = 0.0;
  for (int i = 0; i <= grid_intervals; ++i) {
    reference = std::max(reference, obs.norm(horizon * i / grid_intervals));
  }

  ControlTrajectory u;
  u.horizon = horizon;
  u.grid = times;
  u.values.reserve(times.size());
  u.norms.reserve(times.size());
  for (double t : times) {
    Matrix v = (scale == 0.0) ? Matrix(Matrix::Zero(dom.modes(), pair.m()))
                              : Matrix(scale * control_direction(obs, t, reference, switching));
    u.norms.push_back(v.norm());
    u.values.push_back(std::move(v));
  }
  return u;
}

double steering_residual(const SpectralDomain& dom, const ControlPair& pair,
                         const SpectralVector& y0, const SpectralVector& xi, double horizon,
                         double scale, int grid_intervals, const SwitchOptions& switching) {
  check_horizon(horizon);
  check_state(dom, pair, y0, "residual initial state");
  check_state(dom, pair, xi, "residual multiplier");
  if (grid_intervals < 1) fail(ErrorCode::kArgument, "residual: need at least one interval");
  const ObservationMap obs(dom, pair, xi, horizon);
  const std::vector<double> zeros = find_zero_times(obs, switching);
  const double gap = 1e-9 * std::max(1.0, horizon);
  const double h = horizon / grid_intervals;

  std::vector<std::pair<double, Matrix>> samples;
  double reference = 0.0;
  for (int i = 0; i <= grid_intervals; ++i) reference = std::max(reference, obs.norm(i * h));
  for (int i = 0; i <= grid_intervals; ++i) {
    const double t = (i == grid_intervals) ? horizon : i * h;
    const bool near_zero = std::any_of(zeros.begin(), zeros.end(),
                                       [&](double z) { return std::abs(t - z) <= 2.0 * gap; });
    if (near_zero) continue;
    samples.emplace_back(t, control_direction(obs, t, reference, switching));
  }
  const double delta = switching.limit_offset * horizon;
  for (double z : zeros) {
    if (z - delta >= 0.0) samples.emplace_back(z - gap, limit_direction(obs, z, -1, switching));
    if (z + delta <= horizon) samples.emplace_back(z + gap, limit_direction(obs, z, 1, switching));
  }
  std::sort(samples.begin(), samples.end(),
            [](const auto& x, const auto& y) { return x.first < y.first; });

  ControlTrajectory u;
  u.horizon = horizon;
  for (auto& [t, dir] : samples) {
    u.grid.push_back(t);
    Matrix v = scale * dir;
    u.norms.push_back(v.norm());
    u.values.push_back(std::move(v));
  }
  return solve_forward(dom, pair, y0, u).norm();
}

OptimalTimeResult optimal_time(const SpectralDomain& dom, const ControlPair& pair,
                               const SpectralVector& y0, const SteeringOptions& opts) {
  check_state(dom, pair, y0, "optimal_time initial state");
  if (y0.norm() == 0.0) fail(ErrorCode::kArgument, "optimal_time: initial state is zero");
  if (!(opts.initial_horizon > 0.0) || !(opts.max_horizon > opts.initial_horizon)) {
    fail(ErrorCode::kArgument, "optimal_time: need 0 < initial_horizon < max_horizon");
  }
  const FeasibilityResult feas = feasibility_check(pair, y0, opts.feasibility_tol, opts.rank_tol);
  if (!feas.feasible) {
    std::ostringstream msg;
    msg.precision(17);
    msg << "initial state leaves the controllable subspace (residual " << feas.residual << ")";
    fail(ErrorCode::kFeasibility, msg.str());
  }

  OptimalTimeResult out;
  SteeringOptions inner = opts;
  inner.compute_residual = false;
  std::vector<SteeringResult> solved;

  auto nearest = [&](double T) -> const SpectralVector* {
    const SteeringResult* best = nullptr;
    for (const auto& s : solved) {
      if (best == nullptr || std::abs(s.horizon - T) < std::abs(best->horizon - T)) best = &s;
    }
    return best ? &best->xi : nullptr;
  };
  auto evaluate = [&](double T) {
    if (static_cast<int>(out.evaluations.size()) >= opts.max_bisection_evaluations) {
      fail(ErrorCode::kConvergence, "optimal_time: evaluation budget exhausted");
    }
    SteeringResult r = min_norm(dom, pair, y0, T, inner, nearest(T));
    out.evaluations.push_back({T, r.min_norm});
    solved.push_back(std::move(r));
    return solved.back().min_norm;
  };

  double lo = 0.0, hi = 0.0, n_lo = 0.0, n_hi = 0.0;
  double T = opts.initial_horizon;
  double n = evaluate(T);
  if (n > 1.0) {
    lo = T;
    n_lo = n;
    while (true) {
      T = std::min(2.0 * T, opts.max_horizon);
      n = evaluate(T);
      if (n <= 1.0) break;
      lo = T;
      n_lo = n;
      if (T >= opts.max_horizon) {
        std::ostringstream msg;
        msg.precision(6);
        msg << "optimal_time: N(T) = " << n << " > 1 at the largest horizon " << T;
        fail(ErrorCode::kHorizon, msg.str());
      }
    }
    hi = T;
    n_hi = n;
  } else {
    hi = T;
    n_hi = n;
    while (true) {
      T *= 0.5;
      if (T < 1e-12) fail(ErrorCode::kHorizon, "optimal_time: N(T) <= 1 for vanishing horizons");
      n = evaluate(T);
      if (n > 1.0) break;
      hi = T;
      n_hi = n;
    }
    lo = T;
    n_lo = n;
  }

  auto f = [&](double t) { return std::log(evaluate(t)); };
  const double f_lo = std::log(n_lo);
  const double f_hi = std::log(n_hi);
  if (f_hi < 0.0) {
    std::uintmax_t max_iter = static_cast<std::uintmax_t>(
        std::max(1, opts.max_bisection_evaluations - static_cast<int>(out.evaluations.size())));
    auto stop = [&](double a, double b) { return b - a <= opts.bisection_tol * std::max(1.0, b); };
    const auto br = boost::math::tools::toms748_solve(f, lo, hi, f_lo, f_hi, stop, max_iter);
    lo = br.first;
    hi = br.second;
  }
  // Final bracket values from the evaluation log.
  for (const auto& s : out.evaluations) {
    if (s.horizon == lo) n_lo = s.norm;
    if (s.horizon == hi) n_hi = s.norm;
  }
  out.t_low = lo;
  out.t_high = hi;
  const double l_lo = std::log(n_lo);
  const double l_hi = std::log(n_hi);
  out.t_star = (l_lo == l_hi) ? hi : lo + (hi - lo) * l_lo / (l_lo - l_hi);
  out.t_star = std::clamp(out.t_star, lo, hi);

  out.steering = min_norm(dom, pair, y0, out.t_star, opts, nearest(out.t_star));
  out.n_at_t_star = out.steering.min_norm;
  out.evaluations.push_back({out.t_star, out.n_at_t_star});
  out.guard_band_warning = std::abs(out.n_at_t_star - 1.0) > opts.guard_band;
  if (opts.refine_grid_check) {
    SteeringOptions fine = inner;
    fine.grid_intervals = 2 * opts.grid_intervals;
    const SteeringResult r = min_norm(dom, pair, y0, out.t_star, fine, &out.steering.xi);
    out.grid_refinement_delta = std::abs(r.min_norm - out.n_at_t_star);
  }

  out.qAB = compute_qAB(pair, opts.rank_tol);
  out.dA = compute_dA(pair);
  const ObservationMap obs(dom, pair, out.steering.xi, out.t_star);
  const std::vector<double> zeros = find_zero_times(obs, opts.switching);
  out.switches = detect_switches(obs, zeros, opts.switching);
  out.bounds = verify_bounds(out.switches, out.dA, out.qAB, out.t_star, opts.switching);
  out.control = synthesize_control(dom, pair, out.steering.xi, out.t_star, 1.0,
                                   opts.grid_intervals, {}, opts.switching);

  VerificationFlags& fl = out.flags;
  const std::vector<double> switch_times = out.switches.switch_times();
  const double exclusion = 2.0 * opts.switching.limit_offset * out.t_star;
  bool bang_ok = true;
  for (std::size_t i = 0; i < out.control.size(); ++i) {
    const double t = out.control.grid[i];
    const bool near = std::any_of(switch_times.begin(), switch_times.end(),
                                  [&](double s) { return std::abs(t - s) <= exclusion; });
    if (near) continue;
    const double nu = out.control.norms[i];
    fl.bang_bang_worst = std::max(fl.bang_bang_worst, std::abs(nu - 1.0));
    if (nu < 1.0 - opts.bang_bang_low_tol || nu > 1.0 + opts.bang_bang_high_tol) bang_ok = false;
  }
  fl.bang_bang = bang_ok;
  fl.count_bound = out.bounds.window_bound && out.bounds.global_zero_bound;
  fl.reversal = out.switches.unclassified.empty();
  fl.parity = out.switches.unclassified.empty();
  for (const ZeroPoint& z : out.switches.zeros) {
    if (!z.classified) continue;
    if (z.is_switch) {
      fl.reversal_worst = std::max(fl.reversal_worst, z.reversal_residual);
      if (z.reversal_residual > opts.reversal_tol) fl.reversal = false;
      if (!z.orders_agree || z.order % 2 != 1) fl.parity = false;
    } else if (!z.orders_agree || z.order % 2 != 0) {
      fl.parity = false;
    }
  }
  fl.residual = out.steering.terminal_residual <= opts.residual_tol * y0.norm();
  return out;
}

}  // namespace tocp
