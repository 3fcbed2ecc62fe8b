#include "tocp/switching_analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <sstream>

#include <boost/math/tools/roots.hpp>

#include "quadrature.hpp"
#include "tocp/error.hpp"

namespace tocp {

std::vector<ZeroPoint> SwitchReport::switches() const {
  std::vector<ZeroPoint> out;
  for (const auto& z : zeros) {
    if (z.classified && z.is_switch) out.push_back(z);
  }
  return out;
}

std::vector<double> SwitchReport::switch_times() const {
  std::vector<double> out;
  for (const auto& z : zeros) {
    if (z.classified && z.is_switch) out.push_back(z.time);
  }
  return out;
}

namespace {

// Minimizer of ||obs||^2 on [a, b] through the sign change of its derivative.
// Returns false when the derivative does not change sign on [a, b].
bool refine_minimum(const ObservationMap& obs, double a, double b, double tol, double* t_out) {
  auto slope = [&](double t) {
    const Matrix v = obs.value(t);
    const Matrix dv = obs.derivative(t);
    return 2.0 * (v.array() * dv.array()).sum();
  };
  const double fa = slope(a);
  const double fb = slope(b);
  if (fa == 0.0) {
    *t_out = a;
    return true;
  }
  if (fb == 0.0) {
    *t_out = b;
    return true;
  }
  if (!(fa < 0.0 && fb > 0.0)) return false;
  std::uintmax_t max_iter = 200;
  auto stop = [tol](double lo, double hi) { return std::abs(hi - lo) <= tol; };
  const auto bracket = boost::math::tools::toms748_solve(slope, a, b, fa, fb, stop, max_iter);
  const double t1 = bracket.first;
  const double t2 = bracket.second;
  *t_out = obs.norm(t1) <= obs.norm(t2) ? t1 : t2;
  return true;
}

}  // namespace

std::vector<double> find_zero_times(const ObservationMap& obs, const SwitchOptions& opts) {
  const double T = obs.horizon();
  const int N = std::max(opts.scan_intervals, 8);
  std::vector<double> grid(N + 1);
  std::vector<double> norms(N + 1);
  double max_norm = 0.0;
  for (int i = 0; i <= N; ++i) {
    grid[i] = (i == N) ? T : T * static_cast<double>(i) / N;
    norms[i] = obs.norm(grid[i]);
    max_norm = std::max(max_norm, norms[i]);
  }
  const double xi_scale = obs.multiplier().norm() * obs.pair().B().norm();
  if (!(max_norm > 1e-13 * xi_scale) || max_norm == 0.0) {
    fail(ErrorCode::kDegenerate, "find_zero_times: observation vanishes on the whole interval");
  }
  const double tol = 1e-3 * opts.time_tol * std::max(1.0, T);
  const double accept = opts.zero_scan_tol * max_norm;

  std::vector<double> zeros;
  for (int i = 1; i < N; ++i) {
    if (!(norms[i] <= norms[i - 1] && norms[i] < norms[i + 1])) continue;
    double t = 0.0;
    if (!refine_minimum(obs, grid[i - 1], grid[i + 1], tol, &t)) continue;
    if (t <= 0.0 || t >= T) continue;
    if (obs.norm(t) > accept) continue;
    if (!zeros.empty() && std::abs(t - zeros.back()) <= 1e-9 * std::max(1.0, T)) continue;
    zeros.push_back(t);
  }
  // Zeros in the first or last cell show up as endpoint minima of the scan.
  auto edge = [&](double a, double b) {
    double t = 0.0;
    if (refine_minimum(obs, a, b, tol, &t) && t > 0.0 && t < T && obs.norm(t) <= accept) {
      zeros.push_back(t);
    }
  };
  if (norms[0] < norms[1]) edge(grid[0], grid[1]);
  if (norms[N] < norms[N - 1]) edge(grid[N - 1], grid[N]);
  std::sort(zeros.begin(), zeros.end());
  zeros.erase(std::unique(zeros.begin(), zeros.end(),
                          [&](double x, double y) { return std::abs(x - y) <= 1e-9 * std::max(1.0, T); }),
              zeros.end());
  return zeros;
}

VanishingOrder vanishing_order_detail(const ObservationMap& obs, double t, const SwitchOptions& opts) {
  const ControlPair& pair = obs.pair();
  const SpectralDomain& dom = obs.domain();
  const Matrix phi = obs.adjoint_state(t);
  const double normA = std::max(pair.A().operatorNorm(), 1e-300);
  const double normB = pair.B().operatorNorm();
  const double phi_norm = phi.norm();

  VanishingOrder out;
  out.scan = pair.n();
  Matrix AjB = pair.B();
  double scale = phi_norm * normB;
  for (int j = 0; j < pair.n(); ++j) {
    Matrix Z = phi * AjB;
    if (!dom.full_control_region()) Z = dom.gram() * Z;
    if (Z.norm() > opts.order_tol * scale) {
      out.scan = j;
      break;
    }
    AjB = pair.A() * AjB;
    scale *= normA;
  }

  // Least-squares slope of log ||obs(t +- h)|| against log h.
  const double T = obs.horizon();
  std::vector<double> xs;
  std::vector<double> ys;
  for (int q = 0; q < 6; ++q) {
    const double h = 1e-3 * T * std::ldexp(1.0, -q);
    for (int side : {-1, 1}) {
      const double s = t + side * h;
      if (s < 0.0 || s > T) continue;
      const double v = obs.norm(s);
      if (v <= 0.0) continue;
      xs.push_back(std::log(h));
      ys.push_back(std::log(v));
    }
  }
  if (xs.size() >= 2) {
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      mx += xs[i];
      my += ys[i];
    }
    mx /= static_cast<double>(xs.size());
    my /= static_cast<double>(ys.size());
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      sxy += (xs[i] - mx) * (ys[i] - my);
      sxx += (xs[i] - mx) * (xs[i] - mx);
    }
    out.slope = sxx > 0.0 ? sxy / sxx : 0.0;
    out.fit = static_cast<int>(std::lround(out.slope));
  }
  out.agree = out.fit == out.scan;
  return out;
}

int vanishing_order(const ObservationMap& obs, double t, const SwitchOptions& opts) {
  const VanishingOrder v = vanishing_order_detail(obs, t, opts);
  if (!v.agree) {
    std::ostringstream os;
    os << "vanishing_order: j-scan gives " << v.scan << " but log-log fit gives " << v.fit
       << " (slope " << v.slope << ") at t = " << t;
    fail(ErrorCode::kDiagnostic, os.str());
  }
  return v.scan;
}

Matrix limit_direction(const ObservationMap& obs, double t, int side, const SwitchOptions& opts,
                       double* stencil_gap) {
  const double delta = opts.limit_offset * obs.horizon();
  auto unit = [](Matrix v) {
    const double nv = v.norm();
    if (nv > 0.0) v /= nv;
    return v;
  };
  const Matrix d1 = unit(obs.value(std::clamp(t + side * delta, 0.0, obs.horizon())));
  const Matrix d2 = unit(obs.value(std::clamp(t + side * 0.5 * delta, 0.0, obs.horizon())));
  if (stencil_gap) *stencil_gap = (d1 - d2).norm();
  return unit(2.0 * d2 - d1);
}

Matrix control_direction(const ObservationMap& obs, double t, double reference_norm,
                         const SwitchOptions& opts) {
  Matrix v = obs.value(t);
  const double nv = v.norm();
  if (nv > opts.zero_scan_tol * reference_norm) return v / nv;
  // Left-continuous representative; at t = 0 only the right limit exists.
  const int side = (t - opts.limit_offset * obs.horizon() >= 0.0) ? -1 : 1;
  return limit_direction(obs, t, side, opts);
}

SwitchReport detect_switches(const ObservationMap& obs, std::span<const double> zero_times,
                             const SwitchOptions& opts) {
  SwitchReport report;
  report.zero_times.assign(zero_times.begin(), zero_times.end());
  const double T = obs.horizon();
  const double delta = opts.limit_offset * T;
  for (double t : zero_times) {
    ZeroPoint z;
    z.time = t;
    if (t - delta < 0.0 || t + delta > T) {
      report.unclassified.push_back(t);
      report.zeros.push_back(z);
      continue;
    }
    double gap_left = 0.0, gap_right = 0.0;
    z.left_dir = limit_direction(obs, t, -1, opts, &gap_left);
    z.right_dir = limit_direction(obs, t, +1, opts, &gap_right);
    z.stencil_gap = std::max(gap_left, gap_right);
    z.is_switch = (z.left_dir - z.right_dir).norm() > opts.switch_tol;
    z.reversal_residual = (z.left_dir + z.right_dir).norm();
    const VanishingOrder order = vanishing_order_detail(obs, t, opts);
    z.order = order.scan;
    z.order_fit = order.fit;
    z.fit_slope = order.slope;
    z.orders_agree = order.agree;
    z.classified = true;
    report.zeros.push_back(z);
  }
  return report;
}

int max_switches_in_window(std::span<const double> times, double window, double slack) {
  int best = 0;
  std::size_t j = 0;
  for (std::size_t i = 0; i < times.size(); ++i) {
    j = std::max(j, i);
    while (j < times.size() && times[j] - times[i] < window - slack) ++j;
    best = std::max(best, static_cast<int>(j - i));
  }
  return best;
}

BoundFlags verify_bounds(const SwitchReport& report, const ExtendedReal& dA, int qAB,
                         double horizon, const SwitchOptions& opts) {
  BoundFlags f;
  f.window = dA.min_with(horizon);
  f.allowed_per_window = qAB - 1;
  const std::vector<double> sw = report.switch_times();
  const double slack = opts.window_slack * std::max(1.0, horizon);
  // Without a finite d_A the window is all of (0, T), so nothing is excluded.
  f.max_window_count = dA.is_finite() ? max_switches_in_window(sw, f.window, slack)
                                      : static_cast<int>(sw.size());
  f.window_bound = f.max_window_count <= f.allowed_per_window;
  f.zero_count = static_cast<int>(report.zero_times.size());
  if (dA.is_finite()) {
    f.allowed_total = (static_cast<int>(std::floor(horizon / dA.value())) + 1) * (qAB - 1);
  } else {
    f.allowed_total = qAB - 1;
  }
  f.global_zero_bound = f.zero_count <= f.allowed_total;
  return f;
}

double control_l2_distance(const ObservationMap& a, double scale_a, const ObservationMap& b,
                           double scale_b, const SwitchOptions& opts) {
  const double T = a.horizon();
  if (std::abs(b.horizon() - T) > 1e-12 * std::max(1.0, T)) {
    fail(ErrorCode::kArgument, "control_l2_distance: horizons differ");
  }
  std::vector<double> cuts;
  const int pieces = 512;
  for (int i = 0; i <= pieces; ++i) cuts.push_back(T * i / pieces);
  for (double t : find_zero_times(a, opts)) cuts.push_back(t);
  for (double t : find_zero_times(b, opts)) cuts.push_back(t);
  std::sort(cuts.begin(), cuts.end());
  double ref_a = 0.0, ref_b = 0.0;
  for (int i = 0; i <= 64; ++i) {
    ref_a = std::max(ref_a, a.norm(T * i / 64));
    ref_b = std::max(ref_b, b.norm(T * i / 64));
  }
  using Rule = detail::GaussRule;
  long double acc = 0.0L;
  for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
    const double lo = cuts[i], hi = cuts[i + 1];
    const double h = hi - lo;
    if (h <= 0.0) continue;
    for (int q = 0; q < Rule::kPoints; ++q) {
      const double t = lo + h * Rule::nodes[q];
      const Matrix diff = scale_a * control_direction(a, t, ref_a, opts) -
                          scale_b * control_direction(b, t, ref_b, opts);
      acc += static_cast<long double>(h * Rule::weights[q]) * diff.squaredNorm();
    }
  }
  return std::sqrt(static_cast<double>(acc));
}

}  // namespace tocp
