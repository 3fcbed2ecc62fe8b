#include "tocp/oracle_ode.hpp"

#include <algorithm>
#include <array>
#include <functional>
#include <limits>
#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <sstream>

#include <unsupported/Eigen/MatrixFunctions>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/tools/minima.hpp>
#include <boost/math/tools/roots.hpp>
#include <boost/numeric/odeint.hpp>

#include "tocp/error.hpp"

namespace tocp {

namespace {

constexpr double kPi = std::numbers::pi;

Matrix expm(const Matrix& M) { return M.exp(); }

// Precomputed ingredients for h_T(zeta) and its first-hit times.
class Support {
 public:
  Support(const OdeInstance& inst, const OdeOptions& opts) : inst_(inst), opts_(opts) {
    minus_At_ = -inst.Ablock.transpose();
    Eigen::EigenSolver<Matrix> es(minus_At_);
    if (es.info() == Eigen::Success) {
      V_ = es.eigenvectors();
      lam_ = es.eigenvalues();
      Eigen::JacobiSVD<Eigen::MatrixXcd> svd(V_);
      const auto& sv = svd.singularValues();
      diagonal_ = sv(sv.size() - 1) > 1e-6 * sv(0);
      if (diagonal_) Vinv_ = V_.inverse();
    }
  }

  // e^{-t A^T} zeta
  Vector propagate(double t, const Vector& zeta) const {
    if (!diagonal_) return expm(t * minus_At_) * zeta;
    const Eigen::VectorXcd c = Vinv_ * zeta.cast<std::complex<double>>();
    return (V_ * (lam_.array() * t).exp().matrix().cwiseProduct(c)).real();
  }

  // B^T e^{-t A^T} zeta
  Vector switching(double t, const Vector& zeta) const {
    return inst_.B.transpose() * propagate(t, zeta);
  }

  // d/dt ||switching||^2
  double slope(double t, const Vector& zeta) const {
    const Vector w = propagate(t, zeta);
    const Vector v = inst_.B.transpose() * w;
    const Vector dv = inst_.B.transpose() * (minus_At_ * w);
    return 2.0 * v.dot(dv);
  }

  // Local minima of ||switching|| on (0, T), refined on the derivative of the square.
  std::vector<double> minima(const Vector& zeta, double T) const {
    const int N = std::max(64, static_cast<int>(std::ceil(T / 0.02)));
    const double h = T / N;
    std::vector<double> g(N + 1);
    const Matrix step = expm(h * minus_At_);
    Vector w = zeta;
    for (int i = 0; i <= N; ++i) {
      g[i] = (inst_.B.transpose() * w).norm();
      w = step * w;
    }
    std::vector<double> out;
    for (int i = 1; i < N; ++i) {
      if (!(g[i] <= g[i - 1] && g[i] < g[i + 1])) continue;
      const double a = (i - 1) * h;
      const double b = (i + 1) * h;
      auto f = [&](double t) { return slope(t, zeta); };
      const double fa = f(a);
      const double fb = f(b);
      if (!(fa < 0.0 && fb > 0.0)) continue;
      std::uintmax_t iters = 200;
      auto stop = [T](double lo, double hi) { return hi - lo <= 1e-15 * std::max(1.0, T); };
      const auto r = boost::math::tools::toms748_solve(f, a, b, fa, fb, stop, iters);
      out.push_back(0.5 * (r.first + r.second));
    }
    return out;
  }

  double h(const Vector& zeta, double T) const {
    if (T <= 0.0) return 0.0;
    std::vector<double> cuts = minima(zeta, T);
    cuts.insert(cuts.begin(), 0.0);
    cuts.push_back(T);
    auto f = [&](double t) { return switching(t, zeta).norm(); };
    long double acc = 0.0L;
    for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
      if (cuts[i + 1] <= cuts[i]) continue;
      acc += boost::math::quadrature::gauss_kronrod<double, 21>::integrate(f, cuts[i], cuts[i + 1],
                                                                            10, 1e-13);
    }
    return static_cast<double>(acc);
  }

  double target(const Vector& zeta) const { return -inst_.y0.dot(zeta); }

  // First T with h_T(zeta) = <-y0, zeta>, starting from a guess; 0 if the target is <= 0.
  double first_hit(const Vector& zeta, double guess) const {
    const double c = target(zeta);
    if (c <= 0.0) return 0.0;
    auto phi = [&](double T) { return h(zeta, T) - c; };
    double lo = std::max(0.0, guess * 0.98 - 0.05);
    double hi = std::max(guess * 1.02 + 0.05, 1e-3);
    double flo = lo > 0.0 ? phi(lo) : -c;
    while (flo > 0.0) {
      hi = lo;
      lo *= 0.5;
      flo = lo > 1e-14 ? phi(lo) : -c;
      if (lo <= 1e-14) lo = 0.0;
    }
    double fhi = phi(hi);
    while (fhi < 0.0) {
      lo = hi;
      flo = fhi;
      hi *= 2.0;
      if (hi > opts_.max_horizon) {
        fail(ErrorCode::kHorizon, "oracle: target not reached before the horizon limit");
      }
      fhi = phi(hi);
    }
    std::uintmax_t iters = 200;
    auto stop = [](double a, double b) { return b - a <= 1e-14 * std::max(1.0, b); };
    const auto r = boost::math::tools::toms748_solve(phi, lo, hi, flo, fhi, stop, iters);
    return 0.5 * (r.first + r.second);
  }

  const OdeInstance& instance() const { return inst_; }

 private:
  OdeInstance inst_;
  OdeOptions opts_;
  Matrix minus_At_;
  bool diagonal_ = false;
  Eigen::MatrixXcd V_, Vinv_;
  Eigen::VectorXcd lam_;
};

// Cumulative trapezoid of ||B^T e^{-tA^T} zeta|| on a uniform grid for many zeta at once.
struct CoarseTable {
  double dt = 0.0;
  int steps = 0;
  std::vector<Matrix> M;  // M[i] = B^T e^{-t_i A^T}, m x n

  CoarseTable(const OdeInstance& inst, double horizon, double step) {
    steps = std::max(16, static_cast<int>(std::ceil(horizon / step)));
    dt = horizon / steps;
    const Matrix E = expm(-dt * inst.Ablock.transpose());
    Matrix P = Matrix::Identity(inst.Ablock.rows(), inst.Ablock.rows());
    M.reserve(steps + 1);
    for (int i = 0; i <= steps; ++i) {
      M.push_back(inst.B.transpose() * P);
      P = P * E;
    }
  }

  // First-hit time of the target c, or +inf when not reached on the table.
  double first_hit(const Vector& zeta, double c) const {
    if (c <= 0.0) return 0.0;
    double prev = (M[0] * zeta).norm();
    double cum = 0.0;
    for (int i = 1; i <= steps; ++i) {
      const double cur = (M[i] * zeta).norm();
      const double next = cum + 0.5 * dt * (prev + cur);
      if (next >= c) return (i - 1 + (c - cum) / (next - cum)) * dt;
      cum = next;
      prev = cur;
    }
    return std::numeric_limits<double>::infinity();
  }

  double integral(const Vector& zeta) const {
    double cum = 0.0;
    double prev = (M[0] * zeta).norm();
    for (int i = 1; i <= steps; ++i) {
      const double cur = (M[i] * zeta).norm();
      cum += 0.5 * dt * (prev + cur);
      prev = cur;
    }
    return cum;
  }
};

Vector from_angle(double th) {
  Vector z(2);
  z << std::cos(th), std::sin(th);
  return z;
}

Vector from_sphere(double th, double ph) {
  Vector z(3);
  z << std::sin(th) * std::cos(ph), std::sin(th) * std::sin(ph), std::cos(th);
  return z;
}

std::vector<Vector> fibonacci_sphere(int count) {
  std::vector<Vector> pts;
  const double golden = kPi * (3.0 - std::sqrt(5.0));
  for (int i = 0; i < count; ++i) {
    const double z = 1.0 - 2.0 * (i + 0.5) / count;
    const double r = std::sqrt(1.0 - z * z);
    Vector p(3);
    p << r * std::cos(golden * i), r * std::sin(golden * i), z;
    pts.push_back(p);
  }
  return pts;
}

// Small Nelder-Mead maximizer over two variables.
std::pair<double, double> nelder_mead_max(const std::function<double(double, double)>& f,
                                          double x0, double y0, double step, int iterations) {
  struct V {
    double x, y, f;
  };
  std::array<V, 3> s = {V{x0, y0, f(x0, y0)}, V{x0 + step, y0, f(x0 + step, y0)},
                        V{x0, y0 + step, f(x0, y0 + step)}};
  for (int it = 0; it < iterations; ++it) {
    std::sort(s.begin(), s.end(), [](const V& a, const V& b) { return a.f > b.f; });
    if (std::abs(s[0].x - s[2].x) + std::abs(s[0].y - s[2].y) < 1e-12) break;
    const double cx = 0.5 * (s[0].x + s[1].x);
    const double cy = 0.5 * (s[0].y + s[1].y);
    V r{2 * cx - s[2].x, 2 * cy - s[2].y, 0.0};
    r.f = f(r.x, r.y);
    if (r.f > s[0].f) {
      V e{3 * cx - 2 * s[2].x, 3 * cy - 2 * s[2].y, 0.0};
      e.f = f(e.x, e.y);
      s[2] = e.f > r.f ? e : r;
    } else if (r.f > s[1].f) {
      s[2] = r;
    } else {
      V c{0.5 * (cx + s[2].x), 0.5 * (cy + s[2].y), 0.0};
      c.f = f(c.x, c.y);
      if (c.f > s[2].f) {
        s[2] = c;
      } else {
        for (int k = 1; k < 3; ++k) {
          s[k].x = 0.5 * (s[0].x + s[k].x);
          s[k].y = 0.5 * (s[0].y + s[k].y);
          s[k].f = f(s[k].x, s[k].y);
        }
      }
    }
  }
  std::sort(s.begin(), s.end(), [](const V& a, const V& b) { return a.f > b.f; });
  return {s[0].x, s[0].y};
}

void validate(const OdeInstance& inst) {
  const auto n = inst.Ablock.rows();
  if (inst.Ablock.cols() != n || inst.B.rows() != n || inst.y0.size() != n || inst.B.cols() < 1) {
    fail(ErrorCode::kDimension, "oracle: inconsistent instance dimensions");
  }
  if (n < 1 || n > 3) fail(ErrorCode::kArgument, "oracle: only 1 <= n <= 3 is supported");
  if (!inst.Ablock.allFinite() || !inst.B.allFinite() || !inst.y0.allFinite()) {
    fail(ErrorCode::kArgument, "oracle: non-finite instance data");
  }
  if (numerical_rank(kalman_matrix(inst.Ablock, inst.B)) != n) {
    fail(ErrorCode::kArgument, "oracle: the pair violates the Kalman rank condition");
  }
}

// Candidate maximizers of a direction objective from a coarse sample, best first.
template <class Score>
std::vector<std::size_t> top_local_maxima(std::size_t count, Score score, bool circular,
                                          std::size_t keep) {
  std::vector<double> s(count);
  for (std::size_t i = 0; i < count; ++i) s[i] = score(i);
  std::vector<std::size_t> idx;
  if (circular) {
    for (std::size_t i = 0; i < count; ++i) {
      const double l = s[(i + count - 1) % count];
      const double r = s[(i + 1) % count];
      if (std::isfinite(s[i]) && s[i] >= l && s[i] >= r) idx.push_back(i);
    }
  } else {
    for (std::size_t i = 0; i < count; ++i) {
      if (std::isfinite(s[i])) idx.push_back(i);
    }
  }
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return s[a] > s[b]; });
  if (idx.size() > keep) idx.resize(keep);
  return idx;
}

// Maximizes a precise direction objective, seeded by a coarse one.
struct DirectionSearch {
  Vector best;
  double value = -std::numeric_limits<double>::infinity();
  std::vector<std::pair<double, Vector>> all;  // polished candidates
};

DirectionSearch search_directions(int n, int points,
                                  const std::function<double(const Vector&)>& coarse,
                                  const std::function<double(const Vector&)>& precise) {
  DirectionSearch out;
  auto consider = [&](const Vector& z, double v) {
    out.all.emplace_back(v, z);
    if (v > out.value) {
      out.value = v;
      out.best = z;
    }
  };
  if (n == 1) {
    for (double s : {-1.0, 1.0}) {
      Vector z(1);
      z << s;
      consider(z, precise(z));
    }
    return out;
  }
  if (n == 2) {
    const double dth = 2.0 * kPi / points;
    const auto cands = top_local_maxima(
        points, [&](std::size_t i) { return coarse(from_angle(i * dth)); }, true, 4);
    for (std::size_t i : cands) {
      const double c = i * dth;
      // The coarse table misplaces the maximizer by up to a few 1e-3 rad.
      const double w = std::max(1.5 * dth, 0.05);
      auto neg = [&](double th) { return -precise(from_angle(th)); };
      const auto r = boost::math::tools::brent_find_minima(neg, c - w, c + w, 40);
      consider(from_angle(r.first), -r.second);
    }
    return out;
  }
  const std::vector<Vector> pts = fibonacci_sphere(points);
  const auto cands = top_local_maxima(
      pts.size(), [&](std::size_t i) { return coarse(pts[i]); }, false, 3);
  const double spacing = std::sqrt(4.0 * kPi / points);
  for (std::size_t i : cands) {
    const Vector& p = pts[i];
    const double th = std::acos(std::clamp(p(2), -1.0, 1.0));
    const double ph = std::atan2(p(1), p(0));
    auto f = [&](double a, double b) { return precise(from_sphere(a, b)); };
    const auto [a, b] = nelder_mead_max(f, th, ph, spacing, 400);
    const Vector z = from_sphere(a, b);
    consider(z, precise(z));
  }
  return out;
}

}  // namespace

OdeInstance reduce_to_mode(const ControlPair& pair, double lambda, const Vector& y0) {
  if (y0.size() != pair.n()) fail(ErrorCode::kDimension, "oracle: y0 has the wrong size");
  OdeInstance inst;
  inst.Ablock = pair.A() - lambda * Matrix::Identity(pair.n(), pair.n());
  inst.B = pair.B();
  inst.y0 = y0;
  return inst;
}

ControlPair rotation_example_pair() {
  Matrix A(2, 2);
  A << 0.0, 1.0, -1.0, 0.0;
  Matrix B(2, 1);
  B << 1.0, 0.0;
  return ControlPair(A, B);
}

double ode_resimulate(const OdeInstance& inst, const Vector& adjoint_dir, double horizon,
                      double scale, std::span<const double> switch_times, double tol) {
  namespace odeint = boost::numeric::odeint;
  using State = std::vector<double>;
  const int n = static_cast<int>(inst.Ablock.rows());
  const Matrix At = inst.Ablock.transpose();
  auto control = [&](double t) -> Vector {
    const Vector v = inst.B.transpose() * (expm((horizon - t) * At) * adjoint_dir);
    const double nv = v.norm();
    if (nv == 0.0) return Vector::Zero(inst.B.cols());
    return scale * v / nv;
  };
  auto rhs = [&](const State& y, State& dy, double t) {
    const Eigen::Map<const Vector> yv(y.data(), n);
    Eigen::Map<Vector> dv(dy.data(), n);
    dv = inst.Ablock * yv + inst.B * control(t);
  };
  State y(inst.y0.data(), inst.y0.data() + n);
  std::vector<double> cuts = {0.0};
  for (double s : switch_times) {
    if (s > 0.0 && s < horizon) cuts.push_back(s);
  }
  cuts.push_back(horizon);
  std::sort(cuts.begin(), cuts.end());
  auto stepper = odeint::make_controlled(tol, tol, odeint::runge_kutta_dopri5<State>());
  for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
    const double a = cuts[i];
    const double b = cuts[i + 1];
    if (b <= a) continue;
    odeint::integrate_adaptive(stepper, rhs, y, a, b, (b - a) * 1e-3);
  }
  return Eigen::Map<const Vector>(y.data(), n).norm();
}

OdeSolution ode_time_optimal(const OdeInstance& inst, const OdeOptions& opts) {
  validate(inst);
  const int n = static_cast<int>(inst.Ablock.rows());
  OdeSolution sol;
  if (inst.y0.norm() == 0.0) {
    sol.adjoint_dir = Vector::Zero(n);
    sol.support_dir = Vector::Zero(n);
    return sol;
  }
  Support sup(inst, opts);

  // A lower bound from the direction of -y0 sizes the coarse table.
  const Vector z0 = -inst.y0 / inst.y0.norm();
  const double T0 = sup.first_hit(z0, 1.0);
  double table_horizon = std::min(opts.max_horizon, 2.0 * T0 + 1.0);
  DirectionSearch found;
  while (true) {
    const CoarseTable table(inst, table_horizon, opts.grid_step);
    bool escaped = false;
    auto coarse = [&](const Vector& z) {
      const double t = table.first_hit(z, sup.target(z));
      if (!std::isfinite(t)) escaped = true;
      return t;
    };
    auto precise = [&](const Vector& z) {
      const double guess = table.first_hit(z, sup.target(z));
      return sup.first_hit(z, std::isfinite(guess) ? guess : table_horizon);
    };
    found = search_directions(n, opts.sweep_points, coarse, precise);
    if (!escaped) break;
    if (table_horizon >= opts.max_horizon) {
      fail(ErrorCode::kHorizon, "oracle: some support directions are not reached in time");
    }
    table_horizon = std::min(opts.max_horizon, 2.0 * table_horizon);
  }

  sol.t_star = found.value;
  sol.support_dir = found.best / found.best.norm();
  const Matrix At = inst.Ablock.transpose();
  auto adjoint_of = [&](const Vector& zeta) {
    const Vector xi = expm(-sol.t_star * At) * zeta;
    return Vector(xi / xi.norm());
  };
  sol.adjoint_dir = adjoint_of(sol.support_dir);
  for (const auto& [v, z] : found.all) {
    if (std::abs(v - sol.t_star) <= 1e-9 * sol.t_star &&
        (z / z.norm() - sol.support_dir).norm() > 1e-6) {
      sol.tied_adjoint_dirs.push_back(adjoint_of(z / z.norm()));
    }
  }
  // Zeros of the switching function: minima of ||B^T e^{-tA^T} zeta|| that vanish.
  double gmax = 0.0;
  for (int i = 0; i <= 512; ++i) {
    gmax = std::max(gmax, sup.switching(sol.t_star * i / 512.0, sol.support_dir).norm());
  }
  for (double t : sup.minima(sol.support_dir, sol.t_star)) {
    if (sup.switching(t, sol.support_dir).norm() <= 1e-8 * gmax) sol.switch_times.push_back(t);
  }
  sol.residual = ode_resimulate(inst, sol.adjoint_dir, sol.t_star, 1.0, sol.switch_times,
                                opts.integration_tol);
  return sol;
}

double ode_min_norm(const OdeInstance& inst, double horizon, const OdeOptions& opts) {
  validate(inst);
  if (!(horizon > 0.0) || !std::isfinite(horizon)) fail(ErrorCode::kDomain, "oracle: bad horizon");
  if (inst.y0.norm() == 0.0) return 0.0;
  const int n = static_cast<int>(inst.Ablock.rows());
  Support sup(inst, opts);
  const CoarseTable table(inst, horizon, opts.grid_step);
  auto coarse = [&](const Vector& z) { return sup.target(z) / table.integral(z); };
  auto precise = [&](const Vector& z) { return sup.target(z) / sup.h(z, horizon); };
  return search_directions(n, std::min(opts.sweep_points, 4000), coarse, precise).value;
}

int ClosedFormPhase::sign_at(double t, double Tref) const {
  const double v = rho * std::sin(Tref - t + theta);
  return (v > 0.0) - (v < 0.0);
}

ClosedFormPhase closed_form_phase(const Vector& zeta, double Tref) {
  if (zeta.size() != 2 || zeta.norm() == 0.0) {
    fail(ErrorCode::kArgument, "closed form: need a nonzero 2-vector");
  }
  ClosedFormPhase out;
  const double z1 = zeta(0);
  const double z2 = zeta(1);
  if (z2 == 0.0) {
    out.theta = kPi / 2.0;
    out.rho = z1;
  } else {
    out.theta = std::atan(-z1 / z2);
    out.rho = -z2 / std::cos(out.theta);
  }
  // Tref - t + theta = j pi with t in (0, Tref).
  const int j_lo = static_cast<int>(std::floor(out.theta / kPi)) + 1;
  const int j_hi = static_cast<int>(std::ceil((Tref + out.theta) / kPi)) - 1;
  for (int j = j_hi; j >= j_lo; --j) {
    const double t = Tref + out.theta - j * kPi;
    if (t > 0.0 && t < Tref) out.lattice.push_back(t);
  }
  return out;
}

ClosedFormExample example_closed_form(const Vector& eta, double Tref, const OdeOptions& opts) {
  if (eta.size() != 2 || eta.norm() == 0.0) fail(ErrorCode::kArgument, "closed form: eta must be a nonzero 2-vector");
  const ControlPair pair = rotation_example_pair();
  ClosedFormExample ex;
  ex.oracle = ode_time_optimal(reduce_to_mode(pair, 1.0, eta), opts);
  const double ref = Tref > 0.0 ? Tref : ex.oracle.t_star;
  const Vector z = expm((ex.oracle.t_star - ref) * pair.A().transpose()) * ex.oracle.adjoint_dir;
  ex.zeta_at_ref = z / z.norm();
  ex.phase = closed_form_phase(ex.zeta_at_ref, ref);
  return ex;
}

}  // namespace tocp
