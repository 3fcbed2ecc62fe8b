#include <doctest.h>

#include <random>

#include "test_support.hpp"
#include "tocp/error.hpp"

using namespace tocp;
using namespace tocp::test;

namespace {

SpectralVector scalar_y0(double c, int modes = 12) {
  return SpectralVector::single_mode(modes, 1, vec({c}));
}

double scalar_norm(double c, double T) { return c / (std::exp(T) - 1.0); }

}  // namespace

TEST_CASE("dual functional at zero is the linear term") {
  const SpectralDomain dom = full_domain(4);
  const ControlPair pair = rotation_example_pair();
  Matrix c(4, 2);
  c << 1, 2, -1, 0.5, 0.3, 0.1, 0, 1;
  const SpectralVector y0(c);
  const DualEvaluation ev = dual_functional(dom, pair, SpectralVector::zero(4, 2), 1.2, y0);
  CHECK(ev.value == 0.0);
  const SpectralVector a = semigroup_apply(dom, pair, y0, 1.2);
  CHECK((ev.subgradient.coeffs() - a.coeffs()).norm() < 1e-14 * a.norm());
}

TEST_CASE("dual functional of the scalar case matches the calculus minimizer") {
  const SpectralDomain dom = full_domain(3);
  const double c = 2.0;
  for (double T : {0.5, 1.0, 2.0}) {
    const double h = 1.0 - std::exp(-T);
    const double s_star = -c * std::exp(-T) / (h * h);
    CHECK(s_star < 0.0);
    const DualEvaluation ev = dual_functional(dom, scalar_pair(), SpectralVector::single_mode(3, 1, vec({s_star})), T,
                                              scalar_y0(c, 3));
    CHECK(ev.value == doctest::Approx(-0.5 * c * c * std::exp(-2 * T) / (h * h)).epsilon(1e-10));
    CHECK(ev.subgradient.coeffs()(0, 0) == doctest::Approx(0.0).scale(1e-9 * std::abs(s_star)));
    // the optimal value of int |obs| dt is the minimal norm
    CHECK(std::abs(s_star) * h == doctest::Approx(scalar_norm(c, T)).epsilon(1e-12));
  }
}

TEST_CASE("dual functional gradient and convexity probes") {
  const SpectralDomain dom = build_domain(kPi, {0.4, 2.2}, 5);
  const ControlPair pair(mat(2, 2, {0.1, 1, -1, 0.2}), mat(2, 1, {1, 0.5}));
  Matrix y(5, 2);
  for (int i = 0; i < 10; ++i) y.data()[i] = std::cos(0.7 * i);
  const SpectralVector y0(y);
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g;
  for (int trial = 0; trial < 10; ++trial) {
    Matrix a(5, 2), b(5, 2);
    for (int i = 0; i < 10; ++i) {
      a.data()[i] = g(rng);
      b.data()[i] = g(rng);
    }
    const double fa = dual_functional(dom, pair, SpectralVector(a), 1.5, y0, 0.0, 512).value;
    const double fb = dual_functional(dom, pair, SpectralVector(b), 1.5, y0, 0.0, 512).value;
    const double fm = dual_functional(dom, pair, SpectralVector(0.5 * (a + b)), 1.5, y0, 0.0, 512).value;
    CHECK(fm <= 0.5 * (fa + fb) + 1e-12 * (std::abs(fa) + std::abs(fb)));

    const DualEvaluation ev = dual_functional(dom, pair, SpectralVector(a), 1.5, y0, 1e-3, 512);
    const double h = 1e-6;
    const double fp = dual_functional(dom, pair, SpectralVector(a + h * b), 1.5, y0, 1e-3, 512).value;
    const double fn = dual_functional(dom, pair, SpectralVector(a - h * b), 1.5, y0, 1e-3, 512).value;
    const double directional = (ev.subgradient.coeffs().array() * b.array()).sum();
    CHECK((fp - fn) / (2 * h) == doctest::Approx(directional).epsilon(1e-6));
  }
}

TEST_CASE("minimal norm of the scalar case") {
  const SpectralDomain dom = full_domain();
  const SpectralVector y0 = scalar_y0(2.0);
  CHECK(min_norm(dom, scalar_pair(), y0, std::log(3.0)).min_norm == doctest::Approx(1.0).epsilon(1e-8));
  CHECK(min_norm(dom, scalar_pair(), y0, 2 * std::log(3.0)).min_norm == doctest::Approx(0.25).epsilon(1e-8));
  for (double T : {1.0, 2.0, 3.0}) {
    const SteeringResult r = min_norm(dom, scalar_pair(), y0, T);
    CHECK(std::abs(r.min_norm - scalar_norm(2.0, T)) <= 1e-6);
    CHECK(r.converged);
    CHECK(r.terminal_residual <= 1e-5 * y0.norm());
    CHECK(r.xi.norm() == doctest::Approx(1.0));
    CHECK(r.xi.coeffs()(0, 0) < 0.0);
  }
}

TEST_CASE("minimal norm is monotone for the rotation example") {
  const SpectralDomain dom = full_domain();
  const SpectralVector y0 = SpectralVector::single_mode(12, 1, example_eta());
  double prev = std::numeric_limits<double>::infinity();
  for (double T : {4.0, 8.0, 12.0, 14.0, 16.0}) {
    const SteeringResult r = min_norm(dom, rotation_example_pair(), y0, T);
    CHECK(r.min_norm < prev);
    CHECK(r.min_norm >= 0.0);
    prev = r.min_norm;
  }
  // beyond the oracle's optimal time the norm drops below one
  const OdeSolution ode = ode_time_optimal(reduce_to_mode(rotation_example_pair(), 1.0, example_eta()));
  CHECK(min_norm(dom, rotation_example_pair(), y0, ode.t_star + 0.1).min_norm < 1.0);
  CHECK(min_norm(dom, rotation_example_pair(), y0, ode.t_star - 0.1).min_norm > 1.0);
}

TEST_CASE("optimal time of the scalar case") {
  const OptimalTimeResult r = optimal_time(full_domain(), scalar_pair(), scalar_y0(2.0));
  CHECK(r.t_star == doctest::Approx(std::log(3.0)).epsilon(1e-6));
  CHECK(std::abs(r.t_star - std::log(3.0)) <= 1e-5);
  CHECK(r.switches.zero_times.empty());
  CHECK(r.t_low <= r.t_star);
  CHECK(r.t_star <= r.t_high);
  CHECK(r.t_high - r.t_low <= 1e-6 * std::max(1.0, r.t_star));
  CHECK(r.flags.bang_bang);
  CHECK(r.flags.count_bound);
  CHECK(r.flags.residual);
  CHECK(r.qAB == 1);
  CHECK_FALSE(r.dA.is_finite());
  bool low_above = false, high_below = false;
  for (const NormSample& s : r.evaluations) {
    if (s.horizon == r.t_low) low_above = s.norm > 1.0;
    if (s.horizon == r.t_high) high_below = s.norm <= 1.0;
  }
  CHECK(low_above);
  CHECK(high_below);
}

TEST_CASE("optimal time of the rotation example") {
  const Vector eta = example_eta();
  const OptimalTimeResult r = optimal_time(full_domain(), rotation_example_pair(),
                                           SpectralVector::single_mode(12, 1, eta));
  CHECK(r.t_star >= std::log(eta.norm() + 1.0) + 1e-3);
  CHECK(r.t_star > 4 * kPi + 1e-3);
  const OdeSolution ode = ode_time_optimal(reduce_to_mode(rotation_example_pair(), 1.0, eta));
  CHECK(std::abs(r.t_star - ode.t_star) <= 1e-3 * ode.t_star);
  const std::vector<double> sw = r.switches.switch_times();
  REQUIRE(sw.size() == ode.switch_times.size());
  for (std::size_t i = 0; i < sw.size(); ++i) CHECK(std::abs(sw[i] - ode.switch_times[i]) <= 1e-4 * r.t_star);
  for (std::size_t i = 1; i < sw.size(); ++i) CHECK(std::abs(sw[i] - sw[i - 1] - kPi) <= 1e-4);
  CHECK(r.flags.bang_bang);
  CHECK(r.flags.count_bound);
  CHECK(r.flags.reversal);
  CHECK(r.flags.parity);
  CHECK(r.flags.residual);
  CHECK_FALSE(r.guard_band_warning);
  CHECK(std::abs(r.grid_refinement_delta) < 1e-6);
}

TEST_CASE("synthesized controls") {
  const SpectralDomain dom = full_domain(3);
  const SteeringResult s = min_norm(dom, scalar_pair(), scalar_y0(2.0, 3), 1.0);
  const ControlTrajectory u = synthesize_control(dom, scalar_pair(), s.xi, 1.0, 1.0, 64);
  for (std::size_t i = 0; i < u.size(); ++i) {
    CHECK(u.values[i](0, 0) == doctest::Approx(-1.0).epsilon(1e-14));
    CHECK(u.values[i].bottomRows(2).norm() == 0.0);
  }
  const ControlTrajectory zero = synthesize_control(dom, scalar_pair(), s.xi, 1.0, 0.0, 64);
  CHECK(zero.max_norm() == 0.0);

  const Vector zeta = vec({0.8, -0.6});
  const double T = 9.0;
  const ControlTrajectory rot = synthesize_control(dom, rotation_example_pair(), SpectralVector::single_mode(3, 1, zeta), T, 1.0, 900);
  for (std::size_t i = 0; i < rot.size(); ++i) {
    const double v = zeta(0) * std::cos(T - rot.grid[i]) - zeta(1) * std::sin(T - rot.grid[i]);
    if (std::abs(v) < 1e-6) continue;
    CHECK(rot.values[i](0, 0) == doctest::Approx(v > 0 ? 1.0 : -1.0).epsilon(1e-15));
    CHECK(rot.norms[i] == doctest::Approx(1.0).epsilon(1e-15));
  }
  CHECK(rot.norm_consistency() < 1e-15);
}

TEST_CASE("feasibility") {
  const ControlPair diag(mat(2, 2, {1, 0, 0, 2}), mat(2, 1, {1, 0}));
  const FeasibilityResult bad = feasibility_check(diag, SpectralVector::single_mode(4, 1, vec({0.0, 1.0})));
  CHECK_FALSE(bad.feasible);
  CHECK(bad.residual == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(bad.controllable_dim == 1);
  const FeasibilityResult good = feasibility_check(rotation_example_pair(), SpectralVector::single_mode(4, 2, vec({3.0, -1.0})));
  CHECK(good.feasible);
  CHECK(good.residual == 0.0);
  const FeasibilityResult trivial = feasibility_check(rotation_example_pair(), SpectralVector::zero(4, 2));
  CHECK(trivial.feasible);
  CHECK(trivial.trivial);
  try {
    optimal_time(full_domain(4), diag, SpectralVector::single_mode(4, 1, vec({0.0, 1.0})));
    CHECK(false);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kFeasibility);
  }
  CHECK_THROWS_AS(optimal_time(full_domain(4), scalar_pair(), SpectralVector::zero(4, 1)), Error);
}

TEST_CASE("horizon cap") {
  SteeringOptions opts;
  opts.max_horizon = 2.0;
  try {
    optimal_time(full_domain(), scalar_pair(), scalar_y0(100.0), opts);
    CHECK(false);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kHorizon);
  }
}

TEST_CASE("independent restarts agree on the control") {
  const SpectralDomain dom = full_domain();
  const SpectralVector y0 = SpectralVector::single_mode(12, 1, example_eta());
  const OptimalTimeResult r = optimal_time(dom, rotation_example_pair(), y0);
  SteeringOptions a, b;
  a.init_seed = 1;
  b.init_seed = 2;
  const SteeringResult sa = min_norm(dom, rotation_example_pair(), y0, r.t_star, a);
  const SteeringResult sb = min_norm(dom, rotation_example_pair(), y0, r.t_star, b);
  const ObservationMap oa(dom, rotation_example_pair(), sa.xi, r.t_star);
  const ObservationMap ob(dom, rotation_example_pair(), sb.xi, r.t_star);
  CHECK(control_l2_distance(oa, sa.min_norm, ob, sb.min_norm) <= 1e-4);
}

TEST_CASE("partial control region") {
  const SpectralDomain dom = build_domain(kPi, {0.0, kPi / 2}, 6);
  Matrix y(6, 1);
  y << 1.0, 0.5, -0.3, 0.0, 0.0, 0.0;
  const SpectralVector y0(y);
  const SteeringResult r1 = min_norm(dom, scalar_pair(), y0, 1.0);
  const SteeringResult r2 = min_norm(dom, scalar_pair(), y0, 2.0);
  CHECK(r1.converged);
  CHECK(r2.min_norm < r1.min_norm);
  CHECK(r1.terminal_residual <= 1e-5 * y0.norm());
  CHECK(r2.terminal_residual <= 1e-5 * y0.norm());
}
