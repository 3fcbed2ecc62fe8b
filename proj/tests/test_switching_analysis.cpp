#include <doctest.h>

#include "test_support.hpp"
#include "tocp/error.hpp"

using namespace tocp;
using namespace tocp::test;

namespace {

// zeta_1 cos s - zeta_2 sin s vanishes at s = atan(zeta_1 / zeta_2) + k pi.
std::vector<double> rotation_zeros(const Vector& zeta, double T) {
  std::vector<double> out;
  const double s0 = std::atan(zeta(0) / zeta(1));
  for (int k = -1; k < 100; ++k) {
    const double s = s0 + k * kPi;
    if (s > 0 && s < T) out.push_back(T - s);
  }
  std::sort(out.begin(), out.end());
  return out;
}

// B^T e^{s A^T} xi = xi_1 + s xi_2 + s^2/2 xi_3 for the lower shift with B = e_1.
ControlPair shift_pair() {
  return ControlPair(mat(3, 3, {0, 0, 0, 1, 0, 0, 0, 1, 0}), mat(3, 1, {1, 0, 0}));
}

}  // namespace

TEST_CASE("zeros of the rotation observation form a pi lattice") {
  const Vector zeta = vec({0.8, 0.6});
  const double T = 10.0;
  const ObservationMap obs(full_domain(3), rotation_example_pair(), SpectralVector::single_mode(3, 1, zeta), T);
  const std::vector<double> zeros = find_zero_times(obs);
  const std::vector<double> want = rotation_zeros(zeta, T);
  REQUIRE(zeros.size() == want.size());
  for (std::size_t i = 0; i < zeros.size(); ++i) CHECK(zeros[i] == doctest::Approx(want[i]).epsilon(1e-10));
  for (std::size_t i = 1; i < zeros.size(); ++i) CHECK(zeros[i] - zeros[i - 1] == doctest::Approx(kPi).epsilon(1e-10));
  for (double z : zeros) {
    CHECK(vanishing_order(obs, z) == 1);
  }
  CHECK(vanishing_order(obs, 0.5 * (zeros[0] + zeros[1])) == 0);
}

TEST_CASE("pure heat observation has no zeros") {
  const ObservationMap obs(full_domain(4), scalar_pair(), SpectralVector::single_mode(4, 1, vec({-1.0})), 3.0);
  CHECK(find_zero_times(obs).empty());
}

TEST_CASE("identically vanishing observation is degenerate") {
  const ObservationMap obs(full_domain(2), scalar_pair(), SpectralVector::zero(2, 1), 1.0);
  try {
    find_zero_times(obs);
    CHECK(false);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kDegenerate);
  }
}

TEST_CASE("two-exponential crossing") {
  // A = diag(0, -3), B = (1, 1): observation e^{-s}(xi_1 + xi_2 e^{-3s}), s = T - t.
  const ControlPair pair(mat(2, 2, {0, 0, 0, -3}), mat(2, 1, {1, 1}));
  const double T = 2.0;
  const double s_cross = 1.2;
  const Vector xi = vec({1.0, -std::exp(3 * s_cross)});
  const ObservationMap obs(full_domain(1), pair, SpectralVector::single_mode(1, 1, xi), T);
  const std::vector<double> zeros = find_zero_times(obs);
  REQUIRE(zeros.size() == 1);
  CHECK(zeros[0] == doctest::Approx(T - s_cross).epsilon(1e-11));
  CHECK(vanishing_order(obs, zeros[0]) == 1);
  const SwitchReport rep = detect_switches(obs, zeros);
  REQUIRE(rep.switches().size() == 1);
  const BoundFlags b = verify_bounds(rep, compute_dA(pair), compute_qAB(pair), T);
  CHECK(b.allowed_total == 1);
  CHECK(b.global_zero_bound);
  CHECK(b.window_bound);
}

TEST_CASE("odd and even order zeros from the shift pair") {
  const double T = 3.0;
  const double s0 = 1.0;
  const SpectralDomain dom = full_domain(1);

  // (s - s0): simple zero, a switch
  const ObservationMap odd(dom, shift_pair(), SpectralVector::single_mode(1, 1, vec({-s0, 1.0, 0.0})), T);
  const std::vector<double> z1 = find_zero_times(odd);
  REQUIRE(z1.size() == 1);
  CHECK(z1[0] == doctest::Approx(T - s0).epsilon(1e-10));
  const SwitchReport r1 = detect_switches(odd, z1);
  REQUIRE(r1.zeros.size() == 1);
  CHECK(r1.zeros[0].is_switch);
  CHECK(r1.zeros[0].order == 1);
  CHECK(r1.zeros[0].orders_agree);
  CHECK(r1.zeros[0].reversal_residual < 1e-8);

  // (s - s0)^2: double zero, no switch, left and right directions agree
  const ObservationMap even(dom, shift_pair(), SpectralVector::single_mode(1, 1, vec({s0 * s0, -2 * s0, 2.0})), T);
  const std::vector<double> z2 = find_zero_times(even);
  REQUIRE(z2.size() == 1);
  CHECK(z2[0] == doctest::Approx(T - s0).epsilon(1e-6));
  CHECK(vanishing_order(even, z2[0]) == 2);
  const SwitchReport r2 = detect_switches(even, z2);
  REQUIRE(r2.zeros.size() == 1);
  CHECK_FALSE(r2.zeros[0].is_switch);
  CHECK(r2.zeros[0].order % 2 == 0);
  CHECK((r2.zeros[0].left_dir - r2.zeros[0].right_dir).norm() < 1e-6);
  CHECK(r2.switch_times().empty());
}

TEST_CASE("order one zero where B^T vanishes but B^T A^T does not") {
  const ControlPair pair = shift_pair();
  const double T = 2.0;
  const double t0 = 1.3;
  // adjoint state at t0 is p = (0, 1, 0): B^T p = 0, B^T A^T p = 1
  const Vector p = vec({0.0, 1.0, 0.0});
  const Vector xi = mat_exp(pair.A().transpose(), -(T - t0)) * p;
  const ObservationMap obs(full_domain(1), pair, SpectralVector::single_mode(1, 1, xi), T);
  CHECK(obs.value(t0).norm() < 1e-15);
  CHECK(vanishing_order(obs, t0) == 1);
  CHECK(vanishing_order(obs, 0.4) == 0);
  const VanishingOrder d = vanishing_order_detail(obs, t0);
  CHECK(d.scan == 1);
  CHECK(d.agree);
}

TEST_CASE("switches of the rotation example reverse the control") {
  const Vector zeta = vec({-0.3, 0.95});
  const double T = 13.0;
  const ObservationMap obs(full_domain(2), rotation_example_pair(), SpectralVector::single_mode(2, 1, zeta), T);
  const std::vector<double> zeros = find_zero_times(obs);
  const SwitchReport rep = detect_switches(obs, zeros);
  REQUIRE(rep.zeros.size() == zeros.size());
  REQUIRE(rep.switches().size() == zeros.size());
  for (const ZeroPoint& z : rep.zeros) {
    CHECK(z.is_switch);
    CHECK(z.reversal_residual <= 1e-6);
    CHECK(std::abs(z.left_dir.norm() - 1) <= 1e-8);
    CHECK(std::abs(z.right_dir.norm() - 1) <= 1e-8);
    CHECK((limit_direction(obs, z.time, -1) + limit_direction(obs, z.time, +1)).norm() <= 1e-6);
  }
  const BoundFlags b = verify_bounds(rep, compute_dA(rotation_example_pair()), 2, T);
  CHECK(b.window_bound);
  CHECK(b.max_window_count == 1);
  CHECK(b.allowed_per_window == 1);
  CHECK(rep.unclassified.empty());
}

TEST_CASE("empty zero list gives an empty report") {
  const ObservationMap obs(full_domain(2), scalar_pair(), SpectralVector::single_mode(2, 1, vec({1.0})), 1.0);
  const SwitchReport rep = detect_switches(obs, {});
  CHECK(rep.zeros.empty());
  CHECK(rep.switch_times().empty());
  const BoundFlags b = verify_bounds(rep, compute_dA(scalar_pair()), compute_qAB(scalar_pair()), 1.0);
  CHECK(b.allowed_total == 0);
  CHECK(b.zero_count == 0);
  CHECK(b.global_zero_bound);
  CHECK(b.window_bound);
}

TEST_CASE("window counting") {
  const std::vector<double> lattice = {1.0, 1.0 + kPi, 1.0 + 2 * kPi};
  CHECK(max_switches_in_window(lattice, kPi, 1e-9) == 1);
  CHECK(max_switches_in_window(lattice, kPi + 1e-3, 1e-9) == 2);
  const std::vector<double> dense = {0.0, 1.0, 2.0};
  CHECK(max_switches_in_window(dense, 3.0, 0.0) == 3);
  CHECK(max_switches_in_window({}, 1.0, 0.0) == 0);
}

TEST_CASE("control direction and L2 distance") {
  const SpectralDomain dom = full_domain(2);
  const SpectralVector xi = SpectralVector::single_mode(2, 1, vec({0.8, 0.6}));
  const ObservationMap a(dom, rotation_example_pair(), xi, 5.0);
  const ObservationMap b(dom, rotation_example_pair(), SpectralVector(-xi.coeffs()), 5.0);
  CHECK(control_l2_distance(a, 1.0, a, 1.0) == doctest::Approx(0.0).scale(1));
  CHECK(control_l2_distance(a, 1.0, b, 1.0) == doctest::Approx(2.0 * std::sqrt(5.0)).epsilon(1e-8));
  CHECK(control_l2_distance(a, 1.0, a, 0.5) == doctest::Approx(0.5 * std::sqrt(5.0)).epsilon(1e-8));
  const Matrix u = control_direction(a, 2.0, 1.0);
  CHECK(u.norm() == doctest::Approx(1.0).epsilon(1e-14));
}
