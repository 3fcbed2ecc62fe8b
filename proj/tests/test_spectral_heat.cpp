#include <doctest.h>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "test_support.hpp"
#include "tocp/error.hpp"

using namespace tocp;
using namespace tocp::test;

namespace {

ControlTrajectory constant_control(double horizon, const Matrix& u, int intervals = 8) {
  ControlTrajectory c;
  c.horizon = horizon;
  for (int i = 0; i <= intervals; ++i) {
    c.grid.push_back(horizon * i / intervals);
    c.values.push_back(u);
    c.norms.push_back(u.norm());
  }
  return c;
}

}  // namespace

TEST_CASE("domain over the whole interval") {
  const SpectralDomain dom = build_domain(kPi, {0.0, kPi}, 8);
  CHECK(dom.full_control_region());
  for (int k = 0; k < 8; ++k) CHECK(dom.lambda(k) == doctest::Approx((k + 1.0) * (k + 1.0)).epsilon(1e-15));
  CHECK(dom.gram() == Matrix::Identity(8, 8));
  CHECK(build_domain(1.0, {0.0, 1.0}, 1).lambda(0) == doctest::Approx(kPi * kPi).epsilon(1e-15));
}

TEST_CASE("gram matrix of a half interval against quadrature") {
  const SpectralDomain dom = build_domain(kPi, {0.0, kPi / 2}, 2);
  CHECK_FALSE(dom.full_control_region());
  const Matrix& G = dom.gram();
  CHECK(G(0, 0) == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(G(1, 1) == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(G(0, 1) == doctest::Approx(4.0 / (3.0 * kPi)).epsilon(1e-14));
  CHECK(G(0, 1) == G(1, 0));
  auto product = [](double x) { return 2.0 / kPi * std::sin(x) * std::sin(2 * x); };
  const double quad = boost::math::quadrature::gauss_kronrod<double, 31>::integrate(product, 0.0, kPi / 2);
  CHECK(G(0, 1) == doctest::Approx(quad).epsilon(1e-13));
}

TEST_CASE("gram matrix spectrum lies in [0, 1]") {
  const SpectralDomain dom = build_domain(2.0, {0.3, 1.1}, 16);
  Eigen::SelfAdjointEigenSolver<Matrix> es(dom.gram());
  CHECK(es.eigenvalues().minCoeff() >= -1e-14);
  CHECK(es.eigenvalues().maxCoeff() <= 1.0 + 1e-14);
  CHECK((dom.gram() - dom.gram().transpose()).norm() == 0.0);
}

TEST_CASE("domain argument checks") {
  CHECK_THROWS_AS(build_domain(-1.0, {0.0, 1.0}, 4), Error);
  CHECK_THROWS_AS(build_domain(1.0, {0.5, 0.2}, 4), Error);
  CHECK_THROWS_AS(build_domain(1.0, {0.0, 2.0}, 4), Error);
  CHECK_THROWS_AS(build_domain(1.0, {0.0, 1.0}, 0), Error);
}

TEST_CASE("scalar heat decay") {
  const SpectralDomain dom = full_domain(4);
  const SpectralVector v = SpectralVector::single_mode(4, 1, vec({1.0}));
  const SpectralVector w = semigroup_apply(dom, scalar_pair(), v, 1.0);
  CHECK(w.coeffs()(0, 0) == doctest::Approx(std::exp(-1.0)).epsilon(1e-15));
  CHECK(w.coeffs().bottomRows(3).norm() == 0.0);
}

TEST_CASE("rotation pair propagation matches the rotation formula") {
  const SpectralDomain dom = full_domain(3);
  const Vector zeta = vec({0.6, -1.3});
  const SpectralVector v = SpectralVector::single_mode(3, 1, zeta);
  for (double t : {0.2, 1.0, 4.5}) {
    const SpectralVector w = semigroup_apply(dom, rotation_example_pair(), v, t);
    const Vector want = std::exp(-t) * vec({std::cos(t) * zeta(0) + std::sin(t) * zeta(1),
                                            -std::sin(t) * zeta(0) + std::cos(t) * zeta(1)});
    CHECK((w.coeffs().row(0).transpose() - want).norm() < 1e-14);
  }
}

TEST_CASE("semigroup law") {
  const SpectralDomain dom = build_domain(kPi, {0.0, kPi}, 6);
  const ControlPair pair(mat(3, 3, {0.2, 1, -0.5, -1, 0.1, 0.3, 0.4, -0.7, 0.5}), mat(3, 1, {1, 0, 1}));
  Matrix c(6, 3);
  for (int i = 0; i < 18; ++i) c.data()[i] = std::sin(1.0 + i);
  const SpectralVector v(c);
  for (bool adjoint : {false, true}) {
    const SpectralVector two = semigroup_apply(dom, pair, semigroup_apply(dom, pair, v, 0.4, adjoint), 0.9, adjoint);
    const SpectralVector one = semigroup_apply(dom, pair, v, 1.3, adjoint);
    CHECK((two.coeffs() - one.coeffs()).norm() <= 1e-10 * one.norm());
  }
}

TEST_CASE("observation of the rotation example") {
  const SpectralDomain dom = full_domain(5);
  const Vector zeta = vec({0.8, 0.6});
  const double T = 7.0;
  const ObservationMap obs(dom, rotation_example_pair(), SpectralVector::single_mode(5, 1, zeta), T);
  for (double t : {0.0, 1.5, 3.9, 7.0}) {
    const Matrix o = obs.value(t);
    REQUIRE(o.rows() == 5);
    REQUIRE(o.cols() == 1);
    const double s = T - t;
    CHECK(o(0, 0) == doctest::Approx(std::exp(-s) * (zeta(0) * std::cos(s) - zeta(1) * std::sin(s))).epsilon(1e-13));
    CHECK(o.bottomRows(4).norm() == 0.0);
    CHECK((o - observation(dom, rotation_example_pair(), obs.multiplier(), T, t)).norm() == 0.0);
  }
  CHECK_THROWS_AS(obs.value(7.5), Error);
}

TEST_CASE("observation of pure heat is positive and of zero multiplier is zero") {
  const SpectralDomain dom = full_domain(4);
  const ObservationMap obs(dom, scalar_pair(), SpectralVector::single_mode(4, 1, vec({1.0})), 3.0);
  for (int i = 0; i <= 30; ++i) {
    const double t = 0.1 * i;
    CHECK(obs.value(t)(0, 0) == doctest::Approx(std::exp(-(3.0 - t))).epsilon(1e-14));
    CHECK(obs.value(t)(0, 0) > 0.0);
  }
  const ObservationMap zero(dom, rotation_example_pair(), SpectralVector::zero(4, 2), 2.0);
  CHECK(zero.value(1.0).norm() == 0.0);
}

TEST_CASE("observation derivative against central differences") {
  const SpectralDomain dom = build_domain(kPi, {0.0, 2.0}, 4);
  Matrix c(4, 2);
  c << 1, 0.5, -0.3, 0.2, 0.1, -0.4, 0.05, 0.02;
  const ObservationMap obs(dom, rotation_example_pair(), SpectralVector(c), 2.0);
  const double h = 1e-5;
  for (double t : {0.3, 1.0, 1.7}) {
    const Matrix fd = (obs.value(t + h) - obs.value(t - h)) / (2 * h);
    CHECK((fd - obs.derivative(t)).norm() < 1e-7 * (1 + fd.norm()));
  }
}

TEST_CASE("forward solve with zero control is the semigroup") {
  const SpectralDomain dom = full_domain(4);
  const SpectralVector y0 = SpectralVector::single_mode(4, 2, vec({1.0, -2.0}));
  const ControlTrajectory u = constant_control(1.5, Matrix::Zero(4, 1));
  const SpectralVector y = solve_forward(dom, rotation_example_pair(), y0, u);
  CHECK((y.coeffs() - semigroup_apply(dom, rotation_example_pair(), y0, 1.5).coeffs()).norm() < 1e-14);
}

TEST_CASE("forward solve of the scalar equation with a constant control") {
  const SpectralDomain dom = full_domain(3);
  const double c = 2.0;
  for (double T : {0.5, 1.0, 3.0}) {
    Matrix u = Matrix::Zero(3, 1);
    u(0, 0) = -1.0;
    const SpectralVector y = solve_forward(dom, scalar_pair(), SpectralVector::single_mode(3, 1, vec({c})),
                                           constant_control(T, u));
    CHECK(y.coeffs()(0, 0) == doctest::Approx(std::exp(-T) * c - (1 - std::exp(-T))).epsilon(1e-13));
  }
}

TEST_CASE("forward solve with the oracle's bang-bang control reaches zero") {
  const Vector eta = example_eta();
  const OdeInstance inst = reduce_to_mode(rotation_example_pair(), 1.0, eta);
  const OdeSolution sol = ode_time_optimal(inst);
  const double T = sol.t_star;
  const Vector& xi = sol.adjoint_dir;
  auto sign_at = [&](double t) {
    const double s = T - t;
    return xi(0) * std::cos(s) - xi(1) * std::sin(s) > 0 ? 1.0 : -1.0;
  };
  const int K = 4;
  const SpectralDomain dom = full_domain(K);
  ControlTrajectory u;
  u.horizon = T;
  std::vector<double> times;
  const int N = 4000;
  for (int i = 0; i <= N; ++i) times.push_back(T * i / N);
  for (double z : sol.switch_times) {
    times.push_back(z - 1e-12);
    times.push_back(z + 1e-12);
  }
  std::sort(times.begin(), times.end());
  for (double t : times) {
    Matrix v = Matrix::Zero(K, 1);
    double probe = t;
    for (double z : sol.switch_times) {
      if (std::abs(t - z) < 1e-9) probe = t < z ? z - 1e-6 : z + 1e-6;
    }
    v(0, 0) = sign_at(probe);
    u.grid.push_back(t);
    u.values.push_back(v);
    u.norms.push_back(1.0);
  }
  CHECK(u.max_norm() <= 1.0 + 1e-9);
  CHECK(u.norm_consistency() == 0.0);
  const SpectralVector y = solve_forward(dom, rotation_example_pair(), SpectralVector::single_mode(K, 1, eta), u);
  CHECK(y.norm() <= 1e-6 * eta.norm());
}
