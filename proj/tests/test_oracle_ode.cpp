#include <doctest.h>

#include "test_support.hpp"
#include "tocp/error.hpp"

using namespace tocp;
using namespace tocp::test;

TEST_CASE("scalar oracle") {
  const OdeInstance inst{mat(1, 1, {-1}), mat(1, 1, {1}), vec({2.0})};
  const OdeSolution s = ode_time_optimal(inst);
  CHECK(s.t_star == doctest::Approx(std::log(3.0)).epsilon(1e-12));
  CHECK(s.switch_times.empty());
  REQUIRE(s.adjoint_dir.size() == 1);
  CHECK(s.adjoint_dir(0) == doctest::Approx(-1.0));
  CHECK(s.residual < 1e-10);
  for (double T : {1.0, 2.0, 3.0}) {
    CHECK(ode_min_norm(inst, T) == doctest::Approx(2.0 / (std::exp(T) - 1.0)).epsilon(1e-10));
  }
}

TEST_CASE("mode reduction") {
  const OdeInstance inst = reduce_to_mode(rotation_example_pair(), 4.0, vec({1.0, 2.0}));
  CHECK((inst.Ablock - mat(2, 2, {-4, 1, -1, -4})).norm() == 0.0);
  CHECK((inst.B - rotation_example_pair().B()).norm() == 0.0);
}

TEST_CASE("zero initial state is already at the target") {
  const OdeSolution s = ode_time_optimal({mat(1, 1, {-1}), mat(1, 1, {1}), vec({0.0})});
  CHECK(s.t_star == 0.0);
  CHECK(s.switch_times.empty());
}

TEST_CASE("rotation example through the oracle") {
  const Vector eta = example_eta();
  const OdeInstance inst = reduce_to_mode(rotation_example_pair(), 1.0, eta);
  const OdeSolution s = ode_time_optimal(inst);
  CHECK(s.t_star > 4 * kPi);
  CHECK(s.t_star >= std::log(eta.norm() + 1.0));
  REQUIRE(s.switch_times.size() >= 3);
  for (std::size_t i = 1; i < s.switch_times.size(); ++i) {
    CHECK(std::abs(s.switch_times[i] - s.switch_times[i - 1] - kPi) <= 1e-8);
  }
  CHECK(s.residual <= 1e-8 * eta.norm());
  CHECK(s.adjoint_dir.norm() == doctest::Approx(1.0));
  // just below the optimal time no admissible control reaches zero
  CHECK(ode_min_norm(inst, 0.99 * s.t_star) > 1.0);
  CHECK(ode_min_norm(inst, s.t_star) == doctest::Approx(1.0).epsilon(1e-6));
  const double resim = ode_resimulate(inst, s.adjoint_dir, s.t_star, 1.0, s.switch_times);
  CHECK(resim <= 1e-8 * eta.norm());
}

TEST_CASE("closed-form phase") {
  const ClosedFormPhase flat = closed_form_phase(vec({1.0, 0.0}), 10.0);
  CHECK(flat.theta == doctest::Approx(kPi / 2));
  CHECK(flat.rho == doctest::Approx(1.0));

  // (1, 1)/sqrt(2): arctan(-zeta_1/zeta_2) with the sign making rho sin(s + theta) exact
  const Vector diag = vec({1.0, 1.0}) / std::sqrt(2.0);
  const ClosedFormPhase d = closed_form_phase(diag, 10.0);
  CHECK(std::abs(d.theta) == doctest::Approx(kPi / 4));
  for (const Vector& zeta : {diag, vec({0.3, -0.8}), vec({-0.6, 0.1}), vec({1.0, 0.0})}) {
    const ClosedFormPhase p = closed_form_phase(zeta, 12.0);
    CHECK(p.theta > -kPi / 2);
    CHECK(p.theta <= kPi / 2);
    for (double s : {0.0, 0.7, 2.0, 5.5}) {
      CHECK(zeta(0) * std::cos(s) - zeta(1) * std::sin(s) ==
            doctest::Approx(p.rho * std::sin(s + p.theta)).epsilon(1e-13).scale(1));
    }
    REQUIRE(p.lattice.size() >= 3);
    for (std::size_t i = 1; i < p.lattice.size(); ++i) {
      CHECK(p.lattice[i] - p.lattice[i - 1] == doctest::Approx(kPi).epsilon(1e-14));
    }
    for (double t : p.lattice) CHECK(std::abs(std::sin(12.0 - t + p.theta)) < 1e-12);
  }
}

TEST_CASE("closed-form example agrees with the oracle switching pattern") {
  const Vector eta = example_eta();
  const ClosedFormExample ex = example_closed_form(eta);
  REQUIRE(ex.phase.lattice.size() == ex.oracle.switch_times.size());
  for (std::size_t i = 0; i < ex.phase.lattice.size(); ++i) {
    CHECK(ex.phase.lattice[i] == doctest::Approx(ex.oracle.switch_times[i]).epsilon(1e-8));
  }
  const double T = ex.oracle.t_star;
  const Vector& xi = ex.oracle.adjoint_dir;
  for (double t : {0.5, 2.0, 4.0, 7.5, 11.0}) {
    const double obs = xi(0) * std::cos(T - t) - xi(1) * std::sin(T - t);
    CHECK(ex.phase.sign_at(t, T) == (obs > 0 ? 1 : -1));
  }
}

TEST_CASE("three-dimensional oracle agrees with the dual solver") {
  const ControlPair pair(mat(3, 3, {0.0, 1.0, 0.0, -1.0, 0.0, 0.5, 0.0, -0.5, -0.2}), mat(3, 1, {1.0, 0.0, 0.3}));
  const Vector eta = vec({2.0, -1.0, 1.5});
  const OdeSolution s = ode_time_optimal(reduce_to_mode(pair, 1.0, eta));
  const OptimalTimeResult r = optimal_time(full_domain(), pair, SpectralVector::single_mode(12, 1, eta));
  CHECK(std::abs(s.t_star - r.t_star) <= 1e-3 * s.t_star);
  CHECK(s.residual <= 1e-8 * std::max(1.0, eta.norm()));
}

TEST_CASE("oracle argument checks") {
  CHECK_THROWS_AS(ode_time_optimal({Matrix::Zero(4, 4), Matrix::Ones(4, 1), Vector::Ones(4)}), Error);
  try {
    ode_time_optimal({mat(2, 2, {1, 0, 0, 2}), mat(2, 1, {1, 0}), vec({1.0, 1.0})});
    CHECK(false);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kArgument);
  }
}
