#pragma once

// Brute-force time-optimal control of the single-mode ODE y' = Ablock y + B u,
// ||u|| <= 1. Steering y0 to 0 in time T is possible iff -y0 lies in the
// reachable set R_T = { int_0^T e^{-tA} B u(t) dt }, whose support function is
// h_T(zeta) = int_0^T ||B^T e^{-tA^T} zeta|| dt. The optimal time is therefore
// max over unit zeta of the first T with h_T(zeta) = <-y0, zeta>, and the
// maximizing zeta generates the bang-bang control.

#include <vector>

#include "tocp/linalg_control.hpp"

namespace tocp {

struct OdeInstance {
  Matrix Ablock;  // A - lambda_k I
  Matrix B;
  Vector y0;
};

/// The single-mode reduction (A - lambda I, B, y0) of a control pair.
OdeInstance reduce_to_mode(const ControlPair& pair, double lambda, const Vector& y0);

struct OdeOptions {
  int sweep_points = 10000;    // circle angles (n = 2) or sphere points (n = 3)
  double grid_step = 0.005;    // coarse support-function grid
  double integration_tol = 1e-12;
  double max_horizon = 400.0;
};

struct OdeSolution {
  double t_star = 0.0;
  Vector adjoint_dir;                // unit xi with u(t) ~ B^T e^{(T-t) Ablock^T} xi
  Vector support_dir;                // unit zeta maximizing the first-hit time
  std::vector<double> switch_times;  // zeros of the switching function in (0, T)
  double residual = 0.0;             // ||y(T)|| after adaptive resimulation
  /// Other maximizers whose time ties t_star to 1e-9 relative.
  std::vector<Vector> tied_adjoint_dirs;
};

/// Throws kArgument for a rank-deficient pair or n > 3, kHorizon when the
/// target is not reached before max_horizon.
OdeSolution ode_time_optimal(const OdeInstance& inst, const OdeOptions& opts = {});

/// Minimal sup-norm of controls steering y0 to 0 in time T:
/// max over zeta of <-y0, zeta> / h_T(zeta).
double ode_min_norm(const OdeInstance& inst, double horizon, const OdeOptions& opts = {});

/// ||y(T)|| for y' = Ablock y + B u with u = scale * B^T e^{(T-t)Ablock^T} xi / ||.||,
/// integrated adaptively between consecutive switching times.
double ode_resimulate(const OdeInstance& inst, const Vector& adjoint_dir, double horizon,
                      double scale, std::span<const double> switch_times,
                      double tol = 1e-12);

/// For the rotation example, zeta_1 cos s - zeta_2 sin s = rho sin(s + theta).
struct ClosedFormPhase {
  double theta = 0.0;   // in (-pi/2, pi/2], pi/2 exactly when zeta_2 = 0
  double rho = 0.0;     // signed amplitude
  std::vector<double> lattice;  // {t in (0, Tref) : sin(Tref - t + theta) = 0}
  /// Sign of the first control component at time t: sign(rho sin(Tref - t + theta)).
  int sign_at(double t, double Tref) const;
};

ClosedFormPhase closed_form_phase(const Vector& zeta, double Tref);

struct ClosedFormExample {
  OdeSolution oracle;
  Vector zeta_at_ref;   // adjoint direction re-expressed for horizon Tref
  ClosedFormPhase phase;
};

/// Oracle solution of the rotation example with y0 = eta, and its phase for
/// horizon Tref (Tref <= 0 means Tref = t_star).
ClosedFormExample example_closed_form(const Vector& eta, double Tref = 0.0,
                                      const OdeOptions& opts = {});

/// A = [[0, 1], [-1, 0]], B = (1, 0)^T.
ControlPair rotation_example_pair();

}  // namespace tocp
