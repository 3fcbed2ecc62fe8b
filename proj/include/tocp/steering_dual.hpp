#pragma once

// Minimal-norm null steering through a convex dual functional over multipliers,
// the norm-versus-horizon map N(T), the optimal time T* where N crosses 1, and
// bang-bang synthesis u = scale * obs / ||obs||.

#include <cstdint>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "tocp/spectral_heat.hpp"
#include "tocp/switching_analysis.hpp"

namespace tocp {

struct SteeringOptions {
  int grid_intervals = 2048;
  /// Smoothing levels for ||v||_eps = sqrt(||v||^2 + eps^2), relative to the
  /// largest observation norm on the grid at the start of each stage.
  std::vector<double> smoothing = {1e-2, 1e-4, 1e-6, 1e-8};
  double rel_decrease_tol = 1e-12;
  double grad_tol = 1e-9;
  int max_newton_iterations = 200;
  double residual_tol = 1e-5;
  bool compute_residual = true;  // resimulate the synthesized control in min_norm
  double feasibility_tol = 1e-8;
  double rank_tol = kDefaultRankTol;

  double bisection_tol = 1e-6;  // |tHigh - tLow| <= tol * max(1, T*)
  double guard_band = 1e-4;     // |N(T*) - 1| above this is reported as a warning
  double initial_horizon = 1.0;
  double max_horizon = 400.0;
  int max_bisection_evaluations = 120;
  bool refine_grid_check = true;  // re-evaluate N(T*) on a doubled grid

  // Verification of the synthesized control on [0, T*].
  double bang_bang_low_tol = 1e-6;   // ||u|| >= 1 - tol away from switches
  double bang_bang_high_tol = 1e-9;  // ||u|| <= 1 + tol
  double reversal_tol = 1e-5;        // ||u(t-) + u(t+)|| at every switch

  /// Random initial multiplier instead of the steepest-descent start.
  std::optional<std::uint64_t> init_seed;
  SwitchOptions switching;
};

struct DualEvaluation {
  double value = 0.0;
  SpectralVector subgradient;
};

struct SteeringResult {
  double horizon = 0.0;
  SpectralVector xi;          // normalized to unit norm
  double min_norm = 0.0;      // N(T)
  double dual_value = 0.0;    // optimal value of the dual functional (unnormalized xi)
  double primal_norm = 0.0;   // int ||obs|| dt of the unnormalized optimizer
  double terminal_residual = 0.0;
  int newton_iterations = 0;
  double gradient_norm = 0.0;  // final stage, relative to 1 + |dual value|
  bool converged = false;
};

struct FeasibilityResult {
  bool feasible = false;
  double residual = 0.0;
  bool trivial = false;  // y0 == 0
  int controllable_dim = 0;
};

struct VerificationFlags {
  bool bang_bang = false;
  double bang_bang_worst = 0.0;     // max | ||u|| - 1 | away from switches
  bool count_bound = false;         // window bound and global zero bound
  bool reversal = false;
  double reversal_worst = 0.0;
  bool parity = false;
  bool residual = false;
};

struct NormSample {
  double horizon;
  double norm;
};

struct OptimalTimeResult {
  double t_star = 0.0;
  double t_low = 0.0;
  double t_high = 0.0;
  double n_at_t_star = 0.0;
  double grid_refinement_delta = 0.0;
  bool guard_band_warning = false;
  SteeringResult steering;  // multiplier at t_star
  ControlTrajectory control;
  SwitchReport switches;
  BoundFlags bounds;
  VerificationFlags flags;
  std::vector<NormSample> evaluations;  // every N(T) computed, in call order
  int qAB = 0;
  ExtendedReal dA = ExtendedReal::infinity();
};

/// value = 1/2 (int_0^T ||obs||_eps dt)^2 + <y0, e^{T A^*} xi> with its gradient.
DualEvaluation dual_functional(const SpectralDomain& dom, const ControlPair& pair,
                               const SpectralVector& xi, double horizon,
                               const SpectralVector& y0, double smoothing = 0.0,
                               int grid_intervals = 2048);

FeasibilityResult feasibility_check(const ControlPair& pair, const SpectralVector& y0,
                                    double tol = 1e-8, double rank_tol = kDefaultRankTol);

SteeringResult min_norm(const SpectralDomain& dom, const ControlPair& pair,
                        const SpectralVector& y0, double horizon,
                        const SteeringOptions& opts = {},
                        const SpectralVector* warm_start = nullptr);

OptimalTimeResult optimal_time(const SpectralDomain& dom, const ControlPair& pair,
                               const SpectralVector& y0, const SteeringOptions& opts = {});

/// scale * obs/||obs|| sampled on a uniform grid (plus optional extra times),
/// left-continuous at zeros of the observation.
ControlTrajectory synthesize_control(const SpectralDomain& dom, const ControlPair& pair,
                                     const SpectralVector& xi, double horizon, double scale,
                                     int grid_intervals = 2048,
                                     std::span<const double> extra_times = {},
                                     const SwitchOptions& switching = {});

/// Resimulates scale * f_xi on [0, T] with the jumps at the zeros of the
/// observation resolved, returning ||y(T)||.
double steering_residual(const SpectralDomain& dom, const ControlPair& pair,
                         const SpectralVector& y0, const SpectralVector& xi, double horizon,
                         double scale, int grid_intervals = 2048,
                         const SwitchOptions& switching = {});

}  // namespace tocp
