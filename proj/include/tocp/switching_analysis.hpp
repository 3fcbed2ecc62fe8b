#pragma once

// Zeros of the observation t -> B^* e^{(T-t)A^*} xi, their classification into
// switching points, vanishing orders, and the per-window switching bounds.

#include <span>
#include <vector>

#include "tocp/spectral_heat.hpp"

namespace tocp {

struct SwitchOptions {
  int scan_intervals = 2048;
  double zero_scan_tol = 1e-8;   // accepted zero: ||obs|| <= tol * max_grid ||obs||
  double time_tol = 1e-10;       // refinement accuracy, relative to max(1, T)
  double limit_offset = 1e-5;    // one-sided limit stencil, relative to T
  double switch_tol = 1e-3;      // ||left - right|| above this is a switch
  double order_tol = 1e-6;       // relative threshold of the j-scan
  double window_slack = 1e-9;    // relative to max(1, T); see max_switches_in_window
};

struct ZeroPoint {
  double time = 0.0;
  bool classified = false;
  bool is_switch = false;
  Matrix left_dir;
  Matrix right_dir;
  int order = -1;        // j-scan
  int order_fit = -1;    // log-log slope, rounded
  double fit_slope = 0.0;
  bool orders_agree = false;
  double reversal_residual = 0.0;  // ||left + right||
  double stencil_gap = 0.0;        // direction change between delta and delta/2
};

struct SwitchReport {
  std::vector<double> zero_times;
  std::vector<ZeroPoint> zeros;
  std::vector<double> unclassified;
  int max_window_count = 0;

  std::vector<ZeroPoint> switches() const;
  std::vector<double> switch_times() const;
};

struct VanishingOrder {
  int scan = -1;
  int fit = -1;
  double slope = 0.0;
  bool agree = false;
};

struct BoundFlags {
  bool window_bound = false;
  bool global_zero_bound = false;
  double window = 0.0;
  int max_window_count = 0;
  int allowed_per_window = 0;
  int zero_count = 0;
  int allowed_total = 0;
};

/// Refined zeros of ||obs|| in (0, T). Throws kDegenerate when obs vanishes identically.
std::vector<double> find_zero_times(const ObservationMap& obs, const SwitchOptions& opts = {});

VanishingOrder vanishing_order_detail(const ObservationMap& obs, double t,
                                      const SwitchOptions& opts = {});
/// Throws kDiagnostic when the j-scan and the log-log fit disagree.
int vanishing_order(const ObservationMap& obs, double t, const SwitchOptions& opts = {});

/// Richardson-extrapolated one-sided limit of obs/||obs|| at t (side = -1 or +1).
Matrix limit_direction(const ObservationMap& obs, double t, int side,
                       const SwitchOptions& opts = {}, double* stencil_gap = nullptr);

/// obs(t)/||obs(t)||, taking the left limit where ||obs(t)|| <= zero_tol * reference_norm.
Matrix control_direction(const ObservationMap& obs, double t, double reference_norm,
                         const SwitchOptions& opts = {});

SwitchReport detect_switches(const ObservationMap& obs, std::span<const double> zero_times,
                             const SwitchOptions& opts = {});

/// Largest number of times inside an open window of the given length. Two times
/// count as fitting when their gap is below window - slack.
int max_switches_in_window(std::span<const double> times, double window, double slack);

BoundFlags verify_bounds(const SwitchReport& report, const ExtendedReal& dA, int qAB,
                         double horizon, const SwitchOptions& opts = {});

/// L^2(0, T) distance between scale_a * f_a and scale_b * f_b, where f is the
/// normalized observation; integration splits at the zeros of both maps.
double control_l2_distance(const ObservationMap& a, double scale_a, const ObservationMap& b,
                           double scale_b, const SwitchOptions& opts = {});

}  // namespace tocp
