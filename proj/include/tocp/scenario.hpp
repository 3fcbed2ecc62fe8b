#pragma once

// Scenario files, the verification pipeline behind `tocp run`, and the report
// and CSV artifacts it writes.

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "tocp/error.hpp"
#include "tocp/oracle_ode.hpp"
#include "tocp/steering_dual.hpp"

namespace tocp {

inline constexpr const char* kScenarioSchema = "tocp.scenario/1";
inline constexpr const char* kReportSchema = "tocp.report/1";

/// Checks a scenario may enable; "oracle_*" run only with the oracle.
inline const std::vector<std::string>& known_checks() {
  static const std::vector<std::string> names = {
      "bang_bang",        "count_bound",      "reversal", "parity", "residual",
      "oracle_agreement", "oracle_residual", "minimality", "k_refinement"};
  return names;
}

struct VerificationTolerances {
  double oracle_time = 1e-3;      // relative |T_dual - T_ode|
  double oracle_switch = 1e-4;    // switch times, relative to T*
  double oracle_residual = 1e-8;  // relative to max(1, ||y0||)
  double minimality_factor = 0.99;
  double k_refinement = 1e-6;     // relative change of T* at 2K
};

struct Scenario {
  std::string name;
  Matrix A;
  Matrix B;
  double length = 0.0;
  Interval omega;
  int modes = 12;
  Matrix y0;  // modes x n
  SteeringOptions solver;
  VerificationTolerances tolerances;
  std::vector<std::string> checks;
  bool oracle = false;
  int trajectory_rows = 4096;
  nlohmann::json source;  // the parsed file, echoed into the report
};

/// Parses scenario text; schema violations throw kSchema naming the field path
/// and its line in `origin`.
Scenario parse_scenario(const std::string& text, const std::string& origin = "<input>");
Scenario load_scenario(const std::filesystem::path& path);

struct RunOptions {
  bool oracle = false;    // force the oracle cross-check on
  bool refine_k = false;  // rerun at twice the truncation level
};

struct RunReport {
  std::string name;
  int exit_code = 0;
  std::string message;
  nlohmann::json report;
  std::string trajectory_csv;  // empty when no control was synthesized
  std::string ncurve_csv;
};

/// Exit codes: 0 all enabled checks pass, 1 a check failed, 3 infeasible or no
/// horizon found, 4 solver failure.
RunReport run_scenario(const Scenario& scenario, const RunOptions& opts = {});

/// Writes <name>.report.json, <name>.trajectory.csv and <name>.ncurve.csv; throws kIo.
std::vector<std::filesystem::path> emit_report(const RunReport& run,
                                               const std::filesystem::path& out_dir);

/// The report without its nondeterministic run_info block, as written to disk.
std::string report_text(const RunReport& run);

int exit_code_for(ErrorCode code);

std::string version_string();

}  // namespace tocp
