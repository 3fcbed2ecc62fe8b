#ifndef TOCP_TOCP_H
#define TOCP_TOCP_H

/* C interface to libtocp. Every call returns a status; on failure the message
 * is available from tocp_last_error() on the same thread. Matrices are passed
 * row-major. Handles are owned by the caller and released with *_destroy. */

#include <stddef.h>

#if defined(_WIN32)
#define TOCP_API __declspec(dllexport)
#else
#define TOCP_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum tocp_status {
  TOCP_OK = 0,
  TOCP_E_DIMENSION = 1,
  TOCP_E_DOMAIN = 2,
  TOCP_E_ARGUMENT = 3,
  TOCP_E_NUMERICAL = 4,
  TOCP_E_CONVERGENCE = 5,
  TOCP_E_FEASIBILITY = 6,
  TOCP_E_HORIZON = 7,
  TOCP_E_DEGENERATE = 8,
  TOCP_E_DIAGNOSTIC = 9,
  TOCP_E_SCHEMA = 10,
  TOCP_E_IO = 11,
  TOCP_E_INTERNAL = 12
} tocp_status;

typedef struct tocp_pair tocp_pair;
typedef struct tocp_domain tocp_domain;
typedef struct tocp_solution tocp_solution;
typedef struct tocp_scenario tocp_scenario;
typedef struct tocp_run tocp_run;

enum { TOCP_RUN_ORACLE = 1, TOCP_RUN_REFINE_K = 2 };

TOCP_API const char* tocp_version(void);
TOCP_API const char* tocp_last_error(void);
TOCP_API const char* tocp_status_name(tocp_status status);
/* Process exit code the CLI uses for a failed call with this status. */
TOCP_API int tocp_exit_code_for_status(tocp_status status);

TOCP_API tocp_status tocp_pair_create(int n, int m, const double* A, const double* B,
                                      tocp_pair** out);
TOCP_API void tocp_pair_destroy(tocp_pair* pair);
TOCP_API tocp_status tocp_pair_kalman_rank(const tocp_pair* pair, int* rank);
TOCP_API tocp_status tocp_pair_qab(const tocp_pair* pair, int* qab);
/* *is_finite = 0 means d_A is +infinity and *value is left untouched. */
TOCP_API tocp_status tocp_pair_da(const tocp_pair* pair, double* value, int* is_finite);

TOCP_API tocp_status tocp_domain_create(double length, double omega_a, double omega_b,
                                        int modes, tocp_domain** out);
TOCP_API void tocp_domain_destroy(tocp_domain* domain);

/* y0 is modes x n. */
TOCP_API tocp_status tocp_min_norm(const tocp_domain* domain, const tocp_pair* pair,
                                   const double* y0, double horizon, double* norm);
TOCP_API tocp_status tocp_optimal_time(const tocp_domain* domain, const tocp_pair* pair,
                                       const double* y0, tocp_solution** out);
TOCP_API void tocp_solution_destroy(tocp_solution* solution);
TOCP_API tocp_status tocp_solution_t_star(const tocp_solution* solution, double* t_star);
/* Writes up to capacity switch times and always sets *count to the total. */
TOCP_API tocp_status tocp_solution_switch_times(const tocp_solution* solution, double* times,
                                                size_t capacity, size_t* count);
/* u(t) as a modes x m row-major block; buffer must hold modes * m doubles. */
TOCP_API tocp_status tocp_solution_control(const tocp_solution* solution, double t,
                                           double* buffer);
TOCP_API tocp_status tocp_solution_residual(const tocp_solution* solution, double* residual);

TOCP_API tocp_status tocp_scenario_load(const char* path, tocp_scenario** out);
TOCP_API tocp_status tocp_scenario_parse(const char* text, tocp_scenario** out);
TOCP_API void tocp_scenario_destroy(tocp_scenario* scenario);
TOCP_API const char* tocp_scenario_name(const tocp_scenario* scenario);
TOCP_API tocp_status tocp_scenario_min_norm(const tocp_scenario* scenario, double horizon,
                                            double* norm);
TOCP_API tocp_status tocp_scenario_run(const tocp_scenario* scenario, int flags,
                                       tocp_run** out);

TOCP_API void tocp_run_destroy(tocp_run* run);
TOCP_API int tocp_run_exit_code(const tocp_run* run);
TOCP_API const char* tocp_run_message(const tocp_run* run);
/* Report text without the run_info block. */
TOCP_API const char* tocp_run_report(const tocp_run* run);
TOCP_API tocp_status tocp_run_write(const tocp_run* run, const char* out_dir);

#ifdef __cplusplus
}
#endif

#endif
