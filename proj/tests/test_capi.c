/* Exercises the C interface from plain C. */

#include <math.h>
#include <stdio.h>
#include <stdlib.h>
#include <string.h>

#include "tocp/tocp.h"

static int failures = 0;

#define EXPECT(cond)                                              \
  do {                                                            \
    if (!(cond)) {                                                \
      fprintf(stderr, "%s:%d: failed: %s\n", __FILE__, __LINE__, #cond); \
      ++failures;                                                 \
    }                                                             \
  } while (0)

static void test_pair(void) {
  const double A[] = {0, 1, -1, 0};
  const double B[] = {1, 0};
  tocp_pair* pair = NULL;
  EXPECT(tocp_pair_create(2, 1, A, B, &pair) == TOCP_OK);
  int rank = 0, q = 0, finite = 0;
  double dA = 0.0;
  EXPECT(tocp_pair_kalman_rank(pair, &rank) == TOCP_OK && rank == 2);
  EXPECT(tocp_pair_qab(pair, &q) == TOCP_OK && q == 2);
  EXPECT(tocp_pair_da(pair, &dA, &finite) == TOCP_OK && finite == 1);
  EXPECT(fabs(dA - M_PI) < 1e-14);
  tocp_pair_destroy(pair);

  const double zero[] = {0, 0};
  tocp_pair* bad = NULL;
  EXPECT(tocp_pair_create(2, 1, A, zero, &bad) == TOCP_E_ARGUMENT);
  EXPECT(bad == NULL);
  EXPECT(strlen(tocp_last_error()) > 0);
  EXPECT(tocp_pair_create(2, 1, NULL, B, &bad) == TOCP_E_ARGUMENT);
  EXPECT(tocp_pair_kalman_rank(NULL, &rank) == TOCP_E_ARGUMENT);
}

static void test_scalar_solve(void) {
  const double A[] = {0};
  const double B[] = {1};
  tocp_pair* pair = NULL;
  tocp_domain* dom = NULL;
  EXPECT(tocp_pair_create(1, 1, A, B, &pair) == TOCP_OK);
  EXPECT(tocp_domain_create(M_PI, 0.0, M_PI, 4, &dom) == TOCP_OK);
  EXPECT(tocp_domain_create(M_PI, 1.0, 0.5, 4, &dom) != TOCP_OK);
  double y0[4] = {2.0, 0.0, 0.0, 0.0};
  double n = 0.0;
  EXPECT(tocp_min_norm(dom, pair, y0, log(3.0), &n) == TOCP_OK);
  EXPECT(fabs(n - 1.0) < 1e-6);

  tocp_solution* sol = NULL;
  EXPECT(tocp_optimal_time(dom, pair, y0, &sol) == TOCP_OK);
  double t = 0.0, res = 1.0;
  size_t count = 99;
  EXPECT(tocp_solution_t_star(sol, &t) == TOCP_OK && fabs(t - log(3.0)) < 1e-5);
  EXPECT(tocp_solution_switch_times(sol, NULL, 0, &count) == TOCP_OK && count == 0);
  EXPECT(tocp_solution_residual(sol, &res) == TOCP_OK && res < 1e-5 * 2.0);
  double u[4];
  EXPECT(tocp_solution_control(sol, 0.5 * t, u) == TOCP_OK);
  EXPECT(fabs(u[0] + 1.0) < 1e-12 && u[1] == 0.0);
  tocp_solution_destroy(sol);

  double zero[4] = {0, 0, 0, 0};
  EXPECT(tocp_optimal_time(dom, pair, zero, &sol) == TOCP_E_ARGUMENT);
  tocp_domain_destroy(dom);
  tocp_pair_destroy(pair);
}

static void test_scenario(void) {
  tocp_scenario* sc = NULL;
  EXPECT(tocp_scenario_parse("{\"schema\": \"tocp.scenario/1\", \"name\": \"c\", \"n\": 1, \"m\": 1,\n"
                             " \"A\": [0], \"B\": [1], \"y0\": {\"modes\": {\"1\": [2]}}}",
                             &sc) == TOCP_OK);
  EXPECT(strcmp(tocp_scenario_name(sc), "c") == 0);
  double n = 0.0;
  EXPECT(tocp_scenario_min_norm(sc, 2.0, &n) == TOCP_OK);
  EXPECT(fabs(n - 2.0 / (exp(2.0) - 1.0)) < 1e-6);
  tocp_run* run = NULL;
  EXPECT(tocp_scenario_run(sc, 0, &run) == TOCP_OK);
  EXPECT(tocp_run_exit_code(run) == 0);
  EXPECT(strstr(tocp_run_report(run), "\"t_star\"") != NULL);
  EXPECT(strstr(tocp_run_report(run), "run_info") == NULL);
  EXPECT(tocp_run_write(run, "/dev/null/nowhere") == TOCP_E_IO);
  EXPECT(tocp_exit_code_for_status(TOCP_E_IO) == 5);
  tocp_run_destroy(run);
  tocp_scenario_destroy(sc);

  tocp_scenario* bad = NULL;
  EXPECT(tocp_scenario_parse("{\"schema\": \"tocp.scenario/1\",\n \"nme\": 1}", &bad) == TOCP_E_SCHEMA);
  EXPECT(strstr(tocp_last_error(), ":2") != NULL);
  EXPECT(tocp_exit_code_for_status(TOCP_E_SCHEMA) == 2);
  EXPECT(tocp_scenario_load("/nonexistent/x.json", &bad) == TOCP_E_IO);
  EXPECT(strcmp(tocp_status_name(TOCP_E_SCHEMA), "schema") == 0 || strlen(tocp_status_name(TOCP_E_SCHEMA)) > 0);
}

int main(void) {
  EXPECT(strlen(tocp_version()) > 0);
  test_pair();
  test_scalar_solve();
  test_scenario();
  if (failures == 0) printf("capi: all checks passed\n");
  return failures == 0 ? 0 : 1;
}
