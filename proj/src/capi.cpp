#include "tocp/tocp.h"

#include <exception>
#include <new>
#include <string>

#include "tocp/error.hpp"
#include "tocp/scenario.hpp"

struct tocp_pair {
  tocp::ControlPair pair;
};

struct tocp_domain {
  tocp::SpectralDomain dom;
};

struct tocp_solution {
  tocp::SpectralDomain dom;
  tocp::ControlPair pair;
  tocp::OptimalTimeResult result;
  tocp::ObservationMap obs;
  double reference = 0.0;
};

struct tocp_scenario {
  tocp::Scenario scenario;
};

struct tocp_run {
  tocp::RunReport run;
  std::string text;
};

namespace {

thread_local std::string g_last_error;

tocp_status set_error(tocp_status status, const std::string& msg) {
  g_last_error = msg;
  return status;
}

template <typename F>
tocp_status guard(F&& body) {
  try {
    g_last_error.clear();
    body();
    return TOCP_OK;
  } catch (const tocp::Error& e) {
    return set_error(static_cast<tocp_status>(static_cast<int>(e.code())), e.what());
  } catch (const std::bad_alloc&) {
    return set_error(TOCP_E_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return set_error(TOCP_E_INTERNAL, e.what());
  }
}

void need(const void* p, const char* what) {
  if (p == nullptr) tocp::fail(tocp::ErrorCode::kArgument, std::string(what) + " is null");
}

tocp::Matrix row_major(const double* data, int rows, int cols) {
  tocp::Matrix M(rows, cols);
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j) M(i, j) = data[i * cols + j];
  }
  return M;
}

}  // namespace

extern "C" {

const char* tocp_version(void) {
  static const std::string v = tocp::version_string();
  return v.c_str();
}

const char* tocp_last_error(void) { return g_last_error.c_str(); }

const char* tocp_status_name(tocp_status status) {
  switch (status) {
    case TOCP_OK:
      return "ok";
    case TOCP_E_INTERNAL:
      return "internal";
    default:
      if (status >= TOCP_E_DIMENSION && status <= TOCP_E_IO) {
        static thread_local std::string name;
        name = tocp::to_string(static_cast<tocp::ErrorCode>(status));
        return name.c_str();
      }
      return "unknown";
  }
}

int tocp_exit_code_for_status(tocp_status status) {
  if (status == TOCP_OK) return 0;
  if (status >= TOCP_E_DIMENSION && status <= TOCP_E_IO) {
    return tocp::exit_code_for(static_cast<tocp::ErrorCode>(status));
  }
  return 4;
}

tocp_status tocp_pair_create(int n, int m, const double* A, const double* B, tocp_pair** out) {
  return guard([&] {
    need(out, "out");
    need(A, "A");
    need(B, "B");
    if (n < 1 || m < 1) tocp::fail(tocp::ErrorCode::kDimension, "n and m must be positive");
    *out = new tocp_pair{tocp::ControlPair(row_major(A, n, n), row_major(B, n, m))};
  });
}

void tocp_pair_destroy(tocp_pair* pair) { delete pair; }

tocp_status tocp_pair_kalman_rank(const tocp_pair* pair, int* rank) {
  return guard([&] {
    need(pair, "pair");
    need(rank, "rank");
    *rank = tocp::kalman_rank(pair->pair);
  });
}

tocp_status tocp_pair_qab(const tocp_pair* pair, int* qab) {
  return guard([&] {
    need(pair, "pair");
    need(qab, "qab");
    *qab = tocp::compute_qAB(pair->pair);
  });
}

tocp_status tocp_pair_da(const tocp_pair* pair, double* value, int* is_finite) {
  return guard([&] {
    need(pair, "pair");
    need(value, "value");
    need(is_finite, "is_finite");
    const tocp::ExtendedReal d = tocp::compute_dA(pair->pair);
    *is_finite = d.is_finite() ? 1 : 0;
    if (d.is_finite()) *value = d.value();
  });
}

tocp_status tocp_domain_create(double length, double omega_a, double omega_b, int modes,
                               tocp_domain** out) {
  return guard([&] {
    need(out, "out");
    *out = new tocp_domain{tocp::build_domain(length, {omega_a, omega_b}, modes)};
  });
}

void tocp_domain_destroy(tocp_domain* domain) { delete domain; }

tocp_status tocp_min_norm(const tocp_domain* domain, const tocp_pair* pair, const double* y0,
                          double horizon, double* norm) {
  return guard([&] {
    need(domain, "domain");
    need(pair, "pair");
    need(y0, "y0");
    need(norm, "norm");
    const tocp::SpectralVector y(row_major(y0, domain->dom.modes(), pair->pair.n()));
    *norm = tocp::min_norm(domain->dom, pair->pair, y, horizon).min_norm;
  });
}

tocp_status tocp_optimal_time(const tocp_domain* domain, const tocp_pair* pair,
                              const double* y0, tocp_solution** out) {
  return guard([&] {
    need(domain, "domain");
    need(pair, "pair");
    need(y0, "y0");
    need(out, "out");
    const tocp::SpectralVector y(row_major(y0, domain->dom.modes(), pair->pair.n()));
    tocp::OptimalTimeResult r = tocp::optimal_time(domain->dom, pair->pair, y);
    tocp::ObservationMap obs(domain->dom, pair->pair, r.steering.xi, r.t_star);
    double reference = 0.0;
    for (double n : r.control.norms) reference = std::max(reference, n);
    for (std::size_t i = 0; i < r.control.size(); ++i) {
      reference = std::max(reference, obs.norm(r.control.grid[i]));
    }
    *out = new tocp_solution{domain->dom, pair->pair, std::move(r), std::move(obs), reference};
  });
}

void tocp_solution_destroy(tocp_solution* solution) { delete solution; }

tocp_status tocp_solution_t_star(const tocp_solution* solution, double* t_star) {
  return guard([&] {
    need(solution, "solution");
    need(t_star, "t_star");
    *t_star = solution->result.t_star;
  });
}

tocp_status tocp_solution_switch_times(const tocp_solution* solution, double* times,
                                       size_t capacity, size_t* count) {
  return guard([&] {
    need(solution, "solution");
    need(count, "count");
    const std::vector<double> s = solution->result.switches.switch_times();
    *count = s.size();
    if (capacity > 0) need(times, "times");
    for (std::size_t i = 0; i < s.size() && i < capacity; ++i) times[i] = s[i];
  });
}

tocp_status tocp_solution_control(const tocp_solution* solution, double t, double* buffer) {
  return guard([&] {
    need(solution, "solution");
    need(buffer, "buffer");
    const tocp::Matrix u = tocp::control_direction(solution->obs, t, solution->reference);
    for (Eigen::Index i = 0; i < u.rows(); ++i) {
      for (Eigen::Index j = 0; j < u.cols(); ++j) buffer[i * u.cols() + j] = u(i, j);
    }
  });
}

tocp_status tocp_solution_residual(const tocp_solution* solution, double* residual) {
  return guard([&] {
    need(solution, "solution");
    need(residual, "residual");
    *residual = solution->result.steering.terminal_residual;
  });
}

tocp_status tocp_scenario_load(const char* path, tocp_scenario** out) {
  return guard([&] {
    need(path, "path");
    need(out, "out");
    *out = new tocp_scenario{tocp::load_scenario(path)};
  });
}

tocp_status tocp_scenario_parse(const char* text, tocp_scenario** out) {
  return guard([&] {
    need(text, "text");
    need(out, "out");
    *out = new tocp_scenario{tocp::parse_scenario(text)};
  });
}

void tocp_scenario_destroy(tocp_scenario* scenario) { delete scenario; }

const char* tocp_scenario_name(const tocp_scenario* scenario) {
  return scenario == nullptr ? "" : scenario->scenario.name.c_str();
}

tocp_status tocp_scenario_min_norm(const tocp_scenario* scenario, double horizon, double* norm) {
  return guard([&] {
    need(scenario, "scenario");
    need(norm, "norm");
    const tocp::Scenario& sc = scenario->scenario;
    const tocp::SpectralDomain dom = tocp::build_domain(sc.length, sc.omega, sc.modes);
    const tocp::ControlPair pair(sc.A, sc.B);
    tocp::SteeringOptions opts = sc.solver;
    opts.compute_residual = false;
    *norm = tocp::min_norm(dom, pair, tocp::SpectralVector(sc.y0), horizon, opts).min_norm;
  });
}

tocp_status tocp_scenario_run(const tocp_scenario* scenario, int flags, tocp_run** out) {
  return guard([&] {
    need(scenario, "scenario");
    need(out, "out");
    tocp::RunOptions opts;
    opts.oracle = (flags & TOCP_RUN_ORACLE) != 0;
    opts.refine_k = (flags & TOCP_RUN_REFINE_K) != 0;
    tocp::RunReport r = tocp::run_scenario(scenario->scenario, opts);
    std::string text = tocp::report_text(r);
    *out = new tocp_run{std::move(r), std::move(text)};
  });
}

void tocp_run_destroy(tocp_run* run) { delete run; }

int tocp_run_exit_code(const tocp_run* run) { return run == nullptr ? 4 : run->run.exit_code; }

const char* tocp_run_message(const tocp_run* run) {
  return run == nullptr ? "" : run->run.message.c_str();
}

const char* tocp_run_report(const tocp_run* run) {
  return run == nullptr ? "" : run->text.c_str();
}

tocp_status tocp_run_write(const tocp_run* run, const char* out_dir) {
  return guard([&] {
    need(run, "run");
    need(out_dir, "out_dir");
    tocp::emit_report(run->run, out_dir);
  });
}

}  // extern "C"
