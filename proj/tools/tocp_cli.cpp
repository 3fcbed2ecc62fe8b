// tocp: run scenario files through the time-optimal control pipeline.

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "tocp/tocp.h"

namespace {

constexpr int kExitSchema = 2;
constexpr int kExitIo = 5;

struct Flags {
  std::string out_dir;
  bool oracle = false;
  bool refine_k = false;
  bool quiet = false;
};

std::string output_dir(const Flags& f) {
  if (!f.out_dir.empty()) return f.out_dir;
  if (const char* env = std::getenv("TOCP_OUT_DIR"); env != nullptr && *env != '\0') return env;
  return ".";
}

std::mutex g_print;

void say(std::FILE* stream, const std::string& line) {
  std::lock_guard<std::mutex> lock(g_print);
  std::fputs(line.c_str(), stream);
  std::fputc('\n', stream);
  std::fflush(stream);
}

int fail_with(tocp_status st, const std::string& context) {
  say(stderr, "tocp: " + context + ": " + tocp_last_error());
  return tocp_exit_code_for_status(st);
}

int run_one(const std::string& path, const Flags& f) {
  tocp_scenario* sc = nullptr;
  tocp_status st = tocp_scenario_load(path.c_str(), &sc);
  if (st != TOCP_OK) {
    say(stderr, std::string("tocp: ") + tocp_last_error());
    return tocp_exit_code_for_status(st);
  }
  const std::string name = tocp_scenario_name(sc);
  const int flags = (f.oracle ? TOCP_RUN_ORACLE : 0) | (f.refine_k ? TOCP_RUN_REFINE_K : 0);
  tocp_run* run = nullptr;
  st = tocp_scenario_run(sc, flags, &run);
  tocp_scenario_destroy(sc);
  if (st != TOCP_OK) return fail_with(st, name);
  int code = tocp_run_exit_code(run);
  const std::string dir = output_dir(f);
  st = tocp_run_write(run, dir.c_str());
  if (st != TOCP_OK) {
    say(stderr, std::string("tocp: ") + name + ": " + tocp_last_error());
    code = kExitIo;
  } else if (code != 0) {
    say(stderr, "tocp: " + name + ": " + tocp_run_message(run));
  }
  if (!f.quiet) {
    say(stdout, name + ": exit " + std::to_string(code) + " -> " + dir + "/" + name +
                    ".report.json");
  }
  tocp_run_destroy(run);
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Time-optimal control of coupled heat systems"};
  app.set_version_flag("--version", std::string("tocp ") + tocp_version());
  app.require_subcommand(1);

  Flags flags;
  std::string config;
  CLI::App* run = app.add_subcommand("run", "Run one scenario and write its report");
  run->add_option("config", config, "Scenario JSON file")->required();
  run->add_option("--out", flags.out_dir, "Output directory (default $TOCP_OUT_DIR or .)");
  run->add_flag("--oracle", flags.oracle, "Cross-check against the finite-dimensional oracle");
  run->add_flag("--refine-K", flags.refine_k, "Rerun at twice the truncation level");
  run->add_flag("--quiet", flags.quiet, "Only print diagnostics");

  std::vector<std::string> configs;
  unsigned jobs = std::max(1u, std::thread::hardware_concurrency());
  CLI::App* sweep = app.add_subcommand("sweep", "Run several scenarios concurrently");
  sweep->add_option("configs", configs, "Scenario JSON files")->required();
  sweep->add_option("--out", flags.out_dir, "Output directory (default $TOCP_OUT_DIR or .)");
  sweep->add_option("--jobs,-j", jobs, "Worker threads")->check(CLI::PositiveNumber);
  sweep->add_flag("--oracle", flags.oracle, "Cross-check against the finite-dimensional oracle");
  sweep->add_flag("--refine-K", flags.refine_k, "Rerun at twice the truncation level");
  sweep->add_flag("--quiet", flags.quiet, "Only print diagnostics");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitSchema;
  }

  if (*run) return run_one(config, flags);

  std::atomic<std::size_t> next{0};
  std::vector<int> codes(configs.size(), 0);
  auto worker = [&] {
    for (std::size_t i = next++; i < configs.size(); i = next++) codes[i] = run_one(configs[i], flags);
  };
  std::vector<std::thread> pool;
  const unsigned workers = std::min<unsigned>(jobs, static_cast<unsigned>(configs.size()));
  for (unsigned w = 1; w < workers; ++w) pool.emplace_back(worker);
  worker();
  for (std::thread& t : pool) t.join();
  return *std::max_element(codes.begin(), codes.end());
}
