// rcbf: run circle-swap scenarios with the robust CBF safety filter and
// export plot-ready metrics.
//
//   rcbf run <scenario.yaml> --out DIR [--mode robust|non-robust|both]
//            [--seed N] [--jobs J] [--check] [--no-timing]
//   rcbf trace <scenario.yaml> <out.csv> [--mode robust|non-robust] [--seed N]
//
// Exit codes: 0 success, 1 config error, 2 runtime/solver/IO failure,
// 3 acceptance threshold breached (--check).

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <unistd.h>

#include "CLI11.hpp"
#include "rcbf/config.hpp"
#include "rcbf/export.hpp"
#include "rcbf/rcbf.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kOk = 0;
constexpr int kConfigError = 1;
constexpr int kRuntimeError = 2;
constexpr int kCheckFailed = 3;

constexpr double kInvarianceTolerance = -1e-3;

struct RunOptions {
  std::string config;
  std::string out;
  std::string mode{"both"};
  std::optional<std::uint64_t> seed;
  std::size_t jobs{1};
  bool check{false};
  bool timing{true};
};

void write_file(const fs::path& p, const std::string& content) {
  std::ofstream f(p, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write " + p.string());
  f << content;
  if (!f) throw std::runtime_error("write failed for " + p.string());
}

std::string metrics_text(const rcbf::RunMetrics& m, bool timing) {
  std::ostringstream ss;
  rcbf::write_metrics_csv(ss, m, timing);
  return ss.str();
}

/// Writes one mode's outputs below `dir` and returns its aggregate summary.
rcbf::ExperimentSummary run_mode(const rcbf::ScenarioConfig& cfg, const fs::path& dir, const RunOptions& opt) {
  fs::create_directories(dir);
  const auto runs = rcbf::repeat_experiment(cfg, opt.jobs);
  const rcbf::ExperimentSummary agg = rcbf::summarize(runs);
  auto zero_timing = [&](nlohmann::json j) {
    if (!opt.timing) j["avg_wct_ms"] = j["var_wct_ms2"] = j["avg_freq_hz"] = 0.0;
    return j;
  };

  if (runs.size() == 1) {
    write_file(dir / "metrics.csv", metrics_text(runs[0], opt.timing));
  } else {
    for (std::size_t k = 0; k < runs.size(); ++k) {
      char name[32];
      std::snprintf(name, sizeof name, "iter_%03zu", k);
      fs::create_directories(dir / name);
      write_file(dir / name / "metrics.csv", metrics_text(runs[k], opt.timing));
      write_file(dir / name / "summary.json", zero_timing(rcbf::summary_json(runs[k])).dump(2) + "\n");
    }
  }
  nlohmann::json summary = zero_timing(rcbf::summary_json(agg));
  summary["iterations"] = runs.size();
  summary["worst_min_h"] = agg.worst_min_h;
  write_file(dir / "summary.json", summary.dump(2) + "\n");

  // First-step constraint breakdown for auditing the robust margin.
  const auto states = rcbf::circle_init(cfg.robot_count, cfg.circle_radius, cfg.filter.geometry, cfg.filter.barrier);
  std::ostringstream dump;
  rcbf::write_constraint_dump(dump, rcbf::assemble_constraints(states, cfg.filter.geometry, cfg.filter.barrier,
                                                               cfg.filter.disturbance, cfg.filter.prune_distance));
  write_file(dir / "constraints_step0.csv", dump.str());

  std::cerr << dir.filename().string() << ": iterations=" << runs.size() << " violation_time_s=" << agg.violation_time_s
            << " worst_min_h=" << agg.worst_min_h << " avg_wct_ms=" << agg.avg_wct_ms << "\n";
  return agg;
}

int run_command(const RunOptions& opt) {
  rcbf::ScenarioConfig cfg;
  try {
    cfg = rcbf::load_config(opt.config);
  } catch (const rcbf::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigError;
  }
  if (opt.seed) cfg.seed = *opt.seed;

  const fs::path out(opt.out);
  bool created_out = false;
  fs::path staging;
  try {
    std::error_code ec;
    if (fs::exists(out, ec) && !fs::is_directory(out, ec)) throw std::runtime_error("output path exists and is not a directory");
    if (!fs::exists(out, ec)) {
      fs::create_directories(out);
      created_out = true;
    }
    staging = out / (".staging-" + std::to_string(::getpid()));
    fs::remove_all(staging);
    fs::create_directories(staging);

    std::optional<rcbf::ExperimentSummary> robust, non_robust;
    if (opt.mode == "robust" || opt.mode == "both") robust = run_mode(cfg, staging / "robust", opt);
    if (opt.mode == "non-robust" || opt.mode == "both")
      non_robust = run_mode(rcbf::make_non_robust(cfg), staging / "non-robust", opt);
    if (robust && non_robust) {
      nlohmann::json cmp = rcbf::compare_json(*robust, *non_robust);
      if (!opt.timing)
        for (const char* side : {"robust", "non_robust", "delta"}) {
          cmp[side]["avg_wct_ms"] = 0.0;
          cmp[side]["avg_freq_hz"] = 0.0;
          if (cmp[side].contains("var_wct_ms2")) cmp[side]["var_wct_ms2"] = 0.0;
        }
      write_file(staging / "compare.json", cmp.dump(2) + "\n");
    }

    for (const auto& entry : fs::directory_iterator(staging)) {
      const fs::path target = out / entry.path().filename();
      fs::remove_all(target);
      fs::rename(entry.path(), target);
    }
    fs::remove_all(staging);

    if (opt.check) {
      bool ok = true;
      if (robust && robust->worst_min_h < kInvarianceTolerance) {
        std::cerr << "check failed: robust worst min h " << robust->worst_min_h << " < " << kInvarianceTolerance << "\n";
        ok = false;
      }
      if (robust && non_robust && !(non_robust->violation_time_s > 0.0)) {
        std::cerr << "check failed: non-robust run recorded no violation\n";
        ok = false;
      }
      if (!ok) return kCheckFailed;
    }
    return kOk;
  } catch (const std::exception& e) {
    std::error_code ec;
    if (!staging.empty()) fs::remove_all(staging, ec);
    if (created_out) fs::remove_all(out, ec);
    std::cerr << "error: " << e.what() << "\n";
    return kRuntimeError;
  }
}

int trace_command(const std::string& config, const std::string& out_path, const std::string& mode,
                  std::optional<std::uint64_t> seed) {
  rcbf::ScenarioConfig cfg;
  try {
    cfg = rcbf::load_config(config);
  } catch (const rcbf::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigError;
  }
  if (seed) cfg.seed = *seed;
  if (mode == "non-robust") cfg = rcbf::make_non_robust(cfg);
  const fs::path tmp = fs::path(out_path).string() + ".partial";
  try {
    const rcbf::RunMetrics m = rcbf::run_scenario(cfg);
    {
      std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
      if (!f) throw std::runtime_error("cannot write " + tmp.string());
      rcbf::write_trace_csv(f, m);
      if (!f) throw std::runtime_error("write failed for " + tmp.string());
    }
    fs::rename(tmp, out_path);
    return kOk;
  } catch (const std::exception& e) {
    std::error_code ec;
    fs::remove(tmp, ec);
    std::cerr << "error: " << e.what() << "\n";
    return kRuntimeError;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Robust CBF safety filter: circle-swap scenarios"};
  app.require_subcommand(1);

  RunOptions run_opt;
  std::uint64_t seed_value = 0;
  auto* run = app.add_subcommand("run", "Run a scenario and write metrics.csv / summary.json / compare.json");
  run->add_option("config", run_opt.config, "Scenario file")->required()->check(CLI::ExistingFile);
  run->add_option("--out", run_opt.out, "Output directory")->required();
  run->add_option("--mode", run_opt.mode, "robust, non-robust or both")
      ->check(CLI::IsMember({"robust", "non-robust", "both"}));
  auto* run_seed = run->add_option("--seed", seed_value, "Override sim.seed");
  run->add_option("--jobs", run_opt.jobs, "Iterations run in parallel")->check(CLI::PositiveNumber);
  run->add_flag("--check", run_opt.check, "Exit 3 when the invariance thresholds are breached");
  bool no_timing = false;
  run->add_flag("--no-timing", no_timing, "Write zero wall-clock values (byte-reproducible output)");

  std::string trace_config, trace_out, trace_mode{"robust"};
  std::uint64_t trace_seed_value = 0;
  auto* trace = app.add_subcommand("trace", "Write the (t, min_h) series of one run");
  trace->add_option("config", trace_config, "Scenario file")->required()->check(CLI::ExistingFile);
  trace->add_option("out", trace_out, "Output CSV path")->required();
  trace->add_option("--mode", trace_mode, "robust or non-robust")->check(CLI::IsMember({"robust", "non-robust"}));
  auto* trace_seed = trace->add_option("--seed", trace_seed_value, "Override sim.seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigError;
  }

  if (run->parsed()) {
    if (*run_seed) run_opt.seed = seed_value;
    run_opt.timing = !no_timing;
    return run_command(run_opt);
  }
  std::optional<std::uint64_t> ts;
  if (*trace_seed) ts = trace_seed_value;
  return trace_command(trace_config, trace_out, trace_mode, ts);
}
