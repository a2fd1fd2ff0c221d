#include "cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "asyncred/experiments.hpp"
#include "asyncred/verify.hpp"

namespace asyncred::cli {

namespace {

namespace fs = std::filesystem;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string read_file(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw UsageError("cannot read " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  if (!f) throw UsageError("cannot write " + path.string());
  f << text;
}

// ASYNC_RED_THREADS, when set, caps every worker count.
std::size_t thread_cap() {
  const char* env = std::getenv("ASYNC_RED_THREADS");
  if (!env || !*env) return std::numeric_limits<std::size_t>::max();
  char* end = nullptr;
  const unsigned long long v = std::strtoull(env, &end, 10);
  if (*end != '\0' || v == 0) throw UsageError(std::string("ASYNC_RED_THREADS must be a positive integer, got '") + env + "'");
  return static_cast<std::size_t>(v);
}

ExperimentSpec load_spec(const std::string& path, std::ostream& err) {
  ExperimentSpec spec = parse_spec(read_file(path));
  const std::size_t cap = thread_cap();
  if (spec.workers > cap) {
    err << "note: workers " << spec.workers << " capped to " << cap << " by ASYNC_RED_THREADS\n";
    spec.workers = cap;
  }
  return spec;
}

void prepare_out_dir(const fs::path& dir, bool force) {
  if (fs::exists(dir)) {
    if (!fs::is_directory(dir)) throw UsageError(dir.string() + " exists and is not a directory");
    if (!fs::is_empty(dir) && !force) throw UsageError(dir.string() + " is not empty; pass --force to overwrite");
  }
  fs::create_directories(dir);
}

void summarize(const ExperimentReport& rep, std::ostream& out, std::ostream& err) {
  out << "solver=" << rep.solver << " outer=" << rep.outer_iterations << " updates=" << rep.updates
      << " final_norm_res=" << format_number(rep.final_norm_res) << " final_snr_db=" << format_number(rep.final_snr_db)
      << " wall_ms=" << format_number(rep.wall_ms) << "\n";
  for (const auto& w : rep.warnings) err << "warning: " << w << "\n";
}

std::vector<double> parse_list(const std::string& text) {
  std::vector<double> v;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t used = 0;
    double d = 0;
    try {
      d = std::stod(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != item.size()) throw UsageError("bad list entry '" + item + "'");
    v.push_back(d);
  }
  if (v.empty()) throw UsageError("empty list");
  return v;
}

int cmd_run(const std::string& spec_path, const fs::path& dir, bool force, const std::string& sweep,
            std::ostream& out, std::ostream& err) {
  const ExperimentSpec spec = load_spec(spec_path, err);
  prepare_out_dir(dir, force);
  if (sweep.empty()) {
    const Problem prob = build_problem(spec);
    const ExperimentOutcome oc = run_problem(prob);
    write_artifacts(dir, spec, prob, oc);
    summarize(oc.report, out, err);
    return kOk;
  }
  out << "sigma,final_snr_db,final_norm_res\n";
  for (double sigma : parse_list(sweep)) {
    ExperimentSpec s = spec;
    s.sigma = sigma;
    s.validate();
    const Problem prob = build_problem(s);
    const ExperimentOutcome oc = run_problem(prob);
    write_artifacts(dir / ("sigma_" + format_number(sigma)), s, prob, oc);
    out << format_number(sigma) << "," << format_number(oc.report.final_snr_db) << ","
        << format_number(oc.report.final_norm_res) << "\n";
    for (const auto& w : oc.report.warnings) err << "warning: sigma " << sigma << ": " << w << "\n";
  }
  return kOk;
}

int cmd_verify(const std::string& suite, std::uint64_t seed, std::size_t trials, std::ostream& out) {
  VerifyOptions o;
  o.seed = seed;
  o.trials = trials;
  const std::size_t cap = thread_cap();
  o.max_workers = std::min(o.max_workers, cap);
  const auto checks = run_verify_suite(suite, o);
  std::size_t failed = 0;
  for (const auto& c : checks) {
    out << format_check(c) << "\n";
    failed += c.passed ? 0 : 1;
  }
  out << checks.size() - failed << "/" << checks.size() << " checks passed\n";
  return failed == 0 ? kOk : kVerifyFailed;
}

int cmd_bench(const std::string& spec_path, const std::string& workers_text, double target, std::ostream& out,
              std::ostream& err) {
  ExperimentSpec spec = load_spec(spec_path, err);
  spec.record_wall_clock = true;
  const std::size_t cap = thread_cap();
  std::vector<std::size_t> workers;
  for (double w : parse_list(workers_text)) {
    if (w < 1 || w != std::floor(w)) throw UsageError("worker counts must be positive integers");
    workers.push_back(std::min(static_cast<std::size_t>(w), cap));
  }
  const Problem base = build_problem(spec);
  out << "workers,updates_per_sec,wall_ms_to_target_res\n";
  std::vector<double> rates;
  for (std::size_t w : workers) {
    Problem prob = base;
    prob.spec.workers = w;
    const ExperimentOutcome oc = run_problem(prob);
    const double secs = oc.report.wall_ms / 1000.0;
    const double rate = secs > 0 ? static_cast<double>(oc.report.updates) / secs : 0.0;
    double to_target = std::numeric_limits<double>::quiet_NaN();
    for (const auto& rec : oc.trace.records) {
      if (rec.norm_res <= target) {
        to_target = rec.wall_ms;
        break;
      }
    }
    rates.push_back(rate);
    out << w << "," << format_number(rate) << "," << format_number(to_target) << "\n";
  }
  for (std::size_t k = 1; k < rates.size(); ++k) {
    if (workers[k] > workers[k - 1] && rates[k] < rates[k - 1])
      err << "warning: throughput fell from " << workers[k - 1] << " to " << workers[k] << " workers\n";
  }
  const unsigned hw = std::thread::hardware_concurrency();
  if (hw != 0 && workers.size() > 1 && workers.back() > hw)
    err << "warning: " << workers.back() << " workers on " << hw << " hardware threads; scaling is not meaningful\n";
  return kOk;
}

int cmd_phantom(std::size_t size, const fs::path& path, std::ostream& out) {
  if (size < 16) throw UsageError("--size must be at least 16");
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  save_pgm(shepp_logan(size), path);
  out << "wrote " << path.string() << "\n";
  return kOk;
}

int cmd_synth(const std::string& spec_path, const fs::path& dir, bool force, std::ostream& out, std::ostream& err) {
  const ExperimentSpec spec = load_spec(spec_path, err);
  prepare_out_dir(dir, force);
  const Problem prob = build_problem(spec);
  save_pgm(prob.truth, dir / "truth.pgm");
  save_pgm(Image(prob.truth.geometry, prob.grid.to_row_major(prob.x0)), dir / "x0.pgm");
  std::string csv = "index,value\n";
  const Vector& y = prob.fidelity->measurements();
  for (std::size_t k = 0; k < y.size(); ++k) csv += std::to_string(k) + "," + format_number(y[k]) + "\n";
  write_file(dir / "measurements.csv", csv);
  write_file(dir / "spec.json", spec_to_json(spec));
  out << "wrote " << y.size() << " measurements to " << dir.string() << "\n";
  return kOk;
}

int cmd_replay(const std::string& schedule_path, const std::string& spec_path, const fs::path& dir, bool force,
               std::ostream& out, std::ostream& err) {
  const ExperimentSpec spec = load_spec(spec_path, err);
  StalenessSchedule sched;
  try {
    sched = parse_schedule_csv(read_file(schedule_path));
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  prepare_out_dir(dir, force);
  const Problem prob = build_problem(spec);
  try {
    validate_schedule(sched, prob.red->blocks());
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  const ExperimentOutcome oc = run_problem(prob, sched);
  write_artifacts(dir, spec, prob, oc);
  summarize(oc.report, out, err);
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"asynchronous block-parallel RED reconstruction", "asyncred"};
  app.require_subcommand(1);

  std::string spec_path, out_dir, sweep, suite, workers = "1,2,4,8", schedule_path, schema_out;
  bool force = false;
  std::uint64_t seed = 1;
  std::size_t trials = 500, size = 256;
  double target = 1e-3;

  auto* run_cmd = app.add_subcommand("run", "run an experiment spec and write artifacts");
  run_cmd->add_option("spec", spec_path, "spec JSON")->required();
  run_cmd->add_option("-o,--out", out_dir, "output directory")->required();
  run_cmd->add_flag("--force", force, "allow a non-empty output directory");
  run_cmd->add_option("--sigma-sweep", sweep, "comma-separated sigma values, one subdirectory each");

  auto* verify_cmd = app.add_subcommand("verify", "run a property suite");
  verify_cmd->add_option("suite", suite, "operators|denoisers|lemmas|async|bounds|all")->required();
  verify_cmd->add_option("--seed", seed, "seed");
  verify_cmd->add_option("--trials", trials, "random pairs per audit");

  auto* bench_cmd = app.add_subcommand("bench", "throughput at several worker counts");
  bench_cmd->add_option("spec", spec_path, "spec JSON")->required();
  bench_cmd->add_option("--workers", workers, "comma-separated worker counts");
  bench_cmd->add_option("--target", target, "normalized residual for wall_ms_to_target_res");

  auto* phantom_cmd = app.add_subcommand("phantom", "write a Shepp-Logan phantom");
  phantom_cmd->add_option("--size", size, "side length in pixels");
  phantom_cmd->add_option("-o,--out", out_dir, "output PGM")->required();

  auto* synth_cmd = app.add_subcommand("synth", "write measurements and ground truth for a spec");
  synth_cmd->add_option("spec", spec_path, "spec JSON")->required();
  synth_cmd->add_option("-o,--out", out_dir, "output directory")->required();
  synth_cmd->add_flag("--force", force, "allow a non-empty output directory");

  auto* replay_cmd = app.add_subcommand("replay", "replay a staleness schedule deterministically");
  replay_cmd->add_option("schedule", schedule_path, "schedule CSV")->required();
  replay_cmd->add_option("spec", spec_path, "spec JSON")->required();
  replay_cmd->add_option("-o,--out", out_dir, "output directory")->required();
  replay_cmd->add_flag("--force", force, "allow a non-empty output directory");

  auto* schema_cmd = app.add_subcommand("schema", "print the spec field reference with defaults");
  schema_cmd->add_option("-o,--out", schema_out, "write to a file instead of stdout");

  try {
    std::vector<std::string> rev(args.rbegin(), args.rend());
    if (!rev.empty()) rev.pop_back();  // program name
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*run_cmd) return cmd_run(spec_path, out_dir, force, sweep, out, err);
    if (*verify_cmd) return cmd_verify(suite, seed, trials, out);
    if (*bench_cmd) return cmd_bench(spec_path, workers, target, out, err);
    if (*phantom_cmd) return cmd_phantom(size, out_dir, out);
    if (*synth_cmd) return cmd_synth(spec_path, out_dir, force, out, err);
    if (*replay_cmd) return cmd_replay(schedule_path, spec_path, out_dir, force, out, err);
    if (*schema_cmd) {
      if (schema_out.empty()) out << spec_schema_json();
      else write_file(schema_out, spec_schema_json());
      return kOk;
    }
  } catch (const DivergenceError& e) {
    err << "error: diverged: " << e.what() << "\n";
    return kDiverged;
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const SpecError& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const PgmError& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return kUsage;
}

}  // namespace asyncred::cli
