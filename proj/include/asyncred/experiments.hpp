// Phantoms, image I/O, experiment specs and the run orchestration behind
// the command-line tool.
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "asyncred/async_engine.hpp"
#include "asyncred/blocks.hpp"
#include "asyncred/denoisers.hpp"
#include "asyncred/operators.hpp"
#include "asyncred/red_core.hpp"
#include "asyncred/solvers_serial.hpp"
#include "asyncred/trace.hpp"

namespace asyncred {

/// Row-major intensities, nominally in [0, 1].
struct Image {
  Geometry geometry;
  Vector samples;

  Image() = default;
  Image(Geometry g, Vector s);
};

/// Modified Shepp-Logan phantom (10 ellipses), sampled at pixel centers and
/// clamped to [0, 1].
Image shepp_logan(std::size_t n_pix);

class PgmError : public std::runtime_error {
 public:
  PgmError(const std::string& what, std::size_t offset)
      : std::runtime_error(what + " (byte " + std::to_string(offset) + ")"), offset_(offset) {}
  std::size_t offset() const { return offset_; }

 private:
  std::size_t offset_;
};

/// Binary PGM, 16-bit big-endian samples, [0, 1] <-> [0, 65535].
void save_pgm(const Image& img, const std::filesystem::path& path);
std::string encode_pgm(const Image& img);
/// Accepts P5 with maxval up to 65535; anything else raises PgmError.
Image load_pgm(const std::filesystem::path& path);
Image decode_pgm(const std::string& bytes);

class SpecError : public std::invalid_argument {
 public:
  explicit SpecError(std::vector<std::string> problems);
  const std::vector<std::string>& problems() const { return problems_; }

 private:
  std::vector<std::string> problems_;
};

struct ExperimentSpec {
  std::string task = "cs";             // cs | ct
  std::string image_source = "phantom";  // phantom | file
  std::string image_path;
  std::size_t image_size = 64;
  std::size_t block_height = 32;
  std::size_t block_width = 32;
  double compression_ratio = 0.7;      // cs: rows per block = floor(ratio * block pixels)
  std::size_t angles = 60;             // ct
  std::size_t detectors = 95;          // ct
  std::optional<double> input_snr_db = 30.0;  // unset: noiseless
  std::string denoiser = "convolution";  // convolution | haar | identity
  double sigma = 5.0;                  // 0..255 scale
  double kernel_width_px = 1.0;        // convolution only
  std::size_t haar_levels = 2;
  std::string denoise_scope = "image";   // image | block
  double tau = 1.0;
  std::optional<double> tau_relative;  // tau = tau_relative * L when set
  std::optional<double> gamma;         // unset: step_size_bound
  std::string solver = "bc";           // gm | bc | sync | sg | async-bg | async-sg
  std::size_t workers = 1;
  std::size_t minibatch = 1;
  std::size_t measurement_blocks = 1;
  std::string delay_mode = "measure";  // measure | enforce
  std::size_t lambda = 0;
  std::optional<std::uint64_t> max_outer_iterations = 100;
  std::optional<double> max_wall_ms;
  std::uint64_t seed = 1;
  std::uint64_t trace_stride = 1;
  bool record_wall_clock = true;
  std::size_t nu_draws = 2000;

  /// Throws SpecError listing every offending field.
  void validate() const;
};

/// Strict parse: unknown keys and wrong types are errors.
ExperimentSpec parse_spec(const std::string& json_text);
std::string spec_to_json(const ExperimentSpec& spec);
/// Field documentation with the default of every key.
std::string spec_schema_json();

struct Problem {
  ExperimentSpec spec;
  Image truth;
  GridPartition grid;
  std::shared_ptr<const LinearOperator> op;
  std::shared_ptr<const LeastSquaresFidelity> fidelity;
  std::shared_ptr<const Denoiser> denoiser;
  std::shared_ptr<const RedOperator> red;
  Vector x_true;  // block-major
  Vector x0;      // block-major
  double lipschitz = 0;  // the constant the solver's step is tuned to
  double tau = 0;
  double gamma = 0;
};

Problem build_problem(const ExperimentSpec& spec);

/// c * A^T y with c minimizing ||A (c A^T y) - y||.
Vector scaled_adjoint_start(const LinearOperator& a, std::span<const double> y);

struct ExperimentReport {
  std::string solver;
  double lipschitz = 0;
  double gamma = 0;
  double tau = 0;
  double lambda = 0;
  double nu_hat = 0;
  double t = 0;
  double bound_bg = 0;
  double bound_sg = 0;
  double min_res_sq = 0;
  double final_norm_res = 0;
  double initial_snr_db = 0;
  double final_snr_db = 0;
  double r0 = 0;
  bool r0_estimated = true;
  std::uint64_t outer_iterations = 0;
  std::uint64_t updates = 0;
  double wall_ms = 0;
  std::optional<DelayAudit> delay;
  std::uint64_t torn_reads = 0;
  std::vector<std::string> warnings;

  std::string to_json() const;
};

struct ExperimentOutcome {
  Vector x;  // block-major
  Trace trace;
  ExperimentReport report;
  std::vector<WorkerReport> workers;
};

/// Runs the configured solver. With a schedule, replays it instead.
ExperimentOutcome run_experiment(const ExperimentSpec& spec,
                                 const std::optional<StalenessSchedule>& schedule = std::nullopt);
ExperimentOutcome run_problem(const Problem& problem,
                              const std::optional<StalenessSchedule>& schedule = std::nullopt);

/// spec.json, trace.csv, final.pgm, report.json.
void write_artifacts(const std::filesystem::path& dir, const ExperimentSpec& spec,
                     const Problem& problem, const ExperimentOutcome& outcome);

}  // namespace asyncred
