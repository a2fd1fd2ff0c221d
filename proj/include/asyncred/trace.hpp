// Convergence traces: per-record residuals, SNR against a ground truth and
// the CSV encoding shared by every solver.
#pragma once

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "asyncred/common.hpp"
#include "asyncred/red_core.hpp"

namespace asyncred {

/// 20 log10(||x_true|| / ||x_true - x_hat||); +inf when x_hat == x_true.
double snr_db(std::span<const double> x_hat, std::span<const double> x_true);

struct TraceRecord {
  std::uint64_t iter = 0;   // outer iteration (b block updates count as one)
  double wall_ms = 0;
  double res_sq = 0;        // ||G(x)||^2
  double norm_res = 0;      // res_sq / res_sq at record 0
  double snr_db = 0;        // NaN without a ground truth
  double min_res_sq = 0;    // running minimum of res_sq

  bool operator==(const TraceRecord&) const = default;
};

struct Trace {
  std::vector<TraceRecord> records;

  bool empty() const { return records.empty(); }
  const TraceRecord& back() const { return records.back(); }
};

/// At least one limit must be set.
struct SolverBudget {
  std::optional<std::uint64_t> max_outer_iterations;
  std::optional<double> max_wall_ms;

  void validate() const;
  static SolverBudget iterations(std::uint64_t n) { return {n, std::nullopt}; }
};

struct TraceOptions {
  bool enabled = true;
  /// Record every `stride` outer iterations (and always the last one).
  std::uint64_t stride = 1;
  /// Ground truth in the solver's flat layout, for the SNR column.
  std::optional<Vector> ground_truth;
  /// When false every wall_ms is written as 0 so traces compare byte-for-byte.
  bool record_wall_clock = true;
};

class TraceRecorder {
 public:
  TraceRecorder(const RedOperator& r, const TraceOptions& opts);

  /// Iteration 0 and multiples of the stride. Solvers also record their last
  /// iteration regardless.
  bool wants(std::uint64_t iter) const;
  void record(std::uint64_t iter, std::span<const double> x, double wall_ms);
  /// Same, with ||G(x)||^2 already known.
  void record_residual(std::uint64_t iter, std::span<const double> x, double res_sq, double wall_ms);

  Trace take() { return std::move(trace_); }
  const Trace& trace() const { return trace_; }

 private:
  const RedOperator* r_;
  TraceOptions opts_;
  Trace trace_;
  double base_ = 0;
  double min_ = 0;
};

/// Milliseconds since construction on the monotonic clock.
class Stopwatch {
 public:
  Stopwatch() : start_(std::chrono::steady_clock::now()) {}
  double elapsed_ms() const {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

inline constexpr const char* kTraceCsvHeader = "iter,wall_ms,res_sq,norm_res,snr_db,min_res_sq";

/// 17 significant digits; non-finite values as nan / inf / -inf.
std::string format_number(double v);
void write_trace_csv(const Trace& trace, std::ostream& out);
std::string trace_to_csv(const Trace& trace);
Trace parse_trace_csv(const std::string& text);

}  // namespace asyncred
