// Asynchronous block-parallel RED on shared memory, and a single-threaded
// replay of explicit staleness schedules.
//
// Memory protocol: every block owns two buffers, a version counter whose low
// bit selects the published buffer, per-buffer reader counts and a write
// mutex. Readers pin a buffer, recheck the version and copy; writers fill the
// unpublished buffer once its readers have drained and then flip the version.
// Nothing ever holds two block locks and there is no global lock. A global
// ticket orders publications, so the iterate after k publications is well
// defined and the delay of an update is its ticket minus the number of
// publications completed when its snapshot began.
#pragma once

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "asyncred/red_core.hpp"
#include "asyncred/solvers_serial.hpp"
#include "asyncred/trace.hpp"

namespace asyncred {

enum class DelayMode { kMeasure, kEnforce };

struct DelayPolicy {
  DelayMode mode = DelayMode::kMeasure;
  /// Enforced bound on the delay; only read in enforce mode.
  std::size_t lambda_max = 0;

  static DelayPolicy measure() { return {}; }
  static DelayPolicy enforce(std::size_t lambda) { return {DelayMode::kEnforce, lambda}; }
};

struct WorkerReport {
  std::size_t worker = 0;
  std::uint64_t updates = 0;
  /// delay_histogram[d] = number of published updates with delay d.
  std::vector<std::uint64_t> delay_histogram;
  std::uint64_t max_delay = 0;
  /// Enforce-mode aborts (re-snapshot and recompute).
  std::uint64_t stalls = 0;
};

struct DelayAudit {
  std::uint64_t updates = 0;
  std::uint64_t max_delay = 0;
  double mean_delay = 0;
  /// max_delay / number of workers
  double max_delay_per_worker = 0;
  std::uint64_t stalls = 0;
  std::vector<std::uint64_t> histogram;
};

DelayAudit delay_audit(std::span<const WorkerReport> reports);

/// One update of a replay schedule: block `block` is written at global
/// counter `publish_at` using the iterate that existed at `read_at`.
struct ScheduleEvent {
  std::size_t worker = 0;
  std::size_t block = 0;
  std::uint64_t read_at = 0;
  std::uint64_t publish_at = 0;

  bool operator==(const ScheduleEvent&) const = default;
};

struct StalenessSchedule {
  std::vector<ScheduleEvent> events;

  bool operator==(const StalenessSchedule&) const = default;
  /// Largest publish_at - read_at.
  std::uint64_t max_delay() const;
};

/// Structural checks: publish_at strictly increasing, read_at <= publish_at,
/// blocks in range. Throws invalid_argument naming the first bad event.
void validate_schedule(const StalenessSchedule& s, std::size_t blocks);
/// Every delay is at most lambda.
bool is_lambda_valid(const StalenessSchedule& s, std::size_t lambda);

/// publish_at = event index, uniform blocks, delays uniform on [0, min(lambda, k)].
StalenessSchedule random_schedule(std::size_t blocks, std::size_t events, std::size_t lambda,
                                  std::uint64_t seed, std::size_t workers = 1);
/// Zero-delay schedule over a given block sequence.
StalenessSchedule sequential_schedule(std::span<const std::size_t> blocks);

/// "event,worker,block,read_at,publish_at"
void write_schedule_csv(const StalenessSchedule& s, std::ostream& out);
StalenessSchedule parse_schedule_csv(const std::string& text);

struct AsyncOptions {
  TraceOptions trace;
  /// Record per-event snapshot versions so a schedule can be harvested.
  bool record_schedule = false;
};

struct AsyncResult {
  Vector x;
  Trace trace;
  std::vector<WorkerReport> reports;
  /// Publications counted by the shared counter.
  std::uint64_t final_counter = 0;
  /// Snapshots whose buffer stamps disagreed with the version read.
  std::uint64_t torn_reads = 0;
  /// Outer iterations (final_counter / b, rounded down).
  std::uint64_t outer_iterations = 0;
  std::vector<std::string> warnings;
  /// Present when requested and every snapshot equals some global iterate.
  std::optional<StalenessSchedule> schedule;
  /// Number of events whose snapshot mixed two global iterates.
  std::uint64_t mixed_snapshots = 0;
};

/// Budget in outer iterations means outer * b publications in total.
AsyncResult run_async_bg(const RedOperator& r, const RedConfig& cfg, std::span<const double> x0,
                         std::size_t n_workers, const SolverBudget& budget, const DelayPolicy& policy,
                         std::uint64_t seed, const AsyncOptions& opts = {});

AsyncResult run_async_sg(const RedOperator& r, const RedConfig& cfg, std::span<const double> x0,
                         std::size_t n_workers, std::size_t w, const SolverBudget& budget,
                         const DelayPolicy& policy, std::uint64_t seed, const AsyncOptions& opts = {});

struct SimulationResult {
  Vector x;
  Trace trace;
  /// The stale iterate each event used, when requested.
  std::vector<Vector> stale_iterates;
};

/// Deterministic replay. With `lambda`, schedules exceeding it are rejected.
/// Trace records fall every b events.
SimulationResult run_simulated(const RedOperator& r, const RedConfig& cfg, std::span<const double> x0,
                               const StalenessSchedule& schedule,
                               std::optional<std::size_t> lambda = std::nullopt,
                               const TraceOptions& trace = {}, bool log_stale_iterates = false);

/// Per-block double buffer with versioned publication. Exposed for tests.
class SharedState {
 public:
  SharedState(const Partition& p, std::span<const double> x0);
  SharedState(const SharedState&) = delete;
  SharedState& operator=(const SharedState&) = delete;

  std::size_t blocks() const { return blocks_.size(); }

  /// Consistent copy of block i into dst; returns the version read.
  std::uint64_t read_block(std::size_t i, std::span<double> dst);
  /// Copies every block, recording versions if `versions` is non-empty.
  void snapshot(std::span<double> dst, std::span<std::uint64_t> versions = {});

  std::uint64_t version(std::size_t i) const { return blocks_[i]->version.load(std::memory_order_acquire); }
  std::uint64_t torn_reads() const { return torn_.load(); }

  /// Write protocol, in order, under the block lock: begin_write returns the
  /// published value and the buffer to fill; publish makes it visible.
  class Writer {
   public:
    std::span<const double> current() const { return current_; }
    std::span<double> target() { return target_; }
    std::uint64_t version() const { return version_; }

   private:
    friend class SharedState;
    std::span<const double> current_;
    std::span<double> target_;
    std::uint64_t version_ = 0;
  };

  std::unique_lock<std::mutex> lock(std::size_t i);
  Writer begin_write(std::size_t i);
  void finish_payload(std::size_t i, Writer& w);
  void publish(std::size_t i, Writer& w);

 private:
  struct Buffer {
    std::atomic<std::uint64_t> lead{0};
    std::atomic<std::uint64_t> trail{0};
    std::vector<double> data;
  };
  struct alignas(64) Block {
    std::atomic<std::uint64_t> version{0};
    std::atomic<std::uint32_t> readers[2] = {0, 0};
    std::mutex write;
    Buffer buf[2];
  };

  const Partition* p_;
  std::vector<std::unique_ptr<Block>> blocks_;
  std::atomic<std::uint64_t> torn_{0};
};

}  // namespace asyncred
