#include "asyncred/async_engine.hpp"

#include <algorithm>
#include <deque>
#include <exception>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>
#include <thread>

namespace asyncred {

// ---------------------------------------------------------------------------
// SharedState

SharedState::SharedState(const Partition& p, std::span<const double> x0) : p_(&p) {
  require(x0.size() == p.size(), "SharedState: x0 does not match partition");
  blocks_.reserve(p.blocks());
  for (std::size_t i = 0; i < p.blocks(); ++i) {
    auto b = std::make_unique<Block>();
    const auto v = block_view(x0, i, p);
    b->buf[0].data.assign(v.begin(), v.end());
    b->buf[1].data.assign(v.begin(), v.end());
    b->buf[1].lead.store(std::numeric_limits<std::uint64_t>::max());
    b->buf[1].trail.store(std::numeric_limits<std::uint64_t>::max());
    blocks_.push_back(std::move(b));
  }
}

std::uint64_t SharedState::read_block(std::size_t i, std::span<double> dst) {
  Block& b = *blocks_[i];
  for (;;) {
    const std::uint64_t v = b.version.load(std::memory_order_seq_cst);
    const std::size_t s = v & 1;
    b.readers[s].fetch_add(1, std::memory_order_seq_cst);
    if (b.version.load(std::memory_order_seq_cst) != v) {
      // A writer may be about to reuse this buffer; start over.
      b.readers[s].fetch_sub(1, std::memory_order_release);
      continue;
    }
    const Buffer& buf = b.buf[s];
    const std::uint64_t lead = buf.lead.load(std::memory_order_acquire);
    std::copy(buf.data.begin(), buf.data.end(), dst.begin());
    const std::uint64_t trail = buf.trail.load(std::memory_order_acquire);
    b.readers[s].fetch_sub(1, std::memory_order_release);
    if (lead != v || trail != v) torn_.fetch_add(1, std::memory_order_relaxed);
    return v;
  }
}

void SharedState::snapshot(std::span<double> dst, std::span<std::uint64_t> versions) {
  require(dst.size() == p_->size(), "SharedState: snapshot buffer has wrong length");
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    const std::uint64_t v = read_block(i, block_view(dst, i, *p_));
    if (!versions.empty()) versions[i] = v;
  }
}

std::unique_lock<std::mutex> SharedState::lock(std::size_t i) { return std::unique_lock(blocks_[i]->write); }

SharedState::Writer SharedState::begin_write(std::size_t i) {
  Block& b = *blocks_[i];
  const std::uint64_t v = b.version.load(std::memory_order_acquire);
  const std::size_t t = (v + 1) & 1;
  while (b.readers[t].load(std::memory_order_seq_cst) != 0) std::this_thread::yield();
  b.buf[t].lead.store(v + 1, std::memory_order_seq_cst);
  Writer w;
  w.current_ = b.buf[v & 1].data;
  w.target_ = b.buf[t].data;
  w.version_ = v;
  return w;
}

void SharedState::finish_payload(std::size_t i, Writer& w) {
  blocks_[i]->buf[(w.version_ + 1) & 1].trail.store(w.version_ + 1, std::memory_order_release);
}

void SharedState::publish(std::size_t i, Writer& w) {
  blocks_[i]->version.store(w.version_ + 1, std::memory_order_seq_cst);
}

// ---------------------------------------------------------------------------
// Schedules

std::uint64_t StalenessSchedule::max_delay() const {
  std::uint64_t m = 0;
  for (const auto& e : events) m = std::max(m, e.publish_at - std::min(e.read_at, e.publish_at));
  return m;
}

void validate_schedule(const StalenessSchedule& s, std::size_t blocks) {
  for (std::size_t k = 0; k < s.events.size(); ++k) {
    const auto& e = s.events[k];
    const std::string where = "invalid schedule: event " + std::to_string(k);
    require(e.block < blocks, where + " names block " + std::to_string(e.block) + " of " + std::to_string(blocks));
    require(e.read_at <= e.publish_at, where + " reads after it publishes");
    if (k > 0) require(e.publish_at > s.events[k - 1].publish_at, where + " does not publish after its predecessor");
  }
}

bool is_lambda_valid(const StalenessSchedule& s, std::size_t lambda) {
  return std::all_of(s.events.begin(), s.events.end(), [&](const ScheduleEvent& e) {
    return e.read_at <= e.publish_at && e.publish_at - e.read_at <= lambda;
  });
}

StalenessSchedule random_schedule(std::size_t blocks, std::size_t events, std::size_t lambda, std::uint64_t seed,
                                  std::size_t workers) {
  require(blocks >= 1 && workers >= 1, "random_schedule: need blocks >= 1 and workers >= 1");
  Rng rng(seed);
  StalenessSchedule s;
  s.events.resize(events);
  for (std::size_t k = 0; k < events; ++k) {
    auto& e = s.events[k];
    e.worker = uniform_index(rng, workers);
    e.block = uniform_index(rng, blocks);
    const std::size_t d = uniform_index(rng, std::min<std::size_t>(lambda, k) + 1);
    e.publish_at = k;
    e.read_at = k - d;
  }
  return s;
}

StalenessSchedule sequential_schedule(std::span<const std::size_t> blocks) {
  StalenessSchedule s;
  s.events.resize(blocks.size());
  for (std::size_t k = 0; k < blocks.size(); ++k) s.events[k] = {0, blocks[k], k, k};
  return s;
}

void write_schedule_csv(const StalenessSchedule& s, std::ostream& out) {
  out << "event,worker,block,read_at,publish_at\n";
  for (std::size_t k = 0; k < s.events.size(); ++k) {
    const auto& e = s.events[k];
    out << k << ',' << e.worker << ',' << e.block << ',' << e.read_at << ',' << e.publish_at << '\n';
  }
}

StalenessSchedule parse_schedule_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  require(static_cast<bool>(std::getline(in, line)), "schedule csv: missing header");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  require(line == "event,worker,block,read_at,publish_at", "schedule csv: unexpected header '" + line + "'");
  StalenessSchedule s;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::uint64_t> f;
    std::stringstream ls(line);
    std::string tok;
    while (std::getline(ls, tok, ',')) {
      std::size_t used = 0;
      std::uint64_t v = 0;
      try {
        v = std::stoull(tok, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      require(used == tok.size() && !tok.empty() && tok[0] != '-',
              "schedule csv line " + std::to_string(lineno) + ": bad integer '" + tok + "'");
      f.push_back(v);
    }
    require(f.size() == 5, "schedule csv line " + std::to_string(lineno) + ": expected 5 fields");
    require(f[0] == s.events.size(), "schedule csv line " + std::to_string(lineno) + ": events out of order");
    s.events.push_back({f[1], f[2], f[3], f[4]});
  }
  return s;
}

DelayAudit delay_audit(std::span<const WorkerReport> reports) {
  DelayAudit a;
  double weighted = 0.0;
  for (const auto& r : reports) {
    a.updates += r.updates;
    a.stalls += r.stalls;
    a.max_delay = std::max(a.max_delay, r.max_delay);
    if (a.histogram.size() < r.delay_histogram.size()) a.histogram.resize(r.delay_histogram.size(), 0);
    for (std::size_t d = 0; d < r.delay_histogram.size(); ++d) {
      a.histogram[d] += r.delay_histogram[d];
      weighted += static_cast<double>(d) * static_cast<double>(r.delay_histogram[d]);
    }
  }
  if (a.updates > 0) a.mean_delay = weighted / static_cast<double>(a.updates);
  if (!reports.empty()) a.max_delay_per_worker = static_cast<double>(a.max_delay) / static_cast<double>(reports.size());
  return a;
}

// ---------------------------------------------------------------------------
// Threaded engine

namespace {

struct WorkerLog {
  // One entry per publication.
  std::vector<std::uint64_t> tickets;
  std::vector<std::size_t> blocks;
  std::vector<double> values;
  std::vector<std::size_t> value_offsets;
  // Wall time at publications that close an outer iteration.
  std::vector<std::pair<std::uint64_t, double>> times;
  // Snapshot provenance, one entry per publication when recording.
  std::vector<std::uint64_t> versions;
};

struct Failure {
  std::mutex m;
  std::exception_ptr error;

  void set(std::exception_ptr e) {
    std::lock_guard g(m);
    if (!error) error = e;
  }
};

// Rebuilds the iterate at every outer-iteration boundary from the
// publication logs, which hold the published block values in full.
Trace rebuild_trace(const RedOperator& r, std::span<const double> x0, const std::vector<WorkerLog>& logs,
                    std::uint64_t total, const TraceOptions& opts) {
  const Partition& p = r.partition();
  const std::size_t b = p.blocks();
  struct Ref {
    const WorkerLog* log = nullptr;
    std::size_t entry = 0;
  };
  std::vector<Ref> by_ticket(total);
  std::vector<double> time_at(total, 0.0);
  for (const auto& log : logs) {
    for (std::size_t e = 0; e < log.tickets.size(); ++e) by_ticket[log.tickets[e]] = {&log, e};
    for (const auto& [t, ms] : log.times) time_at[t] = ms;
  }
  TraceRecorder rec(r, opts);
  Vector x(x0.begin(), x0.end());
  rec.record(0, x, 0.0);
  for (std::uint64_t t = 0; t < total; ++t) {
    const Ref& ref = by_ticket[t];
    const std::size_t i = ref.log->blocks[ref.entry];
    const double* src = ref.log->values.data() + ref.log->value_offsets[ref.entry];
    auto xi = block_view(std::span<double>(x), i, p);
    std::copy(src, src + xi.size(), xi.begin());
    const std::uint64_t done = t + 1;
    if (done % b == 0 && (rec.wants(done / b) || done == total)) rec.record(done / b, x, time_at[t]);
  }
  return rec.take();
}

// Turns per-event snapshot versions into read_at counters. A snapshot that
// equals the global iterate after r publications has versions summing to r
// and matching every per-block publication count at r.
std::optional<StalenessSchedule> harvest_schedule(const std::vector<WorkerLog>& logs, std::size_t b,
                                                  std::uint64_t total, std::uint64_t& mixed) {
  std::vector<std::size_t> block_of(total);
  struct Ev {
    std::uint64_t ticket;
    std::size_t worker;
    const std::uint64_t* versions;
    std::uint64_t candidate;
  };
  std::vector<Ev> evs;
  for (std::size_t w = 0; w < logs.size(); ++w) {
    const auto& log = logs[w];
    for (std::size_t e = 0; e < log.tickets.size(); ++e) {
      block_of[log.tickets[e]] = log.blocks[e];
      const std::uint64_t* v = log.versions.data() + e * b;
      evs.push_back({log.tickets[e], w, v, std::accumulate(v, v + b, std::uint64_t{0})});
    }
  }
  std::vector<std::size_t> order(evs.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t c) { return evs[a].candidate < evs[c].candidate; });

  std::vector<std::uint64_t> counts(b, 0);
  std::uint64_t applied = 0;
  std::vector<bool> ok(evs.size(), false);
  for (std::size_t idx : order) {
    const Ev& ev = evs[idx];
    while (applied < ev.candidate && applied < total) ++counts[block_of[applied++]];
    ok[idx] = ev.candidate <= ev.ticket && std::equal(counts.begin(), counts.end(), ev.versions);
  }
  mixed = static_cast<std::uint64_t>(std::count(ok.begin(), ok.end(), false));
  if (mixed > 0) return std::nullopt;

  StalenessSchedule s;
  s.events.resize(evs.size());
  for (const auto& ev : evs) s.events[ev.ticket] = {ev.worker, block_of[ev.ticket], ev.candidate, ev.ticket};
  return s;
}

AsyncResult run_async(const RedOperator& r, const RedConfig& cfg, std::span<const double> x0,
                      std::size_t n_workers, std::size_t minibatch, const SolverBudget& budget,
                      const DelayPolicy& policy, std::uint64_t seed, const AsyncOptions& opts) {
  budget.validate();
  require(n_workers >= 1, "async: need at least one worker");
  require(x0.size() == r.dimension() && all_finite(x0), "async: x0 has wrong length or is not finite");
  const Partition& p = r.partition();
  const std::size_t b = p.blocks();

  AsyncResult out;
  const double lip = minibatch > 0 ? r.fidelity().component_lipschitz_max() : r.fidelity().lipschitz();
  const double lam = policy.mode == DelayMode::kEnforce ? static_cast<double>(policy.lambda_max)
                                                         : static_cast<double>(n_workers - 1);
  if (auto w = step_warning(cfg.gamma, step_size_bound(lip, cfg.tau, lam)); !w.empty()) out.warnings.push_back(w);

  SharedState state(p, x0);
  const std::uint64_t max_total = budget.max_outer_iterations
                                      ? *budget.max_outer_iterations * b
                                      : std::numeric_limits<std::uint64_t>::max();
  std::atomic<std::uint64_t> limit{max_total};
  std::atomic<std::uint64_t> tickets{0};
  std::atomic<std::uint64_t> published{0};
  std::atomic<bool> stop{false};
  Failure failure;
  std::vector<WorkerLog> logs(n_workers);
  std::vector<WorkerReport> reports(n_workers);
  const bool keep_log = opts.trace.enabled;
  const bool enforce = policy.mode == DelayMode::kEnforce;
  Stopwatch clock;

  auto worker = [&](std::size_t id) {
    WorkerReport& rep = reports[id];
    WorkerLog& log = logs[id];
    rep.worker = id;
    Rng rng(stream_seed(seed, id));
    Vector snap(r.dimension());
    std::vector<std::uint64_t> versions(opts.record_schedule ? b : 0);
    try {
      while (!stop.load(std::memory_order_relaxed)) {
        if (budget.max_wall_ms && clock.elapsed_ms() >= *budget.max_wall_ms) {
          // Finish the current outer iteration, then stop.
          const std::uint64_t t = tickets.load();
          const std::uint64_t rounded = (t + b - 1) / b * b;
          std::uint64_t cur = limit.load();
          while (rounded < cur && !limit.compare_exchange_weak(cur, rounded)) {
          }
        }
        const std::uint64_t lim = limit.load();
        if (tickets.load() >= lim) break;

        const std::uint64_t k_start = published.load(std::memory_order_acquire);
        state.snapshot(snap, versions);
        const std::size_t i = uniform_index(rng, b);
        const Vector g = minibatch > 0 ? r.evaluate_stochastic_block(snap, i, minibatch, rng)
                                       : r.evaluate_block(snap, i);

        auto lk = state.lock(i);
        auto wr = state.begin_write(i);
        const auto cur = wr.current();
        auto dst = wr.target();
        for (std::size_t j = 0; j < dst.size(); ++j) dst[j] = cur[j] - cfg.gamma * g[j];
        if (!all_finite(dst)) {
          const std::uint64_t k = tickets.load();
          throw DivergenceError("async: worker " + std::to_string(id) + " produced a non-finite block " +
                                    std::to_string(i) + " at update " + std::to_string(k),
                                k);
        }
        state.finish_payload(i, wr);

        std::uint64_t t = tickets.load();
        bool stalled = false, exhausted = false;
        for (;;) {
          if (t >= limit.load()) {
            exhausted = true;
            break;
          }
          if (enforce && t - k_start > policy.lambda_max) {
            stalled = true;
            break;
          }
          if (tickets.compare_exchange_weak(t, t + 1)) break;
        }
        if (exhausted) break;
        if (stalled) {
          ++rep.stalls;
          continue;
        }
        state.publish(i, wr);
        lk.unlock();

        if (keep_log) {
          log.tickets.push_back(t);
          log.blocks.push_back(i);
          log.value_offsets.push_back(log.values.size());
          log.values.insert(log.values.end(), dst.begin(), dst.end());
          if ((t + 1) % b == 0) log.times.emplace_back(t, clock.elapsed_ms());
        }
        if (opts.record_schedule) {
          if (!keep_log) {
            log.tickets.push_back(t);
            log.blocks.push_back(i);
          }
          log.versions.insert(log.versions.end(), versions.begin(), versions.end());
        }

        // Publications complete in ticket order.
        while (published.load(std::memory_order_acquire) != t) std::this_thread::yield();
        published.store(t + 1, std::memory_order_release);

        const std::uint64_t delay = t - k_start;
        if (rep.delay_histogram.size() <= delay) rep.delay_histogram.resize(delay + 1, 0);
        ++rep.delay_histogram[delay];
        rep.max_delay = std::max(rep.max_delay, delay);
        ++rep.updates;
      }
    } catch (...) {
      failure.set(std::current_exception());
      stop.store(true);
    }
  };

  {
    std::vector<std::jthread> pool;
    for (std::size_t id = 1; id < n_workers; ++id) pool.emplace_back(worker, id);
    worker(0);
  }
  if (failure.error) std::rethrow_exception(failure.error);

  out.final_counter = published.load();
  out.outer_iterations = out.final_counter / b;
  out.torn_reads = state.torn_reads();
  out.x.assign(r.dimension(), 0.0);
  state.snapshot(out.x);
  if (keep_log) out.trace = rebuild_trace(r, x0, logs, out.final_counter, opts.trace);
  if (opts.record_schedule) out.schedule = harvest_schedule(logs, b, out.final_counter, out.mixed_snapshots);
  out.reports = std::move(reports);
  return out;
}

}  // namespace

AsyncResult run_async_bg(const RedOperator& r, const RedConfig& cfg, std::span<const double> x0,
                         std::size_t n_workers, const SolverBudget& budget, const DelayPolicy& policy,
                         std::uint64_t seed, const AsyncOptions& opts) {
  return run_async(r, cfg, x0, n_workers, 0, budget, policy, seed, opts);
}

AsyncResult run_async_sg(const RedOperator& r, const RedConfig& cfg, std::span<const double> x0,
                         std::size_t n_workers, std::size_t w, const SolverBudget& budget,
                         const DelayPolicy& policy, std::uint64_t seed, const AsyncOptions& opts) {
  require(w >= 1, "run_async_sg: minibatch size must be >= 1");
  return run_async(r, cfg, x0, n_workers, w, budget, policy, seed, opts);
}

// ---------------------------------------------------------------------------
// Simulator

SimulationResult run_simulated(const RedOperator& r, const RedConfig& cfg, std::span<const double> x0,
                               const StalenessSchedule& schedule, std::optional<std::size_t> lambda,
                               const TraceOptions& trace, bool log_stale_iterates) {
  const Partition& p = r.partition();
  const std::size_t b = p.blocks();
  require(x0.size() == r.dimension(), "run_simulated: x0 has wrong length");
  validate_schedule(schedule, b);
  if (lambda && !is_lambda_valid(schedule, *lambda))
    throw std::invalid_argument("invalid schedule: a delay exceeds lambda = " + std::to_string(*lambda));
  const std::uint64_t depth = schedule.max_delay();

  struct Undo {
    std::uint64_t publish_at;
    std::size_t block;
    Vector old;
  };
  std::deque<Undo> history;
  SimulationResult out;
  TraceRecorder rec(r, trace);
  Vector x(x0.begin(), x0.end());
  rec.record(0, x, 0.0);
  Vector stale;
  const auto& events = schedule.events;
  for (std::size_t k = 0; k < events.size(); ++k) {
    const auto& e = events[k];
    while (!history.empty() && history.front().publish_at + depth < e.publish_at) history.pop_front();
    // x~ = x^{read_at}: roll back every applied event published at or after read_at.
    stale = x;
    for (auto it = history.rbegin(); it != history.rend() && it->publish_at >= e.read_at; ++it)
      std::copy(it->old.begin(), it->old.end(),
                stale.begin() + static_cast<std::ptrdiff_t>(p.offset(it->block)));
    if (log_stale_iterates) out.stale_iterates.push_back(stale);
    const Vector g = r.evaluate_block(stale, e.block);
    auto xi = block_view(std::span<double>(x), e.block, p);
    if (depth > 0) history.push_back({e.publish_at, e.block, Vector(xi.begin(), xi.end())});
    for (std::size_t j = 0; j < xi.size(); ++j) xi[j] = xi[j] - cfg.gamma * g[j];
    if (!all_finite(xi))
      throw DivergenceError("run_simulated: non-finite block at event " + std::to_string(k), k);
    const std::uint64_t done = k + 1;
    if (done % b == 0 && rec.wants(done / b)) rec.record(done / b, x, 0.0);
  }
  if (events.size() % b == 0) rec.record(events.size() / b, x, 0.0);
  out.x = std::move(x);
  out.trace = rec.take();
  return out;
}

}  // namespace asyncred
