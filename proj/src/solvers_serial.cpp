#include "asyncred/solvers_serial.hpp"

#include <atomic>
#include <barrier>
#include <cstdio>
#include <exception>
#include <limits>
#include <thread>

namespace asyncred {

namespace {

std::uint64_t outer_limit(const SolverBudget& budget) {
  return budget.max_outer_iterations.value_or(std::numeric_limits<std::uint64_t>::max());
}

bool out_of_time(const SolverBudget& budget, const Stopwatch& clock) {
  return budget.max_wall_ms && clock.elapsed_ms() >= *budget.max_wall_ms;
}

void check_start(const RedOperator& r, std::span<const double> x0) {
  require(x0.size() == r.dimension(), "solver: x0 has wrong length");
  require(all_finite(x0), "solver: x0 is not finite");
}

[[noreturn]] void diverged(const char* solver, std::uint64_t iter) {
  throw DivergenceError(std::string(solver) + ": non-finite iterate at iteration " + std::to_string(iter), iter);
}

}  // namespace

std::string step_warning(double gamma, double bound) {
  if (gamma <= bound) return {};
  char buf[160];
  std::snprintf(buf, sizeof buf, "step size %.6g exceeds the convergence bound %.6g", gamma, bound);
  return buf;
}

std::vector<std::size_t> block_sequence(std::size_t blocks, std::size_t count, std::uint64_t seed) {
  Rng rng(stream_seed(seed, 0));
  std::vector<std::size_t> seq(count);
  for (auto& i : seq) i = uniform_index(rng, blocks);
  return seq;
}

SolveResult gm_red(const RedOperator& r, const RedConfig& cfg, std::span<const double> x0,
                   const SolverBudget& budget, const TraceOptions& trace) {
  budget.validate();
  check_start(r, x0);
  SolveResult out;
  if (auto w = step_warning(cfg.gamma, step_size_bound(r.fidelity().lipschitz(), cfg.tau, 0)); !w.empty())
    out.warnings.push_back(w);
  TraceRecorder rec(r, trace);
  Stopwatch clock;
  Vector x(x0.begin(), x0.end());
  const std::uint64_t limit = outer_limit(budget);
  std::uint64_t k = 0;
  for (;;) {
    if (k >= limit || out_of_time(budget, clock)) {
      rec.record(k, x, clock.elapsed_ms());
      break;
    }
    // G(x^k) serves both the residual record and the step.
    const Vector g = r.evaluate(x);
    if (rec.wants(k)) rec.record_residual(k, x, norm_sq(g), clock.elapsed_ms());
    for (std::size_t j = 0; j < x.size(); ++j) x[j] = x[j] - cfg.gamma * g[j];
    ++k;
    if (!all_finite(x)) diverged("gm_red", k);
  }
  out.x = std::move(x);
  out.trace = rec.take();
  out.outer_iterations = k;
  out.updates = k;
  return out;
}

SolveResult bc_red(const RedOperator& r, const RedConfig& cfg, std::span<const double> x0,
                   const SolverBudget& budget, std::uint64_t seed, const TraceOptions& trace) {
  budget.validate();
  check_start(r, x0);
  SolveResult out;
  if (auto w = step_warning(cfg.gamma, step_size_bound(r.fidelity().lipschitz(), cfg.tau, 0)); !w.empty())
    out.warnings.push_back(w);
  TraceRecorder rec(r, trace);
  Stopwatch clock;
  Rng rng(stream_seed(seed, 0));
  const Partition& p = r.partition();
  const std::size_t b = p.blocks();
  Vector x(x0.begin(), x0.end());
  const std::uint64_t limit = outer_limit(budget);
  std::uint64_t k = 0, updates = 0;
  rec.record(0, x, clock.elapsed_ms());
  while (k < limit && !out_of_time(budget, clock)) {
    for (std::size_t s = 0; s < b; ++s) {
      const std::size_t i = uniform_index(rng, b);
      const Vector g = r.evaluate_block(x, i);
      auto xi = block_view(std::span<double>(x), i, p);
      for (std::size_t j = 0; j < xi.size(); ++j) xi[j] = xi[j] - cfg.gamma * g[j];
      ++updates;
      if (!all_finite(xi)) diverged("bc_red", updates);
    }
    ++k;
    if (rec.wants(k)) rec.record(k, x, clock.elapsed_ms());
  }
  rec.record(k, x, clock.elapsed_ms());
  out.x = std::move(x);
  out.trace = rec.take();
  out.outer_iterations = k;
  out.updates = updates;
  return out;
}

SolveResult sync_red(const RedOperator& r, const RedConfig& cfg, std::span<const double> x0,
                     const SolverBudget& budget, std::size_t n_workers, const TraceOptions& trace) {
  budget.validate();
  check_start(r, x0);
  require(n_workers >= 1, "sync_red: need at least one worker");
  SolveResult out;
  if (auto w = step_warning(cfg.gamma, step_size_bound(r.fidelity().lipschitz(), cfg.tau, 0)); !w.empty())
    out.warnings.push_back(w);
  const Partition& p = r.partition();
  const std::size_t b = p.blocks();
  // Workers beyond the block count would only idle.
  const std::size_t workers = std::min(n_workers, b);

  TraceRecorder rec(r, trace);
  Stopwatch clock;
  Vector x(x0.begin(), x0.end());
  std::vector<Vector> updates(b);
  std::atomic<bool> stop{false};
  std::vector<std::exception_ptr> errors(workers);
  std::barrier sync(static_cast<std::ptrdiff_t>(workers));

  auto compute_share = [&](std::size_t id) {
    try {
      for (std::size_t i = id; i < b; i += workers) updates[i] = r.evaluate_block(x, i);
    } catch (...) {
      errors[id] = std::current_exception();
    }
  };

  std::vector<std::jthread> pool;
  for (std::size_t id = 1; id < workers; ++id) {
    pool.emplace_back([&, id] {
      for (;;) {
        sync.arrive_and_wait();  // start of phase
        if (stop.load()) return;
        compute_share(id);
        sync.arrive_and_wait();  // results ready
      }
    });
  }

  const std::uint64_t limit = outer_limit(budget);
  std::uint64_t k = 0;
  auto finish_pool = [&] {
    stop.store(true);
    sync.arrive_and_wait();
    pool.clear();
  };
  for (;;) {
    if (k >= limit || out_of_time(budget, clock)) break;
    sync.arrive_and_wait();
    compute_share(0);
    sync.arrive_and_wait();
    for (auto& e : errors) {
      if (e) {
        finish_pool();
        std::rethrow_exception(e);
      }
    }
    // G(x^k) is the concatenation of the block updates.
    if (rec.wants(k)) {
      Vector g;
      g.reserve(x.size());
      for (const auto& u : updates) g.insert(g.end(), u.begin(), u.end());
      rec.record_residual(k, x, norm_sq(g), clock.elapsed_ms());
    }
    for (std::size_t i = 0; i < b; ++i) {
      auto xi = block_view(std::span<double>(x), i, p);
      for (std::size_t j = 0; j < xi.size(); ++j) xi[j] = xi[j] - cfg.gamma * updates[i][j];
    }
    ++k;
    if (!all_finite(x)) {
      finish_pool();
      diverged("sync_red", k);
    }
  }
  finish_pool();
  rec.record(k, x, clock.elapsed_ms());
  out.x = std::move(x);
  out.trace = rec.take();
  out.outer_iterations = k;
  out.updates = k;
  return out;
}

SolveResult sg_red(const RedOperator& r, const RedConfig& cfg, std::span<const double> x0,
                   const SolverBudget& budget, std::size_t w, std::uint64_t seed, const TraceOptions& trace) {
  budget.validate();
  check_start(r, x0);
  require(w >= 1, "sg_red: minibatch size must be >= 1");
  SolveResult out;
  const double l = r.fidelity().component_lipschitz_max();
  if (auto msg = step_warning(cfg.gamma, step_size_bound(l, cfg.tau, 0)); !msg.empty())
    out.warnings.push_back(msg);
  TraceRecorder rec(r, trace);
  Stopwatch clock;
  Rng rng(stream_seed(seed, 0));
  Vector x(x0.begin(), x0.end());
  const std::uint64_t limit = outer_limit(budget);
  std::uint64_t k = 0;
  rec.record(0, x, clock.elapsed_ms());
  while (k < limit && !out_of_time(budget, clock)) {
    const Vector g = r.evaluate_stochastic(x, w, rng);
    for (std::size_t j = 0; j < x.size(); ++j) x[j] = x[j] - cfg.gamma * g[j];
    ++k;
    if (!all_finite(x)) diverged("sg_red", k);
    if (rec.wants(k)) rec.record(k, x, clock.elapsed_ms());
  }
  rec.record(k, x, clock.elapsed_ms());
  out.x = std::move(x);
  out.trace = rec.take();
  out.outer_iterations = k;
  out.updates = k;
  return out;
}

}  // namespace asyncred
