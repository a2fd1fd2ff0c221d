#include <gtest/gtest.h>

#include <sstream>
#include <thread>

#include "asyncred/async_engine.hpp"
#include "asyncred/verify.hpp"

using namespace asyncred;

namespace {

// A = [[1, 1], [0, 1]], y = 0, D = I: G(x) = 2 A^T A x couples the two blocks.
RedOperator coupled_pair() {
  auto a = std::make_shared<DenseOperator>(2, 2, Vector{1, 1, 0, 1});
  auto f = std::make_shared<LeastSquaresFidelity>(a, Vector{0, 0});
  return RedOperator(f, std::make_shared<IdentityDenoiser>(), 1.0, make_uniform_partition(2, 2), Geometry{1, 2});
}

Instance small_cs() { return cs_instance({}); }

double bound_gamma(const Instance& in, double lambda) { return step_size_bound(in.lipschitz, in.tau, lambda); }

}  // namespace

TEST(SharedState, ReadsInitialValueAndPublishes) {
  const Partition p = make_uniform_partition(5, 2);
  SharedState s(p, Vector{1, 2, 3, 4, 5});
  Vector blk(2);
  EXPECT_EQ(s.read_block(1, blk), 0u);
  EXPECT_EQ(blk, (Vector{4, 5}));
  {
    auto lk = s.lock(1);
    auto w = s.begin_write(1);
    EXPECT_EQ(Vector(w.current().begin(), w.current().end()), (Vector{4, 5}));
    w.target()[0] = 40;
    w.target()[1] = 50;
    // not yet visible
    s.read_block(1, blk);
    EXPECT_EQ(blk, (Vector{4, 5}));
    s.finish_payload(1, w);
    s.publish(1, w);
  }
  EXPECT_EQ(s.version(1), 1u);
  EXPECT_EQ(s.version(0), 0u);
  Vector all(5);
  std::vector<std::uint64_t> versions(2);
  s.snapshot(all, versions);
  EXPECT_EQ(all, (Vector{1, 2, 3, 40, 50}));
  EXPECT_EQ(versions, (std::vector<std::uint64_t>{0, 1}));
  EXPECT_EQ(s.torn_reads(), 0u);
}

TEST(SharedState, ConcurrentReadersNeverSeeMixedBlocks) {
  // Writers store a constant vector; any reader copy must be constant too.
  const Partition p = make_uniform_partition(64, 1);
  SharedState s(p, Vector(64, 0.0));
  std::atomic<bool> stop{false};
  std::atomic<int> mixed{0};
  std::thread reader([&] {
    Vector buf(64);
    while (!stop.load()) {
      s.read_block(0, buf);
      for (double v : buf)
        if (v != buf[0]) ++mixed;
    }
  });
  for (int k = 1; k <= 2000; ++k) {
    auto lk = s.lock(0);
    auto w = s.begin_write(0);
    for (double& v : w.target()) v = k;
    s.finish_payload(0, w);
    s.publish(0, w);
  }
  stop = true;
  reader.join();
  EXPECT_EQ(mixed.load(), 0);
  EXPECT_EQ(s.version(0), 2000u);
}

TEST(Schedule, ValidationRejectsMalformed) {
  StalenessSchedule s;
  s.events = {{0, 0, 0, 0}, {0, 1, 1, 1}};
  EXPECT_NO_THROW(validate_schedule(s, 2));
  EXPECT_THROW(validate_schedule(s, 1), std::invalid_argument);  // block out of range
  s.events[1].publish_at = 0;
  EXPECT_THROW(validate_schedule(s, 2), std::invalid_argument);  // not increasing
  s.events[1] = {0, 1, 3, 2};
  EXPECT_THROW(validate_schedule(s, 2), std::invalid_argument);  // reads the future
}

TEST(Schedule, LambdaValidity) {
  StalenessSchedule s;
  s.events = {{0, 0, 0, 0}, {0, 0, 0, 1}, {0, 1, 0, 2}, {0, 1, 0, 3}};
  EXPECT_EQ(s.max_delay(), 3u);
  EXPECT_TRUE(is_lambda_valid(s, 3));
  EXPECT_FALSE(is_lambda_valid(s, 2));
  const RedOperator r = coupled_pair();
  EXPECT_THROW(run_simulated(r, RedConfig(1.0, 0.01), Vector{1, 1}, s, 2), std::invalid_argument);
  EXPECT_NO_THROW(run_simulated(r, RedConfig(1.0, 0.01), Vector{1, 1}, s, 3));
}

TEST(Schedule, RandomRespectsLambda) {
  for (std::size_t lambda : {0u, 1u, 5u}) {
    const auto s = random_schedule(4, 500, lambda, 17, 3);
    EXPECT_NO_THROW(validate_schedule(s, 4));
    EXPECT_TRUE(is_lambda_valid(s, lambda));
    EXPECT_EQ(s.max_delay(), lambda);  // 500 draws hit the top delay
  }
}

TEST(Schedule, CsvRoundTrip) {
  const auto s = random_schedule(3, 40, 2, 5, 2);
  std::ostringstream out;
  write_schedule_csv(s, out);
  EXPECT_EQ(out.str().substr(0, out.str().find('\n')), "event,worker,block,read_at,publish_at");
  EXPECT_EQ(parse_schedule_csv(out.str()), s);
  EXPECT_THROW(parse_schedule_csv("event,worker\n"), std::invalid_argument);
}

TEST(Simulation, StaleReadByHand) {
  // x0 = (1, 1), gamma = 0.1, G(x) = 2 (x0 + x1, x0 + 2 x1).
  // event 0: block 0 from x0: 1 - 0.1 * 4 = 0.6
  // event 1 stale (reads x0): 1 - 0.1 * 6 = 0.4
  // event 1 fresh (reads (0.6, 1)): 1 - 0.1 * 2 * 2.6 = 0.48
  const RedOperator r = coupled_pair();
  const RedConfig cfg(1.0, 0.1);
  StalenessSchedule stale, fresh;
  stale.events = {{0, 0, 0, 0}, {1, 1, 0, 1}};
  fresh.events = {{0, 0, 0, 0}, {1, 1, 1, 1}};
  const auto a = run_simulated(r, cfg, Vector{1, 1}, stale, std::nullopt, {}, true);
  EXPECT_NEAR(a.x[0], 0.6, 1e-15);
  EXPECT_NEAR(a.x[1], 0.4, 1e-15);
  ASSERT_EQ(a.stale_iterates.size(), 2u);
  EXPECT_EQ(a.stale_iterates[1], (Vector{1, 1}));
  const auto b = run_simulated(r, cfg, Vector{1, 1}, fresh);
  EXPECT_NEAR(b.x[1], 0.48, 1e-15);
  // one record per b = 2 events
  EXPECT_EQ(a.trace.records.size(), 2u);
}

TEST(Simulation, ZeroDelayMatchesBc) {
  const Instance in = small_cs();
  const RedConfig cfg(in.tau, bound_gamma(in, 0));
  const auto bc = bc_red(*in.red, cfg, in.x0, SolverBudget::iterations(20), 4);
  const auto seq = block_sequence(in.red->blocks(), 20 * in.red->blocks(), 4);
  EXPECT_EQ(run_simulated(*in.red, cfg, in.x0, sequential_schedule(seq)).x, bc.x);
}

TEST(Async, SingleWorkerMatchesBc) {
  const Instance in = small_cs();
  const RedConfig cfg(in.tau, bound_gamma(in, 0));
  const auto bc = bc_red(*in.red, cfg, in.x0, SolverBudget::iterations(20), 8);
  const auto as = run_async_bg(*in.red, cfg, in.x0, 1, SolverBudget::iterations(20), DelayPolicy::measure(), 8);
  EXPECT_EQ(as.x, bc.x);
  EXPECT_EQ(as.final_counter, 20u * in.red->blocks());
  EXPECT_EQ(as.outer_iterations, 20u);
  ASSERT_EQ(as.reports.size(), 1u);
  EXPECT_EQ(as.reports[0].max_delay, 0u);
}

TEST(Async, EnforcedLambdaHoldsUnderContention) {
  const Instance in = cs_instance({.side = 8, .block = 2, .ratio = 4.0, .seed = 3});
  const std::size_t lambda = 3;
  const RedConfig cfg(in.tau, step_size_bound(in.lipschitz, in.tau, lambda));
  const auto res = run_async_bg(*in.red, cfg, in.x0, 8, SolverBudget::iterations(100),
                                DelayPolicy::enforce(lambda), 3);
  std::uint64_t total = 0;
  for (const auto& w : res.reports) {
    EXPECT_LE(w.max_delay, lambda);
    total += w.updates;
    for (std::size_t d = lambda + 1; d < w.delay_histogram.size(); ++d) EXPECT_EQ(w.delay_histogram[d], 0u);
  }
  EXPECT_EQ(total, res.final_counter);
  EXPECT_EQ(res.final_counter, 100u * in.red->blocks());
  EXPECT_EQ(res.torn_reads, 0u);
  const DelayAudit audit = delay_audit(res.reports);
  EXPECT_EQ(audit.updates, total);
  EXPECT_LE(audit.max_delay, lambda);
}

TEST(Async, HarvestedScheduleReplaysExactly) {
  const Instance in = small_cs();
  const RedConfig cfg(in.tau, bound_gamma(in, 8));
  AsyncOptions o;
  o.record_schedule = true;
  const auto res = run_async_bg(*in.red, cfg, in.x0, 4, SolverBudget::iterations(30), DelayPolicy::enforce(8), 2, o);
  if (!res.schedule) GTEST_SKIP() << res.mixed_snapshots << " snapshots mixed two iterates";
  EXPECT_EQ(res.schedule->events.size(), res.final_counter);
  EXPECT_EQ(run_simulated(*in.red, cfg, in.x0, *res.schedule, 8).x, res.x);
}

TEST(Async, ConvergesWithWorkers) {
  const Instance in = small_cs();
  const Vector xs = fixed_point_direct_solve(*in.red);
  const std::size_t lambda = 4;
  const RedConfig cfg(in.tau, bound_gamma(in, lambda));
  const auto res = run_async_bg(*in.red, cfg, in.x0, 3, SolverBudget::iterations(2000),
                                DelayPolicy::enforce(lambda), 1);
  EXPECT_LT(distance(res.x, xs), 1e-5 * norm(xs));
}

TEST(Async, StochasticVariantRuns) {
  const Instance in = cs_instance({.measurement_blocks = 4});
  const double lc = in.red->fidelity().component_lipschitz_max();
  const RedConfig cfg(in.tau, step_size_bound(lc, in.tau, 2));
  const auto res = run_async_sg(*in.red, cfg, in.x0, 2, 4, SolverBudget::iterations(200),
                                DelayPolicy::enforce(2), 1);
  EXPECT_TRUE(all_finite(res.x));
  EXPECT_LT(res.trace.back().res_sq, res.trace.records[0].res_sq);
}

TEST(Async, DivergenceReported) {
  const Instance in = small_cs();
  const RedConfig cfg(in.tau, 100 * bound_gamma(in, 0));
  EXPECT_THROW(run_async_bg(*in.red, cfg, in.x0, 2, SolverBudget::iterations(5000), DelayPolicy::measure(), 1),
               DivergenceError);
}

TEST(DelayAudit, Aggregates) {
  WorkerReport a, b;
  a.updates = 3;
  a.delay_histogram = {1, 2};
  a.max_delay = 1;
  b.updates = 1;
  b.delay_histogram = {0, 0, 1};
  b.max_delay = 2;
  b.stalls = 4;
  const std::vector<WorkerReport> rs{a, b};
  const DelayAudit d = delay_audit(rs);
  EXPECT_EQ(d.updates, 4u);
  EXPECT_EQ(d.max_delay, 2u);
  EXPECT_DOUBLE_EQ(d.mean_delay, (0 + 1 + 1 + 2) / 4.0);
  EXPECT_DOUBLE_EQ(d.max_delay_per_worker, 1.0);
  EXPECT_EQ(d.stalls, 4u);
  EXPECT_EQ(d.histogram, (std::vector<std::uint64_t>{1, 2, 1}));
}
