// Reference solvers: full-step (GM), block-coordinate (BC), barrier-parallel
// full-step (Sync) and stochastic full-step (SG) RED iterations.
#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "asyncred/red_core.hpp"
#include "asyncred/trace.hpp"

namespace asyncred {

struct SolveResult {
  Vector x;
  Trace trace;
  std::uint64_t outer_iterations = 0;
  /// Block updates for block solvers, full steps otherwise.
  std::uint64_t updates = 0;
  std::vector<std::string> warnings;
};

/// x <- x - gamma G(x) per outer iteration.
SolveResult gm_red(const RedOperator& r, const RedConfig& cfg, std::span<const double> x0,
                   const SolverBudget& budget, const TraceOptions& trace = {});

/// One uniformly drawn block per inner step; b inner steps make an outer iteration.
SolveResult bc_red(const RedOperator& r, const RedConfig& cfg, std::span<const double> x0,
                   const SolverBudget& budget, std::uint64_t seed, const TraceOptions& trace = {});

/// All blocks computed from the same iterate by a worker pool, then applied.
SolveResult sync_red(const RedOperator& r, const RedConfig& cfg, std::span<const double> x0,
                     const SolverBudget& budget, std::size_t n_workers, const TraceOptions& trace = {});

/// x <- x - gamma G_w(x) with a fresh minibatch per step.
SolveResult sg_red(const RedOperator& r, const RedConfig& cfg, std::span<const double> x0,
                   const SolverBudget& budget, std::size_t w, std::uint64_t seed,
                   const TraceOptions& trace = {});

/// The block indices bc_red draws for `seed`.
std::vector<std::size_t> block_sequence(std::size_t blocks, std::size_t count, std::uint64_t seed);

/// Warning text when gamma exceeds `bound`, empty otherwise.
std::string step_warning(double gamma, double bound);

}  // namespace asyncred
