#include "asyncred/verify.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>
#include <stdexcept>

#include "asyncred/async_engine.hpp"
#include "asyncred/blocks.hpp"
#include "asyncred/denoisers.hpp"
#include "asyncred/operators.hpp"
#include "asyncred/solvers_serial.hpp"

namespace asyncred {

namespace {

std::shared_ptr<const Denoiser> make_denoiser(const std::string& kind, double width, double threshold,
                                              double factor) {
  if (kind == "convolution") return std::make_shared<ConvolutionDenoiser>(ConvolutionDenoiser::gaussian(width));
  if (kind == "haar") return std::make_shared<TransformShrinkDenoiser>(threshold, 1);
  if (kind == "identity") return std::make_shared<IdentityDenoiser>();
  if (kind == "scaling") return std::make_shared<ScalingDenoiser>(factor);
  throw std::invalid_argument("unknown denoiser kind " + kind);
}

Vector smooth_image(std::size_t side, std::uint64_t seed) {
  Rng rng(stream_seed(seed, 11));
  const Vector noise = gaussian_vector(rng, side * side);
  Vector img = ConvolutionDenoiser::gaussian(1.5).apply(noise, {side, side});
  const auto [lo, hi] = std::minmax_element(img.begin(), img.end());
  const double span = std::max(*hi - *lo, 1e-12);
  const double base = *lo;
  for (auto& v : img) v = (v - base) / span;
  return img;
}

}  // namespace

Instance cs_instance(const CsInstanceOptions& o) {
  const GridPartition grid({o.side, o.side}, o.block, o.block);
  auto a = std::make_shared<BlockDiagonalGaussian>(
      BlockDiagonalGaussian::with_ratio(grid.partition(), o.ratio, stream_seed(o.seed, 1)));
  Instance inst;
  inst.x_true = grid.to_block_major(smooth_image(o.side, o.seed));
  const Vector y = synthesize_measurements(*a, inst.x_true, o.input_snr_db, stream_seed(o.seed, 2));
  const MeasurementPartition mp = o.measurement_blocks == a->column_partition().blocks()
                                      ? MeasurementPartition(a->row_partition())
                                      : MeasurementPartition::uniform(a->rows(), o.measurement_blocks);
  auto fid = std::make_shared<LeastSquaresFidelity>(a, y, mp);
  inst.lipschitz = fid->lipschitz();
  inst.tau = o.tau_relative * inst.lipschitz;
  inst.red = std::make_shared<RedOperator>(fid, make_denoiser(o.denoiser, o.kernel_width, o.haar_threshold, o.scaling),
                                           inst.tau, grid, DenoiseScope::kFullImage);
  // Deterministic start away from the solution.
  inst.x0 = a->apply_adjoint(y);
  return inst;
}

Instance ct_instance(const CtInstanceOptions& o) {
  const GridPartition grid({o.side, o.side}, o.block, o.block);
  auto a = std::make_shared<ParallelBeamRadon>(
      build_radon(o.side, o.angles, o.detectors).with_columns_permuted(grid.flat_of_pixel()));
  Instance inst;
  inst.x_true = grid.to_block_major(smooth_image(o.side, o.seed));
  const Vector y = synthesize_measurements(*a, inst.x_true, 40.0, stream_seed(o.seed, 2));
  auto fid = std::make_shared<LeastSquaresFidelity>(a, y);
  inst.lipschitz = fid->lipschitz();
  inst.tau = o.tau_relative * inst.lipschitz;
  inst.red = std::make_shared<RedOperator>(fid, make_denoiser(o.denoiser, 1.0, 0.05, 0.5), inst.tau, grid,
                                           DenoiseScope::kFullImage);
  inst.x0 = Vector(a->cols(), 0.0);
  return inst;
}

namespace {

// Pairs at three separations, plus constant offsets: white noise almost
// never excites the lowest frequencies where smoothing maps peak.
template <typename F>
void for_pairs(std::size_t dim, std::size_t trials, std::uint64_t seed, F&& f) {
  Rng rng(stream_seed(seed, 21));
  constexpr double kScales[] = {1.0, 1e-2, 10.0};
  for (std::size_t k = 0; k < trials; ++k) {
    const Vector x = gaussian_vector(rng, dim);
    Vector y;
    if (k % 4 == 3) {
      const double shift = gaussian_vector(rng, 1)[0];
      y = x;
      for (auto& v : y) v += shift;
    } else {
      y = gaussian_vector(rng, dim, kScales[k % 4]);
      for (std::size_t j = 0; j < dim; ++j) y[j] += x[j];
    }
    f(x, y);
  }
}

}  // namespace

double sampled_cocoercivity_margin(const VectorMap& t, double beta, std::size_t dim, std::size_t trials,
                                   std::uint64_t seed) {
  double worst = std::numeric_limits<double>::infinity();
  for_pairs(dim, trials, seed, [&](const Vector& x, const Vector& y) {
    const Vector dt = subtract(t(x), t(y));
    const Vector dx = subtract(x, y);
    worst = std::min(worst, (dot(dt, dx) - beta * norm_sq(dt)) / norm_sq(dx));
  });
  return worst;
}

double sampled_lipschitz_ratio(const VectorMap& t, std::size_t dim, std::size_t trials, std::uint64_t seed) {
  double worst = 0.0;
  for_pairs(dim, trials, seed, [&](const Vector& x, const Vector& y) {
    worst = std::max(worst, distance(t(x), t(y)) / distance(x, y));
  });
  return worst;
}

// ---------------------------------------------------------------------------

namespace {

class Suite {
 public:
  Suite(std::string name, std::vector<Check>& out) : name_(std::move(name)), out_(out) {}

  // observed <= limit
  void at_most(const std::string& check, double observed, double limit, std::string detail = {}) {
    out_.push_back({name_, check, observed <= limit, observed, limit, std::move(detail)});
  }
  void at_least(const std::string& check, double observed, double limit, std::string detail = {}) {
    out_.push_back({name_, check, observed >= limit, observed, limit, std::move(detail)});
  }
  void holds(const std::string& check, bool ok, std::string detail = {}) {
    out_.push_back({name_, check, ok, ok ? 1.0 : 0.0, 1.0, std::move(detail)});
  }
  // Runs f, turning an escaped exception into a failed check.
  template <typename F>
  void guarded(const std::string& check, F&& f) {
    try {
      f();
    } catch (const std::exception& e) {
      out_.push_back({name_, check, false, 0, 0, std::string("exception: ") + e.what()});
    }
  }

 private:
  std::string name_;
  std::vector<Check>& out_;
};

double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double m = a.size() == b.size() ? 0.0 : std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < std::min(a.size(), b.size()); ++k) m = std::max(m, std::abs(a[k] - b[k]));
  return m;
}

void suite_operators(const VerifyOptions& o, std::vector<Check>& out) {
  Suite s("operators", out);
  const std::size_t trials = std::max<std::size_t>(o.trials / 10, 5);
  const Instance cs = cs_instance({.side = 16, .block = 8, .ratio = 0.7, .seed = o.seed});
  const Instance ct = ct_instance({.seed = o.seed});
  for (const auto* inst : {&cs, &ct}) {
    const std::string tag = inst == &cs ? "cs" : "ct";
    const LeastSquaresFidelity& f = inst->red->fidelity();
    const LinearOperator& a = f.op();
    s.guarded(tag + "/adjoint", [&] {
      Rng rng(stream_seed(o.seed, 31));
      double worst = 0.0;
      for (std::size_t k = 0; k < trials; ++k) {
        const Vector x = gaussian_vector(rng, a.cols());
        const Vector y = gaussian_vector(rng, a.rows());
        const Vector ax = a.apply(x);
        const double err = std::abs(dot(ax, y) - dot(x, a.apply_adjoint(y))) / (norm(ax) * norm(y) + norm(x));
        worst = std::max(worst, err);
      }
      s.at_most(tag + "/adjoint", worst, 1e-12, "relative |<Ax,y> - <x,A^T y>|");
    });
    s.guarded(tag + "/gradient_fd", [&] {
      Rng rng(stream_seed(o.seed, 32));
      const Vector x = gaussian_vector(rng, a.cols());
      const Vector g = f.grad_full(x);
      double worst = 0.0;
      for (std::size_t k = 0; k < 8; ++k) {
        const Vector d = gaussian_vector(rng, a.cols());
        const double h = 1e-3;
        Vector xp = x, xm = x;
        axpy(h, d, xp);
        axpy(-h, d, xm);
        const double fd = (f.value(xp) - f.value(xm)) / (2 * h);
        worst = std::max(worst, std::abs(fd - dot(g, d)) / (std::abs(dot(g, d)) + norm(g) * norm(d) * 1e-3));
      }
      s.at_most(tag + "/gradient_fd", worst, 1e-6, "central difference vs directional derivative");
    });
    s.guarded(tag + "/grad_block", [&] {
      Rng rng(stream_seed(o.seed, 33));
      const Vector x = gaussian_vector(rng, a.cols());
      const Vector full = f.grad_full(x);
      double worst = 0.0;
      const Partition& p = inst->red->partition();
      for (std::size_t i = 0; i < p.blocks(); ++i)
        worst = std::max(worst, max_abs_diff(f.grad_block(x, p, i), extract(full, i, p)));
      s.at_most(tag + "/grad_block", worst, 0.0, "block gradient vs extracted full gradient");
    });
    s.guarded(tag + "/lipschitz", [&] {
      Rng rng(stream_seed(o.seed, 34));
      double ratio = 0.0;
      for (std::size_t k = 0; k < trials; ++k) {
        const Vector x = gaussian_vector(rng, a.cols());
        ratio = std::max(ratio, 2.0 * norm_sq(a.apply(x)) / norm_sq(x));
      }
      s.at_most(tag + "/lipschitz", ratio, f.lipschitz() * (1 + 1e-9), "2||Ax||^2/||x||^2 vs power iteration");
    });
  }
  s.guarded("cs/minibatch_all_components", [&] {
    const Instance m = cs_instance({.side = 16, .block = 8, .ratio = 0.7, .measurement_blocks = 4, .seed = o.seed});
    const auto& f = m.red->fidelity();
    std::vector<std::size_t> draws(f.component_count());
    for (std::size_t j = 0; j < draws.size(); ++j) draws[j] = j;
    s.at_most("cs/minibatch_all_components", max_abs_diff(f.minibatch_grad(m.x0, draws), f.grad_full(m.x0)), 0.0,
              "each component once reproduces the full gradient");
  });
}

void suite_denoisers(const VerifyOptions& o, std::vector<Check>& out) {
  Suite s("denoisers", out);
  const Geometry geoms[] = {{8, 8}, {16, 16}, {16, 32}};
  struct Named {
    std::string name;
    std::shared_ptr<const Denoiser> d;
  };
  const std::vector<Named> ds = {
      {"identity", std::make_shared<IdentityDenoiser>()},
      {"convolution_w1", std::make_shared<ConvolutionDenoiser>(ConvolutionDenoiser::gaussian(1.0))},
      {"convolution_w2", std::make_shared<ConvolutionDenoiser>(ConvolutionDenoiser::gaussian(2.0))},
      {"haar_l1", std::make_shared<TransformShrinkDenoiser>(TransformShrinkDenoiser::from_sigma(10, 1))},
      {"haar_l2", std::make_shared<TransformShrinkDenoiser>(TransformShrinkDenoiser::from_sigma(25, 2))},
  };
  for (const auto& [name, d] : ds) {
    for (const Geometry& g : geoms) {
      const std::string check = name + "/nonexpansive_" + std::to_string(g.height) + "x" + std::to_string(g.width);
      s.guarded(check, [&] { s.at_most(check, check_nonexpansive(*d, o.trials, g, o.seed), 1 + 1e-7); });
    }
  }
  s.guarded("convolution/dft_bound", [&] {
    // Largest |DFT| of the wrapped kernel bounds the operator norm.
    const auto k = ConvolutionDenoiser::gaussian(1.0);
    const Geometry g{16, 16};
    const std::size_t m = k.kernel_size(), r = m / 2;
    double peak = 0.0;
    for (std::size_t u = 0; u < g.height; ++u) {
      for (std::size_t v = 0; v < g.width; ++v) {
        double re = 0, im = 0;
        for (std::size_t a = 0; a < m; ++a) {
          for (std::size_t b = 0; b < m; ++b) {
            const double da = static_cast<double>(a) - static_cast<double>(r);
            const double db = static_cast<double>(b) - static_cast<double>(r);
            const double ph = -2 * std::numbers::pi *
                              (da * static_cast<double>(u) / static_cast<double>(g.height) +
                               db * static_cast<double>(v) / static_cast<double>(g.width));
            re += k.kernel()[a * m + b] * std::cos(ph);
            im += k.kernel()[a * m + b] * std::sin(ph);
          }
        }
        peak = std::max(peak, std::hypot(re, im));
      }
    }
    s.at_most("convolution/dft_bound", check_nonexpansive(k, o.trials, g, o.seed), peak + 1e-9,
              "sampled ratio vs max kernel DFT magnitude");
  });
  s.guarded("convex_combination", [&] {
    const Geometry g{16, 16};
    const auto c = ConvolutionDenoiser::gaussian(1.0);
    const auto h = TransformShrinkDenoiser::from_sigma(20, 2);
    const VectorMap mix = [&](std::span<const double> x) {
      const Vector a = c.apply(x, g), b = h.apply(x, g);
      Vector m(a.size());
      for (std::size_t j = 0; j < m.size(); ++j) m[j] = 0.7 * a[j] + 0.3 * b[j];
      return m;
    };
    s.at_most("convex_combination", sampled_lipschitz_ratio(mix, g.size(), o.trials, o.seed), 1 + 1e-7,
              "0.7 convolution + 0.3 haar");
  });
}

void suite_lemmas(const VerifyOptions& o, std::vector<Check>& out) {
  Suite s("lemmas", out);
  const std::size_t trials = o.trials;
  // Cocoercivity of G for every built-in pairing.
  for (const char* den : {"convolution", "haar", "identity"}) {
    for (const char* task : {"cs", "ct"}) {
      const std::string check = std::string("cocoercive/") + task + "_" + den;
      s.guarded(check, [&] {
        const Instance inst = std::string(task) == "cs"
                                  ? cs_instance({.ratio = 0.7, .denoiser = den, .seed = o.seed})
                                  : ct_instance({.denoiser = den, .seed = o.seed});
        double worst = std::numeric_limits<double>::infinity();
        for (std::uint64_t k = 0; k < 3; ++k)
          worst = std::min(worst, cocoercivity_check(*inst.red, trials, o.seed + k).min_relative_margin);
        s.at_least(check, worst, -1e-8, "relative margin over 3 seeds");
      });
    }
  }
  s.guarded("cocoercive/negative_control", [&] {
    // A = I with D(x) = -3x breaks the assumption; the margin must go negative.
    const Geometry g{4, 4};
    auto a = std::make_shared<DenseOperator>(DenseOperator::identity(16));
    auto f = std::make_shared<LeastSquaresFidelity>(a, Vector(16, 0.0));
    const RedOperator r(f, std::make_shared<ScalingDenoiser>(-3.0), 1.0, make_uniform_partition(16, 4), g);
    s.at_most("cocoercive/negative_control", cocoercivity_check(r, 50, o.seed).min_margin, -1e-6,
              "3-Lipschitz denoiser must fail");
  });

  // Unbiasedness and variance scaling of the minibatch gradient.
  const Instance st = cs_instance({.side = 8, .block = 4, .ratio = 2.0, .measurement_blocks = 8, .seed = o.seed});
  const std::size_t draws = std::max<std::size_t>(o.trials * 20, 10000);
  s.guarded("stochastic/unbiased", [&] {
    const auto& f = st.red->fidelity();
    const Vector full = f.grad_full(st.x0);
    const std::size_t n = full.size();
    Vector sum(n, 0.0), sum_sq(n, 0.0);
    Rng rng(stream_seed(o.seed, 41));
    for (std::size_t k = 0; k < draws; ++k) {
      const Vector gk = f.stochastic_grad(st.x0, 1, rng);
      for (std::size_t j = 0; j < n; ++j) {
        sum[j] += gk[j];
        sum_sq[j] += gk[j] * gk[j];
      }
    }
    double worst = 0.0;
    const double dn = static_cast<double>(draws);
    for (std::size_t j = 0; j < n; ++j) {
      const double mean = sum[j] / dn;
      const double var = std::max(sum_sq[j] / dn - mean * mean, 0.0);
      const double se = std::sqrt(var / dn);
      if (se > 0) worst = std::max(worst, std::abs(mean - full[j]) / se);
    }
    s.at_most("stochastic/unbiased", worst, 3.0, "max |mean - full| in standard errors");
  });
  s.guarded("stochastic/variance_ratio", [&] {
    const double v1 = stochastic_deviation_sq(*st.red, st.x0, 1, draws, o.seed);
    const double v4 = stochastic_deviation_sq(*st.red, st.x0, 4, draws, o.seed + 1);
    const double ratio = v1 / v4;
    s.holds("stochastic/variance_ratio", ratio >= 3.3 && ratio <= 4.7,
            "w=1 : w=4 = " + std::to_string(ratio) + ", expected in [3.3, 4.7]");
  });

  // The gradient of the fidelity is (1/L)-cocoercive.
  s.guarded("fidelity_gradient_cocoercive", [&] {
    const Instance inst = cs_instance({.ratio = 0.7, .seed = o.seed});
    const auto& f = inst.red->fidelity();
    const VectorMap grad = [&](std::span<const double> x) { return f.grad_full(x); };
    s.at_least("fidelity_gradient_cocoercive",
               sampled_cocoercivity_margin(grad, 1.0 / inst.lipschitz, f.dimension(), trials, o.seed), -1e-7);
  });
  // T = (I - K)/2 is firmly nonexpansive exactly when K is nonexpansive.
  s.guarded("firm_nonexpansive_equivalence", [&] {
    const Geometry g{16, 16};
    const auto c = ConvolutionDenoiser::gaussian(1.0);
    bool agree = true;
    std::string detail;
    for (double gain : {1.0, 1.5}) {
      const VectorMap k = [&](std::span<const double> x) {
        Vector v = c.apply(x, g);
        for (auto& e : v) e *= gain;
        return v;
      };
      const VectorMap t = [&](std::span<const double> x) {
        const Vector kx = k(x);
        Vector v(x.size());
        for (std::size_t j = 0; j < v.size(); ++j) v[j] = 0.5 * (x[j] - kx[j]);
        return v;
      };
      const double m = sampled_cocoercivity_margin(t, 1.0, g.size(), trials, o.seed);
      const double lip = sampled_lipschitz_ratio(k, g.size(), trials, o.seed);
      const bool firm = m >= -1e-7, nonexp = lip <= 1 + 1e-7;
      agree = agree && firm == nonexp;
      char buf[128];
      std::snprintf(buf, sizeof buf, "gain %.1f: margin %.3g, ratio %.6g; ", gain, m, lip);
      detail += buf;
    }
    s.holds("firm_nonexpansive_equivalence", agree, detail);
  });
}

// Returns the worst (min_res_sq / bound) over the records of a block trace.
double worst_bound_ratio(const Trace& tr, double b, const BoundInputs& base) {
  double worst = 0.0;
  for (const auto& rec : tr.records) {
    BoundInputs in = base;
    in.b = b;
    in.t = static_cast<double>(rec.iter) * b + 1.0;
    worst = std::max(worst, rec.min_res_sq / theoretical_bound_bg(in));
  }
  return worst;
}

std::size_t cap_workers(std::size_t want, const VerifyOptions& o) { return std::max<std::size_t>(1, std::min(want, o.max_workers)); }

void suite_async(const VerifyOptions& o, std::vector<Check>& out) {
  Suite s("async", out);
  const Instance inst = cs_instance({.side = 16, .block = 8, .ratio = 4.0, .seed = o.seed});
  const RedOperator& r = *inst.red;
  const double gamma = step_size_bound(inst.lipschitz, inst.tau, 0);
  const RedConfig cfg(inst.tau, gamma);
  const auto budget = SolverBudget::iterations(50);

  s.guarded("single_worker_matches_bc", [&] {
    const auto bc = bc_red(r, cfg, inst.x0, budget, o.seed);
    const auto as = run_async_bg(r, cfg, inst.x0, 1, budget, DelayPolicy::measure(), o.seed);
    s.at_most("single_worker_matches_bc", max_abs_diff(bc.x, as.x), 0.0, "bitwise");
  });
  s.guarded("zero_delay_replay_matches_bc", [&] {
    const auto bc = bc_red(r, cfg, inst.x0, budget, o.seed);
    const auto seq = block_sequence(r.blocks(), 50 * r.blocks(), o.seed);
    const auto sim = run_simulated(r, cfg, inst.x0, sequential_schedule(seq));
    s.at_most("zero_delay_replay_matches_bc", max_abs_diff(bc.x, sim.x), 0.0, "bitwise");
  });
  s.guarded("stress", [&] {
    const Instance tiny = cs_instance({.side = 8, .block = 2, .ratio = 4.0, .seed = o.seed});
    const std::size_t workers = cap_workers(8, o);
    const std::size_t lambda = 2 * workers;
    const double g = step_size_bound(tiny.lipschitz, tiny.tau, static_cast<double>(lambda));
    const std::uint64_t outer = std::max<std::uint64_t>(o.trials * 40, 1000);
    AsyncOptions ao;
    ao.trace.enabled = false;
    const auto res = run_async_bg(*tiny.red, RedConfig(tiny.tau, g), tiny.x0, workers, SolverBudget::iterations(outer),
                                  DelayPolicy::enforce(lambda), o.seed, ao);
    std::uint64_t sum = 0, worst_delay = 0;
    for (const auto& w : res.reports) {
      sum += w.updates;
      worst_delay = std::max(worst_delay, w.max_delay);
    }
    s.at_most("stress/torn_reads", static_cast<double>(res.torn_reads), 0.0);
    s.holds("stress/update_count", sum == res.final_counter && res.final_counter == outer * tiny.red->blocks(),
            "workers " + std::to_string(sum) + ", counter " + std::to_string(res.final_counter));
    s.at_most("stress/max_delay", static_cast<double>(worst_delay), static_cast<double>(lambda), "enforce mode");
  });
  s.guarded("limit_agreement", [&] {
    const Vector xs = fixed_point_direct_solve(r);
    const std::size_t workers = cap_workers(4, o);
    const std::size_t lambda = 2;
    const double g = step_size_bound(inst.lipschitz, inst.tau, static_cast<double>(lambda));
    const auto res = run_async_bg(r, RedConfig(inst.tau, g), inst.x0, workers, SolverBudget::iterations(2000),
                                  DelayPolicy::enforce(lambda), o.seed);
    s.at_most("limit_agreement", distance(res.x, xs), 1e-5 * std::max(1.0, norm(xs)), "||x - x*||");
  });
}

void suite_bounds(const VerifyOptions& o, std::vector<Check>& out) {
  Suite s("bounds", out);
  const Instance inst = cs_instance({.side = 16, .block = 8, .ratio = 4.0, .seed = o.seed});
  const RedOperator& r = *inst.red;
  BoundInputs base;
  base.lipschitz = inst.lipschitz;
  base.tau = inst.tau;
  s.guarded("bg", [&] {
    const Vector xs = fixed_point_direct_solve(r);
    base.r0 = distance(inst.x0, xs);
    for (std::size_t lambda : {0, 2, 4}) {
      BoundInputs in = base;
      in.lambda = static_cast<double>(lambda);
      in.gamma = step_size_bound(inst.lipschitz, inst.tau, in.lambda);
      const RedConfig cfg(inst.tau, in.gamma);
      const std::string tag = "lambda" + std::to_string(lambda);
      if (lambda == 0) {
        s.at_most("bg/gm", worst_bound_ratio(gm_red(r, cfg, inst.x0, SolverBudget::iterations(200)).trace, 1, in),
                  1.0, "max min_res_sq / bound");
        s.at_most("bg/bc",
                  worst_bound_ratio(bc_red(r, cfg, inst.x0, SolverBudget::iterations(200), o.seed).trace,
                                    static_cast<double>(r.blocks()), in),
                  1.0, "max min_res_sq / bound");
      }
      const auto sched = random_schedule(r.blocks(), 200 * r.blocks(), lambda, o.seed + lambda);
      s.at_most("bg/replay_" + tag,
                worst_bound_ratio(run_simulated(r, cfg, inst.x0, sched, lambda).trace,
                                  static_cast<double>(r.blocks()), in),
                1.0, "max min_res_sq / bound");
    }
  });
  s.guarded("sg", [&] {
    const Instance sg = cs_instance({.side = 16, .block = 8, .ratio = 4.0, .measurement_blocks = 8, .seed = o.seed});
    const auto& f = sg.red->fidelity();
    BoundInputs in;
    in.lipschitz = f.component_lipschitz_max();
    in.tau = sg.tau;
    in.gamma = step_size_bound(in.lipschitz, in.tau, 0);
    in.w = 2;
    in.b = 1;
    const auto res = sg_red(*sg.red, RedConfig(in.tau, in.gamma), sg.x0, SolverBudget::iterations(500), 2, o.seed);
    const Vector xs = fixed_point_direct_solve(*sg.red);
    in.r0 = distance(sg.x0, xs);
    const std::vector<Vector> pts{sg.x0, res.x};
    in.nu = nu_estimate(*sg.red, pts, 2000, o.seed);
    double worst = 0.0;
    for (const auto& rec : res.trace.records) {
      in.t = static_cast<double>(rec.iter) + 1.0;
      worst = std::max(worst, rec.min_res_sq / theoretical_bound_sg(in));
    }
    s.at_most("sg/serial", worst, 1.0, "max min_res_sq / bound");
  });
}

}  // namespace

const std::vector<std::string>& verify_suites() {
  static const std::vector<std::string> names = {"operators", "denoisers", "lemmas", "async", "bounds", "all"};
  return names;
}

std::vector<Check> run_verify_suite(const std::string& suite, const VerifyOptions& opts) {
  std::vector<Check> out;
  const bool all = suite == "all";
  bool known = all;
  auto run = [&](const char* name, void (*fn)(const VerifyOptions&, std::vector<Check>&)) {
    if (all || suite == name) {
      known = true;
      fn(opts, out);
    }
  };
  run("operators", suite_operators);
  run("denoisers", suite_denoisers);
  run("lemmas", suite_lemmas);
  run("async", suite_async);
  run("bounds", suite_bounds);
  if (!known) throw std::invalid_argument("unknown suite '" + suite + "'");
  return out;
}

std::string format_check(const Check& c) {
  char buf[96];
  std::snprintf(buf, sizeof buf, " observed=%.6g limit=%.6g", c.observed, c.limit);
  std::string line = std::string(c.passed ? "PASS " : "FAIL ") + c.suite + "/" + c.name + buf;
  if (!c.detail.empty()) line += " (" + c.detail + ")";
  return line;
}

}  // namespace asyncred
