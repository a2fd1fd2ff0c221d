#include "asyncred/red_core.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace asyncred {

RedConfig::RedConfig(double tau_, double gamma_, double sigma_) : tau(tau_), gamma(gamma_), sigma(sigma_) {
  require(tau > 0.0 && std::isfinite(tau), "RedConfig: tau must be positive");
  require(gamma > 0.0 && std::isfinite(gamma), "RedConfig: gamma must be positive");
}

RedOperator::RedOperator(std::shared_ptr<const LeastSquaresFidelity> fidelity,
                         std::shared_ptr<const Denoiser> denoiser, double tau, Partition blocks,
                         Geometry geometry)
    : fidelity_(std::move(fidelity)),
      denoiser_(std::move(denoiser)),
      tau_(tau),
      partition_(std::move(blocks)),
      geometry_(geometry),
      scope_(DenoiseScope::kFullImage) {
  require(fidelity_ && denoiser_, "RedOperator: null component");
  require(tau_ > 0.0 && std::isfinite(tau_), "RedOperator: tau must be positive");
  require(partition_.size() == fidelity_->dimension(), "RedOperator: partition does not match fidelity");
  require(geometry_.size() == partition_.size(), "RedOperator: geometry does not match dimension");
}

RedOperator::RedOperator(std::shared_ptr<const LeastSquaresFidelity> fidelity,
                         std::shared_ptr<const Denoiser> denoiser, double tau, GridPartition grid,
                         DenoiseScope scope)
    : fidelity_(std::move(fidelity)),
      denoiser_(std::move(denoiser)),
      tau_(tau),
      partition_(grid.partition()),
      geometry_(grid.image()),
      grid_(std::move(grid)),
      scope_(scope) {
  require(fidelity_ && denoiser_, "RedOperator: null component");
  require(tau_ > 0.0 && std::isfinite(tau_), "RedOperator: tau must be positive");
  require(partition_.size() == fidelity_->dimension(), "RedOperator: grid does not match fidelity");
}

void RedOperator::check_x(std::span<const double> x) const {
  require(x.size() == dimension(), "RedOperator: x has length " + std::to_string(x.size()) +
                                       ", expected " + std::to_string(dimension()));
}

Vector RedOperator::to_image(std::span<const double> x) const {
  check_x(x);
  if (grid_) return grid_->to_row_major(x);
  return Vector(x.begin(), x.end());
}

Vector RedOperator::from_image(std::span<const double> image) const {
  require(image.size() == dimension(), "RedOperator: image size mismatch");
  if (grid_) return grid_->to_block_major(image);
  return Vector(image.begin(), image.end());
}

Vector RedOperator::denoise(std::span<const double> x) const {
  check_x(x);
  if (scope_ == DenoiseScope::kPerBlock) {
    Vector out(x.size());
    const Geometry bg = grid_->block_geometry();
    for (std::size_t i = 0; i < blocks(); ++i) {
      const Vector d = denoiser_->apply(block_view(x, i, partition_), bg);
      std::copy(d.begin(), d.end(), out.begin() + static_cast<std::ptrdiff_t>(partition_.offset(i)));
    }
    return out;
  }
  if (grid_) return grid_->to_block_major(denoiser_->apply(grid_->to_row_major(x), geometry_));
  return denoiser_->apply(x, geometry_);
}

Vector RedOperator::denoise_block(std::span<const double> x, std::size_t i) const {
  check_x(x);
  require(i < blocks(), "RedOperator: block index out of range");
  if (scope_ == DenoiseScope::kPerBlock)
    return denoiser_->apply(block_view(x, i, partition_), grid_->block_geometry());
  return extract(denoise(x), i, partition_);
}

Vector RedOperator::combine(Vector grad, std::span<const double> x, std::span<const double> denoised) const {
  for (std::size_t k = 0; k < grad.size(); ++k) grad[k] = grad[k] + tau_ * (x[k] - denoised[k]);
  return grad;
}

Vector RedOperator::evaluate(std::span<const double> x) const {
  check_x(x);
  return combine(fidelity_->grad_full(x), x, denoise(x));
}

Vector RedOperator::evaluate_block(std::span<const double> x, std::size_t i) const {
  check_x(x);
  require(i < blocks(), "RedOperator: block index out of range");
  return combine(fidelity_->grad_block(x, partition_, i), block_view(x, i, partition_), denoise_block(x, i));
}

Vector RedOperator::evaluate_stochastic(std::span<const double> x, std::size_t w, Rng& rng) const {
  check_x(x);
  return combine(fidelity_->stochastic_grad(x, w, rng), x, denoise(x));
}

Vector RedOperator::evaluate_stochastic_block(std::span<const double> x, std::size_t i, std::size_t w,
                                              Rng& rng) const {
  require(w >= 1, "RedOperator: minibatch size must be >= 1");
  if (fidelity_->component_count() == 1) return evaluate_block(x, i);
  const auto draws = fidelity_->draw_components(w, rng);
  return evaluate_stochastic_block_with(x, i, draws);
}

Vector RedOperator::evaluate_stochastic_with(std::span<const double> x,
                                             std::span<const std::size_t> draws) const {
  check_x(x);
  return combine(fidelity_->minibatch_grad(x, draws), x, denoise(x));
}

Vector RedOperator::evaluate_stochastic_block_with(std::span<const double> x, std::size_t i,
                                                   std::span<const std::size_t> draws) const {
  check_x(x);
  require(i < blocks(), "RedOperator: block index out of range");
  return combine(fidelity_->minibatch_grad_block(x, draws, partition_, i), block_view(x, i, partition_),
                 denoise_block(x, i));
}

double RedOperator::residual_norm_sq(std::span<const double> x) const { return norm_sq(evaluate(x)); }

double RedOperator::normalized_residual(std::span<const double> x, std::span<const double> x0) const {
  const double base = residual_norm_sq(x0);
  require(base > 0.0, "normalized_residual: G(x0) = 0, the start is already a fixed point");
  return residual_norm_sq(x) / base;
}

Vector RedOperator::linear_part(std::span<const double> x) const {
  check_x(x);
  const LinearOperator& a = fidelity_->op();
  const Vector ax = a.apply(x);
  Vector g(a.cols(), 0.0);
  a.accumulate_rows_adjoint({0, a.rows()}, ax, g);
  for (auto& v : g) v *= 2.0;
  return combine(std::move(g), x, denoise(x));
}

// ---------------------------------------------------------------------------

Vector fixed_point_direct_solve(const RedOperator& r, const DirectSolveOptions& opts) {
  if (!r.denoiser().is_linear())
    throw UnsupportedError("fixed_point_direct_solve: denoiser '" + r.denoiser().name() + "' is not linear");
  require(opts.tol > 0.0, "fixed_point_direct_solve: tol must be positive");
  const std::size_t n = r.dimension();
  const std::size_t max_iters = opts.max_iters ? opts.max_iters : 10 * n + 100;

  const LeastSquaresFidelity& f = r.fidelity();
  Vector rhs(n, 0.0);
  f.op().accumulate_rows_adjoint({0, f.op().rows()}, f.measurements(), rhs);
  for (auto& v : rhs) v *= 2.0;
  const double rhs_norm = norm(rhs);
  if (rhs_norm == 0.0) return Vector(n, 0.0);

  Vector x = opts.start ? *opts.start : Vector(n, 0.0);
  require(x.size() == n, "fixed_point_direct_solve: start has wrong length");
  Vector res = subtract(rhs, r.linear_part(x));
  Vector p = res;
  double rr = norm_sq(res);
  const double target = opts.tol * rhs_norm;
  double best = std::sqrt(rr);
  std::size_t since_best = 0;

  for (std::size_t it = 0; it < max_iters; ++it) {
    if (std::sqrt(rr) <= target) break;
    const Vector mp = r.linear_part(p);
    const double pmp = dot(p, mp);
    if (!(pmp > 0.0))
      throw NoConvergenceError("fixed_point_direct_solve: system is singular or indefinite (p'Mp = " +
                               std::to_string(pmp) + ")");
    const double alpha = rr / pmp;
    axpy(alpha, p, x);
    axpy(-alpha, mp, res);
    // Refresh the recursive residual now and then to limit drift.
    if ((it + 1) % 50 == 0) res = subtract(rhs, r.linear_part(x));
    const double rr_new = norm_sq(res);
    for (std::size_t k = 0; k < n; ++k) p[k] = res[k] + (rr_new / rr) * p[k];
    rr = rr_new;
    if (std::sqrt(rr) < 0.999 * best) {
      best = std::sqrt(rr);
      since_best = 0;
    } else if (++since_best > 2 * n + 50) {
      throw NoConvergenceError("fixed_point_direct_solve: CG stagnated at relative residual " +
                               std::to_string(best / rhs_norm));
    }
  }
  const double final_res = norm(subtract(rhs, r.linear_part(x)));
  if (!(final_res <= 10.0 * target))
    throw NoConvergenceError("fixed_point_direct_solve: relative residual " +
                             std::to_string(final_res / rhs_norm) + " after " + std::to_string(max_iters) +
                             " iterations");
  return x;
}

double step_size_bound(double lipschitz, double tau, double lambda) {
  require(lipschitz >= 0.0 && tau > 0.0 && lambda >= 0.0, "step_size_bound: need L >= 0, tau > 0, lambda >= 0");
  return 1.0 / ((1.0 + 2.0 * lambda) * (lipschitz + 2.0 * tau));
}

double delay_constant(double lambda) {
  require(lambda >= 0.0, "delay_constant: lambda must be >= 0");
  return 2.0 * lambda * lambda / ((1.0 + lambda) * (1.0 + lambda));
}

double theoretical_bound_bg(const BoundInputs& in) {
  require(in.t > 0.0, "theoretical_bound: t must be positive");
  require(in.b >= 1.0 && in.gamma > 0.0, "theoretical_bound: need b >= 1 and gamma > 0");
  const double d = delay_constant(in.lambda);
  return (d / in.b + 2.0) * ((in.lipschitz + 2.0 * in.tau) * in.b / (in.gamma * in.t)) * in.r0 * in.r0;
}

double theoretical_bound_sg(const BoundInputs& in) {
  require(in.w >= 1.0, "theoretical_bound_sg: w must be >= 1");
  const double d = delay_constant(in.lambda);
  const double c = (in.lipschitz + 2.0 * in.tau) * (1.0 + in.lambda) * in.nu * in.nu;
  return theoretical_bound_bg(in) + (2.0 * d / in.b + 2.0) * (in.gamma / in.w) * c;
}

// ---------------------------------------------------------------------------

CocoercivityAudit cocoercivity_check(const RedOperator& r, std::size_t trials, std::uint64_t seed,
                                     std::optional<double> lipschitz) {
  require(trials >= 1, "cocoercivity_check: need at least one trial");
  const double l = lipschitz.value_or(r.fidelity().lipschitz());
  const double beta = 1.0 / (l + 2.0 * r.tau());
  Rng rng(seed);
  std::uniform_real_distribution<double> log_scale(-3.0, 1.0);
  CocoercivityAudit audit;
  audit.min_margin = std::numeric_limits<double>::infinity();
  audit.min_relative_margin = std::numeric_limits<double>::infinity();
  const std::size_t n = r.dimension();
  for (std::size_t t = 0; t < trials; ++t) {
    Vector x = gaussian_vector(rng, n, 1.0);
    Vector y = x;
    const Vector d = gaussian_vector(rng, n, std::pow(10.0, log_scale(rng)));
    axpy(1.0, d, y);
    const Vector dg = subtract(r.evaluate(x), r.evaluate(y));
    const Vector dx = subtract(x, y);
    const double ndg = norm(dg), ndx = norm(dx);
    if (ndx == 0.0) continue;
    const double margin = dot(dg, dx) - beta * ndg * ndg;
    audit.min_margin = std::min(audit.min_margin, margin);
    const double scale = ndg * ndx;
    audit.min_relative_margin = std::min(audit.min_relative_margin, scale > 0.0 ? margin / scale : 0.0);
    audit.max_lipschitz_ratio = std::max(audit.max_lipschitz_ratio, ndg / ndx);
  }
  return audit;
}

double stochastic_deviation_sq(const RedOperator& r, std::span<const double> x, std::size_t w,
                               std::size_t draws, std::uint64_t seed) {
  require(draws >= 1 && w >= 1, "stochastic_deviation_sq: need draws >= 1 and w >= 1");
  if (r.fidelity().component_count() == 1) return 0.0;
  // Only the gradient is sampled, so the deviation is a gradient deviation.
  const Vector g = r.fidelity().grad_full(x);
  Rng rng(seed);
  double acc = 0.0;
  for (std::size_t s = 0; s < draws; ++s) acc += norm_sq(subtract(r.fidelity().stochastic_grad(x, w, rng), g));
  return acc / static_cast<double>(draws);
}

double nu_estimate(const RedOperator& r, std::span<const Vector> samples, std::size_t draws, std::uint64_t seed,
                   std::size_t w) {
  require(!samples.empty(), "nu_estimate: need at least one sample point");
  double worst = 0.0;
  for (std::size_t s = 0; s < samples.size(); ++s)
    worst = std::max(worst, static_cast<double>(w) *
                                stochastic_deviation_sq(r, samples[s], w, draws, stream_seed(seed, s)));
  return std::sqrt(worst);
}

}  // namespace asyncred
