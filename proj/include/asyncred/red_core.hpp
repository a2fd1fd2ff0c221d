// The RED operator G(x) = grad g(x) + tau * (x - D(x)), its block and
// stochastic variants, step-size / rate calculators and operator audits.
#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "asyncred/blocks.hpp"
#include "asyncred/common.hpp"
#include "asyncred/denoisers.hpp"
#include "asyncred/operators.hpp"

namespace asyncred {

/// Regularization strength and step size. Both must be positive and finite.
struct RedConfig {
  RedConfig(double tau, double gamma, double sigma = 0.0);

  double tau;
  double gamma;
  double sigma;
};

/// Whether the denoiser sees the whole image or each block on its own.
enum class DenoiseScope { kFullImage, kPerBlock };

class RedOperator {
 public:
  /// Flat vectors are the row-major image of `geometry`; `blocks` slices them.
  RedOperator(std::shared_ptr<const LeastSquaresFidelity> fidelity,
              std::shared_ptr<const Denoiser> denoiser, double tau, Partition blocks,
              Geometry geometry);

  /// Flat vectors are block-major over `grid`.
  RedOperator(std::shared_ptr<const LeastSquaresFidelity> fidelity,
              std::shared_ptr<const Denoiser> denoiser, double tau, GridPartition grid,
              DenoiseScope scope = DenoiseScope::kFullImage);

  const LeastSquaresFidelity& fidelity() const { return *fidelity_; }
  const Denoiser& denoiser() const { return *denoiser_; }
  double tau() const { return tau_; }
  const Partition& partition() const { return partition_; }
  std::size_t dimension() const { return partition_.size(); }
  std::size_t blocks() const { return partition_.blocks(); }
  DenoiseScope scope() const { return scope_; }
  /// Row-major image geometry of the flat vector.
  Geometry geometry() const { return geometry_; }
  const std::optional<GridPartition>& grid() const { return grid_; }

  /// Flat vector -> row-major image and back (identity without a grid).
  Vector to_image(std::span<const double> x) const;
  Vector from_image(std::span<const double> image) const;

  /// D applied in the flat layout.
  Vector denoise(std::span<const double> x) const;
  /// Block i of denoise(x).
  Vector denoise_block(std::span<const double> x, std::size_t i) const;

  Vector evaluate(std::span<const double> x) const;
  Vector evaluate_block(std::span<const double> x, std::size_t i) const;

  /// Only the gradient is sampled; the denoiser term is exact. A single
  /// measurement block reduces to evaluate() without touching rng.
  Vector evaluate_stochastic(std::span<const double> x, std::size_t w, Rng& rng) const;
  Vector evaluate_stochastic_block(std::span<const double> x, std::size_t i, std::size_t w,
                                   Rng& rng) const;
  /// Same, with the component draws given explicitly.
  Vector evaluate_stochastic_with(std::span<const double> x,
                                  std::span<const std::size_t> draws) const;
  Vector evaluate_stochastic_block_with(std::span<const double> x, std::size_t i,
                                        std::span<const std::size_t> draws) const;

  double residual_norm_sq(std::span<const double> x) const;
  /// ||G(x)||^2 / ||G(x0)||^2; throws when G(x0) = 0.
  double normalized_residual(std::span<const double> x, std::span<const double> x0) const;

  /// G(x) - G(0) = 2 A^T A x + tau (x - D x), valid for linear denoisers.
  Vector linear_part(std::span<const double> x) const;

 private:
  void check_x(std::span<const double> x) const;
  Vector combine(Vector grad, std::span<const double> x, std::span<const double> denoised) const;

  std::shared_ptr<const LeastSquaresFidelity> fidelity_;
  std::shared_ptr<const Denoiser> denoiser_;
  double tau_;
  Partition partition_;
  Geometry geometry_;
  std::optional<GridPartition> grid_;
  DenoiseScope scope_;
};

struct DirectSolveOptions {
  double tol = 1e-12;
  std::size_t max_iters = 0;  // 0: 10 n + 100
  std::optional<Vector> start;
};

/// Zero of G for a linear denoiser, by conjugate gradients on
/// (2 A^T A + tau (I - K)) x = 2 A^T y. Throws UnsupportedError for nonlinear
/// denoisers and NoConvergenceError when CG stalls.
Vector fixed_point_direct_solve(const RedOperator& r, const DirectSolveOptions& opts = {});

/// 1 / ((1 + 2 lambda) (L + 2 tau)).
double step_size_bound(double lipschitz, double tau, double lambda);

struct BoundInputs {
  double t = 0;
  double b = 1;
  double gamma = 0;
  double lipschitz = 0;
  double tau = 0;
  double lambda = 0;
  double r0 = 0;
  double nu = 0;
  double w = 1;
};

/// Delay constant 2 lambda^2 / (1 + lambda)^2.
double delay_constant(double lambda);

/// (D/b + 2) (L + 2 tau) b R0^2 / (gamma t).
double theoretical_bound_bg(const BoundInputs& in);
/// Batch term plus (2D/b + 2) (gamma / w) (L + 2 tau) (1 + lambda) nu^2.
double theoretical_bound_sg(const BoundInputs& in);

struct CocoercivityAudit {
  /// min over pairs of <dG, dx> - ||dG||^2 / (L + 2 tau)
  double min_margin = 0;
  /// the same margin divided by ||dG|| ||dx|| for the worst pair
  double min_relative_margin = 0;
  /// largest ||dG|| / ||dx|| seen
  double max_lipschitz_ratio = 0;
};

/// Random-pair audit of the 1/(L + 2 tau) cocoercivity of G. `lipschitz`
/// defaults to the fidelity's constant.
CocoercivityAudit cocoercivity_check(const RedOperator& r, std::size_t trials, std::uint64_t seed,
                                     std::optional<double> lipschitz = std::nullopt);

/// Mean of ||G_w(x) - G(x)||^2 over `draws` minibatches of size w.
double stochastic_deviation_sq(const RedOperator& r, std::span<const double> x, std::size_t w,
                               std::size_t draws, std::uint64_t seed);

/// nu-hat: sqrt of the largest w * E||G_w - G||^2 over the sample points.
double nu_estimate(const RedOperator& r, std::span<const Vector> samples, std::size_t draws,
                   std::uint64_t seed, std::size_t w = 1);

}  // namespace asyncred
