// Nonexpansive image denoisers used as RED priors.
#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "asyncred/common.hpp"

namespace asyncred {

/// D_sigma acting on a row-major image. Implementations are immutable and
/// reentrant.
class Denoiser {
 public:
  virtual ~Denoiser() = default;

  /// Denoised image; throws invalid_argument when x does not match geometry.
  virtual Vector apply(std::span<const double> x, Geometry geometry) const = 0;

  virtual double sigma() const { return 0.0; }
  virtual bool claims_nonexpansive() const { return true; }
  /// Linear denoisers admit a direct fixed-point solve.
  virtual bool is_linear() const { return false; }
  virtual std::string name() const = 0;

 protected:
  static void check_geometry(std::span<const double> x, Geometry geometry);
};

class IdentityDenoiser final : public Denoiser {
 public:
  Vector apply(std::span<const double> x, Geometry geometry) const override;
  bool is_linear() const override { return true; }
  std::string name() const override { return "identity"; }
};

/// D(x) = factor * x. Nonexpansive only for |factor| <= 1; larger factors
/// serve as adversarial priors in audits.
class ScalingDenoiser final : public Denoiser {
 public:
  explicit ScalingDenoiser(double factor) : factor_(factor) {}

  Vector apply(std::span<const double> x, Geometry geometry) const override;
  bool claims_nonexpansive() const override;
  bool is_linear() const override { return true; }
  std::string name() const override { return "scaling"; }
  double factor() const { return factor_; }

 private:
  double factor_;
};

/// Circular 2D convolution with a nonnegative, unit-sum, odd-sized kernel.
/// Its spectral norm is at most 1, so it is nonexpansive.
class ConvolutionDenoiser final : public Denoiser {
 public:
  ConvolutionDenoiser(std::size_t size, Vector kernel, double sigma = 0.0);

  /// Normalized Gaussian of standard deviation `width` pixels truncated to
  /// a (2*radius+1)^2 window; radius defaults to ceil(3*width), at least 1.
  static ConvolutionDenoiser gaussian(double width, std::size_t radius = 0);

  Vector apply(std::span<const double> x, Geometry geometry) const override;
  double sigma() const override { return sigma_; }
  bool is_linear() const override { return true; }
  std::string name() const override { return "convolution"; }

  std::size_t kernel_size() const { return size_; }
  const Vector& kernel() const { return kernel_; }

 private:
  std::size_t size_;
  Vector kernel_;
  double sigma_;
};

/// Orthonormal 2D Haar transform, soft-threshold every coefficient by
/// `threshold`, inverse transform. Isometries around a 1-Lipschitz map.
class TransformShrinkDenoiser final : public Denoiser {
 public:
  TransformShrinkDenoiser(double threshold, std::size_t levels, double sigma = 0.0);

  /// threshold = scale * sigma / 255, with sigma quoted on the 0..255 scale.
  static TransformShrinkDenoiser from_sigma(double sigma_255, std::size_t levels = 2,
                                            double scale = 0.6);

  Vector apply(std::span<const double> x, Geometry geometry) const override;
  double sigma() const override { return sigma_; }
  std::string name() const override { return "haar_shrink"; }

  double threshold() const { return threshold_; }
  std::size_t levels() const { return levels_; }

 private:
  double threshold_;
  std::size_t levels_;
  double sigma_;
};

/// Forward / inverse orthonormal Haar transforms (in place, row-major), exposed
/// for testing.
void haar_forward(std::span<double> image, Geometry geometry, std::size_t levels);
void haar_inverse(std::span<double> image, Geometry geometry, std::size_t levels);

double soft_threshold(double v, double threshold);

/// Largest ||D(x) - D(y)|| / ||x - y|| over random Gaussian pairs, constant
/// offsets and structured pairs (smooth piecewise-constant image plus perturbations).
double check_nonexpansive(const Denoiser& d, std::size_t trials, Geometry geometry, std::uint64_t seed);

/// H(x) = tau * (x - D(x)).
Vector residual_map(const Denoiser& d, std::span<const double> x, Geometry geometry, double tau);

}  // namespace asyncred
