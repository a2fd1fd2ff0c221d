#include "asyncred/denoisers.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace asyncred {

void Denoiser::check_geometry(std::span<const double> x, Geometry geometry) {
  require(geometry.size() > 0, "Denoiser: empty geometry");
  require(x.size() == geometry.size(), "Denoiser: image has " + std::to_string(x.size()) +
                                           " samples but geometry is " + std::to_string(geometry.height) +
                                           "x" + std::to_string(geometry.width));
}

Vector IdentityDenoiser::apply(std::span<const double> x, Geometry geometry) const {
  check_geometry(x, geometry);
  return Vector(x.begin(), x.end());
}

Vector ScalingDenoiser::apply(std::span<const double> x, Geometry geometry) const {
  check_geometry(x, geometry);
  Vector out(x.begin(), x.end());
  for (auto& v : out) v *= factor_;
  return out;
}

bool ScalingDenoiser::claims_nonexpansive() const { return std::abs(factor_) <= 1.0; }

// ---------------------------------------------------------------------------

ConvolutionDenoiser::ConvolutionDenoiser(std::size_t size, Vector kernel, double sigma)
    : size_(size), kernel_(std::move(kernel)), sigma_(sigma) {
  require(size % 2 == 1, "ConvolutionDenoiser: kernel size must be odd");
  require(kernel_.size() == size * size, "ConvolutionDenoiser: kernel must be size x size");
  double sum = 0.0;
  for (double v : kernel_) {
    require(v >= 0.0, "ConvolutionDenoiser: kernel entries must be nonnegative");
    sum += v;
  }
  require(std::abs(sum - 1.0) < 1e-12, "ConvolutionDenoiser: kernel must sum to 1");
}

ConvolutionDenoiser ConvolutionDenoiser::gaussian(double width, std::size_t radius) {
  require(width > 0.0 && std::isfinite(width), "ConvolutionDenoiser: width must be positive");
  if (radius == 0) radius = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(3.0 * width)));
  const std::size_t size = 2 * radius + 1;
  Vector k(size * size);
  double sum = 0.0;
  for (std::size_t r = 0; r < size; ++r) {
    for (std::size_t c = 0; c < size; ++c) {
      const double dr = static_cast<double>(r) - static_cast<double>(radius);
      const double dc = static_cast<double>(c) - static_cast<double>(radius);
      k[r * size + c] = std::exp(-(dr * dr + dc * dc) / (2.0 * width * width));
      sum += k[r * size + c];
    }
  }
  for (auto& v : k) v /= sum;
  return ConvolutionDenoiser(size, std::move(k), width);
}

Vector ConvolutionDenoiser::apply(std::span<const double> x, Geometry geometry) const {
  check_geometry(x, geometry);
  const std::size_t h = geometry.height, w = geometry.width;
  const auto half = static_cast<std::ptrdiff_t>(size_ / 2);
  const auto hh = static_cast<std::ptrdiff_t>(h), ww = static_cast<std::ptrdiff_t>(w);
  // Offsets wrap modulo the image size; kernels wider than the image fold.
  std::vector<std::size_t> row_idx(size_), col_idx(size_);
  Vector out(x.size(), 0.0);
  for (std::ptrdiff_t r = 0; r < hh; ++r) {
    for (std::size_t k = 0; k < size_; ++k)
      row_idx[k] = static_cast<std::size_t>((((r + static_cast<std::ptrdiff_t>(k) - half) % hh) + hh) % hh);
    for (std::ptrdiff_t c = 0; c < ww; ++c) {
      for (std::size_t k = 0; k < size_; ++k)
        col_idx[k] = static_cast<std::size_t>((((c + static_cast<std::ptrdiff_t>(k) - half) % ww) + ww) % ww);
      double s = 0.0;
      for (std::size_t kr = 0; kr < size_; ++kr) {
        const double* src = x.data() + row_idx[kr] * w;
        const double* kk = kernel_.data() + kr * size_;
        for (std::size_t kc = 0; kc < size_; ++kc) s += kk[kc] * src[col_idx[kc]];
      }
      out[static_cast<std::size_t>(r) * w + static_cast<std::size_t>(c)] = s;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

namespace {

void check_haar_geometry(Geometry g, std::size_t levels) {
  const std::size_t f = std::size_t{1} << levels;
  require(levels >= 1, "Haar: need at least one level");
  require(g.height % f == 0 && g.width % f == 0,
          "Haar: image dimensions must be divisible by 2^levels");
}

// One orthonormal Haar step along rows then columns on the top-left h x w region.
void haar_step(std::span<double> img, std::size_t stride, std::size_t h, std::size_t w, Vector& tmp) {
  const double s = std::numbers::sqrt2 / 2.0;
  tmp.resize(std::max(h, w));
  for (std::size_t r = 0; r < h; ++r) {
    double* row = img.data() + r * stride;
    for (std::size_t c = 0; c < w / 2; ++c) {
      tmp[c] = (row[2 * c] + row[2 * c + 1]) * s;
      tmp[w / 2 + c] = (row[2 * c] - row[2 * c + 1]) * s;
    }
    std::copy(tmp.begin(), tmp.begin() + static_cast<std::ptrdiff_t>(w), row);
  }
  for (std::size_t c = 0; c < w; ++c) {
    for (std::size_t r = 0; r < h / 2; ++r) {
      const double a = img[2 * r * stride + c], b = img[(2 * r + 1) * stride + c];
      tmp[r] = (a + b) * s;
      tmp[h / 2 + r] = (a - b) * s;
    }
    for (std::size_t r = 0; r < h; ++r) img[r * stride + c] = tmp[r];
  }
}

void haar_unstep(std::span<double> img, std::size_t stride, std::size_t h, std::size_t w, Vector& tmp) {
  const double s = std::numbers::sqrt2 / 2.0;
  tmp.resize(std::max(h, w));
  for (std::size_t c = 0; c < w; ++c) {
    for (std::size_t r = 0; r < h / 2; ++r) {
      const double a = img[r * stride + c], d = img[(h / 2 + r) * stride + c];
      tmp[2 * r] = (a + d) * s;
      tmp[2 * r + 1] = (a - d) * s;
    }
    for (std::size_t r = 0; r < h; ++r) img[r * stride + c] = tmp[r];
  }
  for (std::size_t r = 0; r < h; ++r) {
    double* row = img.data() + r * stride;
    for (std::size_t c = 0; c < w / 2; ++c) {
      tmp[2 * c] = (row[c] + row[w / 2 + c]) * s;
      tmp[2 * c + 1] = (row[c] - row[w / 2 + c]) * s;
    }
    std::copy(tmp.begin(), tmp.begin() + static_cast<std::ptrdiff_t>(w), row);
  }
}

}  // namespace

void haar_forward(std::span<double> image, Geometry geometry, std::size_t levels) {
  require(image.size() == geometry.size(), "Haar: image size mismatch");
  check_haar_geometry(geometry, levels);
  Vector tmp;
  for (std::size_t l = 0; l < levels; ++l)
    haar_step(image, geometry.width, geometry.height >> l, geometry.width >> l, tmp);
}

void haar_inverse(std::span<double> image, Geometry geometry, std::size_t levels) {
  require(image.size() == geometry.size(), "Haar: image size mismatch");
  check_haar_geometry(geometry, levels);
  Vector tmp;
  for (std::size_t l = levels; l-- > 0;)
    haar_unstep(image, geometry.width, geometry.height >> l, geometry.width >> l, tmp);
}

double soft_threshold(double v, double threshold) {
  if (v > threshold) return v - threshold;
  if (v < -threshold) return v + threshold;
  return 0.0;
}

TransformShrinkDenoiser::TransformShrinkDenoiser(double threshold, std::size_t levels, double sigma)
    : threshold_(threshold), levels_(levels), sigma_(sigma) {
  require(threshold >= 0.0 && std::isfinite(threshold), "TransformShrinkDenoiser: threshold must be >= 0");
  require(levels >= 1, "TransformShrinkDenoiser: need at least one level");
}

TransformShrinkDenoiser TransformShrinkDenoiser::from_sigma(double sigma_255, std::size_t levels, double scale) {
  require(sigma_255 > 0.0, "TransformShrinkDenoiser: sigma must be positive");
  return TransformShrinkDenoiser(scale * sigma_255 / 255.0, levels, sigma_255);
}

Vector TransformShrinkDenoiser::apply(std::span<const double> x, Geometry geometry) const {
  check_geometry(x, geometry);
  Vector c(x.begin(), x.end());
  haar_forward(c, geometry, levels_);
  for (auto& v : c) v = soft_threshold(v, threshold_);
  haar_inverse(c, geometry, levels_);
  return c;
}

// ---------------------------------------------------------------------------

namespace {

// Smooth piecewise-constant test image in [0, 1]: a disk and a bar.
Vector structured_image(Geometry g) {
  Vector img(g.size());
  const double cy = 0.5 * static_cast<double>(g.height), cx = 0.5 * static_cast<double>(g.width);
  const double rad = 0.35 * static_cast<double>(std::min(g.height, g.width));
  for (std::size_t r = 0; r < g.height; ++r) {
    for (std::size_t c = 0; c < g.width; ++c) {
      const double dy = static_cast<double>(r) + 0.5 - cy, dx = static_cast<double>(c) + 0.5 - cx;
      double v = 0.1;
      if (dx * dx + dy * dy < rad * rad) v = 0.7;
      if (std::abs(dy) < 0.1 * static_cast<double>(g.height) + 0.5) v += 0.2;
      img[r * g.width + c] = v;
    }
  }
  return img;
}

}  // namespace

double check_nonexpansive(const Denoiser& d, std::size_t trials, Geometry geometry, std::uint64_t seed) {
  require(trials >= 1, "check_nonexpansive: need at least one trial");
  Rng rng(seed);
  const Vector base = structured_image(geometry);
  std::uniform_real_distribution<double> log_scale(-4.0, 1.0);
  double worst = 0.0;
  for (std::size_t t = 0; t < trials; ++t) {
    Vector x, y;
    const double scale = std::pow(10.0, log_scale(rng));
    if (t % 3 == 0) {
      x = gaussian_vector(rng, geometry.size(), scale);
      y = gaussian_vector(rng, geometry.size(), scale);
    } else if (t % 3 == 1) {
      // constant offset, the direction smoothing kernels pass unchanged
      x = gaussian_vector(rng, geometry.size(), scale);
      y = x;
      const double shift = gaussian_vector(rng, 1, scale)[0];
      for (auto& v : y) v += shift;
    } else {
      x = base;
      y = base;
      const Vector p = gaussian_vector(rng, geometry.size(), 0.05);
      const Vector q = gaussian_vector(rng, geometry.size(), scale);
      for (std::size_t k = 0; k < x.size(); ++k) {
        x[k] += p[k];
        y[k] += p[k] + q[k];
      }
    }
    const double dxy = distance(x, y);
    if (dxy == 0.0) continue;
    worst = std::max(worst, distance(d.apply(x, geometry), d.apply(y, geometry)) / dxy);
  }
  return worst;
}

Vector residual_map(const Denoiser& d, std::span<const double> x, Geometry geometry, double tau) {
  require(tau > 0.0, "residual_map: tau must be positive");
  Vector h = d.apply(x, geometry);
  for (std::size_t k = 0; k < h.size(); ++k) h[k] = tau * (x[k] - h[k]);
  return h;
}

}  // namespace asyncred
