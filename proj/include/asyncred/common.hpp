// Shared vocabulary for the asyncred library: flat vectors, image geometry,
// error types and seeded random streams.
#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace asyncred {

using Vector = std::vector<double>;
using Rng = std::mt19937_64;

/// Height x width of a row-major image.
struct Geometry {
  std::size_t height = 0;
  std::size_t width = 0;

  std::size_t size() const { return height * width; }
  bool operator==(const Geometry&) const = default;
};

/// Raised when an iterate stops being finite.
class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(const std::string& what, std::uint64_t update)
      : std::runtime_error(what), update_(update) {}

  /// Global update (or outer iteration) at which the non-finite value appeared.
  std::uint64_t update() const { return update_; }

 private:
  std::uint64_t update_;
};

class NoConvergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class UnsupportedError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

double dot(std::span<const double> a, std::span<const double> b);
double norm_sq(std::span<const double> a);
double norm(std::span<const double> a);
double distance(std::span<const double> a, std::span<const double> b);
Vector subtract(std::span<const double> a, std::span<const double> b);
/// y += alpha * x
void axpy(double alpha, std::span<const double> x, std::span<double> y);
bool all_finite(std::span<const double> x);

/// Mixes a base seed with a stream id (SplitMix64 finalizer) so that
/// independent workers get decorrelated generators.
std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t stream);

/// Uniform draw from {0, ..., n-1}.
std::size_t uniform_index(Rng& rng, std::size_t n);

Vector gaussian_vector(Rng& rng, std::size_t n, double stddev = 1.0);

void require(bool condition, const std::string& message);

}  // namespace asyncred
