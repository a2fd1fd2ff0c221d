#include "asyncred/common.hpp"

#include <cmath>

namespace asyncred {

double dot(std::span<const double> a, std::span<const double> b) {
  require(a.size() == b.size(), "dot: length mismatch");
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
  return s;
}

double norm_sq(std::span<const double> a) { return dot(a, a); }

double norm(std::span<const double> a) { return std::sqrt(norm_sq(a)); }

double distance(std::span<const double> a, std::span<const double> b) {
  require(a.size() == b.size(), "distance: length mismatch");
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const double d = a[k] - b[k];
    s += d * d;
  }
  return std::sqrt(s);
}

Vector subtract(std::span<const double> a, std::span<const double> b) {
  require(a.size() == b.size(), "subtract: length mismatch");
  Vector out(a.size());
  for (std::size_t k = 0; k < a.size(); ++k) out[k] = a[k] - b[k];
  return out;
}

void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  require(x.size() == y.size(), "axpy: length mismatch");
  for (std::size_t k = 0; k < x.size(); ++k) y[k] += alpha * x[k];
}

bool all_finite(std::span<const double> x) {
  for (double v : x)
    if (!std::isfinite(v)) return false;
  return true;
}

std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::size_t uniform_index(Rng& rng, std::size_t n) {
  require(n > 0, "uniform_index: empty range");
  std::uniform_int_distribution<std::size_t> dist(0, n - 1);
  return dist(rng);
}

Vector gaussian_vector(Rng& rng, std::size_t n, double stddev) {
  std::normal_distribution<double> dist(0.0, stddev);
  Vector v(n);
  for (auto& e : v) e = dist(rng);
  return v;
}

void require(bool condition, const std::string& message) {
  if (!condition) throw std::invalid_argument(message);
}

}  // namespace asyncred
