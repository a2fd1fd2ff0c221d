// Property suites behind `asyncred verify`, plus the small synthetic
// instances and sampled operator audits they share with the tests.
#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "asyncred/red_core.hpp"

namespace asyncred {

struct Check {
  std::string suite;
  std::string name;
  bool passed = false;
  double observed = 0;
  double limit = 0;
  std::string detail;
};

struct VerifyOptions {
  std::uint64_t seed = 1;
  /// Random pairs / draws per audit.
  std::size_t trials = 500;
  /// Upper bound on threads for the async suite.
  std::size_t max_workers = 8;
};

const std::vector<std::string>& verify_suites();
/// Runs one suite (or "all"); throws invalid_argument for unknown names.
std::vector<Check> run_verify_suite(const std::string& suite, const VerifyOptions& opts);
/// "PASS|FAIL suite/name observed=... limit=... detail"
std::string format_check(const Check& c);

struct Instance {
  std::shared_ptr<const RedOperator> red;
  Vector x_true;
  Vector x0;
  /// Fidelity Lipschitz constant (full gradient).
  double lipschitz = 0;
  double tau = 0;
};

struct CsInstanceOptions {
  std::size_t side = 16;        // image is side x side
  std::size_t block = 8;        // square blocks
  double ratio = 4.0;           // rows per block = floor(ratio * block pixels)
  double tau_relative = 0.1;    // tau = tau_relative * L
  std::string denoiser = "convolution";  // convolution | haar | identity | scaling
  double kernel_width = 1.0;
  double haar_threshold = 0.05;
  double scaling = 0.5;
  std::size_t measurement_blocks = 1;
  double input_snr_db = 30.0;
  std::uint64_t seed = 1;
};

/// Block-diagonal Gaussian CS on a smooth random image.
Instance cs_instance(const CsInstanceOptions& o);

struct CtInstanceOptions {
  std::size_t side = 16;
  std::size_t angles = 12;
  std::size_t detectors = 23;
  std::size_t block = 8;
  double tau_relative = 0.1;
  std::string denoiser = "convolution";
  std::uint64_t seed = 1;
};

Instance ct_instance(const CtInstanceOptions& o);

using VectorMap = std::function<Vector(std::span<const double>)>;

/// min over random pairs of (<T x - T y, x - y> - beta ||T x - T y||^2) / ||x - y||^2.
double sampled_cocoercivity_margin(const VectorMap& t, double beta, std::size_t dim, std::size_t trials,
                                   std::uint64_t seed);
/// max over random pairs of ||T x - T y|| / ||x - y||.
double sampled_lipschitz_ratio(const VectorMap& t, std::size_t dim, std::size_t trials, std::uint64_t seed);

}  // namespace asyncred
