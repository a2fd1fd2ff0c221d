#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <cmath>

#include "asyncred/blocks.hpp"
#include "asyncred/denoisers.hpp"
#include "asyncred/red_core.hpp"

using namespace asyncred;

namespace {

Eigen::VectorXd eig(const Vector& v) { return Eigen::Map<const Eigen::VectorXd>(v.data(), v.size()); }

Eigen::MatrixXd dense_of(const LinearOperator& a) {
  Eigen::MatrixXd m(a.rows(), a.cols());
  for (std::size_t c = 0; c < a.cols(); ++c) {
    Vector e(a.cols(), 0.0);
    e[c] = 1.0;
    m.col(c) = eig(a.apply(e));
  }
  return m;
}

// Circular convolution matrix on a row-major image, built from the kernel.
Eigen::MatrixXd conv_matrix(const Vector& k, std::size_t m, Geometry g) {
  const long r = static_cast<long>(m / 2), h = g.height, w = g.width;
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(g.size(), g.size());
  for (long i = 0; i < h; ++i)
    for (long j = 0; j < w; ++j)
      for (long a = -r; a <= r; ++a)
        for (long b = -r; b <= r; ++b)
          out(i * w + j, ((i - a) % h + h) % h * w + ((j - b) % w + w) % w) += k[(a + r) * m + (b + r)];
  return out;
}

// Row-major -> block-major permutation as a matrix: flat = P * row_major.
Eigen::MatrixXd permutation(const GridPartition& g) {
  const std::size_t n = g.image().size();
  Eigen::MatrixXd p = Eigen::MatrixXd::Zero(n, n);
  for (std::size_t px = 0; px < n; ++px) p(g.flat_of_pixel(px), px) = 1.0;
  return p;
}

struct Affine {
  std::shared_ptr<DenseOperator> a;
  std::shared_ptr<LeastSquaresFidelity> f;
  std::shared_ptr<ConvolutionDenoiser> d;
  GridPartition grid;
  double tau;
  Eigen::MatrixXd m;  // G(x) = m x - rhs in block-major coordinates
  Eigen::VectorXd rhs;
};

Affine affine(std::size_t side, std::size_t block, std::size_t rows, std::uint64_t seed, std::size_t comps = 1) {
  auto a = std::make_shared<DenseOperator>(DenseOperator::gaussian(rows, side * side, seed));
  Rng rng(seed + 1);
  auto f = std::make_shared<LeastSquaresFidelity>(a, gaussian_vector(rng, rows), MeasurementPartition::uniform(rows, comps));
  auto d = std::make_shared<ConvolutionDenoiser>(ConvolutionDenoiser::gaussian(0.8, 1));
  GridPartition grid({side, side}, block, block);
  const double tau = 0.1 * f->lipschitz();
  const Eigen::MatrixXd am = dense_of(*a);
  const Eigen::MatrixXd p = permutation(grid);
  const Eigen::MatrixXd k = p * conv_matrix(d->kernel(), d->kernel_size(), grid.image()) * p.transpose();
  const auto n = static_cast<Eigen::Index>(side * side);
  Eigen::MatrixXd m = 2 * am.transpose() * am + tau * (Eigen::MatrixXd::Identity(n, n) - k);
  Eigen::VectorXd rhs = 2 * am.transpose() * eig(f->measurements());
  return {a, f, d, grid, tau, m, rhs};
}

RedOperator make_red(const Affine& in) { return RedOperator(in.f, in.d, in.tau, in.grid); }

}  // namespace

TEST(RedConfig, RejectsNonPositive) {
  EXPECT_THROW(RedConfig(0.0, 0.1), std::invalid_argument);
  EXPECT_THROW(RedConfig(1.0, 0.0), std::invalid_argument);
  EXPECT_THROW(RedConfig(1.0, std::nan("")), std::invalid_argument);
  EXPECT_NO_THROW(RedConfig(1.0, 0.1));
}

TEST(RedOperator, IdentityDenoiserGivesGradient) {
  auto a = std::make_shared<DenseOperator>(DenseOperator::gaussian(5, 4, 1));
  Rng rng(2);
  auto f = std::make_shared<LeastSquaresFidelity>(a, gaussian_vector(rng, 5));
  const RedOperator r(f, std::make_shared<IdentityDenoiser>(), 3.0, make_uniform_partition(4, 2), {2, 2});
  const Vector x = gaussian_vector(rng, 4);
  EXPECT_EQ(r.evaluate(x), f->grad_full(x));
}

TEST(RedOperator, MatchesDenseOracle) {
  const Affine in = affine(4, 2, 10, 3);
  const RedOperator r = make_red(in);
  Rng rng(4);
  const Vector x = gaussian_vector(rng, 16);
  const Eigen::VectorXd want = in.m * eig(x) - in.rhs;
  EXPECT_LT((eig(r.evaluate(x)) - want).norm(), 1e-12 * want.norm());
}

TEST(RedOperator, BlocksReassembleFullOperator) {
  const Affine in = affine(4, 2, 10, 5);
  const RedOperator r = make_red(in);
  Rng rng(6);
  const Vector x = gaussian_vector(rng, 16);
  const Vector full = r.evaluate(x);
  Vector sum(16, 0.0);
  for (std::size_t i = 0; i < r.blocks(); ++i) axpy(1.0, inject(r.evaluate_block(x, i), i, r.partition()), sum);
  EXPECT_LT(distance(sum, full), 1e-12 * norm(full));
}

TEST(RedOperator, SingleBlockEqualsFull) {
  const Affine in = affine(4, 4, 10, 7);
  const RedOperator r = make_red(in);
  Rng rng(8);
  const Vector x = gaussian_vector(rng, 16);
  EXPECT_EQ(r.evaluate_block(x, 0), r.evaluate(x));
}

TEST(RedOperator, PerBlockDenoisingMatchesBlockLocalForm) {
  // Block-diagonal A and per-block denoising: block i of G depends only on x_i.
  const GridPartition grid({4, 4}, 2, 2);
  auto a = std::make_shared<BlockDiagonalGaussian>(BlockDiagonalGaussian::with_ratio(grid.partition(), 1.5, 9));
  Rng rng(10);
  auto f = std::make_shared<LeastSquaresFidelity>(a, gaussian_vector(rng, a->rows()));
  auto d = std::make_shared<ConvolutionDenoiser>(ConvolutionDenoiser::gaussian(0.8, 1));
  const double tau = 0.7;
  const RedOperator r(f, d, tau, grid, DenoiseScope::kPerBlock);
  const Vector x = gaussian_vector(rng, 16);
  const Eigen::MatrixXd kb = conv_matrix(d->kernel(), 3, {2, 2});
  for (std::size_t i = 0; i < 4; ++i) {
    const auto bi = a->block(i);
    const Eigen::MatrixXd ai = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        bi.data(), a->row_partition().block_size(i), 4);
    const Eigen::VectorXd xi = eig(extract(x, i, grid.partition()));
    const Eigen::VectorXd yi = eig(extract(f->measurements(), i, a->row_partition()));
    const Eigen::VectorXd want = 2 * ai.transpose() * (ai * xi - yi) + tau * (xi - kb * xi);
    EXPECT_LT((eig(r.evaluate_block(x, i)) - want).norm(), 1e-12 * want.norm()) << i;
  }
}

TEST(RedOperator, LayoutRoundTrip) {
  const Affine in = affine(4, 2, 6, 11);
  const RedOperator r = make_red(in);
  Rng rng(12);
  const Vector img = gaussian_vector(rng, 16);
  EXPECT_EQ(r.to_image(r.from_image(img)), img);
}

TEST(Stochastic, SingleComponentEqualsFull) {
  const Affine in = affine(4, 2, 10, 13);
  const RedOperator r = make_red(in);
  Rng rng(14), sampler(15);
  const Vector x = gaussian_vector(rng, 16);
  EXPECT_EQ(r.evaluate_stochastic(x, 3, sampler), r.evaluate(x));
  EXPECT_EQ(r.evaluate_stochastic_block(x, 1, 3, sampler), r.evaluate_block(x, 1));
}

TEST(Stochastic, EnumeratedDrawsGiveBlockOperator) {
  const Affine in = affine(4, 2, 12, 16, 4);
  const RedOperator r = make_red(in);
  Rng rng(17);
  const Vector x = gaussian_vector(rng, 16);
  const std::vector<std::size_t> all{0, 1, 2, 3};
  const Vector g = r.evaluate_block(x, 2);
  EXPECT_LT(distance(r.evaluate_stochastic_block_with(x, 2, all), g), 1e-12 * norm(g));
  const Vector full = r.evaluate(x);
  EXPECT_LT(distance(r.evaluate_stochastic_with(x, all), full), 1e-12 * norm(full));
}

TEST(Stochastic, MeanMatchesOperatorAndBlock) {
  const Affine in = affine(4, 2, 16, 18, 4);
  const RedOperator r = make_red(in);
  Rng rng(19), sampler(20);
  const Vector x = gaussian_vector(rng, 16);
  const int draws = 10000;
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(16), sq = Eigen::VectorXd::Zero(16);
  Eigen::VectorXd bsum = Eigen::VectorXd::Zero(4), bsq = Eigen::VectorXd::Zero(4);
  for (int k = 0; k < draws; ++k) {
    const Eigen::VectorXd g = eig(r.evaluate_stochastic(x, 1, sampler));
    sum += g;
    sq += g.cwiseProduct(g);
    const Eigen::VectorXd gb = eig(r.evaluate_stochastic_block(x, 1, 1, sampler));
    bsum += gb;
    bsq += gb.cwiseProduct(gb);
  }
  auto within = [&](const Eigen::VectorXd& s, const Eigen::VectorXd& q, const Vector& want) {
    const Eigen::VectorXd mean = s / draws;
    const Eigen::VectorXd var = q / draws - mean.cwiseProduct(mean);
    for (Eigen::Index k = 0; k < mean.size(); ++k)
      EXPECT_LE(std::abs(mean(k) - want[k]), 3 * std::sqrt(var(k) / draws)) << k;
  };
  within(sum, sq, r.evaluate(x));
  within(bsum, bsq, r.evaluate_block(x, 1));
}

TEST(Stochastic, DeviationScalesWithMinibatch) {
  const Affine in = affine(4, 2, 16, 21, 4);
  const RedOperator r = make_red(in);
  Rng rng(22);
  const Vector x = gaussian_vector(rng, 16);
  const double ratio = stochastic_deviation_sq(r, x, 4, 10000, 1) / stochastic_deviation_sq(r, x, 1, 10000, 2);
  EXPECT_GE(ratio, 0.2);
  EXPECT_LE(ratio, 0.3);
}

TEST(Residual, IdentityScalingExample) {
  auto a = std::make_shared<DenseOperator>(DenseOperator::identity(4));
  auto f = std::make_shared<LeastSquaresFidelity>(a, Vector(4, 0.0));
  const RedOperator r(f, std::make_shared<IdentityDenoiser>(), 1.0, make_uniform_partition(4, 2), {2, 2});
  const Vector x{1, -1, 2, 0.5};
  EXPECT_DOUBLE_EQ(r.residual_norm_sq(x), 4 * norm_sq(x));
  EXPECT_DOUBLE_EQ(r.normalized_residual(x, x), 1.0);
  EXPECT_THROW(r.normalized_residual(x, Vector(4, 0.0)), std::invalid_argument);
}

TEST(DirectSolve, IdentityProblem) {
  auto a = std::make_shared<DenseOperator>(DenseOperator::identity(4));
  const Vector b0{1, 2, -3, 0.25};
  auto f = std::make_shared<LeastSquaresFidelity>(a, b0);
  const RedOperator r(f, std::make_shared<IdentityDenoiser>(), 1.0, make_uniform_partition(4, 2), {2, 2});
  EXPECT_LT(distance(fixed_point_direct_solve(r), b0), 1e-12);
}

TEST(DirectSolve, MatchesDenseSolveAndZeroesResidual) {
  const Affine in = affine(4, 2, 12, 23);
  const RedOperator r = make_red(in);
  const Vector xs = fixed_point_direct_solve(r);
  const Eigen::VectorXd want = in.m.ldlt().solve(in.rhs);
  EXPECT_LT((eig(xs) - want).norm(), 1e-8 * want.norm());
  const double g0 = norm(r.evaluate(Vector(16, 0.0)));
  EXPECT_LT(norm(r.evaluate(xs)), 1e-8 * g0);
  EXPECT_LE(r.residual_norm_sq(xs), 1e-16 * g0 * g0);
}

TEST(DirectSolve, StartIndependent) {
  const Affine in = affine(4, 2, 12, 24);
  const RedOperator r = make_red(in);
  DirectSolveOptions o;
  Rng rng(25);
  o.start = gaussian_vector(rng, 16, 10.0);
  EXPECT_LT(distance(fixed_point_direct_solve(r), fixed_point_direct_solve(r, o)), 1e-6);
}

TEST(DirectSolve, RejectsNonlinearDenoiser) {
  auto a = std::make_shared<DenseOperator>(DenseOperator::identity(4));
  auto f = std::make_shared<LeastSquaresFidelity>(a, Vector(4, 1.0));
  const RedOperator r(f, std::make_shared<TransformShrinkDenoiser>(0.1, 1), 1.0, make_uniform_partition(4, 2), {2, 2});
  EXPECT_THROW(fixed_point_direct_solve(r), UnsupportedError);
}

TEST(DirectSolve, IndefiniteSystemFails) {
  // D = 3 I on A = I: 2 + tau (1 - 3) < 0 for tau = 2.
  auto a = std::make_shared<DenseOperator>(DenseOperator::identity(4));
  auto f = std::make_shared<LeastSquaresFidelity>(a, Vector{1, 2, 3, 4});
  const RedOperator r(f, std::make_shared<ScalingDenoiser>(3.0), 2.0, make_uniform_partition(4, 2), {2, 2});
  EXPECT_THROW(fixed_point_direct_solve(r), NoConvergenceError);
}

TEST(StepSize, Values) {
  EXPECT_DOUBLE_EQ(step_size_bound(3.0, 0.5, 0.0), 1.0 / 4.0);
  EXPECT_DOUBLE_EQ(step_size_bound(2.0, 1.0, 2.0), 0.05);
  EXPECT_THROW(step_size_bound(-1.0, 1.0, 0.0), std::invalid_argument);
}

TEST(StepSize, NonincreasingInEachArgument) {
  double prev = step_size_bound(1, 1, 0);
  for (double l = 1.5; l < 10; l += 0.5) {
    const double v = step_size_bound(l, 1, 0);
    EXPECT_LE(v, prev);
    prev = v;
  }
  prev = step_size_bound(1, 0.1, 0);
  for (double t = 0.2; t < 5; t += 0.3) {
    const double v = step_size_bound(1, t, 0);
    EXPECT_LE(v, prev);
    prev = v;
  }
  prev = step_size_bound(1, 1, 0);
  for (double lam = 1; lam < 20; ++lam) {
    const double v = step_size_bound(1, 1, lam);
    EXPECT_LE(v, prev);
    prev = v;
  }
}

TEST(Bounds, DelayConstant) {
  EXPECT_EQ(delay_constant(0), 0.0);
  EXPECT_DOUBLE_EQ(delay_constant(1), 0.5);
  EXPECT_NEAR(delay_constant(1e6), 2.0, 1e-5);
}

TEST(Bounds, BatchBoundAtZeroDelay) {
  BoundInputs in{.t = 10, .b = 4, .gamma = 0.05, .lipschitz = 3, .tau = 1, .lambda = 0, .r0 = 2};
  EXPECT_DOUBLE_EQ(theoretical_bound_bg(in), 2 * (3 + 2) * 4 * 4 / (0.05 * 10));
}

TEST(Bounds, BatchBoundHandValueWithDelay) {
  // lambda = 1: D = 0.5, (0.5/2 + 2) * 5 * 2 * 1 / (0.1 * 4)
  BoundInputs in{.t = 4, .b = 2, .gamma = 0.1, .lipschitz = 3, .tau = 1, .lambda = 1, .r0 = 1};
  EXPECT_DOUBLE_EQ(theoretical_bound_bg(in), 2.25 * 5 * 2 / 0.4);
}

TEST(Bounds, DoublingTHalves) {
  BoundInputs in{.t = 7, .b = 3, .gamma = 0.01, .lipschitz = 2, .tau = 0.5, .lambda = 3, .r0 = 1.5};
  const double a = theoretical_bound_bg(in);
  in.t = 14;
  EXPECT_DOUBLE_EQ(theoretical_bound_bg(in), a / 2);
}

TEST(Bounds, StochasticReducesToBatchWithoutNoise) {
  BoundInputs in{.t = 7, .b = 3, .gamma = 0.01, .lipschitz = 2, .tau = 0.5, .lambda = 3, .r0 = 1.5, .nu = 0};
  EXPECT_DOUBLE_EQ(theoretical_bound_sg(in), theoretical_bound_bg(in));
}

TEST(Bounds, FloorTermQuartersWithFourfoldMinibatch) {
  BoundInputs in{.t = 7, .b = 3, .gamma = 0.01, .lipschitz = 2, .tau = 0.5, .lambda = 3, .r0 = 1.5, .nu = 2, .w = 1};
  const double floor1 = theoretical_bound_sg(in) - theoretical_bound_bg(in);
  in.w = 4;
  const double floor4 = theoretical_bound_sg(in) - theoretical_bound_bg(in);
  EXPECT_NEAR(floor4, floor1 / 4, 1e-12 * floor1);
  // hand value: D = 9/8, (2 D / b + 2) * gamma * (L + 2 tau) * (1 + lambda) * nu^2
  in.w = 1;
  EXPECT_NEAR(floor1, (2 * (2 * 9.0 / 16) / 3 + 2) * 0.01 * 3 * 4 * 4, 1e-12);
}

TEST(Bounds, SquareRootStepScaling) {
  // gamma = 1/sqrt(w t) with lambda inside the allowed range: both terms
  // shrink like 1/sqrt(w t).
  auto terms = [](double wt) {
    BoundInputs in{.t = wt, .b = 2, .gamma = 1 / std::sqrt(wt), .lipschitz = 1, .tau = 0.5,
                   .lambda = 1, .r0 = 1, .nu = 1, .w = 1};
    const double bg = theoretical_bound_bg(in);
    return std::pair{bg, theoretical_bound_sg(in) - bg};
  };
  const double wt = 400;
  EXPECT_LE(1.0, 0.5 * (std::sqrt(wt) / (1 + 1) - 1));
  const auto [a1, b1] = terms(wt);
  const auto [a4, b4] = terms(4 * wt);
  EXPECT_NEAR(a4, a1 / 2, 1e-12 * a1);
  EXPECT_NEAR(b4, b1 / 2, 1e-12 * b1);
}

TEST(Bounds, RejectInvalid) {
  BoundInputs in{.t = 0, .b = 1, .gamma = 0.1, .lipschitz = 1, .tau = 1};
  EXPECT_THROW(theoretical_bound_bg(in), std::invalid_argument);
  in.t = 1;
  in.w = 0;
  EXPECT_THROW(theoretical_bound_sg(in), std::invalid_argument);
}

TEST(Cocoercivity, IdentityProblemNonnegative) {
  auto a = std::make_shared<DenseOperator>(DenseOperator::identity(4));
  auto f = std::make_shared<LeastSquaresFidelity>(a, Vector(4, 0.0));
  const RedOperator r(f, std::make_shared<IdentityDenoiser>(), 1e-3, make_uniform_partition(4, 2), {2, 2});
  EXPECT_GE(cocoercivity_check(r, 200, 1).min_margin, 0.0);
}

TEST(Cocoercivity, ConvolutionInstance) {
  const Affine in = affine(4, 2, 12, 26);
  const RedOperator r = make_red(in);
  EXPECT_GE(cocoercivity_check(r, 500, 2).min_relative_margin, -1e-8);
}

TEST(Cocoercivity, AdversarialDenoiserDetected) {
  auto a = std::make_shared<DenseOperator>(DenseOperator::identity(4));
  auto f = std::make_shared<LeastSquaresFidelity>(a, Vector(4, 0.0));
  const RedOperator r(f, std::make_shared<ScalingDenoiser>(-3.0), 1.0, make_uniform_partition(4, 2), {2, 2});
  EXPECT_LT(cocoercivity_check(r, 50, 3).min_margin, 0.0);
}

TEST(NuEstimate, ZeroForSingleComponent) {
  const Affine in = affine(4, 2, 10, 27);
  const RedOperator r = make_red(in);
  const std::vector<Vector> pts{Vector(16, 0.0)};
  EXPECT_EQ(nu_estimate(r, pts, 100, 1), 0.0);
}

TEST(NuEstimate, StableAcrossSeedsAndScalesWithMinibatch) {
  const Affine in = affine(4, 2, 16, 28, 4);
  const RedOperator r = make_red(in);
  Rng rng(29);
  const std::vector<Vector> pts{gaussian_vector(rng, 16)};
  const double a = nu_estimate(r, pts, 10000, 1), b = nu_estimate(r, pts, 10000, 2);
  EXPECT_NEAR(a, b, 0.1 * a);
  const double nu4 = std::sqrt(stochastic_deviation_sq(r, pts[0], 4, 10000, 3));
  EXPECT_NEAR(nu4, a / 2, 0.1 * a / 2);
}
