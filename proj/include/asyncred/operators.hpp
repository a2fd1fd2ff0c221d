// Linear forward models and the least-squares data fidelity
//   g(x) = ||y - A x||^2,   grad g(x) = 2 A^T (A x - y).
#pragma once

#include <cstddef>
#include <iosfwd>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "asyncred/blocks.hpp"
#include "asyncred/common.hpp"

namespace asyncred {

/// Half-open range of rows [begin, end).
struct RowRange {
  std::size_t begin = 0;
  std::size_t end = 0;

  std::size_t size() const { return end - begin; }
  bool operator==(const RowRange&) const = default;
};

/// A real matrix accessed by row ranges. Implementations are immutable and
/// may be used concurrently; every call allocates its own output.
class LinearOperator {
 public:
  virtual ~LinearOperator() = default;

  virtual std::size_t rows() const = 0;
  virtual std::size_t cols() const = 0;

  /// (A x) restricted to `range`; result has range.size() entries.
  virtual Vector apply_rows(RowRange range, std::span<const double> x) const = 0;

  /// out += A_range^T r, processing rows in increasing order.
  virtual void accumulate_rows_adjoint(RowRange range, std::span<const double> r,
                                       std::span<double> out) const = 0;

  /// When the columns [columns.begin, columns.end) interact with exactly the
  /// returned rows and those rows with no other column, returns them.
  virtual std::optional<RowRange> coupled_rows(RowRange columns) const;

  Vector apply(std::span<const double> x) const;
  Vector apply_adjoint(std::span<const double> r) const;
  Vector apply_rows_adjoint(RowRange range, std::span<const double> r) const;

 protected:
  void check_apply(RowRange range, std::span<const double> x) const;
  void check_adjoint(RowRange range, std::span<const double> r, std::span<double> out) const;
};

/// Dense row-major matrix.
class DenseOperator : public LinearOperator {
 public:
  DenseOperator(std::size_t rows, std::size_t cols, Vector values);

  static DenseOperator identity(std::size_t n);
  static DenseOperator diagonal(std::span<const double> d);
  /// i.i.d. N(0, 1/rows) entries.
  static DenseOperator gaussian(std::size_t rows, std::size_t cols, std::uint64_t seed);

  std::size_t rows() const override { return rows_; }
  std::size_t cols() const override { return cols_; }
  double at(std::size_t r, std::size_t c) const { return values_[r * cols_ + c]; }
  const Vector& values() const { return values_; }

  Vector apply_rows(RowRange range, std::span<const double> x) const override;
  void accumulate_rows_adjoint(RowRange range, std::span<const double> r,
                               std::span<double> out) const override;

 private:
  std::size_t rows_;
  std::size_t cols_;
  Vector values_;
};

/// A = diag(A_1, ..., A_b), one dense Gaussian block per variable block.
/// Block i has rows_per_block[i] rows and entries drawn i.i.d. N(0, 1/rows_i).
class BlockDiagonalGaussian : public LinearOperator {
 public:
  BlockDiagonalGaussian(Partition columns, std::vector<std::size_t> rows_per_block,
                        std::uint64_t seed);

  /// rows_i = floor(ratio * n_i).
  static BlockDiagonalGaussian with_ratio(const Partition& columns, double ratio,
                                          std::uint64_t seed);

  std::size_t rows() const override { return row_partition_.size(); }
  std::size_t cols() const override { return col_partition_.size(); }
  const Partition& column_partition() const { return col_partition_; }
  const Partition& row_partition() const { return row_partition_; }
  std::uint64_t seed() const { return seed_; }
  /// Dense entries of block i, row-major (rows_i x n_i).
  std::span<const double> block(std::size_t i) const { return blocks_.at(i); }

  Vector apply_rows(RowRange range, std::span<const double> x) const override;
  void accumulate_rows_adjoint(RowRange range, std::span<const double> r,
                               std::span<double> out) const override;
  std::optional<RowRange> coupled_rows(RowRange columns) const override;

 private:
  Partition col_partition_;
  Partition row_partition_;
  std::uint64_t seed_;
  std::vector<Vector> blocks_;
};

/// Compressed sparse row matrix.
class SparseMatrix : public LinearOperator {
 public:
  struct Triplet {
    std::size_t row;
    std::size_t col;
    double value;
  };

  SparseMatrix(std::size_t rows, std::size_t cols, std::vector<Triplet> triplets);

  std::size_t rows() const override { return rows_; }
  std::size_t cols() const override { return cols_; }
  std::size_t nonzeros() const { return values_.size(); }
  std::span<const std::size_t> row_columns(std::size_t r) const;
  std::span<const double> row_values(std::size_t r) const;

  Vector apply_rows(RowRange range, std::span<const double> x) const override;
  void accumulate_rows_adjoint(RowRange range, std::span<const double> r,
                               std::span<double> out) const override;

  /// Same matrix with column c moved to new_col_of_old[c].
  SparseMatrix with_columns_permuted(std::span<const std::size_t> new_col_of_old) const;

  /// Three-column text export: "row col weight" per nonzero, rows ascending.
  void write_triplets(std::ostream& out) const;

 private:
  std::size_t rows_;
  std::size_t cols_;
  std::vector<std::size_t> row_start_;
  std::vector<std::size_t> col_index_;
  Vector values_;
};

/// Parallel-beam Radon transform on an n_pix x n_pix image with unit pixels.
/// Row a * detectors + d holds the exact ray/pixel intersection lengths of
/// detector d at angle a (radians, uniformly spaced on [0, pi)).
class ParallelBeamRadon : public LinearOperator {
 public:
  ParallelBeamRadon(std::size_t n_pix, std::vector<double> angles, std::size_t detectors);

  std::size_t rows() const override { return matrix_.rows(); }
  std::size_t cols() const override { return matrix_.cols(); }
  std::size_t image_side() const { return n_pix_; }
  std::size_t detectors() const { return detectors_; }
  const std::vector<double>& angles() const { return angles_; }
  double detector_spacing() const;
  RowRange angle_rows(std::size_t angle) const;
  const SparseMatrix& matrix() const { return matrix_; }

  /// Columns reordered to the flat (block-major) variable layout.
  ParallelBeamRadon with_columns_permuted(std::span<const std::size_t> new_col_of_old) const;

  Vector apply_rows(RowRange range, std::span<const double> x) const override;
  void accumulate_rows_adjoint(RowRange range, std::span<const double> r,
                               std::span<double> out) const override;

 private:
  ParallelBeamRadon(std::size_t n_pix, std::vector<double> angles, std::size_t detectors,
                    SparseMatrix matrix);

  std::size_t n_pix_;
  std::vector<double> angles_;
  std::size_t detectors_;
  SparseMatrix matrix_;
};

/// Ray-driven parallel-beam projector; angles k*pi/n_angles.
ParallelBeamRadon build_radon(std::size_t n_pix, std::size_t n_angles, std::size_t n_detectors);

/// Contiguous row blocks y = (y_1, ..., y_l).
class MeasurementPartition {
 public:
  explicit MeasurementPartition(Partition rows) : rows_(std::move(rows)) {}

  static MeasurementPartition single(std::size_t m) { return MeasurementPartition(Partition({0, m})); }
  static MeasurementPartition uniform(std::size_t m, std::size_t count) {
    return MeasurementPartition(make_uniform_partition(m, count));
  }

  std::size_t measurements() const { return rows_.size(); }
  std::size_t count() const { return rows_.blocks(); }
  RowRange range(std::size_t j) const;
  const Partition& partition() const { return rows_; }

 private:
  Partition rows_;
};

struct PowerIterationOptions {
  std::size_t max_iters = 200;
  double tol = 1e-9;
  std::uint64_t seed = 0x5eed;
};

/// 2 * sigma_max(A_range)^2 by power iteration on A_range^T A_range. The
/// estimate is nondecreasing in the iteration count; a zero operator gives 0.
double lipschitz_estimate(const LinearOperator& a, const PowerIterationOptions& opts = {});
double lipschitz_estimate_rows(const LinearOperator& a, RowRange range,
                               const PowerIterationOptions& opts = {});

/// Marker for noiseless synthesis.
inline constexpr double kNoiseless = std::numeric_limits<double>::infinity();

/// y = A x_true + e with e ~ N(0, s^2 I), s = ||A x_true|| / (10^(snr/20) sqrt(m)).
Vector synthesize_measurements(const LinearOperator& a, std::span<const double> x_true,
                               double input_snr_db, std::uint64_t seed);

/// g(x) = ||y - A x||^2 with the measurement split g = (1/l) sum_j g_j,
/// g_j(x) = l ||y_j - A_j x||^2.
class LeastSquaresFidelity {
 public:
  LeastSquaresFidelity(std::shared_ptr<const LinearOperator> a, Vector y,
                       MeasurementPartition blocks, const PowerIterationOptions& power = {});
  LeastSquaresFidelity(std::shared_ptr<const LinearOperator> a, Vector y)
      : LeastSquaresFidelity(a, std::move(y), MeasurementPartition::single(a->rows())) {}

  const LinearOperator& op() const { return *a_; }
  std::shared_ptr<const LinearOperator> op_ptr() const { return a_; }
  const Vector& measurements() const { return y_; }
  const MeasurementPartition& measurement_blocks() const { return blocks_; }
  std::size_t dimension() const { return a_->cols(); }
  std::size_t component_count() const { return blocks_.count(); }

  /// Lipschitz constant of grad g: 2 sigma_max(A)^2.
  double lipschitz() const { return lipschitz_; }
  /// max_j of the component constants 2 l sigma_max(A_j)^2.
  double component_lipschitz_max() const { return component_lipschitz_max_; }

  double value(std::span<const double> x) const;
  double component_value(std::span<const double> x, std::size_t j) const;

  Vector grad_full(std::span<const double> x) const;
  /// grad g_j = 2 l A_j^T (A_j x - y_j).
  Vector grad_component(std::span<const double> x, std::size_t j) const;
  /// Minibatch average of w components drawn i.i.d. uniformly (with replacement).
  /// With a single component this is grad_full and consumes no randomness.
  Vector stochastic_grad(std::span<const double> x, std::size_t w, Rng& rng) const;
  /// Minibatch average over an explicit list of component draws.
  Vector minibatch_grad(std::span<const double> x, std::span<const std::size_t> draws) const;

  /// Block i of grad_full, computed block-locally when A couples block i to
  /// its own rows only.
  Vector grad_block(std::span<const double> x, const Partition& p, std::size_t i) const;
  /// Block i of minibatch_grad(x, draws); skips components that cannot touch block i.
  Vector minibatch_grad_block(std::span<const double> x, std::span<const std::size_t> draws,
                              const Partition& p, std::size_t i) const;

  std::vector<std::size_t> draw_components(std::size_t w, Rng& rng) const;

 private:
  void check_x(std::span<const double> x) const;
  void accumulate_component(std::span<const double> x, std::size_t j, double weight,
                            std::span<double> acc) const;

  std::shared_ptr<const LinearOperator> a_;
  Vector y_;
  MeasurementPartition blocks_;
  double lipschitz_;
  double component_lipschitz_max_;
};

}  // namespace asyncred
