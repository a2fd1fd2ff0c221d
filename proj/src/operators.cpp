#include "asyncred/operators.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <ostream>
#include <string>

namespace asyncred {

// ---------------------------------------------------------------------------
// LinearOperator

std::optional<RowRange> LinearOperator::coupled_rows(RowRange) const { return std::nullopt; }

Vector LinearOperator::apply(std::span<const double> x) const {
  return apply_rows({0, rows()}, x);
}

Vector LinearOperator::apply_adjoint(std::span<const double> r) const {
  return apply_rows_adjoint({0, rows()}, r);
}

Vector LinearOperator::apply_rows_adjoint(RowRange range, std::span<const double> r) const {
  Vector out(cols(), 0.0);
  accumulate_rows_adjoint(range, r, out);
  return out;
}

void LinearOperator::check_apply(RowRange range, std::span<const double> x) const {
  require(range.begin <= range.end && range.end <= rows(), "LinearOperator: row range out of bounds");
  require(x.size() == cols(), "LinearOperator: input length " + std::to_string(x.size()) +
                                  " does not match column count " + std::to_string(cols()));
}

void LinearOperator::check_adjoint(RowRange range, std::span<const double> r,
                                   std::span<double> out) const {
  require(range.begin <= range.end && range.end <= rows(), "LinearOperator: row range out of bounds");
  require(r.size() == range.size(), "LinearOperator: adjoint input length does not match row range");
  require(out.size() == cols(), "LinearOperator: adjoint output length does not match column count");
}

// ---------------------------------------------------------------------------
// DenseOperator

DenseOperator::DenseOperator(std::size_t rows, std::size_t cols, Vector values)
    : rows_(rows), cols_(cols), values_(std::move(values)) {
  require(values_.size() == rows_ * cols_, "DenseOperator: value count does not match shape");
}

DenseOperator DenseOperator::identity(std::size_t n) {
  Vector v(n * n, 0.0);
  for (std::size_t k = 0; k < n; ++k) v[k * n + k] = 1.0;
  return DenseOperator(n, n, std::move(v));
}

DenseOperator DenseOperator::diagonal(std::span<const double> d) {
  const std::size_t n = d.size();
  Vector v(n * n, 0.0);
  for (std::size_t k = 0; k < n; ++k) v[k * n + k] = d[k];
  return DenseOperator(n, n, std::move(v));
}

DenseOperator DenseOperator::gaussian(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  require(rows >= 1, "DenseOperator::gaussian: need at least one row");
  Rng rng(seed);
  return DenseOperator(rows, cols,
                       gaussian_vector(rng, rows * cols, 1.0 / std::sqrt(static_cast<double>(rows))));
}

Vector DenseOperator::apply_rows(RowRange range, std::span<const double> x) const {
  check_apply(range, x);
  Vector out(range.size());
  for (std::size_t r = range.begin; r < range.end; ++r) {
    const double* row = values_.data() + r * cols_;
    double s = 0.0;
    for (std::size_t c = 0; c < cols_; ++c) s += row[c] * x[c];
    out[r - range.begin] = s;
  }
  return out;
}

void DenseOperator::accumulate_rows_adjoint(RowRange range, std::span<const double> r,
                                            std::span<double> out) const {
  check_adjoint(range, r, out);
  for (std::size_t row = range.begin; row < range.end; ++row) {
    const double* a = values_.data() + row * cols_;
    const double v = r[row - range.begin];
    for (std::size_t c = 0; c < cols_; ++c) out[c] += a[c] * v;
  }
}

// ---------------------------------------------------------------------------
// BlockDiagonalGaussian

namespace {

Partition rows_from_counts(const std::vector<std::size_t>& counts) {
  std::vector<std::size_t> offsets(counts.size() + 1, 0);
  for (std::size_t i = 0; i < counts.size(); ++i) {
    require(counts[i] >= 1, "BlockDiagonalGaussian: every block needs at least one row");
    offsets[i + 1] = offsets[i] + counts[i];
  }
  return Partition(std::move(offsets));
}

}  // namespace

BlockDiagonalGaussian::BlockDiagonalGaussian(Partition columns,
                                             std::vector<std::size_t> rows_per_block,
                                             std::uint64_t seed)
    : col_partition_(std::move(columns)),
      row_partition_(rows_from_counts(rows_per_block)),
      seed_(seed) {
  require(rows_per_block.size() == col_partition_.blocks(),
          "BlockDiagonalGaussian: one row count per column block required");
  blocks_.reserve(col_partition_.blocks());
  for (std::size_t i = 0; i < col_partition_.blocks(); ++i) {
    Rng rng(stream_seed(seed, i));
    const std::size_t m = rows_per_block[i];
    blocks_.push_back(gaussian_vector(rng, m * col_partition_.block_size(i),
                                      1.0 / std::sqrt(static_cast<double>(m))));
  }
}

BlockDiagonalGaussian BlockDiagonalGaussian::with_ratio(const Partition& columns, double ratio,
                                                        std::uint64_t seed) {
  require(ratio > 0.0 && std::isfinite(ratio), "BlockDiagonalGaussian: ratio must be positive");
  std::vector<std::size_t> counts(columns.blocks());
  for (std::size_t i = 0; i < columns.blocks(); ++i)
    counts[i] = static_cast<std::size_t>(std::floor(ratio * static_cast<double>(columns.block_size(i))));
  return BlockDiagonalGaussian(columns, std::move(counts), seed);
}

Vector BlockDiagonalGaussian::apply_rows(RowRange range, std::span<const double> x) const {
  check_apply(range, x);
  Vector out(range.size());
  if (range.size() == 0) return out;
  std::size_t block = row_partition_.block_of(range.begin);
  for (std::size_t r = range.begin; r < range.end; ++r) {
    while (r >= row_partition_.offset(block + 1)) ++block;
    const std::size_t n_i = col_partition_.block_size(block);
    const double* row = blocks_[block].data() + (r - row_partition_.offset(block)) * n_i;
    const double* xb = x.data() + col_partition_.offset(block);
    double s = 0.0;
    for (std::size_t c = 0; c < n_i; ++c) s += row[c] * xb[c];
    out[r - range.begin] = s;
  }
  return out;
}

void BlockDiagonalGaussian::accumulate_rows_adjoint(RowRange range, std::span<const double> r,
                                                    std::span<double> out) const {
  check_adjoint(range, r, out);
  if (range.size() == 0) return;
  std::size_t block = row_partition_.block_of(range.begin);
  for (std::size_t row = range.begin; row < range.end; ++row) {
    while (row >= row_partition_.offset(block + 1)) ++block;
    const std::size_t n_i = col_partition_.block_size(block);
    const double* a = blocks_[block].data() + (row - row_partition_.offset(block)) * n_i;
    double* ob = out.data() + col_partition_.offset(block);
    const double v = r[row - range.begin];
    for (std::size_t c = 0; c < n_i; ++c) ob[c] += a[c] * v;
  }
}

std::optional<RowRange> BlockDiagonalGaussian::coupled_rows(RowRange columns) const {
  const auto& offs = col_partition_.offsets();
  auto it = std::lower_bound(offs.begin(), offs.end(), columns.begin);
  if (it == offs.end() || *it != columns.begin) return std::nullopt;
  const auto i = static_cast<std::size_t>(it - offs.begin());
  if (i >= col_partition_.blocks() || offs[i + 1] != columns.end) return std::nullopt;
  return RowRange{row_partition_.offset(i), row_partition_.offset(i + 1)};
}

// ---------------------------------------------------------------------------
// SparseMatrix

SparseMatrix::SparseMatrix(std::size_t rows, std::size_t cols, std::vector<Triplet> triplets)
    : rows_(rows), cols_(cols), row_start_(rows + 1, 0) {
  for (const auto& t : triplets)
    require(t.row < rows && t.col < cols, "SparseMatrix: triplet index out of range");
  std::sort(triplets.begin(), triplets.end(), [](const Triplet& a, const Triplet& b) {
    return a.row != b.row ? a.row < b.row : a.col < b.col;
  });
  for (std::size_t k = 0; k < triplets.size(); ++k) {
    const auto& t = triplets[k];
    if (k > 0 && triplets[k - 1].row == t.row && triplets[k - 1].col == t.col) {
      values_.back() += t.value;
      continue;
    }
    col_index_.push_back(t.col);
    values_.push_back(t.value);
    ++row_start_[t.row + 1];
  }
  for (std::size_t r = 0; r < rows; ++r) row_start_[r + 1] += row_start_[r];
}

std::span<const std::size_t> SparseMatrix::row_columns(std::size_t r) const {
  return std::span<const std::size_t>(col_index_).subspan(row_start_[r], row_start_[r + 1] - row_start_[r]);
}

std::span<const double> SparseMatrix::row_values(std::size_t r) const {
  return std::span<const double>(values_).subspan(row_start_[r], row_start_[r + 1] - row_start_[r]);
}

Vector SparseMatrix::apply_rows(RowRange range, std::span<const double> x) const {
  check_apply(range, x);
  Vector out(range.size());
  for (std::size_t r = range.begin; r < range.end; ++r) {
    double s = 0.0;
    for (std::size_t k = row_start_[r]; k < row_start_[r + 1]; ++k) s += values_[k] * x[col_index_[k]];
    out[r - range.begin] = s;
  }
  return out;
}

void SparseMatrix::accumulate_rows_adjoint(RowRange range, std::span<const double> r,
                                           std::span<double> out) const {
  check_adjoint(range, r, out);
  for (std::size_t row = range.begin; row < range.end; ++row) {
    const double v = r[row - range.begin];
    for (std::size_t k = row_start_[row]; k < row_start_[row + 1]; ++k) out[col_index_[k]] += values_[k] * v;
  }
}

SparseMatrix SparseMatrix::with_columns_permuted(std::span<const std::size_t> new_col_of_old) const {
  require(new_col_of_old.size() == cols_, "SparseMatrix: permutation length mismatch");
  std::vector<Triplet> t;
  t.reserve(values_.size());
  for (std::size_t r = 0; r < rows_; ++r)
    for (std::size_t k = row_start_[r]; k < row_start_[r + 1]; ++k)
      t.push_back({r, new_col_of_old[col_index_[k]], values_[k]});
  return SparseMatrix(rows_, cols_, std::move(t));
}

void SparseMatrix::write_triplets(std::ostream& out) const {
  char buf[64];
  for (std::size_t r = 0; r < rows_; ++r) {
    for (std::size_t k = row_start_[r]; k < row_start_[r + 1]; ++k) {
      std::snprintf(buf, sizeof buf, "%.17g", values_[k]);
      out << r << ' ' << col_index_[k] << ' ' << buf << '\n';
    }
  }
}

// ---------------------------------------------------------------------------
// Radon

namespace {

// Exact intersection lengths of one ray with the unit-pixel grid covering
// [-h, h]^2. The ray is { s*(cos t, sin t) + u*(-sin t, cos t) }.
void trace_ray(std::size_t n_pix, double theta, double s, std::size_t row,
               std::vector<SparseMatrix::Triplet>& out) {
  const double h = static_cast<double>(n_pix) / 2.0;
  const double c = std::cos(theta);
  const double sn = std::sin(theta);
  const double px = s * c, py = s * sn;  // foot point
  const double dx = -sn, dy = c;         // direction (unit)
  constexpr double eps = 1e-12;

  double u_lo = -std::numeric_limits<double>::infinity();
  double u_hi = std::numeric_limits<double>::infinity();
  bool misses = false;
  auto clip = [&](double p, double d) {
    if (std::abs(d) < eps) {
      misses = misses || p < -h || p > h;
      return;
    }
    double a = (-h - p) / d, b = (h - p) / d;
    if (a > b) std::swap(a, b);
    u_lo = std::max(u_lo, a);
    u_hi = std::min(u_hi, b);
  };
  clip(px, dx);
  clip(py, dy);
  if (misses || !(u_hi > u_lo + eps)) return;

  std::vector<double> cuts{u_lo, u_hi};
  for (std::size_t k = 0; k <= n_pix; ++k) {
    const double line = -h + static_cast<double>(k);
    if (std::abs(dx) >= eps) {
      const double u = (line - px) / dx;
      if (u > u_lo && u < u_hi) cuts.push_back(u);
    }
    if (std::abs(dy) >= eps) {
      const double u = (line - py) / dy;
      if (u > u_lo && u < u_hi) cuts.push_back(u);
    }
  }
  std::sort(cuts.begin(), cuts.end());

  const auto last = static_cast<double>(n_pix - 1);
  for (std::size_t k = 0; k + 1 < cuts.size(); ++k) {
    const double len = cuts[k + 1] - cuts[k];
    if (len <= eps) continue;
    const double um = 0.5 * (cuts[k] + cuts[k + 1]);
    const double x = px + um * dx, y = py + um * dy;
    const double col = std::clamp(std::floor(x + h), 0.0, last);
    const double rr = std::clamp(std::floor(h - y), 0.0, last);
    out.push_back({row, static_cast<std::size_t>(rr) * n_pix + static_cast<std::size_t>(col), len});
  }
}

SparseMatrix radon_matrix(std::size_t n_pix, const std::vector<double>& angles, std::size_t detectors) {
  const double spacing = static_cast<double>(n_pix) * std::numbers::sqrt2 / static_cast<double>(detectors);
  std::vector<SparseMatrix::Triplet> t;
  for (std::size_t a = 0; a < angles.size(); ++a) {
    for (std::size_t d = 0; d < detectors; ++d) {
      const double s = (static_cast<double>(d) - (static_cast<double>(detectors) - 1.0) / 2.0) * spacing;
      trace_ray(n_pix, angles[a], s, a * detectors + d, t);
    }
  }
  return SparseMatrix(angles.size() * detectors, n_pix * n_pix, std::move(t));
}

}  // namespace

ParallelBeamRadon::ParallelBeamRadon(std::size_t n_pix, std::vector<double> angles, std::size_t detectors)
    : ParallelBeamRadon(n_pix, angles, detectors, radon_matrix(n_pix, angles, detectors)) {}

ParallelBeamRadon::ParallelBeamRadon(std::size_t n_pix, std::vector<double> angles, std::size_t detectors,
                                     SparseMatrix matrix)
    : n_pix_(n_pix), angles_(std::move(angles)), detectors_(detectors), matrix_(std::move(matrix)) {
  require(n_pix >= 1 && !angles_.empty() && detectors >= 1, "ParallelBeamRadon: counts must be >= 1");
}

double ParallelBeamRadon::detector_spacing() const {
  return static_cast<double>(n_pix_) * std::numbers::sqrt2 / static_cast<double>(detectors_);
}

RowRange ParallelBeamRadon::angle_rows(std::size_t angle) const {
  require(angle < angles_.size(), "ParallelBeamRadon: angle index out of range");
  return {angle * detectors_, (angle + 1) * detectors_};
}

ParallelBeamRadon ParallelBeamRadon::with_columns_permuted(std::span<const std::size_t> new_col_of_old) const {
  return ParallelBeamRadon(n_pix_, angles_, detectors_, matrix_.with_columns_permuted(new_col_of_old));
}

Vector ParallelBeamRadon::apply_rows(RowRange range, std::span<const double> x) const {
  return matrix_.apply_rows(range, x);
}

void ParallelBeamRadon::accumulate_rows_adjoint(RowRange range, std::span<const double> r,
                                                std::span<double> out) const {
  matrix_.accumulate_rows_adjoint(range, r, out);
}

ParallelBeamRadon build_radon(std::size_t n_pix, std::size_t n_angles, std::size_t n_detectors) {
  require(n_pix >= 1 && n_angles >= 1 && n_detectors >= 1, "build_radon: counts must be >= 1");
  std::vector<double> angles(n_angles);
  for (std::size_t a = 0; a < n_angles; ++a)
    angles[a] = std::numbers::pi * static_cast<double>(a) / static_cast<double>(n_angles);
  return ParallelBeamRadon(n_pix, std::move(angles), n_detectors);
}

// ---------------------------------------------------------------------------
// Measurement blocks, Lipschitz estimation, synthesis

RowRange MeasurementPartition::range(std::size_t j) const {
  require(j < count(), "MeasurementPartition: block index out of range");
  return {rows_.offset(j), rows_.offset(j + 1)};
}

double lipschitz_estimate_rows(const LinearOperator& a, RowRange range, const PowerIterationOptions& opts) {
  require(opts.max_iters >= 1, "lipschitz_estimate: need at least one iteration");
  Rng rng(opts.seed);
  Vector v = gaussian_vector(rng, a.cols());
  double nv = norm(v);
  for (auto& e : v) e /= nv;
  double mu = 0.0;
  for (std::size_t it = 0; it < opts.max_iters; ++it) {
    const Vector u = a.apply_rows_adjoint(range, a.apply_rows(range, v));
    const double nu = norm(u);
    if (nu == 0.0) return 0.0;
    const double prev = mu;
    mu = nu;
    for (std::size_t k = 0; k < v.size(); ++k) v[k] = u[k] / nu;
    if (it > 0 && std::abs(mu - prev) <= opts.tol * mu) break;
  }
  return 2.0 * mu;
}

double lipschitz_estimate(const LinearOperator& a, const PowerIterationOptions& opts) {
  return lipschitz_estimate_rows(a, {0, a.rows()}, opts);
}

Vector synthesize_measurements(const LinearOperator& a, std::span<const double> x_true,
                               double input_snr_db, std::uint64_t seed) {
  require(!std::isnan(input_snr_db), "synthesize_measurements: SNR is NaN");
  Vector y = a.apply(x_true);
  if (input_snr_db == kNoiseless) return y;
  require(std::isfinite(input_snr_db), "synthesize_measurements: SNR must be finite or +inf");
  const double signal = norm(y);
  require(signal > 0.0, "synthesize_measurements: zero signal makes the noise scale undefined");
  const double stddev =
      signal / (std::pow(10.0, input_snr_db / 20.0) * std::sqrt(static_cast<double>(y.size())));
  Rng rng(seed);
  std::normal_distribution<double> noise(0.0, stddev);
  for (auto& v : y) v += noise(rng);
  return y;
}

// ---------------------------------------------------------------------------
// LeastSquaresFidelity

LeastSquaresFidelity::LeastSquaresFidelity(std::shared_ptr<const LinearOperator> a, Vector y,
                                           MeasurementPartition blocks, const PowerIterationOptions& power)
    : a_(std::move(a)), y_(std::move(y)), blocks_(std::move(blocks)) {
  require(a_ != nullptr, "LeastSquaresFidelity: null operator");
  require(y_.size() == a_->rows(), "LeastSquaresFidelity: measurement length does not match operator rows");
  require(blocks_.measurements() == a_->rows(),
          "LeastSquaresFidelity: measurement partition does not cover all rows");
  lipschitz_ = lipschitz_estimate(*a_, power);
  if (blocks_.count() == 1) {
    component_lipschitz_max_ = lipschitz_;
  } else {
    component_lipschitz_max_ = 0.0;
    const double l = static_cast<double>(blocks_.count());
    for (std::size_t j = 0; j < blocks_.count(); ++j)
      component_lipschitz_max_ =
          std::max(component_lipschitz_max_, l * lipschitz_estimate_rows(*a_, blocks_.range(j), power));
  }
}

void LeastSquaresFidelity::check_x(std::span<const double> x) const {
  require(x.size() == a_->cols(), "LeastSquaresFidelity: x has length " + std::to_string(x.size()) +
                                      ", expected " + std::to_string(a_->cols()));
}

double LeastSquaresFidelity::value(std::span<const double> x) const {
  check_x(x);
  return norm_sq(subtract(y_, a_->apply(x)));
}

double LeastSquaresFidelity::component_value(std::span<const double> x, std::size_t j) const {
  check_x(x);
  const RowRange r = blocks_.range(j);
  const Vector ax = a_->apply_rows(r, x);
  double s = 0.0;
  for (std::size_t k = 0; k < r.size(); ++k) {
    const double d = y_[r.begin + k] - ax[k];
    s += d * d;
  }
  return static_cast<double>(blocks_.count()) * s;
}

Vector LeastSquaresFidelity::grad_full(std::span<const double> x) const {
  check_x(x);
  Vector res = a_->apply(x);
  for (std::size_t k = 0; k < res.size(); ++k) res[k] -= y_[k];
  Vector g(a_->cols(), 0.0);
  a_->accumulate_rows_adjoint({0, a_->rows()}, res, g);
  for (auto& v : g) v = 2.0 * v;
  return g;
}

void LeastSquaresFidelity::accumulate_component(std::span<const double> x, std::size_t j, double weight,
                                                std::span<double> acc) const {
  const RowRange r = blocks_.range(j);
  Vector res = a_->apply_rows(r, x);
  for (std::size_t k = 0; k < res.size(); ++k) res[k] = (res[k] - y_[r.begin + k]) * weight;
  a_->accumulate_rows_adjoint(r, res, acc);
}

Vector LeastSquaresFidelity::grad_component(std::span<const double> x, std::size_t j) const {
  check_x(x);
  require(j < blocks_.count(), "grad_component: measurement block index out of range");
  Vector g(a_->cols(), 0.0);
  accumulate_component(x, j, 1.0, g);
  const double scale = 2.0 * static_cast<double>(blocks_.count());
  for (auto& v : g) v *= scale;
  return g;
}

std::vector<std::size_t> LeastSquaresFidelity::draw_components(std::size_t w, Rng& rng) const {
  std::vector<std::size_t> draws(w);
  for (auto& j : draws) j = uniform_index(rng, blocks_.count());
  return draws;
}

namespace {

std::vector<double> draw_counts(std::span<const std::size_t> draws, std::size_t l) {
  std::vector<double> counts(l, 0.0);
  for (std::size_t j : draws) {
    require(j < l, "minibatch: component index out of range");
    counts[j] += 1.0;
  }
  return counts;
}

}  // namespace

Vector LeastSquaresFidelity::minibatch_grad(std::span<const double> x,
                                            std::span<const std::size_t> draws) const {
  check_x(x);
  require(!draws.empty(), "minibatch_grad: minibatch size must be >= 1");
  const std::size_t l = blocks_.count();
  const auto counts = draw_counts(draws, l);
  Vector acc(a_->cols(), 0.0);
  for (std::size_t j = 0; j < l; ++j)
    if (counts[j] > 0.0) accumulate_component(x, j, counts[j], acc);
  const double scale = 2.0 * static_cast<double>(l) / static_cast<double>(draws.size());
  for (auto& v : acc) v *= scale;
  return acc;
}

Vector LeastSquaresFidelity::stochastic_grad(std::span<const double> x, std::size_t w, Rng& rng) const {
  require(w >= 1, "stochastic_grad: minibatch size must be >= 1");
  if (blocks_.count() == 1) return grad_full(x);
  const auto draws = draw_components(w, rng);
  return minibatch_grad(x, draws);
}

Vector LeastSquaresFidelity::grad_block(std::span<const double> x, const Partition& p, std::size_t i) const {
  check_x(x);
  require(p.size() == x.size(), "grad_block: partition does not match dimension");
  require(i < p.blocks(), "grad_block: block index out of range");
  const RowRange cols{p.offset(i), p.offset(i) + p.block_size(i)};
  if (auto rows = a_->coupled_rows(cols)) {
    Vector res = a_->apply_rows(*rows, x);
    for (std::size_t k = 0; k < res.size(); ++k) res[k] -= y_[rows->begin + k];
    Vector g(a_->cols(), 0.0);
    a_->accumulate_rows_adjoint(*rows, res, g);
    Vector out(cols.size());
    for (std::size_t k = 0; k < cols.size(); ++k) out[k] = 2.0 * g[cols.begin + k];
    return out;
  }
  return extract(grad_full(x), i, p);
}

Vector LeastSquaresFidelity::minibatch_grad_block(std::span<const double> x,
                                                  std::span<const std::size_t> draws, const Partition& p,
                                                  std::size_t i) const {
  check_x(x);
  require(p.size() == x.size(), "minibatch_grad_block: partition does not match dimension");
  require(i < p.blocks(), "minibatch_grad_block: block index out of range");
  require(!draws.empty(), "minibatch_grad_block: minibatch size must be >= 1");
  const RowRange cols{p.offset(i), p.offset(i) + p.block_size(i)};
  const auto rows = a_->coupled_rows(cols);
  if (!rows) return extract(minibatch_grad(x, draws), i, p);

  const std::size_t l = blocks_.count();
  const auto counts = draw_counts(draws, l);
  Vector acc(a_->cols(), 0.0);
  for (std::size_t j = 0; j < l; ++j) {
    if (counts[j] == 0.0) continue;
    const RowRange rj = blocks_.range(j);
    if (rj.end <= rows->begin || rj.begin >= rows->end) continue;
    accumulate_component(x, j, counts[j], acc);
  }
  const double scale = 2.0 * static_cast<double>(l) / static_cast<double>(draws.size());
  Vector out(cols.size());
  for (std::size_t k = 0; k < cols.size(); ++k) out[k] = acc[cols.begin + k] * scale;
  return out;
}

}  // namespace asyncred
