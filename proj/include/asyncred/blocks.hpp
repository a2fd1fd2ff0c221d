// Block decomposition of the variable space.
//
// Flat vectors are stored block-major: every coordinate of block 0, then
// block 1, and so on. Extraction of a block is therefore a contiguous slice,
// and concurrent writers to different blocks touch disjoint memory.
#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "asyncred/common.hpp"

namespace asyncred {

class Partition {
 public:
  /// offsets must start at 0 and be strictly increasing; the last entry is n.
  explicit Partition(std::vector<std::size_t> offsets);

  std::size_t size() const { return offsets_.back(); }
  std::size_t blocks() const { return offsets_.size() - 1; }
  std::size_t offset(std::size_t i) const { return offsets_.at(i); }
  std::size_t block_size(std::size_t i) const;
  /// Block owning coordinate `index`.
  std::size_t block_of(std::size_t index) const;
  const std::vector<std::size_t>& offsets() const { return offsets_; }

  bool operator==(const Partition&) const = default;

 private:
  std::vector<std::size_t> offsets_;
};

/// Splits n coordinates into b blocks whose sizes differ by at most one;
/// the remainder goes to the earliest blocks.
Partition make_uniform_partition(std::size_t n, std::size_t b);

/// View of block i inside x (no copy).
std::span<const double> block_view(std::span<const double> x, std::size_t i, const Partition& p);
std::span<double> block_view(std::span<double> x, std::size_t i, const Partition& p);

Vector extract(std::span<const double> x, std::size_t i, const Partition& p);
Vector inject(std::span<const double> v, std::size_t i, const Partition& p);

/// Tiling of a height x width image into equal rectangular blocks, with the
/// permutation between row-major pixels and block-major flat coordinates.
class GridPartition {
 public:
  GridPartition(Geometry image, std::size_t block_h, std::size_t block_w);

  const Partition& partition() const { return partition_; }
  Geometry image() const { return image_; }
  Geometry block_geometry() const { return {block_h_, block_w_}; }
  std::size_t blocks_down() const { return image_.height / block_h_; }
  std::size_t blocks_across() const { return image_.width / block_w_; }

  /// Flat (block-major) coordinate of row-major pixel `pixel`.
  std::size_t flat_of_pixel(std::size_t pixel) const { return flat_of_pixel_[pixel]; }
  const std::vector<std::size_t>& flat_of_pixel() const { return flat_of_pixel_; }

  Vector to_block_major(std::span<const double> row_major) const;
  Vector to_row_major(std::span<const double> flat) const;

 private:
  Geometry image_;
  std::size_t block_h_;
  std::size_t block_w_;
  Partition partition_;
  std::vector<std::size_t> flat_of_pixel_;
};

}  // namespace asyncred
