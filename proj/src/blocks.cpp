#include "asyncred/blocks.hpp"

#include <algorithm>
#include <string>

namespace asyncred {

Partition::Partition(std::vector<std::size_t> offsets) : offsets_(std::move(offsets)) {
  require(offsets_.size() >= 2, "Partition: need at least one block");
  require(offsets_.front() == 0, "Partition: offsets must start at 0");
  for (std::size_t k = 1; k < offsets_.size(); ++k)
    require(offsets_[k] > offsets_[k - 1], "Partition: offsets must be strictly increasing");
}

std::size_t Partition::block_size(std::size_t i) const {
  require(i < blocks(), "Partition: block index out of range");
  return offsets_[i + 1] - offsets_[i];
}

std::size_t Partition::block_of(std::size_t index) const {
  require(index < size(), "Partition: coordinate out of range");
  auto it = std::upper_bound(offsets_.begin(), offsets_.end(), index);
  return static_cast<std::size_t>(it - offsets_.begin()) - 1;
}

Partition make_uniform_partition(std::size_t n, std::size_t b) {
  require(b >= 1 && b <= n, "make_uniform_partition: need 1 <= b <= n (n=" + std::to_string(n) +
                                ", b=" + std::to_string(b) + ")");
  std::vector<std::size_t> offsets(b + 1, 0);
  const std::size_t base = n / b;
  const std::size_t extra = n % b;
  for (std::size_t i = 0; i < b; ++i) offsets[i + 1] = offsets[i] + base + (i < extra ? 1 : 0);
  return Partition(std::move(offsets));
}

std::span<const double> block_view(std::span<const double> x, std::size_t i, const Partition& p) {
  require(x.size() == p.size(), "block_view: vector length does not match partition");
  require(i < p.blocks(), "block_view: block index out of range");
  return x.subspan(p.offset(i), p.block_size(i));
}

std::span<double> block_view(std::span<double> x, std::size_t i, const Partition& p) {
  require(x.size() == p.size(), "block_view: vector length does not match partition");
  require(i < p.blocks(), "block_view: block index out of range");
  return x.subspan(p.offset(i), p.block_size(i));
}

Vector extract(std::span<const double> x, std::size_t i, const Partition& p) {
  auto v = block_view(x, i, p);
  return Vector(v.begin(), v.end());
}

Vector inject(std::span<const double> v, std::size_t i, const Partition& p) {
  require(i < p.blocks(), "inject: block index out of range");
  require(v.size() == p.block_size(i), "inject: block size mismatch");
  Vector x(p.size(), 0.0);
  std::copy(v.begin(), v.end(), x.begin() + static_cast<std::ptrdiff_t>(p.offset(i)));
  return x;
}

namespace {

Partition grid_partition(Geometry image, std::size_t block_h, std::size_t block_w) {
  require(block_h >= 1 && block_w >= 1, "GridPartition: block dimensions must be positive");
  require(image.height % block_h == 0 && image.width % block_w == 0,
          "GridPartition: block size must divide the image size");
  const std::size_t count = (image.height / block_h) * (image.width / block_w);
  std::vector<std::size_t> offsets(count + 1);
  for (std::size_t i = 0; i <= count; ++i) offsets[i] = i * block_h * block_w;
  return Partition(std::move(offsets));
}

}  // namespace

GridPartition::GridPartition(Geometry image, std::size_t block_h, std::size_t block_w)
    : image_(image),
      block_h_(block_h),
      block_w_(block_w),
      partition_(grid_partition(image, block_h, block_w)),
      flat_of_pixel_(image.size()) {
  const std::size_t across = image.width / block_w;
  for (std::size_t r = 0; r < image.height; ++r) {
    for (std::size_t c = 0; c < image.width; ++c) {
      const std::size_t block = (r / block_h) * across + (c / block_w);
      const std::size_t local = (r % block_h) * block_w + (c % block_w);
      flat_of_pixel_[r * image.width + c] = partition_.offset(block) + local;
    }
  }
}

Vector GridPartition::to_block_major(std::span<const double> row_major) const {
  require(row_major.size() == image_.size(), "GridPartition: image size mismatch");
  Vector flat(row_major.size());
  for (std::size_t p = 0; p < row_major.size(); ++p) flat[flat_of_pixel_[p]] = row_major[p];
  return flat;
}

Vector GridPartition::to_row_major(std::span<const double> flat) const {
  require(flat.size() == image_.size(), "GridPartition: vector size mismatch");
  Vector img(flat.size());
  for (std::size_t p = 0; p < flat.size(); ++p) img[p] = flat[flat_of_pixel_[p]];
  return img;
}

}  // namespace asyncred
