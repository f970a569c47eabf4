#include "advkit/tensor.hpp"

#include <cmath>
#include <cstring>
#include <utility>

#include "advkit/error.hpp"

namespace advkit {

Shape::Shape(std::initializer_list<std::size_t> dims)
    : Shape(std::span<const std::size_t>(dims.begin(), dims.size())) {}

Shape::Shape(std::span<const std::size_t> dims) {
  if (dims.size() > kMaxRank)
    fail(Errc::invalid_argument, "rank " + std::to_string(dims.size()) + " exceeds 4");
  for (std::size_t d : dims)
    if (d == 0) fail(Errc::invalid_argument, "zero extent in shape");
  rank_ = dims.size();
  for (std::size_t i = 0; i < rank_; ++i) dims_[i] = dims[i];
}

std::size_t Shape::operator[](std::size_t axis) const {
  if (axis >= rank_)
    fail(Errc::out_of_range, "axis " + std::to_string(axis) + " of shape " + str());
  return dims_[axis];
}

std::size_t Shape::numel() const noexcept {
  if (rank_ == 0) return 0;
  std::size_t n = 1;
  for (std::size_t i = 0; i < rank_; ++i) n *= dims_[i];
  return n;
}

std::string Shape::str() const {
  std::string s = "[";
  for (std::size_t i = 0; i < rank_; ++i) {
    if (i) s += ",";
    s += std::to_string(dims_[i]);
  }
  return s + "]";
}

Tensor::Tensor(Shape shape, float fill) : shape_(shape), data_(shape.numel(), fill) {
  if (!std::isfinite(fill)) fail(Errc::non_finite, "non-finite fill value");
}

Tensor::Tensor(Shape shape, std::vector<float> values) : shape_(shape), data_(std::move(values)) {
  if (shape_.numel() != data_.size())
    fail(Errc::shape_mismatch, "shape " + shape_.str() + " needs " +
                                   std::to_string(shape_.numel()) + " values, got " +
                                   std::to_string(data_.size()));
  require_finite("tensor constructor");
}

Tensor Tensor::reshaped(Shape shape) const& {
  Tensor copy = *this;
  return std::move(copy).reshaped(shape);
}

Tensor Tensor::reshaped(Shape shape) && {
  if (shape.numel() != data_.size())
    fail(Errc::shape_mismatch, "cannot reshape " + shape_.str() + " to " + shape.str());
  shape_ = shape;
  return std::move(*this);
}

bool Tensor::all_finite() const noexcept {
  for (float v : data_)
    if (!std::isfinite(v)) return false;
  return true;
}

void Tensor::require_finite(const char* what) const {
  if (!all_finite()) fail(Errc::non_finite, std::string("non-finite value in ") + what);
}

bool bit_equal(const Tensor& a, const Tensor& b) noexcept {
  if (!(a.shape() == b.shape())) return false;
  if (a.numel() == 0) return true;
  return std::memcmp(a.data().data(), b.data().data(), a.numel() * sizeof(float)) == 0;
}

Tensor stack(std::span<const Tensor> items) {
  if (items.empty()) fail(Errc::invalid_argument, "stack of zero tensors");
  const Shape& inner = items.front().shape();
  if (inner.rank() >= Shape::kMaxRank)
    fail(Errc::invalid_argument, "stack would exceed rank 4");
  std::vector<std::size_t> dims{items.size()};
  for (std::size_t d : inner.dims()) dims.push_back(d);
  std::vector<float> out;
  out.reserve(items.size() * inner.numel());
  for (const Tensor& t : items) {
    if (!(t.shape() == inner))
      fail(Errc::shape_mismatch, "stack: " + t.shape().str() + " vs " + inner.str());
    out.insert(out.end(), t.data().begin(), t.data().end());
  }
  Tensor result(Shape(std::span<const std::size_t>(dims)), 0.0f);
  std::memcpy(result.data().data(), out.data(), out.size() * sizeof(float));
  return result;
}

Tensor unstack_one(const Tensor& batch, std::size_t n) {
  if (batch.rank() < 2) fail(Errc::invalid_argument, "unstack needs rank >= 2");
  if (n >= batch.dim(0))
    fail(Errc::out_of_range, "index " + std::to_string(n) + " of batch " + batch.shape().str());
  auto dims = batch.shape().dims().subspan(1);
  Tensor out(Shape(dims), 0.0f);
  const std::size_t stride = out.numel();
  std::memcpy(out.data().data(), batch.data().data() + n * stride, stride * sizeof(float));
  return out;
}

}  // namespace advkit
