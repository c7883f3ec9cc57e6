#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstring>
#include <initializer_list>
#include <memory>
#include <new>
#include <vector>

#include "mixgan/common.hpp"
#include "mixgan/rng.hpp"

namespace mixgan {

namespace detail {

/// Allocator pinning every buffer to a 64-byte boundary. Vectorized kernels
/// (ours and Eigen's) split loops based on the pointer's alignment; with a
/// fixed alignment the split — and therefore the floating-point accumulation
/// order — is identical for equal data no matter where the heap placed it,
/// which keeps training bitwise reproducible across runs and object copies.
template <typename T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::size_t kAlign = 64;

  AlignedAllocator() = default;
  template <typename U>
  AlignedAllocator(const AlignedAllocator<U>&) {}

  T* allocate(std::size_t n) {
    return static_cast<T*>(::operator new(n * sizeof(T), std::align_val_t(kAlign)));
  }
  void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, std::align_val_t(kAlign)); }

  template <typename U>
  bool operator==(const AlignedAllocator<U>&) const { return true; }
  template <typename U>
  bool operator!=(const AlignedAllocator<U>&) const { return false; }
};

}  // namespace detail

// Dense row-major tensor of real_t with shared storage. Copies are shallow;
// clone() makes them deep. reshaped() shares storage with a new shape.
class Tensor {
 public:
  using Storage = std::vector<real_t, detail::AlignedAllocator<real_t>>;

  Tensor() = default;

  explicit Tensor(Shape shape)
      : shape_(std::move(shape)),
        storage_(std::make_shared<Storage>(static_cast<std::size_t>(mixgan::numel(shape_)), 0.0)) {}

  Tensor(Shape shape, real_t fill) : Tensor(std::move(shape)) {
    std::fill(storage_->begin(), storage_->end(), fill);
  }

  Tensor(Shape shape, std::initializer_list<real_t> values) : Tensor(std::move(shape)) {
    check_shape(static_cast<std::int64_t>(values.size()) == numel(),
                "Tensor: initializer size does not match shape " + shape_str(shape_));
    std::copy(values.begin(), values.end(), storage_->begin());
  }

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
  static Tensor ones(Shape shape) { return Tensor(std::move(shape), 1.0); }
  static Tensor full(Shape shape, real_t v) { return Tensor(std::move(shape), v); }
  static Tensor scalar(real_t v) { return Tensor(Shape{}, {v}); }

  static Tensor from_vector(Shape shape, std::vector<real_t> values) {
    Tensor t;
    t.shape_ = std::move(shape);
    check_shape(static_cast<std::int64_t>(values.size()) == mixgan::numel(t.shape_),
                "Tensor::from_vector: size does not match shape " + shape_str(t.shape_));
    t.storage_ = std::make_shared<Storage>(values.begin(), values.end());
    return t;
  }

  bool defined() const { return storage_ != nullptr; }
  const Shape& shape() const { return shape_; }
  std::int64_t dim() const { return static_cast<std::int64_t>(shape_.size()); }
  std::int64_t size(std::int64_t i) const { return shape_.at(static_cast<std::size_t>(i)); }
  std::int64_t numel() const { return mixgan::numel(shape_); }

  real_t* data() { return storage_->data(); }
  const real_t* data() const { return storage_->data(); }

  real_t& operator[](std::int64_t i) { return (*storage_)[static_cast<std::size_t>(i)]; }
  real_t operator[](std::int64_t i) const { return (*storage_)[static_cast<std::size_t>(i)]; }

  /// Value of a scalar (or single-element) tensor.
  real_t item() const {
    check_shape(numel() == 1, "Tensor::item: tensor has " + std::to_string(numel()) + " elements");
    return (*storage_)[0];
  }

  /// Row-major offset helpers for the common ranks.
  real_t& at(std::int64_t i, std::int64_t j) { return data()[i * shape_[1] + j]; }
  real_t at(std::int64_t i, std::int64_t j) const { return data()[i * shape_[1] + j]; }
  real_t& at(std::int64_t i, std::int64_t j, std::int64_t k) {
    return data()[(i * shape_[1] + j) * shape_[2] + k];
  }
  real_t at(std::int64_t i, std::int64_t j, std::int64_t k) const {
    return data()[(i * shape_[1] + j) * shape_[2] + k];
  }
  real_t& at(std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w) {
    return data()[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
  }
  real_t at(std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w) const {
    return data()[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
  }

  Tensor clone() const {
    Tensor t;
    t.shape_ = shape_;
    t.storage_ = std::make_shared<Storage>(*storage_);
    return t;
  }

  /// Same storage, new shape (element count must match).
  Tensor reshaped(Shape shape) const {
    check_shape(mixgan::numel(shape) == numel(),
                "reshape: cannot view " + shape_str(shape_) + " as " + shape_str(shape));
    Tensor t;
    t.shape_ = std::move(shape);
    t.storage_ = storage_;
    return t;
  }

  bool all_finite() const {
    for (real_t v : *storage_)
      if (!std::isfinite(v)) return false;
    return true;
  }

  bool same_values(const Tensor& other) const {
    return shape_ == other.shape_ &&
           std::memcmp(data(), other.data(), sizeof(real_t) * static_cast<std::size_t>(numel())) == 0;
  }

  // Eigen bridges (row-major matrix view of a 2-D tensor, flat array view).
  using MatrixRM = Eigen::Matrix<real_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

  Eigen::Map<MatrixRM> matrix() {
    check_shape(dim() == 2, "Tensor::matrix: need a 2-D tensor, got " + shape_str(shape_));
    return {data(), shape_[0], shape_[1]};
  }
  Eigen::Map<const MatrixRM> matrix() const {
    check_shape(dim() == 2, "Tensor::matrix: need a 2-D tensor, got " + shape_str(shape_));
    return {data(), shape_[0], shape_[1]};
  }
  Eigen::Map<Eigen::Array<real_t, Eigen::Dynamic, 1>> array() { return {data(), numel()}; }
  Eigen::Map<const Eigen::Array<real_t, Eigen::Dynamic, 1>> array() const { return {data(), numel()}; }

 private:
  Shape shape_;
  std::shared_ptr<Storage> storage_;
};

// ---------------------------------------------------------------------------
// Raw tensor helpers (no autodiff) used by data-level code.
// ---------------------------------------------------------------------------

inline Tensor randn(const Shape& shape, Rng& rng) {
  Tensor t(shape);
  for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = rng.normal();
  return t;
}

inline Tensor rand_uniform(const Shape& shape, Rng& rng, real_t lo = 0.0, real_t hi = 1.0) {
  Tensor t(shape);
  for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

inline real_t min_value(const Tensor& t) {
  real_t m = t[0];
  for (std::int64_t i = 1; i < t.numel(); ++i) m = std::min(m, t[i]);
  return m;
}

inline real_t max_value(const Tensor& t) {
  real_t m = t[0];
  for (std::int64_t i = 1; i < t.numel(); ++i) m = std::max(m, t[i]);
  return m;
}

inline real_t sum_value(const Tensor& t) { return t.array().sum(); }

inline real_t mean_value(const Tensor& t) { return t.numel() ? sum_value(t) / static_cast<real_t>(t.numel()) : 0.0; }

inline real_t max_abs_diff(const Tensor& a, const Tensor& b) {
  check_shape(a.shape() == b.shape(), "max_abs_diff: shape mismatch");
  return (a.array() - b.array()).abs().maxCoeff();
}

/// Slice of a batched tensor: item `index` of [N, ...] as [...] (deep copy).
inline Tensor batch_item(const Tensor& batch, std::int64_t index) {
  check_shape(batch.dim() >= 1, "batch_item: need a batched tensor");
  const std::int64_t per = batch.numel() / batch.size(0);
  Shape s(batch.shape().begin() + 1, batch.shape().end());
  Tensor out(s);
  std::memcpy(out.data(), batch.data() + index * per, sizeof(real_t) * static_cast<std::size_t>(per));
  return out;
}

/// Write `item` into slot `index` of a batched tensor.
inline void set_batch_item(Tensor& batch, std::int64_t index, const Tensor& item) {
  const std::int64_t per = batch.numel() / batch.size(0);
  check_shape(item.numel() == per, "set_batch_item: item size mismatch");
  std::memcpy(batch.data() + index * per, item.data(), sizeof(real_t) * static_cast<std::size_t>(per));
}

/// Stack N same-shape tensors along a new leading axis.
inline Tensor stack(const std::vector<Tensor>& items) {
  check(!items.empty(), "stack: empty list");
  Shape s = items[0].shape();
  Shape out_shape;
  out_shape.push_back(static_cast<std::int64_t>(items.size()));
  out_shape.insert(out_shape.end(), s.begin(), s.end());
  Tensor out(out_shape);
  for (std::size_t i = 0; i < items.size(); ++i) {
    check_shape(items[i].shape() == s, "stack: inhomogeneous shapes");
    set_batch_item(out, static_cast<std::int64_t>(i), items[i]);
  }
  return out;
}

}  // namespace mixgan
