#pragma once

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <cstring>
#include <span>
#include <sstream>
#include <string>

#include "vhs2hd/errors.hpp"

namespace vhs2hd {

using Index = Eigen::Index;

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using ArrayX = Eigen::Array<Scalar, Eigen::Dynamic, 1>;

struct Shape {
  Index n = 0, c = 0, h = 0, w = 0;

  Index size() const { return n * c * h * w; }
  Index plane() const { return h * w; }
  bool operator==(const Shape&) const = default;

  std::string str() const {
    std::ostringstream os;
    os << '[' << n << ',' << c << ',' << h << ',' << w << ']';
    return os.str();
  }
};

// Dense NCHW tensor. Channel planes are contiguous, so one sample is a
// column-major (H*W) x C matrix and one plane is a row-major H x W matrix.
template <typename Scalar>
class Tensor {
 public:
  using SampleMap = Eigen::Map<MatrixX<Scalar>>;
  using ConstSampleMap = Eigen::Map<const MatrixX<Scalar>>;
  using PlaneMap =
      Eigen::Map<Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
  using ConstPlaneMap =
      Eigen::Map<const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

  Tensor() = default;
  explicit Tensor(Shape s) : shape_(s), data_(ArrayX<Scalar>::Zero(s.size())) {}
  Tensor(Index n, Index c, Index h, Index w) : Tensor(Shape{n, c, h, w}) {}

  static Tensor Constant(Shape s, Scalar v) {
    Tensor t(s);
    t.data_.setConstant(v);
    return t;
  }
  static Tensor ZerosLike(const Tensor& o) { return Tensor(o.shape()); }

  const Shape& shape() const { return shape_; }
  Index batch() const { return shape_.n; }
  Index channels() const { return shape_.c; }
  Index height() const { return shape_.h; }
  Index width() const { return shape_.w; }
  Index size() const { return shape_.size(); }
  bool empty() const { return size() == 0; }

  Scalar* data() { return data_.data(); }
  const Scalar* data() const { return data_.data(); }
  ArrayX<Scalar>& array() { return data_; }
  const ArrayX<Scalar>& array() const { return data_; }
  std::span<Scalar> span() { return {data_.data(), static_cast<size_t>(data_.size())}; }
  std::span<const Scalar> span() const {
    return {data_.data(), static_cast<size_t>(data_.size())};
  }

  Scalar& operator()(Index n, Index c, Index y, Index x) {
    return data_[((n * shape_.c + c) * shape_.h + y) * shape_.w + x];
  }
  Scalar operator()(Index n, Index c, Index y, Index x) const {
    return data_[((n * shape_.c + c) * shape_.h + y) * shape_.w + x];
  }

  Scalar* sample_data(Index n) { return data() + n * shape_.c * shape_.plane(); }
  const Scalar* sample_data(Index n) const { return data() + n * shape_.c * shape_.plane(); }

  SampleMap sample(Index n) { return SampleMap(sample_data(n), shape_.plane(), shape_.c); }
  ConstSampleMap sample(Index n) const {
    return ConstSampleMap(sample_data(n), shape_.plane(), shape_.c);
  }
  PlaneMap plane(Index n, Index c) {
    return PlaneMap(sample_data(n) + c * shape_.plane(), shape_.h, shape_.w);
  }
  ConstPlaneMap plane(Index n, Index c) const {
    return ConstPlaneMap(sample_data(n) + c * shape_.plane(), shape_.h, shape_.w);
  }

  void reshape(Shape s) {
    if (s.size() != size()) throw ShapeError("reshape " + shape_.str() + " -> " + s.str());
    shape_ = s;
  }

  template <typename Other>
  Tensor<Other> cast() const {
    Tensor<Other> out(shape_);
    out.array() = data_.template cast<Other>();
    return out;
  }

  Tensor& operator+=(const Tensor& o) {
    require_same(o, "+=");
    data_ += o.data_;
    return *this;
  }

  void require_same(const Tensor& o, const char* what) const {
    if (!(o.shape_ == shape_)) {
      throw ShapeError(std::string(what) + ": shape " + shape_.str() + " vs " + o.shape_.str());
    }
  }

 private:
  Shape shape_;
  ArrayX<Scalar> data_;
};

// 64-bit FNV-1a over raw bytes; used for parameter identity checks.
class Fnv1a {
 public:
  void update(const void* bytes, size_t len) {
    const auto* p = static_cast<const unsigned char*>(bytes);
    for (size_t i = 0; i < len; ++i) {
      state_ ^= p[i];
      state_ *= 0x100000001b3ULL;
    }
  }
  template <typename Scalar>
  void update(const Tensor<Scalar>& t) {
    update(t.data(), sizeof(Scalar) * static_cast<size_t>(t.size()));
  }
  uint64_t digest() const { return state_; }

 private:
  uint64_t state_ = 0xcbf29ce484222325ULL;
};

template <typename Scalar>
Tensor<Scalar> concat_channels(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  if (a.batch() != b.batch() || a.height() != b.height() || a.width() != b.width()) {
    throw ShapeError("concat_channels: " + a.shape().str() + " vs " + b.shape().str());
  }
  Tensor<Scalar> out(a.batch(), a.channels() + b.channels(), a.height(), a.width());
  const Index pa = a.channels() * a.shape().plane();
  const Index pb = b.channels() * b.shape().plane();
  for (Index n = 0; n < a.batch(); ++n) {
    std::memcpy(out.sample_data(n), a.sample_data(n), sizeof(Scalar) * pa);
    std::memcpy(out.sample_data(n) + pa, b.sample_data(n), sizeof(Scalar) * pb);
  }
  return out;
}

// Inverse of concat_channels: splits off the first `first` channels.
template <typename Scalar>
std::pair<Tensor<Scalar>, Tensor<Scalar>> split_channels(const Tensor<Scalar>& t, Index first) {
  Tensor<Scalar> a(t.batch(), first, t.height(), t.width());
  Tensor<Scalar> b(t.batch(), t.channels() - first, t.height(), t.width());
  const Index pa = a.channels() * t.shape().plane();
  const Index pb = b.channels() * t.shape().plane();
  for (Index n = 0; n < t.batch(); ++n) {
    std::memcpy(a.sample_data(n), t.sample_data(n), sizeof(Scalar) * pa);
    std::memcpy(b.sample_data(n), t.sample_data(n) + pa, sizeof(Scalar) * pb);
  }
  return {std::move(a), std::move(b)};
}

// Repeats every plane `ry` times vertically and `rx` times horizontally.
template <typename Scalar>
Tensor<Scalar> tile(const Tensor<Scalar>& t, Index ry, Index rx) {
  Tensor<Scalar> out(t.batch(), t.channels(), t.height() * ry, t.width() * rx);
  for (Index n = 0; n < t.batch(); ++n) {
    for (Index c = 0; c < t.channels(); ++c) {
      out.plane(n, c) = t.plane(n, c).replicate(ry, rx);
    }
  }
  return out;
}

// Stacks single-sample tensors along the batch axis.
template <typename Scalar>
Tensor<Scalar> stack(std::span<const Tensor<Scalar>> items) {
  if (items.empty()) return {};
  Shape s = items.front().shape();
  Tensor<Scalar> out(static_cast<Index>(items.size()) * s.n, s.c, s.h, s.w);
  const Index per = s.size();
  for (size_t i = 0; i < items.size(); ++i) {
    items[i].require_same(items.front(), "stack");
    std::memcpy(out.data() + static_cast<Index>(i) * per, items[i].data(), sizeof(Scalar) * per);
  }
  return out;
}

template <typename Scalar>
Tensor<Scalar> slice_batch(const Tensor<Scalar>& t, Index n) {
  Tensor<Scalar> out(1, t.channels(), t.height(), t.width());
  std::memcpy(out.data(), t.sample_data(n), sizeof(Scalar) * out.size());
  return out;
}

template <typename Scalar>
bool all_finite(const Tensor<Scalar>& t) {
  return t.array().isFinite().all();
}

}  // namespace vhs2hd
