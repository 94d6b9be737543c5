#pragma once

#include <string>
#include <vector>

#include "vhs2hd/random.hpp"
#include "vhs2hd/tensor.hpp"

namespace vhs2hd {

// Ordered collection of named tensors owned by one network.
template <typename Scalar>
class ParameterSet {
 public:
  Index add(std::string name, Shape shape) {
    names_.push_back(std::move(name));
    tensors_.emplace_back(shape);
    return static_cast<Index>(tensors_.size()) - 1;
  }

  Index size() const { return static_cast<Index>(tensors_.size()); }
  Tensor<Scalar>& operator[](Index i) { return tensors_[static_cast<size_t>(i)]; }
  const Tensor<Scalar>& operator[](Index i) const { return tensors_[static_cast<size_t>(i)]; }
  const std::string& name(Index i) const { return names_[static_cast<size_t>(i)]; }
  const std::vector<std::string>& names() const { return names_; }

  Index find(const std::string& name) const {
    for (size_t i = 0; i < names_.size(); ++i) {
      if (names_[i] == name) return static_cast<Index>(i);
    }
    return -1;
  }

  ParameterSet zeros_like() const {
    ParameterSet out;
    for (size_t i = 0; i < names_.size(); ++i) out.add(names_[i], tensors_[i].shape());
    return out;
  }

  Index element_count() const {
    Index total = 0;
    for (const auto& t : tensors_) total += t.size();
    return total;
  }

  uint64_t hash() const {
    Fnv1a h;
    for (size_t i = 0; i < names_.size(); ++i) {
      h.update(names_[i].data(), names_[i].size());
      h.update(tensors_[i]);
    }
    return h.digest();
  }

  bool all_finite() const {
    for (const auto& t : tensors_) {
      if (!vhs2hd::all_finite(t)) return false;
    }
    return true;
  }

  void set_zero() {
    for (auto& t : tensors_) t.array().setZero();
  }

  template <typename Other>
  ParameterSet<Other> cast() const {
    ParameterSet<Other> out;
    for (size_t i = 0; i < names_.size(); ++i) {
      out.add(names_[i], tensors_[i].shape());
      out[static_cast<Index>(i)] = tensors_[i].template cast<Other>();
    }
    return out;
  }

  // Copies values from a set with identical layout.
  template <typename Other>
  void assign(const ParameterSet<Other>& other) {
    if (other.size() != size()) throw ShapeError("ParameterSet::assign: size mismatch");
    for (Index i = 0; i < size(); ++i) {
      if (!(other[i].shape() == (*this)[i].shape()) || other.name(i) != name(i)) {
        throw ShapeError("ParameterSet::assign: layout mismatch at " + name(i));
      }
      (*this)[i].array() = other[i].array().template cast<Scalar>();
    }
  }

 private:
  std::vector<std::string> names_;
  std::vector<Tensor<Scalar>> tensors_;
};

// Fills every ".weight" tensor with N(0, std^2) and zeroes every ".bias".
// Each tensor draws from its own stream keyed by (seed, scope, name), so the
// result does not depend on construction order.
template <typename Scalar>
void init_gaussian(ParameterSet<Scalar>& params, uint64_t seed, const std::string& scope,
                   double std_dev) {
  for (Index i = 0; i < params.size(); ++i) {
    const std::string& name = params.name(i);
    auto& t = params[i];
    if (name.ends_with(".bias")) {
      t.array().setZero();
      continue;
    }
    SplitMix64 rng(mix64(seed ^ hash_string(scope + "/" + name)));
    for (Index k = 0; k < t.size(); ++k) t.data()[k] = static_cast<Scalar>(std_dev * rng.normal());
  }
}

}  // namespace vhs2hd
