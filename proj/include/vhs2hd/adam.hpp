#pragma once

#include <cmath>
#include <cstdint>

#include "vhs2hd/parameters.hpp"

namespace vhs2hd {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Adam with bias correction; one instance per parameter group.
template <typename Scalar>
class Adam {
 public:
  Adam(AdamConfig cfg, const ParameterSet<Scalar>& layout)
      : cfg_(cfg), m_(layout.zeros_like()), v_(layout.zeros_like()) {}

  void step(ParameterSet<Scalar>& params, const ParameterSet<Scalar>& grads) {
    ++t_;
    const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    const Scalar b1 = static_cast<Scalar>(cfg_.beta1);
    const Scalar b2 = static_cast<Scalar>(cfg_.beta2);
    const Scalar step_size = static_cast<Scalar>(cfg_.lr / c1);
    const Scalar inv_sqrt_c2 = static_cast<Scalar>(1.0 / std::sqrt(c2));
    const Scalar eps = static_cast<Scalar>(cfg_.eps);
    for (Index i = 0; i < params.size(); ++i) {
      auto& m = m_[i].array();
      auto& v = v_[i].array();
      const auto& g = grads[i].array();
      m = b1 * m + (Scalar(1) - b1) * g;
      v = b2 * v + (Scalar(1) - b2) * g.square();
      params[i].array() -= step_size * m / (v.sqrt() * inv_sqrt_c2 + eps);
    }
  }

  const AdamConfig& config() const { return cfg_; }
  int64_t steps() const { return t_; }
  void set_steps(int64_t t) { t_ = t; }
  ParameterSet<Scalar>& first_moment() { return m_; }
  ParameterSet<Scalar>& second_moment() { return v_; }
  const ParameterSet<Scalar>& first_moment() const { return m_; }
  const ParameterSet<Scalar>& second_moment() const { return v_; }

 private:
  AdamConfig cfg_;
  ParameterSet<Scalar> m_;
  ParameterSet<Scalar> v_;
  int64_t t_ = 0;
};

}  // namespace vhs2hd
