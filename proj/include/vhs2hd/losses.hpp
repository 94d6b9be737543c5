#pragma once

// Objective terms. Every function returns the scalar value together with the
// gradient(s) with respect to its tensor arguments. Expectations are
// mini-batch means over all elements.

#include <cmath>
#include <cstdint>
#include <string>

#include "vhs2hd/tensor.hpp"

namespace vhs2hd {

enum class GanForm { least_squares, vanilla_log };

struct LossWeights {
  double lambda_cyc = 0.1;
  double kappa_perc = 0.05;
  GanForm gan_form = GanForm::least_squares;
};

// Thrown when an objective term is NaN or infinite.
class NonFiniteLossError : public Error {
 public:
  NonFiniteLossError(std::string term, double value)
      : Error("non-finite loss term '" + term + "' (" + std::to_string(value) + ")"), term_(std::move(term)) {}
  const std::string& term() const { return term_; }

 private:
  std::string term_;
};

inline constexpr double kProbabilityFloor = 1e-7;

template <typename Scalar>
struct DiscriminatorLoss {
  Scalar value{};
  Tensor<Scalar> grad_real;
  Tensor<Scalar> grad_fake;
  Index clamped = 0;  // probabilities hit by the log guard
};

template <typename Scalar>
struct GeneratorLoss {
  Scalar value{};
  Tensor<Scalar> grad_fake;
  Index clamped = 0;
};

namespace detail {

// -mean(log p) (or -mean(log(1-p)) when `complement`), with p clamped to
// [1e-7, 1-1e-7]. Clamped entries get zero gradient.
template <typename Scalar>
Scalar neg_mean_log(const Tensor<Scalar>& p, bool complement, Tensor<Scalar>& grad, Index& clamped) {
  const Scalar lo = Scalar(kProbabilityFloor);
  const Scalar hi = Scalar(1) - Scalar(kProbabilityFloor);
  const Scalar inv_n = Scalar(1) / static_cast<Scalar>(p.size());
  grad = Tensor<Scalar>(p.shape());
  Scalar sum = 0;
  for (Index i = 0; i < p.size(); ++i) {
    Scalar v = p.data()[i];
    bool guarded = false;
    if (!(v >= lo)) { v = lo; guarded = true; }
    if (v > hi) { v = hi; guarded = true; }
    clamped += guarded;
    const Scalar q = complement ? Scalar(1) - v : v;
    sum -= std::log(q);
    if (!guarded) grad.data()[i] = complement ? inv_n / q : -inv_n / q;
  }
  return sum * inv_n;
}

template <typename Scalar>
Scalar mean_sq_to(const Tensor<Scalar>& d, Scalar target, Tensor<Scalar>& grad) {
  const Scalar inv_n = Scalar(1) / static_cast<Scalar>(d.size());
  grad = Tensor<Scalar>(d.shape());
  grad.array() = Scalar(2) * inv_n * (d.array() - target);
  return (d.array() - target).square().sum() * inv_n;
}

}  // namespace detail

// Discriminator side; the discriminator minimizes this.
//   vanilla:       -mean(log d_real) - mean(log(1 - d_fake))
//   least squares: mean((d_real - 1)^2) + mean(d_fake^2)
template <typename Scalar>
DiscriminatorLoss<Scalar> adversarial_loss_d(const Tensor<Scalar>& d_real, const Tensor<Scalar>& d_fake, GanForm form) {
  DiscriminatorLoss<Scalar> out;
  if (form == GanForm::vanilla_log) {
    out.value = detail::neg_mean_log(d_real, false, out.grad_real, out.clamped) +
                detail::neg_mean_log(d_fake, true, out.grad_fake, out.clamped);
  } else {
    out.value = detail::mean_sq_to(d_real, Scalar(1), out.grad_real) +
                detail::mean_sq_to(d_fake, Scalar(0), out.grad_fake);
  }
  return out;
}

// Generator side (non-saturating for vanilla):
//   vanilla:       -mean(log d_fake)
//   least squares: mean((d_fake - 1)^2)
template <typename Scalar>
GeneratorLoss<Scalar> adversarial_loss_g(const Tensor<Scalar>& d_fake, GanForm form) {
  GeneratorLoss<Scalar> out;
  if (form == GanForm::vanilla_log) {
    out.value = detail::neg_mean_log(d_fake, false, out.grad_fake, out.clamped);
  } else {
    out.value = detail::mean_sq_to(d_fake, Scalar(1), out.grad_fake);
  }
  return out;
}

template <typename Scalar>
struct CycleLoss {
  Scalar value{};
  Tensor<Scalar> grad_rec_x;  // d/d F(G(x))
  Tensor<Scalar> grad_rec_y;  // d/d G(F(y))
};

// mean|F(G(x)) - x| + mean|G(F(y)) - y|
template <typename Scalar>
CycleLoss<Scalar> cycle_loss(const Tensor<Scalar>& x, const Tensor<Scalar>& rec_x, const Tensor<Scalar>& y,
                             const Tensor<Scalar>& rec_y) {
  x.require_same(rec_x, "cycle_loss(x, F(G(x)))");
  y.require_same(rec_y, "cycle_loss(y, G(F(y)))");
  CycleLoss<Scalar> out;
  auto term = [](const Tensor<Scalar>& src, const Tensor<Scalar>& rec, Tensor<Scalar>& grad) {
    const Scalar inv_n = Scalar(1) / static_cast<Scalar>(src.size());
    const auto diff = rec.array() - src.array();
    grad = Tensor<Scalar>(src.shape());
    grad.array() = diff.sign() * inv_n;
    return diff.abs().sum() * inv_n;
  };
  out.value = term(x, rec_x, out.grad_rec_x) + term(y, rec_y, out.grad_rec_y);
  return out;
}

enum class PerceptualNorm {
  mean_squared,  // mean of squared differences over all feature elements
  l2,            // per-sample unsquared Euclidean norm, averaged over the batch
};

template <typename Scalar>
struct PerceptualLoss {
  Scalar value{};
  Tensor<Scalar> grad;  // d/d features_of_output
};

template <typename Scalar>
PerceptualLoss<Scalar> perceptual_loss(const Tensor<Scalar>& features_out, const Tensor<Scalar>& features_target,
                                       PerceptualNorm norm = PerceptualNorm::mean_squared) {
  if (!(features_out.shape() == features_target.shape())) {
    throw ShapeError("perceptual_loss: feature shapes differ " + features_out.shape().str() + " vs " +
                     features_target.shape().str() + " (is restore_size disabled for the degraded frames?)");
  }
  PerceptualLoss<Scalar> out;
  out.grad = Tensor<Scalar>(features_out.shape());
  if (norm == PerceptualNorm::mean_squared) {
    const Scalar inv_n = Scalar(1) / static_cast<Scalar>(features_out.size());
    const auto diff = features_out.array() - features_target.array();
    out.value = diff.square().sum() * inv_n;
    out.grad.array() = Scalar(2) * inv_n * diff;
    return out;
  }
  const Index per = features_out.size() / features_out.batch();
  const Scalar inv_b = Scalar(1) / static_cast<Scalar>(features_out.batch());
  for (Index n = 0; n < features_out.batch(); ++n) {
    const Eigen::Map<const ArrayX<Scalar>> a(features_out.sample_data(n), per);
    const Eigen::Map<const ArrayX<Scalar>> b(features_target.sample_data(n), per);
    Eigen::Map<ArrayX<Scalar>> g(out.grad.sample_data(n), per);
    const Scalar dist = std::sqrt((a - b).square().sum());
    out.value += dist * inv_b;
    g = dist > Scalar(0) ? ArrayX<Scalar>((a - b) * (inv_b / dist)) : ArrayX<Scalar>::Zero(per);
  }
  return out;
}

// Per-term scalars of one training step. Terms a step does not evaluate stay 0.
struct LossReport {
  int64_t step = 0;
  double gan_G_Y = 0, gan_F_X = 0, gan_G_Z = 0;
  double cyc = 0, perc = 0;
  double total_G = 0;
  double total_D_X = 0, total_D_Y = 0, total_D_Z = 0;
};

struct ObjectiveParts {
  double gan_G_Y = 0, gan_F_X = 0, gan_G_Z = 0;
  double cyc = 0, perc = 0;
};

// Generator-side pieces of the overall objective:
//   gan_G_Y + gan_F_X + gan_G_Z + lambda * cyc + kappa * perc
inline double total_generator_objective(const ObjectiveParts& p, const LossWeights& w) {
  const std::pair<const char*, double> terms[] = {
      {"gan_G_Y", p.gan_G_Y}, {"gan_F_X", p.gan_F_X}, {"gan_G_Z", p.gan_G_Z}, {"cyc", p.cyc}, {"perc", p.perc}};
  for (const auto& [name, v] : terms) {
    if (!std::isfinite(v)) throw NonFiniteLossError(name, v);
  }
  return p.gan_G_Y + p.gan_F_X + p.gan_G_Z + w.lambda_cyc * p.cyc + w.kappa_perc * p.perc;
}

}  // namespace vhs2hd
