#pragma once

// Network families: U-net generators, pointwise (PixelGAN) discriminators and
// the fixed VGG-style feature extractor used by the perceptual loss.

#include <algorithm>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "vhs2hd/archive.hpp"
#include "vhs2hd/layers.hpp"
#include "vhs2hd/parameters.hpp"

namespace vhs2hd {

enum class Norm { instance, none };

struct GeneratorConfig {
  int depth = 6;
  int base_channels = 64;
  int max_multiplier = 8;  // channel growth caps at base * max_multiplier
  Norm norm = Norm::instance;
  // Diagnostic: output = clamp(input + tanh(.)), so a zeroed final layer is the identity.
  bool residual_bypass = false;

  int channels(int level) const { return base_channels * std::min(1 << level, max_multiplier); }
  Index required_multiple() const { return Index(1) << depth; }
  bool operator==(const GeneratorConfig&) const = default;
};

// pix2pix-style U-net. Level i halves resolution on the way down
// (4x4 stride-2 conv) and doubles it on the way up (4x4 stride-2 transposed
// conv), with the encoder activation of level i concatenated into the decoder.
template <typename Scalar>
class Generator {
 public:
  struct Tape {
    Tensor<Scalar> input;
    std::vector<Tensor<Scalar>> h;         // encoder outputs per level
    std::vector<Tensor<Scalar>> down_in;   // conv inputs (post leaky-relu), level >= 1
    std::vector<nn::InstanceNormCache<Scalar>> down_norm;
    std::vector<Tensor<Scalar>> up_pre;    // relu inputs per level
    std::vector<Tensor<Scalar>> up_in;     // transposed-conv inputs per level
    std::vector<nn::InstanceNormCache<Scalar>> up_norm;
    Tensor<Scalar> activation;             // tanh output
    Tensor<Scalar> output;
  };

  explicit Generator(GeneratorConfig cfg) : cfg_(cfg) {
    if (cfg.depth < 1) throw ConfigError("generator depth must be >= 1");
    if (cfg.base_channels < 1) throw ConfigError("generator base_channels must be >= 1");
    const int d = cfg.depth;
    for (int i = 0; i < d; ++i) {
      const int in = i == 0 ? 3 : cfg.channels(i - 1);
      add_conv("down" + std::to_string(i), {cfg.channels(i), in, 4, 4});
    }
    for (int i = 0; i < d; ++i) {
      const int in = i == d - 1 ? cfg.channels(i) : 2 * cfg.channels(i);
      const int out = i == 0 ? 3 : cfg.channels(i - 1);
      add_conv("up" + std::to_string(i), {in, out, 4, 4});
    }
  }

  const GeneratorConfig& config() const { return cfg_; }
  ParameterSet<Scalar>& params() { return params_; }
  const ParameterSet<Scalar>& params() const { return params_; }

  void check_input(const Tensor<Scalar>& x) const {
    const Index m = cfg_.required_multiple();
    if (x.channels() != 3) throw ShapeError("generator expects 3 channels, got " + x.shape().str());
    if (x.height() % m != 0 || x.width() % m != 0 || x.height() == 0 || x.width() == 0) {
      throw ShapeError("generator input " + x.shape().str() + ": height and width must be multiples of " +
                       std::to_string(m) + " (2^depth)");
    }
  }

  Tensor<Scalar> forward(const Tensor<Scalar>& x, Tape* tape = nullptr) const {
    check_input(x);
    Tape local;
    Tape& t = tape ? *tape : local;
    const int d = cfg_.depth;
    const bool norm = cfg_.norm == Norm::instance;
    t.input = x;
    t.h.assign(d, {});
    t.down_in.assign(d, {});
    t.down_norm.assign(d, {});
    t.up_pre.assign(d, {});
    t.up_in.assign(d, {});
    t.up_norm.assign(d, {});

    t.h[0] = nn::conv2d(x, w_down(0), b_down(0), kDown);
    for (int i = 1; i < d; ++i) {
      t.down_in[i] = nn::leaky_relu(t.h[i - 1], kSlope);
      auto c = nn::conv2d(t.down_in[i], w_down(i), b_down(i), kDown);
      t.h[i] = (i < d - 1 && norm) ? nn::instance_norm(c, t.down_norm[i]) : std::move(c);
    }
    Tensor<Scalar> u;  // decoder output of the level below
    Tensor<Scalar> pre;
    for (int i = d - 1; i >= 0; --i) {
      t.up_pre[i] = i == d - 1 ? t.h[i] : concat_channels(t.h[i], u);
      t.up_in[i] = nn::relu(t.up_pre[i]);
      auto c = nn::conv_transpose2d(t.up_in[i], w_up(i), b_up(i), kDown);
      if (i > 0) {
        u = norm ? nn::instance_norm(c, t.up_norm[i]) : std::move(c);
      } else {
        pre = std::move(c);
      }
    }
    t.activation = nn::tanh(pre);
    if (cfg_.residual_bypass) {
      t.output = Tensor<Scalar>(x.shape());
      t.output.array() = (x.array() + t.activation.array()).max(Scalar(-1)).min(Scalar(1));
    } else {
      t.output = t.activation;
    }
    return t.output;
  }

  // Backpropagates `dy`; accumulates parameter gradients into `grads` when
  // non-null and returns d(loss)/d(input).
  Tensor<Scalar> backward(const Tape& t, const Tensor<Scalar>& dy, ParameterSet<Scalar>* grads) const {
    const int d = cfg_.depth;
    const bool norm = cfg_.norm == Norm::instance;
    Tensor<Scalar> dx_bypass;
    Tensor<Scalar> dact = dy;
    if (cfg_.residual_bypass) {
      const auto sum = t.input.array() + t.activation.array();
      const auto inside = (sum >= Scalar(-1) && sum <= Scalar(1));
      dact.array() = inside.select(dy.array(), Scalar(0));
      dx_bypass = dact;
    }
    std::vector<Tensor<Scalar>> dh(d);
    auto accumulate = [](Tensor<Scalar>& acc, Tensor<Scalar>&& v) {
      if (acc.empty()) acc = std::move(v); else acc += v;
    };

    Tensor<Scalar> dc = nn::tanh_backward(t.activation, dact);
    for (int i = 0; i < d; ++i) {
      auto dr = nn::conv_transpose2d_backward(t.up_in[i], w_up(i), kDown, dc, grad_up(grads, i));
      auto dpre = nn::relu_backward(t.up_pre[i], dr);
      if (i == d - 1) {
        accumulate(dh[i], std::move(dpre));
        break;
      }
      auto [dskip, du] = split_channels(dpre, t.h[i].channels());
      accumulate(dh[i], std::move(dskip));
      dc = norm ? nn::instance_norm_backward(t.up_norm[i + 1], du) : std::move(du);
    }
    for (int i = d - 1; i >= 1; --i) {
      auto dconv = (i < d - 1 && norm) ? nn::instance_norm_backward(t.down_norm[i], dh[i]) : dh[i];
      auto da = nn::conv2d_backward(t.down_in[i], w_down(i), kDown, dconv, grad_down(grads, i));
      accumulate(dh[i - 1], nn::leaky_relu_backward(t.h[i - 1], kSlope, da));
    }
    auto dx = nn::conv2d_backward(t.input, w_down(0), kDown, dh[0], grad_down(grads, 0));
    if (cfg_.residual_bypass) dx += dx_bypass;
    return dx;
  }

  // Zeroes the outermost decoder layer (weights and bias).
  void zero_final_layer() {
    params_[up_index(0)].array().setZero();
    params_[up_index(0) + 1].array().setZero();
  }

 private:
  static constexpr nn::ConvGeometry kDown{4, 2, 1};
  static constexpr Scalar kSlope = Scalar(0.2);

  void add_conv(const std::string& name, Shape w) {
    params_.add(name + ".weight", w);
    // Transposed convs store [in, out, k, k]; bias length is the output width.
    const Index out = name.starts_with("up") ? w.c : w.n;
    params_.add(name + ".bias", {1, out, 1, 1});
  }
  Index down_index(int i) const { return 2 * i; }
  Index up_index(int i) const { return 2 * (cfg_.depth + i); }
  const Tensor<Scalar>& w_down(int i) const { return params_[down_index(i)]; }
  const Tensor<Scalar>& b_down(int i) const { return params_[down_index(i) + 1]; }
  const Tensor<Scalar>& w_up(int i) const { return params_[up_index(i)]; }
  const Tensor<Scalar>& b_up(int i) const { return params_[up_index(i) + 1]; }
  nn::ParamGrad<Scalar> grad_down(ParameterSet<Scalar>* g, int i) const {
    if (!g) return {};
    return {&(*g)[down_index(i)], &(*g)[down_index(i) + 1]};
  }
  nn::ParamGrad<Scalar> grad_up(ParameterSet<Scalar>* g, int i) const {
    if (!g) return {};
    return {&(*g)[up_index(i)], &(*g)[up_index(i) + 1]};
  }

  GeneratorConfig cfg_;
  ParameterSet<Scalar> params_;
};

enum class FinalActivation { sigmoid, linear };

struct DiscriminatorConfig {
  std::vector<int> widths{3, 64, 128, 1};
  FinalActivation activation = FinalActivation::linear;
  bool operator==(const DiscriminatorConfig&) const = default;
};

// Stack of 1x1 convolutions: every output pixel sees only its own input pixel.
template <typename Scalar>
class Discriminator {
 public:
  struct Tape {
    std::vector<Tensor<Scalar>> inputs;  // per layer
    std::vector<Tensor<Scalar>> pre;     // per layer, before activation
    Tensor<Scalar> output;
  };

  explicit Discriminator(DiscriminatorConfig cfg) : cfg_(std::move(cfg)) {
    if (cfg_.widths.size() < 2 || cfg_.widths.front() != 3 || cfg_.widths.back() != 1) {
      throw ConfigError("discriminator widths must start at 3 and end at 1");
    }
    for (size_t l = 0; l + 1 < cfg_.widths.size(); ++l) {
      const std::string name = "layer" + std::to_string(l);
      params_.add(name + ".weight", {cfg_.widths[l + 1], cfg_.widths[l], 1, 1});
      params_.add(name + ".bias", {1, cfg_.widths[l + 1], 1, 1});
    }
  }

  const DiscriminatorConfig& config() const { return cfg_; }
  ParameterSet<Scalar>& params() { return params_; }
  const ParameterSet<Scalar>& params() const { return params_; }
  Index layers() const { return static_cast<Index>(cfg_.widths.size()) - 1; }

  Tensor<Scalar> forward(const Tensor<Scalar>& x, Tape* tape = nullptr) const {
    if (x.channels() != 3) throw ShapeError("discriminator expects 3 channels, got " + x.shape().str());
    Tape local;
    Tape& t = tape ? *tape : local;
    t.inputs.assign(static_cast<size_t>(layers()), {});
    t.pre.assign(static_cast<size_t>(layers()), {});
    Tensor<Scalar> a = x;
    for (Index l = 0; l < layers(); ++l) {
      t.inputs[l] = a;
      t.pre[l] = nn::conv2d(a, params_[2 * l], params_[2 * l + 1], kPointwise);
      if (l + 1 < layers()) a = nn::leaky_relu(t.pre[l], kSlope);
    }
    t.output = cfg_.activation == FinalActivation::sigmoid ? nn::sigmoid(t.pre.back()) : t.pre.back();
    return t.output;
  }

  Tensor<Scalar> backward(const Tape& t, const Tensor<Scalar>& dy, ParameterSet<Scalar>* grads) const {
    Tensor<Scalar> g = cfg_.activation == FinalActivation::sigmoid ? nn::sigmoid_backward(t.output, dy) : dy;
    for (Index l = layers() - 1; l >= 0; --l) {
      nn::ParamGrad<Scalar> pg;
      if (grads) pg = {&(*grads)[2 * l], &(*grads)[2 * l + 1]};
      g = nn::conv2d_backward(t.inputs[l], params_[2 * l], kPointwise, g, pg);
      if (l > 0) g = nn::leaky_relu_backward(t.pre[l - 1], kSlope, g);
    }
    return g;
  }

  void zero_final_layer(Scalar bias = Scalar(0)) {
    params_[2 * (layers() - 1)].array().setZero();
    params_[2 * (layers() - 1) + 1].array().setConstant(bias);
  }

 private:
  static constexpr nn::ConvGeometry kPointwise{1, 1, 0};
  static constexpr Scalar kSlope = Scalar(0.2);

  DiscriminatorConfig cfg_;
  ParameterSet<Scalar> params_;
};

struct FeatureConfig {
  // Stage name from the VGG19 table ("relu4_4", "pool2", "conv3_1", ...) or
  // "identity" for the diagnostic pass-through.
  std::string tap_stage = "relu4_4";
  int width_divisor = 1;           // channel widths divided by this (desk-scale)
  std::string weights_path;        // empty: deterministic random fallback
  bool operator==(const FeatureConfig&) const = default;
};

// Seed of the documented random-weight fallback.
inline constexpr uint64_t kFeatureFallbackSeed = 19;

struct VggStage {
  enum Kind { conv, relu, pool } kind;
  std::string name;
  int block = 0;   // 1-based VGG block
  int index = 0;   // 1-based conv index within block
  int out_channels = 0;
};

// VGG19 "E" configuration: 16 convs in five blocks.
inline std::vector<VggStage> vgg19_stages(int width_divisor = 1) {
  static constexpr int kConvs[5] = {2, 2, 4, 4, 4};
  static constexpr int kWidth[5] = {64, 128, 256, 512, 512};
  std::vector<VggStage> stages;
  for (int b = 1; b <= 5; ++b) {
    const int width = std::max(1, kWidth[b - 1] / width_divisor);
    for (int j = 1; j <= kConvs[b - 1]; ++j) {
      const std::string suffix = std::to_string(b) + "_" + std::to_string(j);
      stages.push_back({VggStage::conv, "conv" + suffix, b, j, width});
      stages.push_back({VggStage::relu, "relu" + suffix, b, j, width});
    }
    stages.push_back({VggStage::pool, "pool" + std::to_string(b), b, 0, width});
  }
  return stages;
}

// Frozen feature pyramid. There is no mutable access to the weights after
// construction; backward only produces input gradients.
template <typename Scalar>
class FeatureExtractor {
 public:
  struct Tape {
    std::vector<Tensor<Scalar>> inputs;  // per stage
    std::vector<std::vector<Index>> argmax;
  };

  explicit FeatureExtractor(FeatureConfig cfg) : cfg_(std::move(cfg)) {
    build();
    if (identity()) return;
    if (cfg_.weights_path.empty()) {
      init_fallback();
    } else {
      const auto archive = [&] {
        try {
          return read_archive(cfg_.weights_path);
        } catch (const IoError& e) {
          throw IoError("feature extractor weights: " + std::string(e.what()));
        }
      }();
      archive.get("", params_);
    }
  }

  // Restores an extractor from previously captured weights (checkpoints).
  FeatureExtractor(FeatureConfig cfg, const ParameterSet<Scalar>& weights) : cfg_(std::move(cfg)) {
    build();
    params_.assign(weights);
  }

  const FeatureConfig& config() const { return cfg_; }
  const ParameterSet<Scalar>& params() const { return params_; }
  bool identity() const { return cfg_.tap_stage == "identity"; }
  const std::vector<VggStage>& stages() const { return stages_; }

  // Input is in the signed [-1, 1] range; it is remapped to ImageNet
  // normalization before the first convolution.
  Tensor<Scalar> forward(const Tensor<Scalar>& x, Tape* tape = nullptr) const {
    if (identity()) return x;
    Tape local;
    Tape& t = tape ? *tape : local;
    t.inputs.assign(stages_.size(), {});
    t.argmax.assign(stages_.size(), {});
    Tensor<Scalar> a(x.shape());
    for (Index n = 0; n < x.batch(); ++n) {
      for (Index c = 0; c < 3; ++c) {
        a.plane(n, c).array() = ((x.plane(n, c).array() + Scalar(1)) * Scalar(0.5) - Scalar(kMean[c])) / Scalar(kStd[c]);
      }
    }
    Index p = 0;
    for (size_t s = 0; s < stages_.size(); ++s) {
      t.inputs[s] = a;
      switch (stages_[s].kind) {
        case VggStage::conv:
          a = nn::conv2d(a, params_[p], params_[p + 1], kConv3);
          p += 2;
          break;
        case VggStage::relu:
          a = nn::relu(a);
          break;
        case VggStage::pool:
          a = nn::max_pool2(a, t.argmax[s]);
          break;
      }
    }
    return a;
  }

  Tensor<Scalar> backward(const Tape& t, const Tensor<Scalar>& dfeat) const {
    if (identity()) return dfeat;
    Tensor<Scalar> g = dfeat;
    Index p = params_.size();
    for (size_t s = stages_.size(); s-- > 0;) {
      switch (stages_[s].kind) {
        case VggStage::conv:
          p -= 2;
          g = nn::conv2d_backward(t.inputs[s], params_[p], kConv3, g, {});
          break;
        case VggStage::relu:
          g = nn::relu_backward(t.inputs[s], g);
          break;
        case VggStage::pool:
          g = nn::max_pool2_backward(t.inputs[s].shape(), t.argmax[s], g);
          break;
      }
    }
    Tensor<Scalar> dx(g.shape());
    for (Index n = 0; n < g.batch(); ++n) {
      for (Index c = 0; c < 3; ++c) dx.plane(n, c) = g.plane(n, c) * Scalar(0.5 / kStd[c]);
    }
    return dx;
  }

  // Output shape for a given input shape.
  Shape output_shape(const Shape& in) const {
    if (identity()) return in;
    Shape s = in;
    for (const auto& st : stages_) {
      if (st.kind == VggStage::conv) s.c = st.out_channels;
      if (st.kind == VggStage::pool) {
        s.h /= 2;
        s.w /= 2;
      }
    }
    return s;
  }

 private:
  static constexpr double kMean[3] = {0.485, 0.456, 0.406};
  static constexpr double kStd[3] = {0.229, 0.224, 0.225};
  static constexpr nn::ConvGeometry kConv3{3, 1, 1};

  void build() {
    if (cfg_.width_divisor < 1) throw ConfigError("feature width_divisor must be >= 1");
    if (identity()) return;
    const auto all = vgg19_stages(cfg_.width_divisor);
    int in = 3;
    bool found = false;
    for (const auto& s : all) {
      stages_.push_back(s);
      if (s.kind == VggStage::conv) {
        params_.add(s.name + ".weight", {s.out_channels, in, 3, 3});
        params_.add(s.name + ".bias", {1, s.out_channels, 1, 1});
        in = s.out_channels;
      }
      if (s.name == cfg_.tap_stage) {
        found = true;
        break;
      }
    }
    if (!found) throw ConfigError("unknown feature tap stage '" + cfg_.tap_stage + "'");
  }

  void init_fallback() {
    for (Index i = 0; i < params_.size(); ++i) {
      auto& t = params_[i];
      if (params_.name(i).ends_with(".bias")) continue;
      const double fan_in = static_cast<double>(t.channels() * t.height() * t.width());
      SplitMix64 rng(mix64(kFeatureFallbackSeed ^ hash_string(params_.name(i))));
      for (Index k = 0; k < t.size(); ++k) {
        t.data()[k] = static_cast<Scalar>(std::sqrt(2.0 / fan_in) * rng.normal());
      }
    }
  }

  FeatureConfig cfg_;
  std::vector<VggStage> stages_;
  ParameterSet<Scalar> params_;
};

struct ModelConfig {
  GeneratorConfig generator;
  DiscriminatorConfig discriminator;
  FeatureConfig features;
  bool operator==(const ModelConfig&) const = default;
};

// All networks of the translation model. `enhance` (the resolution-branch
// generator) is the same object as `G`: there is a single parameter storage.
template <typename Scalar>
struct BasicModelBundle {
  std::shared_ptr<Generator<Scalar>> G;
  std::shared_ptr<Generator<Scalar>> enhance;
  std::shared_ptr<Generator<Scalar>> F;
  std::shared_ptr<Discriminator<Scalar>> D_X;
  std::shared_ptr<Discriminator<Scalar>> D_Y;
  std::shared_ptr<Discriminator<Scalar>> D_Z;
  std::shared_ptr<const FeatureExtractor<Scalar>> features;

  bool shares_storage() const {
    return G && enhance && G.get() == enhance.get() &&
           G->params()[0].data() == enhance->params()[0].data();
  }
};

using ModelBundle = BasicModelBundle<float>;

// Gaussian(0, 0.02) conv weights, zero biases, deterministic in `seed`.
template <typename Scalar>
BasicModelBundle<Scalar> init_models(const ModelConfig& cfg, uint64_t seed) {
  BasicModelBundle<Scalar> b;
  b.G = std::make_shared<Generator<Scalar>>(cfg.generator);
  b.enhance = b.G;
  b.F = std::make_shared<Generator<Scalar>>(cfg.generator);
  b.D_X = std::make_shared<Discriminator<Scalar>>(cfg.discriminator);
  b.D_Y = std::make_shared<Discriminator<Scalar>>(cfg.discriminator);
  b.D_Z = std::make_shared<Discriminator<Scalar>>(cfg.discriminator);
  b.features = std::make_shared<const FeatureExtractor<Scalar>>(cfg.features);
  constexpr double kStd = 0.02;
  init_gaussian(b.G->params(), seed, "G", kStd);
  init_gaussian(b.F->params(), seed, "F", kStd);
  init_gaussian(b.D_X->params(), seed, "D_X", kStd);
  init_gaussian(b.D_Y->params(), seed, "D_Y", kStd);
  init_gaussian(b.D_Z->params(), seed, "D_Z", kStd);
  return b;
}

}  // namespace vhs2hd
