#pragma once

// Interleaved two-branch optimization: one style step (cycle-adversarial
// branch: G, F, D_X, D_Y) followed by k resolution steps (G via the shared
// Enhance Net, D_Z). Single writer, deterministic given the seed.

#include <cstdint>
#include <deque>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "vhs2hd/adam.hpp"
#include "vhs2hd/archive.hpp"
#include "vhs2hd/dataset.hpp"
#include "vhs2hd/losses.hpp"
#include "vhs2hd/models.hpp"

namespace vhs2hd {

struct TrainConfig {
  double lr = 1e-4;
  double adam_beta1 = 0.5;
  double adam_beta2 = 0.999;
  double lambda_cyc = 0.1;
  double kappa_perc = 0.05;
  int res_steps_per_cycle_step = 5;
  int batch_size = 1;
  int crop = 256;
  int64_t total_cycle_steps = 100000;
  uint64_t seed = 0;
  GanForm gan_form = GanForm::least_squares;
  PerceptualNorm perceptual_norm = PerceptualNorm::mean_squared;
  int64_t checkpoint_every = 1000;
  int log_every = 1;
  int fake_pool_size = 0;  // 0 disables the history pool of generated images
  bool flip = true;
  ModelConfig model;

  // Full model configuration, with the discriminator output activation
  // matched to the adversarial form (sigmoid for vanilla, linear for LS).
  ModelConfig model_config() const;
  LossWeights loss_weights() const { return {lambda_cyc, kappa_perc, gan_form}; }
  AdamConfig adam() const { return {lr, adam_beta1, adam_beta2, 1e-8}; }
  void validate() const;
};

// "paper" (full-size networks, 256 crops) or "desk" (64 crops, tiny networks).
TrainConfig preset(const std::string& name);

nlohmann::json config_to_json(const TrainConfig& c);
TrainConfig config_from_json(const nlohmann::json& j);
// Applies "a.b.c=value" to a JSON document; value is parsed as JSON when
// possible and kept as a string otherwise. Unknown keys are rejected.
void apply_override(nlohmann::json& doc, const std::string& assignment);

// History buffer of generated images (off by default).
class FakePool {
 public:
  FakePool(int capacity, uint64_t seed) : capacity_(capacity), rng_{seed, 0} {}
  Tensor<float> query(const Tensor<float>& fakes);
  int capacity() const { return capacity_; }
  std::deque<Tensor<float>>& images() { return images_; }
  const std::deque<Tensor<float>>& images() const { return images_; }
  RngState& rng() { return rng_; }
  const RngState& rng() const { return rng_; }

 private:
  int capacity_;
  RngState rng_;
  std::deque<Tensor<float>> images_;
};

struct StepOptions {
  bool update_discriminators = true;
};

struct StepResult {
  LossReport report;
  bool aborted = false;
  std::string diverged_term;
};

class Trainer {
 public:
  explicit Trainer(TrainConfig cfg);
  Trainer(TrainConfig cfg, ModelBundle bundle);

  StepResult style_step(const Tensor<float>& x, const Tensor<float>& y, StepOptions options = {});
  StepResult resolution_step(const Tensor<float>& z, const Tensor<float>& y, StepOptions options = {});

  const TrainConfig& config() const { return cfg_; }
  ModelBundle& bundle() { return bundle_; }
  const ModelBundle& bundle() const { return bundle_; }
  int64_t cycle_steps() const { return cycle_steps_; }
  int64_t res_steps() const { return res_steps_; }
  int64_t global_step() const { return global_step_; }
  RngState& rng() { return rng_; }
  Adam<float>& optimizer(const std::string& group);

  // Parameter hash of one group: "G", "F", "D_X", "D_Y", "D_Z" or "features".
  uint64_t group_hash(const std::string& group) const;

  Archive to_archive() const;
  static Trainer from_archive(const Archive& archive);

 private:
  struct DiscriminatorSnapshot {
    ParameterSet<float> params, m, v;
    int64_t steps = 0;
  };
  DiscriminatorSnapshot snapshot(const Discriminator<float>& d, const Adam<float>& opt) const;
  void restore(Discriminator<float>& d, Adam<float>& opt, const DiscriminatorSnapshot& s);
  StepResult abort_step(const std::string& term);
  float discriminator_update(Discriminator<float>& d, Adam<float>& opt, const Tensor<float>& real,
                             const Tensor<float>& fake, bool apply, bool& finite);

  TrainConfig cfg_;
  ModelBundle bundle_;
  Adam<float> adam_G_, adam_F_, adam_DX_, adam_DY_, adam_DZ_;
  FakePool pool_X_, pool_Y_, pool_Z_;
  RngState rng_;
  int64_t cycle_steps_ = 0;
  int64_t res_steps_ = 0;
  int64_t global_step_ = 0;
  int consecutive_aborts_ = 0;
};

inline constexpr int kMaxConsecutiveAborts = 3;
inline constexpr const char* kCheckpointFormat = "vhs2hd-checkpoint";
inline constexpr int kCheckpointVersion = 1;

void save_checkpoint(const Trainer& trainer, const std::filesystem::path& path);
Trainer load_checkpoint(const std::filesystem::path& path);

nlohmann::json report_to_json(const LossReport& r, const std::string& phase);

struct TrainOptions {
  bool resume = false;
  std::optional<int64_t> stop_after;  // stop (after checkpointing) at this cycle step
  std::function<void(const LossReport&, const std::string&)> on_report;
};

// Runs the schedule into `run_dir` (config.json, log.jsonl,
// ckpt_<step>.safetensors, latest). Returns the final trainer state.
Trainer train(const DatasetManifest& manifest, const TrainConfig& cfg, const std::filesystem::path& run_dir,
              const TrainOptions& options = {});

std::filesystem::path latest_checkpoint(const std::filesystem::path& run_dir);

}  // namespace vhs2hd
