#include "vhs2hd/trainer.hpp"

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

namespace vhs2hd {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------- config

ModelConfig TrainConfig::model_config() const {
  ModelConfig m = model;
  m.discriminator.activation =
      gan_form == GanForm::vanilla_log ? FinalActivation::sigmoid : FinalActivation::linear;
  return m;
}

void TrainConfig::validate() const {
  if (!(lr > 0)) throw ConfigError("lr must be positive");
  if (!(adam_beta1 > 0 && adam_beta1 < 1 && adam_beta2 > 0 && adam_beta2 < 1)) {
    throw ConfigError("adam betas must lie in (0, 1)");
  }
  if (!(adam_beta2 > adam_beta1)) throw ConfigError("adam_beta2 must exceed adam_beta1");
  // Zero weights / k = 0 are accepted as ablations.
  if (!(lambda_cyc >= 0) || !(kappa_perc >= 0)) throw ConfigError("lambda_cyc and kappa_perc must be >= 0");
  if (res_steps_per_cycle_step < 0) throw ConfigError("res_steps_per_cycle_step must be >= 0");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (crop < 1) throw ConfigError("crop must be >= 1");
  if (crop % model.generator.required_multiple() != 0) {
    throw ConfigError("crop " + std::to_string(crop) + " must be a multiple of 2^depth = " +
                      std::to_string(model.generator.required_multiple()));
  }
  if (total_cycle_steps < 0) throw ConfigError("total_cycle_steps must be >= 0");
  if (checkpoint_every < 1) throw ConfigError("checkpoint_every must be >= 1");
  if (log_every < 1) throw ConfigError("log_every must be >= 1");
  if (fake_pool_size < 0) throw ConfigError("fake_pool_size must be >= 0");
}

TrainConfig preset(const std::string& name) {
  TrainConfig c;
  if (name == "paper") return c;
  if (name == "desk") {
    c.crop = 64;
    c.batch_size = 1;
    c.total_cycle_steps = 100;
    c.checkpoint_every = 50;
    c.model.generator.depth = 4;
    c.model.generator.base_channels = 16;
    c.model.discriminator.widths = {3, 32, 64, 1};
    c.model.features.tap_stage = "relu2_2";
    c.model.features.width_divisor = 8;
    return c;
  }
  throw ConfigError("unknown preset '" + name + "' (expected 'paper' or 'desk')");
}

json config_to_json(const TrainConfig& c) {
  const auto& g = c.model.generator;
  const auto& f = c.model.features;
  return {
      {"lr", c.lr},
      {"adam_beta1", c.adam_beta1},
      {"adam_beta2", c.adam_beta2},
      {"lambda_cyc", c.lambda_cyc},
      {"kappa_perc", c.kappa_perc},
      {"res_steps_per_cycle_step", c.res_steps_per_cycle_step},
      {"batch_size", c.batch_size},
      {"crop", c.crop},
      {"total_cycle_steps", c.total_cycle_steps},
      {"seed", c.seed},
      {"gan_form", c.gan_form == GanForm::least_squares ? "least_squares" : "vanilla_log"},
      {"perceptual_norm", c.perceptual_norm == PerceptualNorm::mean_squared ? "mean_squared" : "l2"},
      {"checkpoint_every", c.checkpoint_every},
      {"log_every", c.log_every},
      {"fake_pool_size", c.fake_pool_size},
      {"flip", c.flip},
      {"model",
       {{"generator",
         {{"depth", g.depth},
          {"base_channels", g.base_channels},
          {"max_multiplier", g.max_multiplier},
          {"norm", g.norm == Norm::instance ? "instance" : "none"},
          {"residual_bypass", g.residual_bypass}}},
        {"discriminator", {{"widths", c.model.discriminator.widths}}},
        {"features",
         {{"tap_stage", f.tap_stage}, {"width_divisor", f.width_divisor}, {"weights_path", f.weights_path}}}}},
  };
}

namespace {

template <typename T>
void read(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

void reject_unknown(const json& j, const json& reference, const std::string& where) {
  for (const auto& [k, v] : j.items()) {
    if (!reference.contains(k)) throw ConfigError("unknown config key '" + where + k + "'");
    if (v.is_object() && reference.at(k).is_object()) reject_unknown(v, reference.at(k), where + k + ".");
  }
}

}  // namespace

TrainConfig config_from_json(const json& j) {
  reject_unknown(j, config_to_json(TrainConfig{}), "");
  TrainConfig c;
  try {
    read(j, "lr", c.lr);
    read(j, "adam_beta1", c.adam_beta1);
    read(j, "adam_beta2", c.adam_beta2);
    read(j, "lambda_cyc", c.lambda_cyc);
    read(j, "kappa_perc", c.kappa_perc);
    read(j, "res_steps_per_cycle_step", c.res_steps_per_cycle_step);
    read(j, "batch_size", c.batch_size);
    read(j, "crop", c.crop);
    read(j, "total_cycle_steps", c.total_cycle_steps);
    read(j, "seed", c.seed);
    read(j, "checkpoint_every", c.checkpoint_every);
    read(j, "log_every", c.log_every);
    read(j, "fake_pool_size", c.fake_pool_size);
    read(j, "flip", c.flip);
    if (j.contains("gan_form")) {
      const auto s = j.at("gan_form").get<std::string>();
      if (s == "least_squares") c.gan_form = GanForm::least_squares;
      else if (s == "vanilla_log" || s == "vanilla") c.gan_form = GanForm::vanilla_log;
      else throw ConfigError("unknown gan_form '" + s + "'");
    }
    if (j.contains("perceptual_norm")) {
      const auto s = j.at("perceptual_norm").get<std::string>();
      if (s == "mean_squared") c.perceptual_norm = PerceptualNorm::mean_squared;
      else if (s == "l2") c.perceptual_norm = PerceptualNorm::l2;
      else throw ConfigError("unknown perceptual_norm '" + s + "'");
    }
    if (j.contains("model")) {
      const auto& m = j.at("model");
      if (m.contains("generator")) {
        const auto& g = m.at("generator");
        read(g, "depth", c.model.generator.depth);
        read(g, "base_channels", c.model.generator.base_channels);
        read(g, "max_multiplier", c.model.generator.max_multiplier);
        read(g, "residual_bypass", c.model.generator.residual_bypass);
        if (g.contains("norm")) {
          const auto s = g.at("norm").get<std::string>();
          if (s != "instance" && s != "none") throw ConfigError("unknown norm '" + s + "'");
          c.model.generator.norm = s == "instance" ? Norm::instance : Norm::none;
        }
      }
      if (m.contains("discriminator")) read(m.at("discriminator"), "widths", c.model.discriminator.widths);
      if (m.contains("features")) {
        const auto& f = m.at("features");
        read(f, "tap_stage", c.model.features.tap_stage);
        read(f, "width_divisor", c.model.features.width_divisor);
        read(f, "weights_path", c.model.features.weights_path);
      }
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("invalid config value: ") + e.what());
  }
  c.validate();
  return c;
}

void apply_override(json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override must look like key=value: " + assignment);
  const std::string key = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);
  json* node = &doc;
  std::stringstream ss(key);
  std::string part;
  std::vector<std::string> parts;
  while (std::getline(ss, part, '.')) parts.push_back(part);
  for (size_t i = 0; i < parts.size(); ++i) {
    if (!node->is_object() || !node->contains(parts[i])) throw ConfigError("unknown config key '" + key + "'");
    node = &(*node)[parts[i]];
  }
  json value;
  try {
    value = json::parse(raw);
  } catch (const json::exception&) {
    value = raw;
  }
  *node = value;
}

// ---------------------------------------------------------------- pool

Tensor<float> FakePool::query(const Tensor<float>& fakes) {
  if (capacity_ == 0) return fakes;
  Tensor<float> out(fakes.shape());
  for (Index n = 0; n < fakes.batch(); ++n) {
    Tensor<float> img = slice_batch(fakes, n);
    SplitMix64 s = rng_.stream(static_cast<uint64_t>(n));
    Tensor<float> chosen = img;
    if (static_cast<int>(images_.size()) < capacity_) {
      images_.push_back(img);
    } else if (s.uniform() < 0.5) {
      const auto idx = static_cast<size_t>(s.below(images_.size()));
      chosen = images_[idx];
      images_[idx] = img;
    }
    std::copy(chosen.data(), chosen.data() + chosen.size(), out.sample_data(n));
  }
  ++rng_.draw;
  return out;
}

// ---------------------------------------------------------------- trainer

namespace {

AdamConfig adam_of(const TrainConfig& c) {
  c.validate();
  return c.adam();
}

ModelBundle bundle_for(const TrainConfig& c) { return init_models<float>(c.model_config(), c.seed); }

}  // namespace

Trainer::Trainer(TrainConfig cfg) : Trainer(cfg, bundle_for(cfg)) {}

Trainer::Trainer(TrainConfig cfg, ModelBundle bundle)
    : cfg_(std::move(cfg)),
      bundle_(std::move(bundle)),
      adam_G_(adam_of(cfg_), bundle_.G->params()),
      adam_F_(cfg_.adam(), bundle_.F->params()),
      adam_DX_(cfg_.adam(), bundle_.D_X->params()),
      adam_DY_(cfg_.adam(), bundle_.D_Y->params()),
      adam_DZ_(cfg_.adam(), bundle_.D_Z->params()),
      pool_X_(cfg_.fake_pool_size, mix64(cfg_.seed ^ hash_string("pool/X"))),
      pool_Y_(cfg_.fake_pool_size, mix64(cfg_.seed ^ hash_string("pool/Y"))),
      pool_Z_(cfg_.fake_pool_size, mix64(cfg_.seed ^ hash_string("pool/Z"))),
      rng_{cfg_.seed, 0} {
  if (!bundle_.shares_storage()) throw ConfigError("model bundle must alias the Enhance Net to G");
}

Adam<float>& Trainer::optimizer(const std::string& group) {
  if (group == "G") return adam_G_;
  if (group == "F") return adam_F_;
  if (group == "D_X") return adam_DX_;
  if (group == "D_Y") return adam_DY_;
  if (group == "D_Z") return adam_DZ_;
  throw ConfigError("unknown parameter group '" + group + "'");
}

uint64_t Trainer::group_hash(const std::string& group) const {
  if (group == "G") return bundle_.G->params().hash();
  if (group == "enhance") return bundle_.enhance->params().hash();
  if (group == "F") return bundle_.F->params().hash();
  if (group == "D_X") return bundle_.D_X->params().hash();
  if (group == "D_Y") return bundle_.D_Y->params().hash();
  if (group == "D_Z") return bundle_.D_Z->params().hash();
  if (group == "features") return bundle_.features->params().hash();
  throw ConfigError("unknown parameter group '" + group + "'");
}

Trainer::DiscriminatorSnapshot Trainer::snapshot(const Discriminator<float>& d, const Adam<float>& opt) const {
  return {d.params(), opt.first_moment(), opt.second_moment(), opt.steps()};
}

void Trainer::restore(Discriminator<float>& d, Adam<float>& opt, const DiscriminatorSnapshot& s) {
  d.params().assign(s.params);
  opt.first_moment().assign(s.m);
  opt.second_moment().assign(s.v);
  opt.set_steps(s.steps);
}

StepResult Trainer::abort_step(const std::string& term) {
  ++consecutive_aborts_;
  std::cerr << "warning: step aborted, non-finite term '" << term << "' (" << consecutive_aborts_ << " in a row)\n";
  if (consecutive_aborts_ >= kMaxConsecutiveAborts) {
    throw DivergenceError("training diverged: " + std::to_string(consecutive_aborts_) +
                          " consecutive non-finite steps, last term '" + term + "'");
  }
  StepResult r;
  r.aborted = true;
  r.diverged_term = term;
  return r;
}

// Computes the discriminator loss on (real, fake) and, when `apply`, takes an
// Adam step. `finite` reports whether loss and gradients were finite.
float Trainer::discriminator_update(Discriminator<float>& d, Adam<float>& opt, const Tensor<float>& real,
                                    const Tensor<float>& fake, bool apply, bool& finite) {
  typename Discriminator<float>::Tape t_real, t_fake;
  const auto p_real = d.forward(real, &t_real);
  const auto p_fake = d.forward(fake, &t_fake);
  const auto loss = adversarial_loss_d(p_real, p_fake, cfg_.gan_form);
  auto grads = d.params().zeros_like();
  d.backward(t_real, loss.grad_real, &grads);
  d.backward(t_fake, loss.grad_fake, &grads);
  finite = std::isfinite(loss.value) && grads.all_finite();
  if (finite && apply) opt.step(d.params(), grads);
  return loss.value;
}

StepResult Trainer::style_step(const Tensor<float>& x, const Tensor<float>& y, StepOptions options) {
  auto& G = *bundle_.G;
  auto& F = *bundle_.F;
  auto& DX = *bundle_.D_X;
  auto& DY = *bundle_.D_Y;
  const auto w = cfg_.loss_weights();

  typename Generator<float>::Tape tg_x, tf_y;
  const auto fake_y = G.forward(x, &tg_x);
  const auto fake_x = F.forward(y, &tf_y);

  // (1) discriminators, generators fixed
  const auto snap_y = snapshot(DY, adam_DY_);
  const auto snap_x = snapshot(DX, adam_DX_);
  bool finite_y = true, finite_x = true;
  const float d_y = discriminator_update(DY, adam_DY_, y, pool_Y_.query(fake_y), options.update_discriminators, finite_y);
  if (!finite_y) return abort_step("total_D_Y");
  const float d_x = discriminator_update(DX, adam_DX_, x, pool_X_.query(fake_x), options.update_discriminators, finite_x);
  if (!finite_x) {
    restore(DY, adam_DY_, snap_y);
    return abort_step("total_D_X");
  }

  // (2) generators, discriminators fixed
  typename Discriminator<float>::Tape td_y, td_x;
  const auto gl_y = adversarial_loss_g(DY.forward(fake_y, &td_y), cfg_.gan_form);
  const auto gl_x = adversarial_loss_g(DX.forward(fake_x, &td_x), cfg_.gan_form);
  auto d_fake_y = DY.backward(td_y, gl_y.grad_fake, nullptr);
  auto d_fake_x = DX.backward(td_x, gl_x.grad_fake, nullptr);

  typename Generator<float>::Tape tf_rec, tg_rec;
  const auto rec_x = F.forward(fake_y, &tf_rec);
  const auto rec_y = G.forward(fake_x, &tg_rec);
  const auto cyc = cycle_loss(x, rec_x, y, rec_y);

  StepResult result;
  auto& r = result.report;
  r.gan_G_Y = gl_y.value;
  r.gan_F_X = gl_x.value;
  r.cyc = cyc.value;
  r.total_D_X = d_x;
  r.total_D_Y = d_y;
  try {
    r.total_G = total_generator_objective({r.gan_G_Y, r.gan_F_X, 0.0, r.cyc, 0.0}, w);
  } catch (const NonFiniteLossError& e) {
    restore(DY, adam_DY_, snap_y);
    restore(DX, adam_DX_, snap_x);
    return abort_step(e.term());
  }

  auto grads_G = G.params().zeros_like();
  auto grads_F = F.params().zeros_like();
  if (w.lambda_cyc != 0.0) {
    const float lambda = static_cast<float>(w.lambda_cyc);
    Tensor<float> g_rec_x = cyc.grad_rec_x;
    Tensor<float> g_rec_y = cyc.grad_rec_y;
    g_rec_x.array() *= lambda;
    g_rec_y.array() *= lambda;
    d_fake_y += F.backward(tf_rec, g_rec_x, &grads_F);
    d_fake_x += G.backward(tg_rec, g_rec_y, &grads_G);
  }
  G.backward(tg_x, d_fake_y, &grads_G);
  F.backward(tf_y, d_fake_x, &grads_F);
  if (!grads_G.all_finite() || !grads_F.all_finite()) {
    restore(DY, adam_DY_, snap_y);
    restore(DX, adam_DX_, snap_x);
    return abort_step("generator gradients");
  }
  adam_G_.step(G.params(), grads_G);
  adam_F_.step(F.params(), grads_F);

  consecutive_aborts_ = 0;
  ++cycle_steps_;
  r.step = ++global_step_;
  return result;
}

StepResult Trainer::resolution_step(const Tensor<float>& z, const Tensor<float>& y, StepOptions options) {
  auto& enhance = *bundle_.enhance;  // same storage as G
  auto& DZ = *bundle_.D_Z;
  const auto& features = *bundle_.features;
  const auto w = cfg_.loss_weights();

  typename Generator<float>::Tape tg;
  const auto fake = enhance.forward(z, &tg);

  const auto snap = snapshot(DZ, adam_DZ_);
  bool finite = true;
  const float d_z = discriminator_update(DZ, adam_DZ_, y, pool_Z_.query(fake), options.update_discriminators, finite);
  if (!finite) return abort_step("total_D_Z");

  typename Discriminator<float>::Tape td;
  const auto gl = adversarial_loss_g(DZ.forward(fake, &td), cfg_.gan_form);
  auto d_fake = DZ.backward(td, gl.grad_fake, nullptr);

  typename FeatureExtractor<float>::Tape tfeat;
  const auto feat_fake = features.forward(fake, &tfeat);
  const auto feat_real = features.forward(y);
  const auto perc = perceptual_loss(feat_fake, feat_real, cfg_.perceptual_norm);

  StepResult result;
  auto& r = result.report;
  r.gan_G_Z = gl.value;
  r.perc = perc.value;
  r.total_D_Z = d_z;
  try {
    r.total_G = total_generator_objective({0.0, 0.0, r.gan_G_Z, 0.0, r.perc}, w);
  } catch (const NonFiniteLossError& e) {
    restore(DZ, adam_DZ_, snap);
    return abort_step(e.term());
  }

  if (w.kappa_perc != 0.0) {
    Tensor<float> g = perc.grad;
    g.array() *= static_cast<float>(w.kappa_perc);
    d_fake += features.backward(tfeat, g);
  }
  auto grads = enhance.params().zeros_like();
  enhance.backward(tg, d_fake, &grads);
  if (!grads.all_finite()) {
    restore(DZ, adam_DZ_, snap);
    return abort_step("generator gradients");
  }
  adam_G_.step(enhance.params(), grads);

  consecutive_aborts_ = 0;
  ++res_steps_;
  r.step = ++global_step_;
  return result;
}

// ---------------------------------------------------------------- checkpoints

namespace {

const char* kGroups[] = {"G", "F", "D_X", "D_Y", "D_Z"};

}  // namespace

Archive Trainer::to_archive() const {
  Archive a;
  auto self = const_cast<Trainer*>(this);
  a.put("G/", bundle_.G->params());
  a.put("F/", bundle_.F->params());
  a.put("D_X/", bundle_.D_X->params());
  a.put("D_Y/", bundle_.D_Y->params());
  a.put("D_Z/", bundle_.D_Z->params());
  a.put("features/", bundle_.features->params());
  json adam_steps = json::object();
  for (const char* g : kGroups) {
    const auto& opt = self->optimizer(g);
    a.put(std::string("adam/") + g + "/m/", opt.first_moment());
    a.put(std::string("adam/") + g + "/v/", opt.second_moment());
    adam_steps[g] = opt.steps();
  }
  json pools = json::object();
  const std::pair<const char*, const FakePool*> pool_list[] = {{"X", &pool_X_}, {"Y", &pool_Y_}, {"Z", &pool_Z_}};
  for (const auto& [name, pool] : pool_list) {
    for (size_t i = 0; i < pool->images().size(); ++i) {
      a.put("pool/" + std::string(name) + "/" + std::to_string(i), pool->images()[i]);
    }
    pools[name] = {{"size", pool->images().size()}, {"draw", pool->rng().draw}};
  }
  const json state = {{"cycle_steps", cycle_steps_},
                      {"res_steps", res_steps_},
                      {"global_step", global_step_},
                      {"consecutive_aborts", consecutive_aborts_},
                      {"rng_seed", rng_.seed},
                      {"rng_draw", rng_.draw},
                      {"adam_steps", adam_steps},
                      {"pools", pools}};
  a.metadata["format"] = kCheckpointFormat;
  a.metadata["version"] = std::to_string(kCheckpointVersion);
  a.metadata["config"] = config_to_json(cfg_).dump();
  a.metadata["state"] = state.dump();
  return a;
}

Trainer Trainer::from_archive(const Archive& a) {
  const auto fmt = a.metadata.find("format");
  if (fmt == a.metadata.end() || fmt->second != kCheckpointFormat) {
    throw IncompatibleError("archive is not a training checkpoint");
  }
  const auto ver = a.metadata.find("version");
  if (ver == a.metadata.end() || ver->second != std::to_string(kCheckpointVersion)) {
    throw IncompatibleError("checkpoint version " + (ver == a.metadata.end() ? std::string("?") : ver->second) +
                            " is not supported by this build (expects " + std::to_string(kCheckpointVersion) + ")");
  }
  const TrainConfig cfg = config_from_json(json::parse(a.metadata.at("config")));
  const json state = json::parse(a.metadata.at("state"));

  const ModelConfig mc = cfg.model_config();
  ModelBundle b;
  b.G = std::make_shared<Generator<float>>(mc.generator);
  b.enhance = b.G;
  b.F = std::make_shared<Generator<float>>(mc.generator);
  b.D_X = std::make_shared<Discriminator<float>>(mc.discriminator);
  b.D_Y = std::make_shared<Discriminator<float>>(mc.discriminator);
  b.D_Z = std::make_shared<Discriminator<float>>(mc.discriminator);
  a.get("G/", b.G->params());
  a.get("F/", b.F->params());
  a.get("D_X/", b.D_X->params());
  a.get("D_Y/", b.D_Y->params());
  a.get("D_Z/", b.D_Z->params());
  {
    // Layout only; weights come from the archive, not from weights_path.
    FeatureConfig layout = mc.features;
    layout.weights_path.clear();
    FeatureExtractor<float> probe(layout);
    ParameterSet<float> weights = probe.params();
    a.get("features/", weights);
    b.features = std::make_shared<const FeatureExtractor<float>>(mc.features, weights);
  }

  Trainer t(cfg, std::move(b));
  for (const char* g : kGroups) {
    auto& opt = t.optimizer(g);
    a.get(std::string("adam/") + g + "/m/", opt.first_moment());
    a.get(std::string("adam/") + g + "/v/", opt.second_moment());
    opt.set_steps(state.at("adam_steps").at(g).get<int64_t>());
  }
  const std::pair<const char*, FakePool*> pool_list[] = {{"X", &t.pool_X_}, {"Y", &t.pool_Y_}, {"Z", &t.pool_Z_}};
  for (const auto& [name, pool] : pool_list) {
    const auto& ps = state.at("pools").at(name);
    pool->rng().draw = ps.at("draw").get<uint64_t>();
    const auto n = ps.at("size").get<size_t>();
    for (size_t i = 0; i < n; ++i) {
      const auto& at = a.tensors.at("pool/" + std::string(name) + "/" + std::to_string(i));
      Tensor<float> img(at.shape.at(0), at.shape.at(1), at.shape.at(2), at.shape.at(3));
      a.get("pool/" + std::string(name) + "/" + std::to_string(i), img);
      pool->images().push_back(std::move(img));
    }
  }
  t.cycle_steps_ = state.at("cycle_steps").get<int64_t>();
  t.res_steps_ = state.at("res_steps").get<int64_t>();
  t.global_step_ = state.at("global_step").get<int64_t>();
  t.consecutive_aborts_ = state.at("consecutive_aborts").get<int>();
  t.rng_.seed = state.at("rng_seed").get<uint64_t>();
  t.rng_.draw = state.at("rng_draw").get<uint64_t>();
  return t;
}

void save_checkpoint(const Trainer& trainer, const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  write_archive(trainer.to_archive(), path);
}

Trainer load_checkpoint(const fs::path& path) {
  const Archive a = read_archive(path);
  try {
    return Trainer::from_archive(a);
  } catch (const json::exception& e) {
    throw IntegrityError("checkpoint metadata is malformed: " + std::string(e.what()));
  } catch (const std::out_of_range& e) {
    throw IntegrityError("checkpoint is missing state: " + std::string(e.what()));
  }
}

json report_to_json(const LossReport& r, const std::string& phase) {
  return {{"step", r.step},       {"phase", phase},         {"gan_G_Y", r.gan_G_Y},     {"gan_F_X", r.gan_F_X},
          {"gan_G_Z", r.gan_G_Z}, {"cyc", r.cyc},           {"perc", r.perc},           {"total_G", r.total_G},
          {"total_D_X", r.total_D_X}, {"total_D_Y", r.total_D_Y}, {"total_D_Z", r.total_D_Z}};
}

// ---------------------------------------------------------------- loop

fs::path latest_checkpoint(const fs::path& run_dir) {
  const fs::path pointer = run_dir / "latest";
  if (!fs::exists(pointer)) throw IoError("no 'latest' checkpoint pointer in " + run_dir.string());
  std::string name = read_file(pointer);
  while (!name.empty() && (name.back() == '\n' || name.back() == '\r')) name.pop_back();
  return run_dir / name;
}

namespace {

std::string checkpoint_name(int64_t cycle_step) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "ckpt_%06lld.safetensors", static_cast<long long>(cycle_step));
  return buf;
}

// Keeps only log lines up to and including `last_step` (resume after a crash).
void truncate_log(const fs::path& log, int64_t last_step) {
  if (!fs::exists(log)) return;
  std::ifstream is(log);
  std::string line, kept;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    if (json::parse(line).at("step").get<int64_t>() > last_step) break;
    kept += line + "\n";
  }
  is.close();
  write_file_atomic(log, kept);
}

}  // namespace

Trainer train(const DatasetManifest& manifest, const TrainConfig& cfg_in, const fs::path& run_dir,
              const TrainOptions& options) {
  fs::create_directories(run_dir);
  const fs::path log_path = run_dir / "log.jsonl";
  Trainer trainer = [&] {
    if (options.resume) {
      Trainer t = load_checkpoint(latest_checkpoint(run_dir));
      truncate_log(log_path, t.global_step());
      return t;
    }
    cfg_in.validate();
    write_file_atomic(run_dir / "config.json", config_to_json(cfg_in).dump(2) + "\n");
    write_file_atomic(log_path, "");
    return Trainer(cfg_in);
  }();
  TrainConfig cfg = trainer.config();
  if (options.resume) {
    // A resumed run may extend the schedule; everything else comes from the checkpoint.
    cfg.total_cycle_steps = cfg_in.total_cycle_steps;
  }
  if (manifest.count(Domain::X, Split::train) == 0 || manifest.count(Domain::Y, Split::train) == 0) {
    throw EmptySourceError("manifest has an empty training split");
  }

  FrameStore store(manifest);
  std::ofstream log(log_path, std::ios::app);
  if (!log) throw IoError("cannot open " + log_path.string());
  auto emit = [&](const StepResult& s, const std::string& phase) {
    if (s.aborted) return;
    if (s.report.step % cfg.log_every == 0) {
      log << report_to_json(s.report, phase).dump() << "\n";
      log.flush();
      if (!log) throw IoError("cannot append to " + log_path.string());
    }
    if (options.on_report) options.on_report(s.report, phase);
  };
  auto checkpoint = [&] {
    const std::string name = checkpoint_name(trainer.cycle_steps());
    save_checkpoint(trainer, run_dir / name);
    write_file_atomic(run_dir / "latest", name + "\n");
  };

  const SampleOptions sample{cfg.flip};
  while (trainer.cycle_steps() < cfg.total_cycle_steps) {
    StepResult s;
    do {
      const auto bx = sample_batch(store, Domain::X, cfg.batch_size, cfg.crop, trainer.rng(), sample);
      const auto by = sample_batch(store, Domain::Y, cfg.batch_size, cfg.crop, trainer.rng(), sample);
      s = trainer.style_step(bx.images, by.images);
    } while (s.aborted);
    emit(s, "style");
    for (int r = 0; r < cfg.res_steps_per_cycle_step; ++r) {
      StepResult rs;
      do {
        const auto bz = sample_batch(store, Domain::Z, cfg.batch_size, cfg.crop, trainer.rng(), sample);
        rs = trainer.resolution_step(bz.images, bz.targets);
      } while (rs.aborted);
      emit(rs, "resolution");
    }
    const bool stopping = options.stop_after && trainer.cycle_steps() >= *options.stop_after;
    if (trainer.cycle_steps() % cfg.checkpoint_every == 0 || trainer.cycle_steps() == cfg.total_cycle_steps ||
        stopping) {
      checkpoint();
    }
    if (stopping) break;
  }
  if (trainer.cycle_steps() == 0) checkpoint();
  return trainer;
}

}  // namespace vhs2hd
