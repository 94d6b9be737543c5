#include <gtest/gtest.h>

#include <fstream>

#include "test_support.hpp"
#include "vhs2hd/cli.hpp"
#include "vhs2hd/trainer.hpp"

using namespace vhs2hd;
using vhs2hd::test::random_tensor;
using vhs2hd::test::tiny_train_config;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

const char* kAll[] = {"G", "F", "D_X", "D_Y", "D_Z", "features"};

std::map<std::string, uint64_t> hashes(const Trainer& t) {
  std::map<std::string, uint64_t> h;
  for (const char* g : kAll) h[g] = t.group_hash(g);
  return h;
}

Tensor<float> batch(uint64_t seed) { return random_tensor<float>({1, 3, 16, 16}, seed); }

// Shared demo corpus for the loop tests.
const DatasetManifest& demo_manifest() {
  static const DatasetManifest m = [] {
    const auto dir = test::scratch_dir("trainer_demo");
    make_demo_data(dir, 12, 32, 1);
    return build_manifest(dir / "x", dir / "y", 0.95, 0, {});
  }();
  return m;
}

}  // namespace

TEST(TrainConfig, JsonRoundTripAndPresets) {
  for (const char* name : {"paper", "desk"}) {
    const auto c = preset(name);
    EXPECT_NO_THROW(c.validate());
    const auto j = config_to_json(c);
    EXPECT_EQ(config_to_json(config_from_json(j)), j);
  }
  const auto paper = preset("paper");
  EXPECT_EQ(paper.lr, 1e-4);
  EXPECT_EQ(paper.adam_beta1, 0.5);
  EXPECT_EQ(paper.lambda_cyc, 0.1);
  EXPECT_EQ(paper.kappa_perc, 0.05);
  EXPECT_EQ(paper.res_steps_per_cycle_step, 5);
  EXPECT_EQ(paper.crop, 256);
  EXPECT_EQ(paper.total_cycle_steps, 100000);
  EXPECT_THROW(preset("laptop"), ConfigError);
}

TEST(TrainConfig, RejectsUnknownKeysAndBadValues) {
  auto j = config_to_json(TrainConfig{});
  j["lamda_cyc"] = 1.0;
  EXPECT_THROW(config_from_json(j), ConfigError);
  j = json{{"model", {{"generator", {{"dept", 3}}}}}};
  EXPECT_THROW(config_from_json(j), ConfigError);
  EXPECT_THROW(config_from_json(json{{"lr", 0.0}}), ConfigError);
  EXPECT_THROW(config_from_json(json{{"crop", 100}}), ConfigError);
  EXPECT_THROW(config_from_json(json{{"adam_beta1", 0.999}, {"adam_beta2", 0.5}}), ConfigError);
  EXPECT_THROW(config_from_json(json{{"lambda_cyc", -1.0}}), ConfigError);
  EXPECT_THROW(config_from_json(json{{"gan_form", "wasserstein"}}), ConfigError);
  EXPECT_NO_THROW(config_from_json(json{{"lambda_cyc", 0.0}, {"kappa_perc", 0.0}, {"res_steps_per_cycle_step", 0}}));
}

TEST(TrainConfig, DottedOverrides) {
  auto j = config_to_json(preset("desk"));
  apply_override(j, "lambda_cyc=0.5");
  apply_override(j, "model.generator.depth=3");
  apply_override(j, "gan_form=vanilla_log");
  apply_override(j, "model.features.tap_stage=\"relu1_2\"");
  const auto c = config_from_json(j);
  EXPECT_EQ(c.lambda_cyc, 0.5);
  EXPECT_EQ(c.model.generator.depth, 3);
  EXPECT_EQ(c.gan_form, GanForm::vanilla_log);
  EXPECT_EQ(c.model.features.tap_stage, "relu1_2");
  EXPECT_EQ(c.model_config().discriminator.activation, FinalActivation::sigmoid);
  EXPECT_THROW(apply_override(j, "model.generator.width=3"), ConfigError);
  EXPECT_THROW(apply_override(j, "lr"), ConfigError);
}

TEST(Trainer, EnhanceNetIsG) {
  const auto cfg = tiny_train_config();
  Trainer t(cfg);
  EXPECT_TRUE(t.bundle().shares_storage());
  EXPECT_EQ(t.group_hash("G"), t.group_hash("enhance"));
  auto unshared = init_models<float>(cfg.model_config(), 0);
  unshared.enhance = std::make_shared<Generator<float>>(*unshared.G);
  EXPECT_THROW(Trainer(cfg, unshared), ConfigError);
}

TEST(Trainer, StyleStepTouchesOnlyItsGroups) {
  Trainer t(tiny_train_config());
  const auto before = hashes(t);
  const auto r = t.style_step(batch(1), batch(2));
  ASSERT_FALSE(r.aborted);
  const auto after = hashes(t);
  for (const char* g : {"G", "F", "D_X", "D_Y"}) EXPECT_NE(before.at(g), after.at(g)) << g;
  for (const char* g : {"D_Z", "features"}) EXPECT_EQ(before.at(g), after.at(g)) << g;
  EXPECT_EQ(t.cycle_steps(), 1);
  EXPECT_EQ(t.res_steps(), 0);
  EXPECT_EQ(r.report.step, 1);
  EXPECT_EQ(r.report.gan_G_Z, 0.0);
  EXPECT_EQ(r.report.perc, 0.0);
  EXPECT_GT(r.report.cyc, 0.0);
}

TEST(Trainer, ResolutionStepTouchesOnlyItsGroups) {
  Trainer t(tiny_train_config());
  const auto before = hashes(t);
  const auto r = t.resolution_step(batch(3), batch(4));
  ASSERT_FALSE(r.aborted);
  const auto after = hashes(t);
  for (const char* g : {"G", "D_Z"}) EXPECT_NE(before.at(g), after.at(g)) << g;
  for (const char* g : {"F", "D_X", "D_Y", "features"}) EXPECT_EQ(before.at(g), after.at(g)) << g;
  EXPECT_EQ(t.group_hash("enhance"), after.at("G"));
  EXPECT_EQ(t.res_steps(), 1);
  EXPECT_EQ(r.report.cyc, 0.0);
  EXPECT_GT(r.report.perc, 0.0);
}

TEST(Trainer, ZeroCycleWeightWithFlatDiscriminatorsLeavesGUnchanged) {
  auto cfg = tiny_train_config();
  cfg.lambda_cyc = 0.0;
  Trainer t(cfg);
  t.bundle().D_X->zero_final_layer(0.5f);
  t.bundle().D_Y->zero_final_layer(0.5f);
  const auto g = t.group_hash("G");
  const auto f = t.group_hash("F");
  t.style_step(batch(5), batch(6), {false});
  EXPECT_EQ(t.group_hash("G"), g);
  EXPECT_EQ(t.group_hash("F"), f);
  // With the cycle term on, G moves even though the adversaries are flat.
  cfg.lambda_cyc = 0.1;
  Trainer u(cfg);
  u.bundle().D_X->zero_final_layer(0.5f);
  u.bundle().D_Y->zero_final_layer(0.5f);
  const auto g2 = u.group_hash("G");
  u.style_step(batch(5), batch(6), {false});
  EXPECT_NE(u.group_hash("G"), g2);
}

TEST(Trainer, ZeroPerceptualWeightWithFlatDiscriminatorLeavesGUnchanged) {
  auto cfg = tiny_train_config();
  cfg.kappa_perc = 0.0;
  Trainer t(cfg);
  t.bundle().D_Z->zero_final_layer(0.5f);
  const auto g = t.group_hash("G");
  t.resolution_step(batch(7), batch(8), {false});
  EXPECT_EQ(t.group_hash("G"), g);
  cfg.kappa_perc = 0.05;
  Trainer u(cfg);
  u.bundle().D_Z->zero_final_layer(0.5f);
  const auto g2 = u.group_hash("G");
  u.resolution_step(batch(7), batch(8), {false});
  EXPECT_NE(u.group_hash("G"), g2);
}

TEST(Trainer, NonFiniteStepRollsBackAndRepeatedFailuresDiverge) {
  Trainer t(tiny_train_config());
  t.style_step(batch(9), batch(10));
  const auto before = hashes(t);
  const auto adam_steps = t.optimizer("D_Y").steps();
  auto bad = batch(11);
  bad.data()[17] = std::numeric_limits<float>::quiet_NaN();
  const auto r1 = t.style_step(bad, batch(12));
  EXPECT_TRUE(r1.aborted);
  EXPECT_FALSE(r1.diverged_term.empty());
  EXPECT_EQ(hashes(t), before);
  EXPECT_EQ(t.optimizer("D_Y").steps(), adam_steps);
  EXPECT_EQ(t.cycle_steps(), 1);
  EXPECT_EQ(t.global_step(), 1);
  EXPECT_TRUE(t.resolution_step(bad, batch(13)).aborted);
  EXPECT_EQ(hashes(t), before);
  EXPECT_THROW(t.style_step(bad, batch(14)), DivergenceError);
}

TEST(Trainer, SuccessfulStepResetsAbortCounter) {
  Trainer t(tiny_train_config());
  auto bad = batch(15);
  bad.data()[0] = std::numeric_limits<float>::infinity();
  EXPECT_TRUE(t.style_step(bad, batch(16)).aborted);
  EXPECT_TRUE(t.style_step(bad, batch(16)).aborted);
  EXPECT_FALSE(t.style_step(batch(17), batch(16)).aborted);
  EXPECT_TRUE(t.style_step(bad, batch(16)).aborted);
  EXPECT_TRUE(t.style_step(bad, batch(16)).aborted);
}

TEST(Trainer, DiscriminatorStepUsuallyLowersItsLoss) {
  Discriminator<float> d(test::tiny_discriminator(FinalActivation::linear));
  init_gaussian(d.params(), 1, "D", 0.02);
  Adam<float> opt(AdamConfig{}, d.params());
  int decreased = 0;
  for (uint64_t i = 0; i < 100; ++i) {
    const auto real = random_tensor<float>({1, 3, 8, 8}, 1000 + i);
    const auto fake = random_tensor<float>({1, 3, 8, 8}, 2000 + i);
    typename Discriminator<float>::Tape tr, tf;
    const auto loss = adversarial_loss_d(d.forward(real, &tr), d.forward(fake, &tf), GanForm::least_squares);
    auto g = d.params().zeros_like();
    d.backward(tr, loss.grad_real, &g);
    d.backward(tf, loss.grad_fake, &g);
    opt.step(d.params(), g);
    decreased += adversarial_loss_d(d.forward(real), d.forward(fake), GanForm::least_squares).value < loss.value;
  }
  EXPECT_GE(decreased, 80);
}

TEST(Checkpoint, SaveLoadSaveIsByteIdentical) {
  const auto dir = test::scratch_dir("ckpt");
  auto cfg = tiny_train_config();
  cfg.fake_pool_size = 2;
  Trainer t(cfg);
  t.style_step(batch(20), batch(21));
  t.resolution_step(batch(22), batch(23));
  save_checkpoint(t, dir / "a.safetensors");
  const Trainer u = load_checkpoint(dir / "a.safetensors");
  save_checkpoint(u, dir / "b.safetensors");
  EXPECT_EQ(read_file(dir / "a.safetensors"), read_file(dir / "b.safetensors"));
  EXPECT_EQ(hashes(u), hashes(t));
  EXPECT_EQ(u.global_step(), 2);
}

TEST(Checkpoint, VersionMismatchAndTruncationAreReported) {
  const auto dir = test::scratch_dir("ckpt_bad");
  Trainer t(tiny_train_config());
  auto a = t.to_archive();
  a.metadata["version"] = "99";
  write_archive(a, dir / "v.safetensors");
  EXPECT_THROW(load_checkpoint(dir / "v.safetensors"), IncompatibleError);
  save_checkpoint(t, dir / "ok.safetensors");
  const auto bytes = read_file(dir / "ok.safetensors");
  std::ofstream(dir / "t.safetensors", std::ios::binary) << bytes.substr(0, bytes.size() - 100);
  EXPECT_THROW(load_checkpoint(dir / "t.safetensors"), IntegrityError);
  auto b = t.to_archive();
  b.metadata["state"] = "{";
  write_archive(b, dir / "s.safetensors");
  EXPECT_THROW(load_checkpoint(dir / "s.safetensors"), IntegrityError);
}

TEST(TrainLoop, CountersFollowSchedule) {
  const auto dir = test::scratch_dir("loop_counts");
  auto cfg = tiny_train_config();
  int style = 0, res = 0;
  TrainOptions opts;
  opts.on_report = [&](const LossReport&, const std::string& phase) { ++(phase == "style" ? style : res); };
  const Trainer t = train(demo_manifest(), cfg, dir, opts);
  EXPECT_EQ(t.cycle_steps(), 10);
  EXPECT_EQ(t.res_steps(), 50);
  EXPECT_EQ(t.global_step(), 60);
  EXPECT_EQ(style, 10);
  EXPECT_EQ(res, 50);
  EXPECT_TRUE(fs::exists(dir / "ckpt_000005.safetensors"));
  EXPECT_TRUE(fs::exists(dir / "ckpt_000010.safetensors"));
  EXPECT_EQ(latest_checkpoint(dir), dir / "ckpt_000010.safetensors");
  EXPECT_TRUE(fs::exists(dir / "config.json"));
  std::ifstream log(dir / "log.jsonl");
  std::string line;
  int lines = 0;
  while (std::getline(log, line)) {
    const auto j = json::parse(line);
    EXPECT_EQ(j.at("step").get<int>(), ++lines);
    EXPECT_TRUE(j.contains("total_G"));
  }
  EXPECT_EQ(lines, 60);
}

TEST(TrainLoop, ZeroResolutionStepsRunsStyleOnly) {
  const auto dir = test::scratch_dir("loop_k0");
  auto cfg = tiny_train_config();
  cfg.res_steps_per_cycle_step = 0;
  cfg.total_cycle_steps = 4;
  const Trainer t = train(demo_manifest(), cfg, dir);
  EXPECT_EQ(t.cycle_steps(), 4);
  EXPECT_EQ(t.res_steps(), 0);
  EXPECT_EQ(t.group_hash("D_Z"), Trainer(cfg).group_hash("D_Z"));
}

TEST(TrainLoop, ResumeMatchesUninterruptedRun) {
  const auto full_dir = test::scratch_dir("loop_full");
  const auto split_dir = test::scratch_dir("loop_split");
  auto cfg = tiny_train_config();
  cfg.res_steps_per_cycle_step = 2;
  const Trainer full = train(demo_manifest(), cfg, full_dir);
  TrainOptions stop;
  stop.stop_after = 5;
  const Trainer half = train(demo_manifest(), cfg, split_dir, stop);
  EXPECT_EQ(half.cycle_steps(), 5);
  TrainOptions resume;
  resume.resume = true;
  const Trainer resumed = train(demo_manifest(), cfg, split_dir, resume);
  EXPECT_EQ(resumed.cycle_steps(), 10);
  EXPECT_EQ(hashes(resumed), hashes(full));
  EXPECT_EQ(read_file(full_dir / "log.jsonl"), read_file(split_dir / "log.jsonl"));
  EXPECT_EQ(read_file(full_dir / "ckpt_000010.safetensors"), read_file(split_dir / "ckpt_000010.safetensors"));
}

// Single fixed pairs from the demo corpus, desk-size networks at 64x64.
class Overfit : public ::testing::Test {
 protected:
  static Tensor<float> frame(const fs::path& p) {
    const Frame f = to_signed(center_crop(load_frame(p), 64, 64));
    return f.pixels;
  }
  void SetUp() override {
    const auto dir = test::scratch_dir("overfit");
    make_demo_data(dir, 1, 96, 4);
    y_ = frame(dir / "y" / "y_0000.png");
    x_ = frame(dir / "x" / "x_0000.png");
    Frame z = synthesize_lowres(center_crop(load_frame(dir / "y" / "y_0000.png"), 64, 64), {});
    z_ = to_signed(z).pixels;
    cfg_ = preset("desk");
    cfg_.model.features.tap_stage = "identity";
  }
  Tensor<float> x_, y_, z_;
  TrainConfig cfg_;
};

TEST_F(Overfit, StyleStepsLowerCycleTerm) {
  Trainer t(cfg_);
  double first = 0, last = 0;
  for (int s = 1; s <= 200; ++s) {
    const auto r = t.style_step(x_, y_);
    if (s == 1) first = r.report.cyc;
    last = r.report.cyc;
  }
  EXPECT_LT(last, first);
}

TEST_F(Overfit, ResolutionStepsHalvePerceptualTerm) {
  Trainer t(cfg_);
  double at10 = 0, at500 = 0;
  for (int s = 1; s <= 500; ++s) {
    const auto r = t.resolution_step(z_, y_);
    if (s == 10) at10 = r.report.perc;
    at500 = r.report.perc;
  }
  EXPECT_LT(at500, 0.5 * at10);
}
