#include <gtest/gtest.h>

#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/videoio.hpp>

#include "test_support.hpp"
#include "vhs2hd/archive.hpp"
#include "vhs2hd/dataset.hpp"

using namespace vhs2hd;
namespace fs = std::filesystem;

namespace {

Frame random_frame(Index h, Index w, uint64_t seed) {
  Frame f;
  f.pixels = test::random_tensor<float>({1, 3, h, w}, seed, 0.0, 1.0);
  return f;
}

// Writes `n` small distinct PNGs into `dir`.
void write_images(const fs::path& dir, int n, int side = 32) {
  fs::create_directories(dir);
  for (int i = 0; i < n; ++i) {
    cv::Mat m(side, side, CV_8UC3, cv::Scalar((i * 7) % 256, (i * 13) % 256, (i * 29) % 256));
    m.at<cv::Vec3b>(i % side, (3 * i) % side) = cv::Vec3b(255, 0, 0);
    char name[32];
    std::snprintf(name, sizeof name, "img_%03d.png", i);
    cv::imwrite((dir / name).string(), m);
  }
}

}  // namespace

TEST(Degradation, KernelIsNormalizedOddAndSymmetric) {
  for (const double sigma : {0.5, 1.0, 2.0, 3.7}) {
    const int r = static_cast<int>(std::ceil(2 * sigma));
    const auto k = gaussian_kernel(sigma, r);
    ASSERT_EQ(k.size() % 2, 1u);
    EXPECT_NEAR(std::accumulate(k.begin(), k.end(), 0.0), 1.0, 1e-12);
    for (size_t i = 0; i < k.size(); ++i) EXPECT_DOUBLE_EQ(k[i], k[k.size() - 1 - i]);
  }
  DegradationConfig c;
  EXPECT_EQ(c.kernel_width(), 9);
}

TEST(Degradation, ReflectIndexIsHalfSampleSymmetric) {
  EXPECT_EQ(reflect_index(-1, 5), 0);
  EXPECT_EQ(reflect_index(-2, 5), 1);
  EXPECT_EQ(reflect_index(5, 5), 4);
  EXPECT_EQ(reflect_index(6, 5), 3);
  EXPECT_EQ(reflect_index(2, 5), 2);
}

TEST(Degradation, ConstantFrameSurvivesUnchanged) {
  const Frame f = make_frame(64, 64, 0.4f);
  for (const auto method : {Resample::bicubic, Resample::bilinear}) {
    DegradationConfig cfg;
    cfg.resample = method;
    const Frame z = synthesize_lowres(f, cfg);
    EXPECT_LT((z.pixels.array() - 0.4f).abs().maxCoeff(), 1e-6f);
  }
}

TEST(Degradation, ImpulseResponseMatchesOuterProductOfTaps) {
  PlaneD img = PlaneD::Zero(21, 21);
  img(10, 10) = 1.0;
  const double sigma = 1.5;
  const int r = 3;
  const auto k = gaussian_kernel(sigma, r);
  const PlaneD out = blur_plane(img, sigma, r);
  for (Index i = 0; i < 21; ++i) {
    for (Index j = 0; j < 21; ++j) {
      const Index di = i - 10, dj = j - 10;
      const double expected = (std::abs(di) <= r && std::abs(dj) <= r)
                                  ? k[static_cast<size_t>(di + r)] * k[static_cast<size_t>(dj + r)]
                                  : 0.0;
      EXPECT_NEAR(out(i, j), expected, 1e-14);
    }
  }
}

TEST(Degradation, BlurPreservesMean) {
  const Frame f = random_frame(48, 40, 1);
  const Frame b = gaussian_blur(f, 2.0, 4);
  for (Index c = 0; c < 3; ++c) {
    EXPECT_NEAR(b.pixels.plane(0, c).template cast<double>().mean(),
                f.pixels.plane(0, c).template cast<double>().mean(), 1e-5);
  }
}

TEST(Degradation, OutputShapesAndDeterminism) {
  const Frame f = random_frame(256, 256, 2);
  DegradationConfig cfg;
  const Frame z1 = synthesize_lowres(f, cfg);
  const Frame z2 = synthesize_lowres(f, cfg);
  EXPECT_EQ(z1.pixels.shape(), (Shape{1, 3, 256, 256}));
  EXPECT_TRUE((z1.pixels.array() == z2.pixels.array()).all());
  EXPECT_TRUE(z1.in_range());
  EXPECT_TRUE(std::isfinite(psnr(z1, f)));
  cfg.restore_size = false;
  EXPECT_EQ(synthesize_lowres(f, cfg).pixels.shape(), (Shape{1, 3, 64, 64}));
  const Frame odd = random_frame(66, 70, 3);
  cfg.restore_size = true;
  EXPECT_EQ(synthesize_lowres(odd, cfg).pixels.shape(), (Shape{1, 3, 64, 68}));
}

TEST(Degradation, RejectsBadConfigurations) {
  DegradationConfig cfg;
  cfg.scale_factor = 1;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = {};
  cfg.blur_sigma = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(Frame, EightBitRoundTripIsLossless) {
  const auto dir = test::scratch_dir("frame_rt");
  Frame f = make_frame(20, 24);
  for (Index i = 0; i < f.pixels.size(); ++i) f.pixels.data()[i] = static_cast<float>(i % 256) / 255.f;
  save_frame(f, dir / "f.png");
  const Frame g = load_frame(dir / "f.png");
  EXPECT_TRUE((g.pixels.array() == f.pixels.array()).all());
  save_frame(g, dir / "g.png");
  EXPECT_EQ(read_file(dir / "f.png"), read_file(dir / "g.png"));
  EXPECT_THROW(load_frame(dir / "missing.png"), DecodeError);
}

TEST(Manifest, SplitsNinetyFiveFiveDisjointAndReproducibly) {
  const auto dir = test::scratch_dir("manifest");
  write_images(dir / "x", 100);
  write_images(dir / "y", 100);
  const auto m = build_manifest(dir / "x", dir / "y", 0.95, 7, {});
  for (const auto d : {Domain::X, Domain::Y}) {
    EXPECT_EQ(m.count(d, Split::train), 95u);
    EXPECT_EQ(m.count(d, Split::test), 5u);
    std::set<fs::path> train;
    for (const auto& p : m.paths(d, Split::train)) train.insert(p);
    for (const auto& p : m.paths(d, Split::test)) EXPECT_EQ(train.count(p), 0u);
  }
  EXPECT_TRUE(m.warnings.empty());
  save_manifest(m, dir / "a.json");
  save_manifest(build_manifest(dir / "x", dir / "y", 0.95, 7, {}), dir / "b.json");
  EXPECT_EQ(read_file(dir / "a.json"), read_file(dir / "b.json"));
  const auto loaded = load_manifest(dir / "a.json");
  EXPECT_EQ(loaded.paths(Domain::X, Split::test), m.paths(Domain::X, Split::test));
  EXPECT_EQ(degradation_to_json(loaded.degradation), degradation_to_json(m.degradation));
  const auto other = build_manifest(dir / "x", dir / "y", 0.95, 8, {});
  EXPECT_NE(other.paths(Domain::X, Split::test), m.paths(Domain::X, Split::test));
}

TEST(Manifest, FullTrainFractionWarnsAboutEmptyTestSplit) {
  const auto dir = test::scratch_dir("manifest_full");
  write_images(dir / "x", 5);
  write_images(dir / "y", 5);
  const auto m = build_manifest(dir / "x", dir / "y", 1.0, 0, {});
  EXPECT_EQ(m.count(Domain::X, Split::train), 5u);
  ASSERT_EQ(m.warnings.size(), 2u);
  EXPECT_NE(m.warnings[0].find("empty test split"), std::string::npos);
  EXPECT_THROW(build_manifest(dir / "x", dir / "y", 0.0, 0, {}), ConfigError);
}

TEST(Manifest, EmptyDomainIsNamed) {
  const auto dir = test::scratch_dir("manifest_empty");
  write_images(dir / "x", 3);
  fs::create_directories(dir / "y");
  try {
    build_manifest(dir / "x", dir / "y", 0.95, 0, {});
    FAIL();
  } catch (const EmptySourceError& e) {
    EXPECT_NE(std::string(e.what()).find("domain Y"), std::string::npos);
  }
}

TEST(ExtractFrames, VideoStrideKeepsOriginalIndices) {
  const auto dir = test::scratch_dir("video");
  const auto video = dir / "tape.avi";
  {
    cv::VideoWriter w(video.string(), cv::VideoWriter::fourcc('M', 'J', 'P', 'G'), 10, cv::Size(32, 32));
    ASSERT_TRUE(w.isOpened());
    for (int i = 0; i < 10; ++i) w.write(cv::Mat(32, 32, CV_8UC3, cv::Scalar(20 * i, 100, 200 - 10 * i)));
  }
  EXPECT_EQ(extract_frames(video, dir / "all", 1), 10u);
  EXPECT_EQ(list_images(dir / "all").size(), 10u);
  EXPECT_EQ(extract_frames(video, dir / "every3", 3), 4u);
  std::vector<std::string> names;
  for (const auto& p : list_images(dir / "every3")) names.push_back(p.filename().string());
  EXPECT_EQ(names, (std::vector<std::string>{"tape_000000.png", "tape_000003.png", "tape_000006.png",
                                             "tape_000009.png"}));
}

TEST(ExtractFrames, ImageDirectoryPassesThrough) {
  const auto dir = test::scratch_dir("imgdir");
  write_images(dir / "src", 7);
  EXPECT_EQ(extract_frames(dir / "src", dir / "out", 1), 7u);
  EXPECT_EQ(list_images(dir / "out").size(), 7u);
}

TEST(ExtractFrames, UndecodableOrEmptySourcesFail) {
  const auto dir = test::scratch_dir("badvideo");
  std::ofstream(dir / "junk.avi") << "not a video";
  EXPECT_THROW(extract_frames(dir / "junk.avi", dir / "o1", 1), DecodeError);
  EXPECT_THROW(extract_frames(dir / "missing.avi", dir / "o2", 1), DecodeError);
  fs::create_directories(dir / "empty");
  EXPECT_THROW(extract_frames(dir / "empty", dir / "o3", 1), EmptySourceError);
  EXPECT_THROW(extract_frames(dir / "empty", dir / "o4", 0), ConfigError);
}

class Sampling : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = test::scratch_dir("sampling");
    write_images(dir_ / "x", 4, 48);
    write_images(dir_ / "y", 4, 48);
    manifest_ = build_manifest(dir_ / "x", dir_ / "y", 1.0, 1, {});
  }
  fs::path dir_;
  DatasetManifest manifest_;
};

TEST_F(Sampling, BatchShapeRangeAndDeterminism) {
  FrameStore s1(manifest_), s2(manifest_);
  RngState r1{42, 0}, r2{42, 0};
  const auto a = sample_batch(s1, Domain::X, 3, 32, r1);
  const auto b = sample_batch(s2, Domain::X, 3, 32, r2);
  EXPECT_EQ(a.images.shape(), (Shape{3, 3, 32, 32}));
  EXPECT_GE(a.images.array().minCoeff(), -1.f);
  EXPECT_LE(a.images.array().maxCoeff(), 1.f);
  EXPECT_TRUE((a.images.array() == b.images.array()).all());
  EXPECT_EQ(r1.draw, 1u);
  const auto c = sample_batch(s1, Domain::X, 3, 32, r1);
  EXPECT_FALSE((a.images.array() == c.images.array()).all());
}

TEST_F(Sampling, DegradedBatchesCarryAlignedTargets) {
  FrameStore store(manifest_);
  RngState rng{3, 0};
  const auto z = sample_batch(store, Domain::Z, 2, 32, rng, {false});
  ASSERT_EQ(z.targets.shape(), z.images.shape());
  // With flips off, the target is the sharp crop at the same window; the
  // degraded crop must be a blurred version of it (close in mean).
  for (Index n = 0; n < 2; ++n) {
    EXPECT_NEAR(z.images.sample(n).mean(), z.targets.sample(n).mean(), 0.05);
  }
  EXPECT_FALSE((z.images.array() == z.targets.array()).all());
}

TEST_F(Sampling, CropLargerThanFrameIsShapeError) {
  FrameStore store(manifest_);
  RngState rng{};
  EXPECT_THROW(sample_batch(store, Domain::Y, 1, 64, rng), ShapeError);
}
