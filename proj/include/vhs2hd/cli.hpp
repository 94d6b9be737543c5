#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "vhs2hd/frame.hpp"
#include "vhs2hd/models.hpp"

namespace vhs2hd {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitRuntime = 2;
inline constexpr int kExitDivergence = 3;

// Parses and runs one command line; returns the process exit code.
int run_cli(int argc, const char* const* argv);

// The G network stored in a training checkpoint. A model configuration in
// `expected` must match the checkpoint's, otherwise IncompatibleError.
Generator<float> load_generator(const std::filesystem::path& checkpoint,
                                const std::optional<GeneratorConfig>& expected = std::nullopt);

inline constexpr int kTileOverlap = 32;

// Runs `g` on a unit-range frame of any size: reflect-pads to the generator's
// multiple and crops back. With `tile` > 0 the frame is processed in
// overlapping tile x tile windows blended with linear feathering.
Frame translate_frame(const Generator<float>& g, const Frame& input, int tile = 0);

// Synthetic unpaired corpus: `y` holds sharp, saturated procedural scenes
// and `x` soft, low-resolution, washed-out ones with a colour cast.
void make_demo_data(const std::filesystem::path& out_dir, int count, int size, uint64_t seed);

}  // namespace vhs2hd
