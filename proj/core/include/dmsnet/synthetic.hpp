#pragma once

#include <array>
#include <cstdint>
#include <filesystem>

#include <opencv2/core.hpp>

#include "dmsnet/dataio.hpp"
#include "dmsnet/trainer.hpp"

namespace dmsnet {

/// Fundus-like test image: dark surround, circular field of view with a
/// radial illumination falloff, a few vessels, and class-specific lesions
/// (none for class 0).
cv::Mat synthetic_fundus(int size, int cls, SampleRng& rng);

struct SyntheticOdirOptions {
    int image_size = 96;
    std::array<int, kNumClasses> class_counts{4, 4, 2, 0, 0, 0, 0, 0};
    int multilabel_rows = 0;      // extra rows with two labels set
    int missing_image_rows = 0;   // extra rows pointing at absent files
    std::uint64_t seed = 7;
};

/// Writes <dir>/odir.csv and <dir>/images/*.png in the ODIR layout and
/// returns the CSV path. Output is a pure function of the options.
std::filesystem::path write_synthetic_odir(const std::filesystem::path& dir, const SyntheticOdirOptions& options);

/// `n` pairs of two visually separable classes (N and D), alternating.
TensorPairs separable_pairs(int n, int resolution, std::uint64_t seed);

}  // namespace dmsnet
