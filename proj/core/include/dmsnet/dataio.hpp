#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include <opencv2/core.hpp>

#include "dmsnet/config.hpp"

namespace dmsnet {

namespace fs = std::filesystem;

enum class Provenance { original, augmented };
enum class Partition { train = 0, val = 1, test = 2 };

std::string to_string(Provenance p);
std::string to_string(Partition p);
Partition partition_from_string(std::string_view text);

struct PairedSample {
    std::string patient_id;
    int age = 0;
    std::string sex;
    fs::path left_path, right_path;
    LabelVector labels;
    Provenance provenance = Provenance::original;
    std::vector<std::string> source_ids;  // self for originals, {base, donor} for CutMix
};

struct SkippedRow {
    std::string patient_id;
    std::string reason;  // missing_image | label_mode
};

struct LoadReport {
    std::size_t rows = 0;
    std::size_t skipped = 0;
    std::vector<SkippedRow> skipped_rows;
};

struct OdirIndex {
    std::vector<PairedSample> samples;
    LoadReport report;
};

/// Reads an ODIR-style CSV (ID, Patient Age, Patient Sex, Left-Fundus,
/// Right-Fundus, N..O; extra columns ignored). Image names resolve against
/// `image_dir`, defaulting to the CSV's directory. Rows whose images do not
/// exist are skipped and counted. SchemaError for missing columns,
/// EmptyDatasetError for a file without data rows.
OdirIndex load_odir_index(const fs::path& csv_path, const fs::path& image_dir = {});

/// Per-sample random stream. Every sample index owns an independent stream
/// derived from (seed, purpose, index), so serial and parallel runs agree.
class SampleRng {
public:
    SampleRng(std::uint64_t seed, std::uint64_t purpose, std::uint64_t index);

    double uniform();                     // [0, 1), 53-bit resolution
    std::uint64_t below(std::uint64_t n);  // uniform integer in [0, n)

private:
    std::mt19937_64 engine_;
};

/// Non-uniform illumination correction on an 8-bit RGB image: per channel,
/// subtract a Gaussian-blurred background (sigma = width / 30), restore the
/// channel mean and clip to [0, 255]. FormatError for anything but CV_8UC3.
cv::Mat illumination_correct(const cv::Mat& rgb);

/// Scales the shorter side to `resolution` and centre-crops a square.
cv::Mat resize_center_crop(const cv::Mat& image, int resolution);

struct PairedImages {
    cv::Mat left, right;
};

/// Half-open pixel box [x0, x1) x [y0, y1).
struct CutBox {
    int x0 = 0, y0 = 0, x1 = 0, y1 = 0;
    bool contains(int x, int y) const { return x >= x0 && x < x1 && y >= y0 && y < y1; }
    int area() const { return (x1 - x0) * (y1 - y0); }
    bool operator==(const CutBox&) const = default;
};

/// Standard CutMix box: area ratio 1 - lambda with lambda ~ Beta(1,1), the
/// box keeps the image aspect ratio and its centre is uniform; clipped to
/// the image.
CutBox sample_cut_box(int width, int height, SampleRng& rng);

struct CutMixResult {
    PairedSample sample;
    PairedImages images;
    CutBox box;
};

/// Pastes the donor's pixels into the base inside one box, using the same
/// box for both eyes. Labels stay those of the base. HomogeneityError when
/// the labels differ, FormatError when image sizes disagree.
CutMixResult paired_cutmix(const PairedSample& base, const PairedImages& base_images, const PairedSample& donor,
                           const PairedImages& donor_images, SampleRng& rng, int serial = 0);

/// `aug_<baseID>_<donorID>_<n>`
std::string augmented_id(const std::string& base_id, const std::string& donor_id, int serial);

struct SplitManifest {
    std::uint64_t seed = 0;
    std::array<double, 3> ratios{};
    std::map<std::string, Partition> assignment;
    std::vector<std::string> warnings;
};

/// Class-stratified split by label pattern with largest-remainder partition
/// targets. Samples linked through augmentation move together so that no
/// augmented sample lands in a different partition from its sources.
SplitManifest stratified_split(std::span<const PairedSample> samples, std::array<double, 3> ratios,
                               std::uint64_t seed);

/// DataError naming the first augmented sample whose sources are split
/// across partitions or unassigned.
void check_no_leakage(const SplitManifest& manifest, std::span<const PairedSample> samples);

// ---------------------------------------------------------------------------
// Prepared dataset on disk: <dir>/manifest.json, <dir>/images/{left,right}/*.png

struct PreparedSample {
    PairedSample sample;
    Partition partition = Partition::train;
    std::optional<CutBox> box;
};

struct PreparedDataset {
    fs::path root;
    nlohmann::json config;
    std::vector<PreparedSample> samples;
    LoadReport skip_report;

    std::vector<PairedSample> partition(Partition p) const;
};

struct PrepareResult {
    PreparedDataset dataset;
    fs::path manifest_path;
};

/// Full preparation pipeline: index, decode + resize + illumination
/// correction, stratified split, in-partition CutMix, manifest.
PrepareResult prepare_dataset(const RunConfig& config, const fs::path& out_dir);

PreparedDataset load_prepared_dataset(const fs::path& dir);

/// Decodes an image file into 8-bit RGB; FormatError when unreadable.
cv::Mat read_rgb(const fs::path& path);
void write_rgb(const fs::path& path, const cv::Mat& rgb);

}  // namespace dmsnet
