#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include <opencv2/core.hpp>
#include <torch/torch.h>

#include "dmsnet/config.hpp"
#include "dmsnet/dataio.hpp"
#include "dmsnet/metrics.hpp"
#include "dmsnet/model.hpp"

namespace dmsnet {

namespace fs = std::filesystem;

/// 8-bit RGB image -> (3, H, W) float tensor with ImageNet normalization.
torch::Tensor image_to_tensor(const cv::Mat& rgb);

/// Decodes, resizes and (optionally) illumination-corrects a raw fundus
/// photograph exactly as `prepare` does.
cv::Mat preprocess_image(const fs::path& path, int resolution, bool illumination_correction);

struct Batch {
    torch::Tensor left, right;  // (B, 3, r, r)
    std::vector<LabelVector> labels;
};

/// Random-access source of paired samples.
class PairSource {
public:
    virtual ~PairSource() = default;
    virtual std::size_t size() const = 0;
    virtual Batch batch(std::span<const std::size_t> indices) const = 0;
    virtual LabelVector label(std::size_t i) const = 0;
};

/// Pairs held as tensors, e.g. synthetic data.
class TensorPairs final : public PairSource {
public:
    TensorPairs(torch::Tensor left, torch::Tensor right, std::vector<LabelVector> labels);

    std::size_t size() const override { return labels_.size(); }
    Batch batch(std::span<const std::size_t> indices) const override;
    LabelVector label(std::size_t i) const override { return labels_.at(i); }

private:
    torch::Tensor left_, right_;
    std::vector<LabelVector> labels_;
};

/// Prepared images read from disk batch by batch.
class DiskPairs final : public PairSource {
public:
    DiskPairs(std::vector<PairedSample> samples, int resolution);

    std::size_t size() const override { return samples_.size(); }
    Batch batch(std::span<const std::size_t> indices) const override;
    LabelVector label(std::size_t i) const override { return samples_.at(i).labels; }

private:
    std::vector<PairedSample> samples_;
    int resolution_;
};

/// Row-major (n x 8) scores and matching labels.
struct Predictions {
    std::vector<double> scores;
    std::vector<LabelVector> labels;
};

/// Eval-mode forward over the whole source in index order.
Predictions predict(DMSNet& model, const PairSource& source, int batch_size);
MetricsReport evaluate(DMSNet& model, const PairSource& source, int batch_size);

struct EpochRecord {
    int epoch = 0;  // 1-based
    std::int64_t steps = 0;
    double train_loss = 0.0;
    double learning_rate = 0.0;
    std::optional<MetricsReport> val;
};

nlohmann::json to_json(const EpochRecord& record);

/// Model + AdamW optimizer + schedule + progress counters. The torch RNG is
/// seeded from the run seed on construction; epoch order is a pure function
/// of (seed, epoch) so a resumed run replays the same sample order.
class Trainer {
public:
    explicit Trainer(const RunConfig& config);

    DMSNet& model() { return model_; }
    torch::optim::AdamW& optimizer() { return *optimizer_; }
    const RunConfig& config() const { return config_; }
    int epoch() const { return epoch_; }
    std::int64_t step_count() const { return step_; }
    std::optional<double> best_kappa() const { return best_kappa_; }
    void set_best_kappa(double kappa) { best_kappa_ = kappa; }

    /// Learning rate for the next step. Cosine decay runs over `total_steps`.
    double learning_rate() const;
    void set_total_steps(std::int64_t total) { total_steps_ = total; }

    /// One optimizer step; returns the batch loss.
    double step(const Batch& batch);
    /// Shuffled pass over `train`; returns the mean batch loss. Stops early
    /// when train.max_steps is reached.
    double train_epoch(const PairSource& train);
    std::vector<std::size_t> epoch_order(std::size_t n, int epoch) const;
    bool step_budget_exhausted() const;

    void save_checkpoint(const fs::path& path) const;
    /// Restores parameters, optimizer state, counters and RNG state.
    /// CheckpointError when the archive was written for another architecture.
    void load_checkpoint(const fs::path& path);

private:
    RunConfig config_;
    DMSNet model_{nullptr};
    std::unique_ptr<torch::optim::AdamW> optimizer_;
    int epoch_ = 0;
    std::int64_t step_ = 0;
    std::int64_t total_steps_ = 0;
    std::optional<double> best_kappa_;
};

/// Steps per epoch for `n` training samples: ceil(n / batch) minus a
/// trailing batch of one (batch-norm needs two samples).
std::int64_t steps_per_epoch(std::size_t n, int batch_size);

struct CheckpointInfo {
    RunConfig config;
    int epoch = 0;
    std::int64_t step = 0;
};

/// Reads only the metadata of a checkpoint (CheckpointError when unreadable).
CheckpointInfo read_checkpoint_info(const fs::path& path);

/// Loads a checkpoint for inference. When `expected` is given its model
/// architecture must match the archived one, otherwise CheckpointError.
DMSNet load_model(const fs::path& path, const std::optional<ModelConfig>& expected = std::nullopt);

/// Architecture-relevant differences between two model configs, as
/// "field: a != b" strings.
std::vector<std::string> architecture_mismatches(const ModelConfig& a, const ModelConfig& b);

struct TrainResult {
    std::vector<EpochRecord> records;
    fs::path best_checkpoint, last_checkpoint, log_path;
    double best_kappa = 0.0;
};

/// Full training run on a prepared dataset. Writes <out>/config.json,
/// <out>/train_log.jsonl (one record per epoch), <out>/best.pt (highest val
/// kappa) and <out>/last.pt. With `resume_from`, training continues after
/// the archived epoch and the log is appended to.
TrainResult train_run(const RunConfig& config, const PreparedDataset& data, const fs::path& out_dir,
                      const std::optional<fs::path>& resume_from = std::nullopt);

}  // namespace dmsnet
