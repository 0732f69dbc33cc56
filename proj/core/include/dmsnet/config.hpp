#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace dmsnet {

inline constexpr int kNumClasses = 8;

/// ODIR class order: Normal, Diabetes, Glaucoma, Cataract, AMD,
/// Hypertension, Myopia, Other.
inline constexpr std::array<std::string_view, kNumClasses> kClassNames{
    "N", "D", "G", "C", "A", "H", "M", "O"};

enum class TaskMode { multiclass, multilabel };

std::string to_string(TaskMode mode);
TaskMode task_mode_from_string(std::string_view text);

/// Eight binary disease indicators in kClassNames order.
struct LabelVector {
    std::array<std::uint8_t, kNumClasses> bits{};

    static LabelVector one_hot(int cls);

    int count() const;
    /// Index of the single set indicator; LabelError unless exactly one is set.
    int single_class() const;
    /// LabelError when the vector is not admissible for `mode`.
    void validate(TaskMode mode) const;
    /// "10000000"-style key, used for stratification and manifests.
    std::string key() const;

    bool operator==(const LabelVector&) const = default;
    bool operator<(const LabelVector& other) const { return bits < other.bits; }
};

struct AblationSpec {
    bool disable_cafm = false;
    bool disable_ccam = false;
    bool disable_ciam = false;
    bool disable_casfm = false;
    bool disable_osim_left = false;
    bool disable_osim_right = false;

    bool is_full_model() const { return *this == AblationSpec{}; }
    bool operator==(const AblationSpec&) const = default;
};

struct CasfmConfig {
    int pool_kernel = 2;
    // Keeps the extra 1/k^2 factor on both pooled paths.
    bool literal_pool_scale = true;
};

struct ModelConfig {
    std::string backbone_name = "resnet152";
    bool pretrained = false;
    std::string pretrained_weights;
    int input_resolution = 224;
    int embedding_dim = 256;
    int heads = 4;
    int growth_rate = 32;
    CasfmConfig casfm;
    TaskMode task_mode = TaskMode::multiclass;
    int num_classes = kNumClasses;
    double dropout = 0.2;
    AblationSpec ablation;

    /// ConfigError naming the offending field.
    void validate() const;
};

struct TrainConfig {
    int epochs = 50;
    int batch_size = 16;
    double learning_rate = 1e-4;
    double weight_decay = 1e-4;
    std::string schedule = "cosine";  // cosine | constant
    // Hard cap on optimizer steps per run; 0 disables the cap.
    int max_steps = 0;

    void validate() const;
};

struct DataConfig {
    std::string csv;        // ODIR index
    std::string image_dir;  // directory holding the fundus images
    std::array<double, 3> split{0.8, 0.1, 0.1};
    double multiplier = 2.0;
    std::map<std::string, double> class_multipliers;
    std::vector<std::string> augment_partitions{"train"};
    bool illumination_correction = true;

    void validate() const;
};

struct RunConfig {
    std::string data_dir;    // prepared dataset (output of `prepare`)
    std::string output_dir = "runs";
    std::string checkpoint;
    ModelConfig model;
    TrainConfig train;
    DataConfig data;
    std::uint64_t seed = 42;
    std::string device = "cpu";

    void validate() const;
};

nlohmann::json to_json(const AblationSpec& spec);
nlohmann::json to_json(const ModelConfig& cfg);
nlohmann::json to_json(const TrainConfig& cfg);
nlohmann::json to_json(const DataConfig& cfg);
nlohmann::json to_json(const RunConfig& cfg);

/// Strict parsers: unknown keys and wrong types raise ConfigError.
AblationSpec ablation_from_json(const nlohmann::json& j);
ModelConfig model_config_from_json(const nlohmann::json& j);
TrainConfig train_config_from_json(const nlohmann::json& j);
DataConfig data_config_from_json(const nlohmann::json& j);
RunConfig run_config_from_json(const nlohmann::json& j);

/// Applies `a.b.c=value` to a JSON document. The value is parsed as JSON when
/// possible and kept as a string otherwise.
void apply_override(nlohmann::json& doc, std::string_view assignment);

}  // namespace dmsnet
