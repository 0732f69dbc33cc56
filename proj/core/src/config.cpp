#include "dmsnet/config.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "dmsnet/errors.hpp"

namespace dmsnet {

using nlohmann::json;

std::string to_string(TaskMode mode) {
    return mode == TaskMode::multiclass ? "multiclass" : "multilabel";
}

TaskMode task_mode_from_string(std::string_view text) {
    if (text == "multiclass") return TaskMode::multiclass;
    if (text == "multilabel") return TaskMode::multilabel;
    throw ConfigError("model.task_mode: expected multiclass|multilabel, got '" + std::string(text) + "'");
}

LabelVector LabelVector::one_hot(int cls) {
    if (cls < 0 || cls >= kNumClasses) {
        throw LabelError("class index " + std::to_string(cls) + " out of range");
    }
    LabelVector v;
    v.bits[static_cast<std::size_t>(cls)] = 1;
    return v;
}

int LabelVector::count() const {
    return static_cast<int>(std::count(bits.begin(), bits.end(), std::uint8_t{1}));
}

int LabelVector::single_class() const {
    if (count() != 1) {
        throw LabelError("multiclass label requires exactly one indicator, got " + key());
    }
    return static_cast<int>(std::find(bits.begin(), bits.end(), std::uint8_t{1}) - bits.begin());
}

void LabelVector::validate(TaskMode mode) const {
    if (mode == TaskMode::multiclass) {
        (void)single_class();
    } else if (count() < 1) {
        throw LabelError("multilabel label requires at least one indicator, got " + key());
    }
}

std::string LabelVector::key() const {
    std::string s;
    s.reserve(kNumClasses);
    for (auto b : bits) s.push_back(b ? '1' : '0');
    return s;
}

// ---------------------------------------------------------------------------
// validation

void ModelConfig::validate() const {
    if (backbone_name.empty()) throw ConfigError("model.backbone: must not be empty");
    if (input_resolution <= 0) throw ConfigError("model.input_resolution: must be positive");
    if (embedding_dim <= 0) throw ConfigError("model.embedding_dim: must be positive");
    if (heads <= 0) throw ConfigError("model.heads: must be positive");
    if (embedding_dim % heads != 0) {
        throw ConfigError("model.heads: embedding_dim " + std::to_string(embedding_dim) +
                          " is not divisible by " + std::to_string(heads));
    }
    if (growth_rate <= 0) throw ConfigError("model.growth_rate: must be positive");
    if (casfm.pool_kernel <= 0) throw ConfigError("model.casfm.pool_kernel: must be positive");
    if (num_classes != kNumClasses) {
        throw ConfigError("model.num_classes: the ODIR task has exactly 8 classes");
    }
    if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("model.dropout: must lie in [0,1)");
    if (pretrained && pretrained_weights.empty()) {
        throw ConfigError("model.pretrained_weights: required when model.pretrained is true");
    }
}

void TrainConfig::validate() const {
    if (epochs < 0) throw ConfigError("train.epochs: must be non-negative");
    if (batch_size <= 0) throw ConfigError("train.batch_size: must be positive");
    if (!(learning_rate > 0.0)) throw ConfigError("train.learning_rate: must be positive");
    if (weight_decay < 0.0) throw ConfigError("train.weight_decay: must be non-negative");
    if (schedule != "cosine" && schedule != "constant") {
        throw ConfigError("train.schedule: expected cosine|constant, got '" + schedule + "'");
    }
    if (max_steps < 0) throw ConfigError("train.max_steps: must be non-negative");
}

void DataConfig::validate() const {
    double sum = 0.0;
    for (double r : split) {
        if (!(r > 0.0)) throw ConfigError("data.split: ratios must be positive");
        sum += r;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw ConfigError("data.split: ratios must sum to 1");
    if (!(multiplier >= 1.0)) throw ConfigError("data.multiplier: must be >= 1");
    for (const auto& [name, m] : class_multipliers) {
        if (std::find(kClassNames.begin(), kClassNames.end(), name) == kClassNames.end()) {
            throw ConfigError("data.class_multipliers: unknown class '" + name + "'");
        }
        if (!(m >= 1.0)) throw ConfigError("data.class_multipliers." + name + ": must be >= 1");
    }
    for (const auto& p : augment_partitions) {
        if (p != "train" && p != "val" && p != "test") {
            throw ConfigError("data.augment_partitions: unknown partition '" + p + "'");
        }
    }
}

void RunConfig::validate() const {
    model.validate();
    train.validate();
    data.validate();
    if (device != "cpu") throw ConfigError("device: only 'cpu' is supported");
}

// ---------------------------------------------------------------------------
// JSON

json to_json(const AblationSpec& s) {
    return json{{"disable_cafm", s.disable_cafm},           {"disable_ccam", s.disable_ccam},
                {"disable_ciam", s.disable_ciam},           {"disable_casfm", s.disable_casfm},
                {"disable_osim_left", s.disable_osim_left}, {"disable_osim_right", s.disable_osim_right}};
}

json to_json(const ModelConfig& c) {
    return json{{"backbone", c.backbone_name},
                {"pretrained", c.pretrained},
                {"pretrained_weights", c.pretrained_weights},
                {"input_resolution", c.input_resolution},
                {"embedding_dim", c.embedding_dim},
                {"heads", c.heads},
                {"growth_rate", c.growth_rate},
                {"casfm", {{"pool_kernel", c.casfm.pool_kernel}, {"literal_pool_scale", c.casfm.literal_pool_scale}}},
                {"task_mode", to_string(c.task_mode)},
                {"num_classes", c.num_classes},
                {"dropout", c.dropout},
                {"ablation", to_json(c.ablation)}};
}

json to_json(const TrainConfig& c) {
    return json{{"epochs", c.epochs},
                {"batch_size", c.batch_size},
                {"learning_rate", c.learning_rate},
                {"weight_decay", c.weight_decay},
                {"schedule", c.schedule},
                {"max_steps", c.max_steps}};
}

json to_json(const DataConfig& c) {
    return json{{"csv", c.csv},
                {"image_dir", c.image_dir},
                {"split", c.split},
                {"multiplier", c.multiplier},
                {"class_multipliers", c.class_multipliers},
                {"augment_partitions", c.augment_partitions},
                {"illumination_correction", c.illumination_correction}};
}

json to_json(const RunConfig& c) {
    return json{{"data_dir", c.data_dir}, {"output_dir", c.output_dir}, {"checkpoint", c.checkpoint},
                {"model", to_json(c.model)}, {"train", to_json(c.train)},   {"data", to_json(c.data)},
                {"seed", c.seed},           {"device", c.device}};
}

namespace {

// Reads known keys from an object and rejects anything else.
class Reader {
public:
    Reader(const json& j, std::string prefix) : j_(j), prefix_(std::move(prefix)) {
        if (!j_.is_object()) throw ConfigError(where("") + ": expected a JSON object");
    }

    template <class T>
    void get(const char* key, T& out) {
        seen_.insert(key);
        auto it = j_.find(key);
        if (it == j_.end()) return;
        try {
            out = it->template get<T>();
        } catch (const json::exception& e) {
            throw ConfigError(where(key) + ": " + e.what());
        }
    }

    const json* child(const char* key) {
        seen_.insert(key);
        auto it = j_.find(key);
        return it == j_.end() ? nullptr : &*it;
    }

    std::string where(const std::string& key) const {
        if (prefix_.empty()) return key;
        return key.empty() ? prefix_ : prefix_ + "." + key;
    }

    void finish() const {
        for (auto it = j_.begin(); it != j_.end(); ++it) {
            if (!seen_.count(it.key())) throw ConfigError(where(it.key()) + ": unknown configuration key");
        }
    }

private:
    const json& j_;
    std::string prefix_;
    std::set<std::string> seen_;
};

}  // namespace

AblationSpec ablation_from_json(const json& j) {
    AblationSpec s;
    Reader r(j, "model.ablation");
    r.get("disable_cafm", s.disable_cafm);
    r.get("disable_ccam", s.disable_ccam);
    r.get("disable_ciam", s.disable_ciam);
    r.get("disable_casfm", s.disable_casfm);
    r.get("disable_osim_left", s.disable_osim_left);
    r.get("disable_osim_right", s.disable_osim_right);
    r.finish();
    return s;
}

ModelConfig model_config_from_json(const json& j) {
    ModelConfig c;
    Reader r(j, "model");
    r.get("backbone", c.backbone_name);
    r.get("pretrained", c.pretrained);
    r.get("pretrained_weights", c.pretrained_weights);
    r.get("input_resolution", c.input_resolution);
    r.get("embedding_dim", c.embedding_dim);
    r.get("heads", c.heads);
    r.get("growth_rate", c.growth_rate);
    if (const json* cj = r.child("casfm")) {
        Reader cr(*cj, "model.casfm");
        cr.get("pool_kernel", c.casfm.pool_kernel);
        cr.get("literal_pool_scale", c.casfm.literal_pool_scale);
        cr.finish();
    }
    std::string mode = to_string(c.task_mode);
    r.get("task_mode", mode);
    c.task_mode = task_mode_from_string(mode);
    r.get("num_classes", c.num_classes);
    r.get("dropout", c.dropout);
    if (const json* aj = r.child("ablation")) c.ablation = ablation_from_json(*aj);
    r.finish();
    return c;
}

TrainConfig train_config_from_json(const json& j) {
    TrainConfig c;
    Reader r(j, "train");
    r.get("epochs", c.epochs);
    r.get("batch_size", c.batch_size);
    r.get("learning_rate", c.learning_rate);
    r.get("weight_decay", c.weight_decay);
    r.get("schedule", c.schedule);
    r.get("max_steps", c.max_steps);
    r.finish();
    return c;
}

DataConfig data_config_from_json(const json& j) {
    DataConfig c;
    Reader r(j, "data");
    r.get("csv", c.csv);
    r.get("image_dir", c.image_dir);
    r.get("split", c.split);
    r.get("multiplier", c.multiplier);
    r.get("class_multipliers", c.class_multipliers);
    r.get("augment_partitions", c.augment_partitions);
    r.get("illumination_correction", c.illumination_correction);
    r.finish();
    return c;
}

RunConfig run_config_from_json(const json& j) {
    RunConfig c;
    Reader r(j, "");
    r.get("data_dir", c.data_dir);
    r.get("output_dir", c.output_dir);
    r.get("checkpoint", c.checkpoint);
    if (const json* mj = r.child("model")) c.model = model_config_from_json(*mj);
    if (const json* tj = r.child("train")) c.train = train_config_from_json(*tj);
    if (const json* dj = r.child("data")) c.data = data_config_from_json(*dj);
    r.get("seed", c.seed);
    r.get("device", c.device);
    r.finish();
    return c;
}

void apply_override(json& doc, std::string_view assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string_view::npos || eq == 0) {
        throw ConfigError("override '" + std::string(assignment) + "': expected key.path=value");
    }
    const std::string path(assignment.substr(0, eq));
    const std::string raw(assignment.substr(eq + 1));

    json value;
    try {
        value = json::parse(raw);
    } catch (const json::parse_error&) {
        value = raw;
    }

    json* node = &doc;
    std::size_t start = 0;
    while (true) {
        const auto dot = path.find('.', start);
        const std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
        if (key.empty()) throw ConfigError("override '" + path + "': empty path component");
        if (!node->is_object()) throw ConfigError("override '" + path + "': '" + key + "' is not inside an object");
        if (dot == std::string::npos) {
            (*node)[key] = value;
            return;
        }
        node = &(*node)[key];
        if (node->is_null()) *node = json::object();
        start = dot + 1;
    }
}

}  // namespace dmsnet
