#include "dmsnet/trainer.hpp"

#include <cmath>
#include <fstream>
#include <numbers>

#include <opencv2/imgproc.hpp>

#include "dmsnet/errors.hpp"

namespace dmsnet {

using nlohmann::json;

namespace {

constexpr std::uint64_t kShuffleStream = 3;

constexpr std::array<float, 3> kImageMean{0.485f, 0.456f, 0.406f};
constexpr std::array<float, 3> kImageStd{0.229f, 0.224f, 0.225f};

std::vector<int64_t> as_int64(std::span<const std::size_t> indices) {
    return {indices.begin(), indices.end()};
}

void set_learning_rate(torch::optim::AdamW& optimizer, double lr) {
    for (auto& group : optimizer.param_groups()) {
        static_cast<torch::optim::AdamWOptions&>(group.options()).lr(lr);
    }
}

std::string read_string(torch::serialize::InputArchive& archive, const std::string& key) {
    c10::IValue value;
    archive.read(key, value);
    return value.toStringRef();
}

int64_t read_int(torch::serialize::InputArchive& archive, const std::string& key) {
    c10::IValue value;
    archive.read(key, value);
    return value.toInt();
}

torch::serialize::InputArchive open_archive(const fs::path& path) {
    if (!fs::is_regular_file(path)) throw CheckpointError("checkpoint not found: " + path.string());
    torch::serialize::InputArchive archive;
    try {
        archive.load_from(path.string());
    } catch (const c10::Error& e) {
        throw CheckpointError("cannot read checkpoint " + path.string() + ": " + e.what_without_backtrace());
    }
    return archive;
}

RunConfig archived_config(torch::serialize::InputArchive& archive, const fs::path& path) {
    try {
        return run_config_from_json(json::parse(read_string(archive, "config")));
    } catch (const c10::Error& e) {
        throw CheckpointError("checkpoint " + path.string() + " carries no run config: " + e.what_without_backtrace());
    } catch (const std::exception& e) {
        throw CheckpointError("checkpoint " + path.string() + " has an unreadable run config: " + e.what());
    }
}

void load_parameters(DMSNet& model, torch::serialize::InputArchive& archive, const fs::path& path) {
    torch::serialize::InputArchive model_archive;
    try {
        archive.read("model", model_archive);
        model->load(model_archive);
    } catch (const c10::Error& e) {
        throw CheckpointError("checkpoint " + path.string() + " does not fit the model: " + e.what_without_backtrace());
    }
}

}  // namespace

// ---------------------------------------------------------------------------
// images and sources

torch::Tensor image_to_tensor(const cv::Mat& rgb) {
    if (rgb.empty() || rgb.type() != CV_8UC3) throw FormatError("image_to_tensor: expected an 8-bit RGB image");
    cv::Mat contiguous = rgb.isContinuous() ? rgb : rgb.clone();
    auto t = torch::from_blob(contiguous.data, {contiguous.rows, contiguous.cols, 3}, torch::kUInt8)
                 .permute({2, 0, 1})
                 .to(torch::kFloat)
                 .div(255.0);
    auto mean = torch::tensor(std::vector<float>(kImageMean.begin(), kImageMean.end())).view({3, 1, 1});
    auto std = torch::tensor(std::vector<float>(kImageStd.begin(), kImageStd.end())).view({3, 1, 1});
    return ((t - mean) / std).contiguous();
}

cv::Mat preprocess_image(const fs::path& path, int resolution, bool illumination_correction) {
    cv::Mat image = resize_center_crop(read_rgb(path), resolution);
    return illumination_correction ? illumination_correct(image) : image;
}

TensorPairs::TensorPairs(torch::Tensor left, torch::Tensor right, std::vector<LabelVector> labels)
    : left_(std::move(left)), right_(std::move(right)), labels_(std::move(labels)) {
    require_rank(left_, 4, "TensorPairs left");
    require_same_shape(left_, right_, "TensorPairs");
    if (left_.size(0) != static_cast<int64_t>(labels_.size())) {
        throw ShapeError("TensorPairs: " + std::to_string(labels_.size()) + " labels for " +
                         std::to_string(left_.size(0)) + " pairs");
    }
}

Batch TensorPairs::batch(std::span<const std::size_t> indices) const {
    auto idx = torch::tensor(as_int64(indices), torch::kLong);
    Batch b{left_.index_select(0, idx), right_.index_select(0, idx), {}};
    for (auto i : indices) b.labels.push_back(labels_.at(i));
    return b;
}

DiskPairs::DiskPairs(std::vector<PairedSample> samples, int resolution)
    : samples_(std::move(samples)), resolution_(resolution) {}

Batch DiskPairs::batch(std::span<const std::size_t> indices) const {
    std::vector<torch::Tensor> left, right;
    Batch b;
    for (auto i : indices) {
        const auto& s = samples_.at(i);
        left.push_back(image_to_tensor(resize_center_crop(read_rgb(s.left_path), resolution_)));
        right.push_back(image_to_tensor(resize_center_crop(read_rgb(s.right_path), resolution_)));
        b.labels.push_back(s.labels);
    }
    b.left = torch::stack(left);
    b.right = torch::stack(right);
    return b;
}

// ---------------------------------------------------------------------------
// evaluation

Predictions predict(DMSNet& model, const PairSource& source, int batch_size) {
    torch::NoGradGuard no_grad;
    const bool was_training = model->is_training();
    model->eval();
    const TaskMode mode = model->config().task_mode;

    Predictions out;
    out.scores.reserve(source.size() * kNumClasses);
    std::vector<std::size_t> indices;
    for (std::size_t start = 0; start < source.size(); start += static_cast<std::size_t>(batch_size)) {
        indices.clear();
        for (std::size_t i = start; i < std::min(source.size(), start + batch_size); ++i) indices.push_back(i);
        const Batch b = source.batch(indices);
        auto scores = scores_from_logits(model->forward(b.left, b.right), mode).to(torch::kDouble).contiguous();
        const double* p = scores.data_ptr<double>();
        out.scores.insert(out.scores.end(), p, p + scores.numel());
        out.labels.insert(out.labels.end(), b.labels.begin(), b.labels.end());
    }
    model->train(was_training);
    return out;
}

MetricsReport evaluate(DMSNet& model, const PairSource& source, int batch_size) {
    const auto p = predict(model, source, batch_size);
    return build_report(p.scores, p.labels, model->config().task_mode);
}

json to_json(const EpochRecord& record) {
    json j{{"epoch", record.epoch},
           {"steps", record.steps},
           {"train_loss", record.train_loss},
           {"learning_rate", record.learning_rate}};
    j["val"] = record.val ? to_json(*record.val) : json(nullptr);
    return j;
}

// ---------------------------------------------------------------------------
// trainer

std::int64_t steps_per_epoch(std::size_t n, int batch_size) {
    const auto b = static_cast<std::size_t>(batch_size);
    auto steps = static_cast<std::int64_t>((n + b - 1) / b);
    if (n > 1 && n % b == 1) --steps;
    return steps;
}

Trainer::Trainer(const RunConfig& config) : config_(config) {
    config_.validate();
    torch::manual_seed(config_.seed);
    model_ = build_model(config_.model);
    torch::optim::AdamWOptions opts(config_.train.learning_rate);
    opts.weight_decay(config_.train.weight_decay);
    optimizer_ = std::make_unique<torch::optim::AdamW>(model_->parameters(), opts);
}

double Trainer::learning_rate() const {
    const double base = config_.train.learning_rate;
    if (config_.train.schedule != "cosine" || total_steps_ <= 0) return base;
    const double progress = std::min(1.0, static_cast<double>(step_) / static_cast<double>(total_steps_));
    return base * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

bool Trainer::step_budget_exhausted() const {
    return config_.train.max_steps > 0 && step_ >= config_.train.max_steps;
}

double Trainer::step(const Batch& batch) {
    model_->train();
    set_learning_rate(*optimizer_, learning_rate());
    optimizer_->zero_grad();
    auto loss = compute_loss(model_->forward(batch.left, batch.right), batch.labels, config_.model.task_mode);
    loss.backward();
    optimizer_->step();
    ++step_;
    return loss.item<double>();
}

std::vector<std::size_t> Trainer::epoch_order(std::size_t n, int epoch) const {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    SampleRng rng(config_.seed, kShuffleStream, static_cast<std::uint64_t>(epoch));
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    return order;
}

double Trainer::train_epoch(const PairSource& train) {
    const auto order = epoch_order(train.size(), epoch_ + 1);
    const auto b = static_cast<std::size_t>(config_.train.batch_size);
    const auto steps = steps_per_epoch(order.size(), config_.train.batch_size);
    double total = 0.0;
    std::int64_t taken = 0;
    for (std::int64_t s = 0; s < steps && !step_budget_exhausted(); ++s) {
        const auto begin = static_cast<std::size_t>(s) * b;
        const auto end = s + 1 == steps ? order.size() : begin + b;
        total += step(train.batch(std::span(order).subspan(begin, end - begin)));
        ++taken;
    }
    ++epoch_;
    return taken ? total / static_cast<double>(taken) : 0.0;
}

void Trainer::save_checkpoint(const fs::path& path) const {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    torch::serialize::OutputArchive archive, model_archive, optim_archive;
    model_->save(model_archive);
    optimizer_->save(optim_archive);
    archive.write("model", model_archive);
    archive.write("optimizer", optim_archive);
    archive.write("config", c10::IValue(to_json(config_).dump()));
    archive.write("epoch", c10::IValue(static_cast<int64_t>(epoch_)));
    archive.write("step", c10::IValue(step_));
    archive.write("total_steps", c10::IValue(total_steps_));
    archive.write("best_kappa", torch::tensor(best_kappa_.value_or(std::nan("")), torch::kDouble));
    {
        auto gen = at::detail::getDefaultCPUGenerator();
        std::lock_guard<std::mutex> lock(gen.mutex());
        archive.write("rng_state", gen.get_state());
    }
    // write to a sibling first so a crash never leaves a truncated checkpoint
    const fs::path tmp = path.string() + ".tmp";
    archive.save_to(tmp.string());
    fs::rename(tmp, path);
}

void Trainer::load_checkpoint(const fs::path& path) {
    auto archive = open_archive(path);
    const RunConfig stored = archived_config(archive, path);
    const auto diff = architecture_mismatches(stored.model, config_.model);
    if (!diff.empty()) {
        throw CheckpointError("checkpoint " + path.string() + " was written for another architecture (" + diff.front() + ")");
    }
    load_parameters(model_, archive, path);
    try {
        torch::serialize::InputArchive optim_archive;
        archive.read("optimizer", optim_archive);
        optimizer_->load(optim_archive);
        epoch_ = static_cast<int>(read_int(archive, "epoch"));
        step_ = read_int(archive, "step");
        total_steps_ = read_int(archive, "total_steps");
        torch::Tensor best, state;
        archive.read("best_kappa", best);
        const double k = best.item<double>();
        best_kappa_ = std::isnan(k) ? std::nullopt : std::optional<double>(k);
        archive.read("rng_state", state);
        auto gen = at::detail::getDefaultCPUGenerator();
        std::lock_guard<std::mutex> lock(gen.mutex());
        gen.set_state(state);
    } catch (const c10::Error& e) {
        throw CheckpointError("checkpoint " + path.string() + " is incomplete: " + e.what_without_backtrace());
    }
}

// ---------------------------------------------------------------------------
// checkpoints for inference

CheckpointInfo read_checkpoint_info(const fs::path& path) {
    auto archive = open_archive(path);
    CheckpointInfo info;
    info.config = archived_config(archive, path);
    try {
        info.epoch = static_cast<int>(read_int(archive, "epoch"));
        info.step = read_int(archive, "step");
    } catch (const c10::Error& e) {
        throw CheckpointError("checkpoint " + path.string() + " is incomplete: " + e.what_without_backtrace());
    }
    return info;
}

std::vector<std::string> architecture_mismatches(const ModelConfig& a, const ModelConfig& b) {
    std::vector<std::string> out;
    auto check = [&](const char* field, const auto& x, const auto& y) {
        if (x != y) out.push_back(std::string(field) + ": " + json(x).dump() + " != " + json(y).dump());
    };
    check("model.backbone", a.backbone_name, b.backbone_name);
    check("model.input_resolution", a.input_resolution, b.input_resolution);
    check("model.embedding_dim", a.embedding_dim, b.embedding_dim);
    check("model.heads", a.heads, b.heads);
    check("model.growth_rate", a.growth_rate, b.growth_rate);
    check("model.casfm.pool_kernel", a.casfm.pool_kernel, b.casfm.pool_kernel);
    check("model.casfm.literal_pool_scale", a.casfm.literal_pool_scale, b.casfm.literal_pool_scale);
    check("model.num_classes", a.num_classes, b.num_classes);
    check("model.task_mode", to_string(a.task_mode), to_string(b.task_mode));
    check("model.ablation", to_json(a.ablation), to_json(b.ablation));
    return out;
}

DMSNet load_model(const fs::path& path, const std::optional<ModelConfig>& expected) {
    auto archive = open_archive(path);
    const RunConfig stored = archived_config(archive, path);
    if (expected) {
        const auto diff = architecture_mismatches(stored.model, *expected);
        if (!diff.empty()) {
            std::string list;
            for (const auto& d : diff) list += (list.empty() ? "" : "; ") + d;
            throw CheckpointError("checkpoint " + path.string() + " is incompatible with the configured model: " + list);
        }
    }
    ModelConfig cfg = stored.model;
    cfg.pretrained = false;  // parameters come from the checkpoint
    auto model = build_model(cfg);
    load_parameters(model, archive, path);
    model->eval();
    return model;
}

// ---------------------------------------------------------------------------
// full run

TrainResult train_run(const RunConfig& config, const PreparedDataset& data, const fs::path& out_dir,
                      const std::optional<fs::path>& resume_from) {
    const auto train_samples = data.partition(Partition::train);
    const auto val_samples = data.partition(Partition::val);
    if (train_samples.size() < 2) throw EmptyDatasetError("training needs at least 2 samples in the train partition");

    const int res = config.model.input_resolution;
    if (data.config.contains("input_resolution") && data.config["input_resolution"].get<int>() != res) {
        throw ConfigError("model.input_resolution " + std::to_string(res) + " differs from the prepared dataset (" +
                          data.config["input_resolution"].dump() + ")");
    }
    DiskPairs train(train_samples, res), val(val_samples, res);

    Trainer trainer(config);
    if (resume_from) trainer.load_checkpoint(*resume_from);
    std::int64_t total = steps_per_epoch(train.size(), config.train.batch_size) * config.train.epochs;
    if (config.train.max_steps > 0) total = std::min<std::int64_t>(total, config.train.max_steps);
    trainer.set_total_steps(total);

    fs::create_directories(out_dir);
    TrainResult result;
    result.best_checkpoint = out_dir / "best.pt";
    result.last_checkpoint = out_dir / "last.pt";
    result.log_path = out_dir / "train_log.jsonl";
    {
        std::ofstream cfg_out(out_dir / "config.json", std::ios::binary | std::ios::trunc);
        cfg_out << to_json(config).dump(2) << '\n';
    }
    std::ofstream log(result.log_path, std::ios::binary | (resume_from ? std::ios::app : std::ios::trunc));
    if (!log) throw PathError("cannot write training log: " + result.log_path.string());

    while (trainer.epoch() < config.train.epochs && !trainer.step_budget_exhausted()) {
        EpochRecord rec;
        rec.learning_rate = trainer.learning_rate();
        rec.train_loss = trainer.train_epoch(train);
        rec.epoch = trainer.epoch();
        rec.steps = trainer.step_count();
        if (val.size() > 0) rec.val = evaluate(trainer.model(), val, config.train.batch_size);

        // without a validation split every epoch counts as an improvement
        const double kappa = rec.val ? rec.val->kappa : 0.0;
        const bool improved = !trainer.best_kappa() || !rec.val || kappa > *trainer.best_kappa();
        if (improved) trainer.set_best_kappa(kappa);
        trainer.save_checkpoint(result.last_checkpoint);
        if (improved) trainer.save_checkpoint(result.best_checkpoint);

        log << to_json(rec).dump() << '\n';
        log.flush();
        result.records.push_back(std::move(rec));
    }
    result.best_kappa = trainer.best_kappa().value_or(0.0);
    return result;
}

}  // namespace dmsnet
