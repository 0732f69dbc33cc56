#include "dmsnet/cli.hpp"

#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>

#include <CLI/CLI11.hpp>
#include <nlohmann/json.hpp>
#include <torch/torch.h>

#include "dmsnet/backbone.hpp"
#include "dmsnet/config.hpp"
#include "dmsnet/dataio.hpp"
#include "dmsnet/errors.hpp"
#include "dmsnet/metrics.hpp"
#include "dmsnet/model.hpp"
#include "dmsnet/plots.hpp"
#include "dmsnet/synthetic.hpp"
#include "dmsnet/trainer.hpp"

namespace dmsnet::cli {

namespace {

using nlohmann::json;
using ordered_json = nlohmann::ordered_json;

struct Options {
    std::string config;
    std::vector<std::string> sets;
    std::uint64_t seed = 0;
    bool seed_given = false;
    std::string out;
    std::string checkpoint;
    std::string rows = "components";
    std::string split = "test";
    std::string left, right;
    // synth
    int image_size = 96;
    std::vector<int> counts{8, 8};
    int multilabel_rows = 0;
    int missing_rows = 0;
};

json read_json_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot read config file: " + path.string());
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError("config file " + path.string() + " is not valid JSON: " + e.what());
    }
}

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw PathError("cannot write " + path.string());
    out << text;
}

// Config file (or `base`) + dot-path overrides + --seed.
RunConfig resolve_config(const Options& o, const json& base = to_json(RunConfig{})) {
    json doc = o.config.empty() ? base : read_json_file(o.config);
    for (const auto& s : o.sets) apply_override(doc, s);
    RunConfig c = run_config_from_json(doc);
    if (o.seed_given) c.seed = o.seed;
    c.validate();
    return c;
}

fs::path require_data_dir(const RunConfig& c) {
    if (c.data_dir.empty()) throw ConfigError("data_dir: no prepared dataset given (set data_dir in the config or --set)");
    return c.data_dir;
}

std::vector<PairedSample> require_partition(const PreparedDataset& ds, const std::string& split) {
    auto samples = ds.partition(partition_from_string(split));
    if (samples.empty()) throw EmptyDatasetError("partition '" + split + "' of " + ds.root.string() + " is empty");
    return samples;
}

void check_resolution(const PreparedDataset& ds, const ModelConfig& m) {
    if (ds.config.contains("input_resolution") && ds.config["input_resolution"].get<int>() != m.input_resolution) {
        throw ConfigError("model.input_resolution " + std::to_string(m.input_resolution) +
                          " differs from the prepared dataset (" + ds.config["input_resolution"].dump() + ")");
    }
}

struct Evaluation {
    MetricsReport report;
    Predictions predictions;
};

Evaluation evaluate_split(DMSNet& model, const PreparedDataset& ds, const std::string& split, int batch_size) {
    const auto& m = model->config();
    check_resolution(ds, m);
    DiskPairs pairs(require_partition(ds, split), m.input_resolution);
    Evaluation ev;
    ev.predictions = predict(model, pairs, batch_size);
    ev.report = build_report(ev.predictions.scores, ev.predictions.labels, m.task_mode);
    return ev;
}

std::string format_metric(std::optional<double> v) {
    if (!v) return "NA";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4f", *v);
    return buf;
}

bool is_backbone(const std::string& name) {
    for (const auto& b : backbone_registry()) {
        if (b.name == name) return true;
    }
    return false;
}

// ---------------------------------------------------------------------------
// commands

int cmd_prepare(const Options& o, std::ostream& out) {
    RunConfig c = resolve_config(o);
    const fs::path dir = o.out.empty() ? require_data_dir(c) : fs::path(o.out);
    c.data_dir = dir.string();
    const auto result = prepare_dataset(c, dir);
    write_text(dir / "config.json", to_json(c).dump(2) + "\n");

    ordered_json summary{{"manifest", result.manifest_path.string()},
                         {"samples", result.dataset.samples.size()},
                         {"skipped", result.dataset.skip_report.skipped}};
    out << summary.dump() << '\n';
    return kOk;
}

int cmd_train(const Options& o, std::ostream& out) {
    RunConfig c = resolve_config(o);
    const auto ds = load_prepared_dataset(require_data_dir(c));
    const fs::path dir = o.out.empty() ? fs::path(c.output_dir) : fs::path(o.out);
    c.output_dir = dir.string();
    std::optional<fs::path> resume;
    if (!o.checkpoint.empty()) resume = o.checkpoint;

    const auto result = train_run(c, ds, dir, resume);
    for (const auto& rec : result.records) out << to_json(rec).dump() << '\n';
    ordered_json summary{{"epochs_run", result.records.size()},
                         {"best_kappa", result.best_kappa},
                         {"best_checkpoint", result.best_checkpoint.string()},
                         {"last_checkpoint", result.last_checkpoint.string()},
                         {"log", result.log_path.string()}};
    out << summary.dump() << '\n';
    return kOk;
}

int cmd_evaluate(const Options& o, std::ostream& out) {
    const fs::path ckpt = o.checkpoint;
    const auto info = read_checkpoint_info(ckpt);
    // Without --config the archived run config is the base for overrides.
    const RunConfig c = resolve_config(o, to_json(info.config));
    DMSNet model = load_model(ckpt, o.config.empty() ? std::nullopt : std::optional<ModelConfig>(c.model));

    const auto ds = load_prepared_dataset(require_data_dir(c));
    const auto ev = evaluate_split(model, ds, o.split, c.train.batch_size);

    const fs::path dir = o.out.empty() ? fs::path(c.output_dir) / ("evaluate_" + o.split) : fs::path(o.out);
    fs::create_directories(dir);
    ordered_json doc{{"split", o.split},
                     {"checkpoint_epoch", info.epoch},
                     {"checkpoint_step", info.step},
                     {"metrics", to_json(ev.report)}};
    write_text(dir / "metrics.json", doc.dump(2) + "\n");
    write_confusion_heatmap(ev.report.confusion, dir / "confusion.png");
    const auto rocs = write_roc_curves(ev.predictions.scores, ev.predictions.labels, dir);

    ordered_json summary{{"metrics", (dir / "metrics.json").string()},
                         {"confusion", (dir / "confusion.png").string()},
                         {"roc_curves", rocs.size()},
                         {"accuracy", ev.report.accuracy},
                         {"kappa", ev.report.kappa}};
    out << summary.dump() << '\n';
    return kOk;
}

int cmd_ablate(const Options& o, std::ostream& out) {
    // Rows, config and dataset are all checked before the first training run.
    const auto rows = expand_rows(o.rows);
    const RunConfig c = resolve_config(o);
    const auto ds = load_prepared_dataset(require_data_dir(c));
    check_resolution(ds, c.model);
    (void)require_partition(ds, "train");
    (void)require_partition(ds, o.split);

    std::vector<RunConfig> runs;
    bool all_backbones = true;
    for (const auto& row : rows) {
        RunConfig rc = c;
        if (is_backbone(row)) {
            rc.model.backbone_name = row;
            rc.model.ablation = AblationSpec{};
        } else {
            rc.model = apply_ablation(c.model, row);
            all_backbones = false;
        }
        rc.model.validate();
        (void)backbone_spatial_dims(rc.model.backbone_name, rc.model.input_resolution);
        runs.push_back(std::move(rc));
    }

    const fs::path dir = o.out.empty() ? fs::path(c.output_dir) / "ablation" : fs::path(o.out);
    fs::create_directories(dir);
    std::ostringstream csv;
    csv << (all_backbones ? "Backbone" : "Configuration") << ",Acc,Precision,Recall,Kappa,F1,AUC\n";
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto& row = rows[i];
        const fs::path row_dir = dir / row;
        const auto trained = train_run(runs[i], ds, row_dir);
        DMSNet model = load_model(trained.best_checkpoint, runs[i].model);
        const auto ev = evaluate_split(model, ds, o.split, runs[i].train.batch_size);
        ordered_json doc{{"row", row}, {"split", o.split}, {"metrics", to_json(ev.report)}};
        write_text(row_dir / "metrics.json", doc.dump(2) + "\n");

        const auto& r = ev.report;
        const std::string label =
            is_backbone(row) ? std::string(backbone_info(row).display_name) : ablation_row_label(row);
        csv << label << ',' << format_metric(r.accuracy) << ',' << format_metric(r.precision_macro) << ','
            << format_metric(r.recall_macro) << ',' << format_metric(r.kappa) << ',' << format_metric(r.f1_macro) << ','
            << format_metric(r.auc_macro) << '\n';
        out << ordered_json{{"row", row}, {"kappa", r.kappa}, {"accuracy", r.accuracy}}.dump() << '\n';
    }
    write_text(dir / "ablation.csv", csv.str());
    out << ordered_json{{"table", (dir / "ablation.csv").string()}}.dump() << '\n';
    return kOk;
}

int cmd_predict(const Options& o, std::ostream& out) {
    const auto info = read_checkpoint_info(o.checkpoint);
    DMSNet model = load_model(o.checkpoint);
    const auto& m = model->config();
    const bool correct = info.config.data.illumination_correction;
    auto left = image_to_tensor(preprocess_image(o.left, m.input_resolution, correct)).unsqueeze(0);
    auto right = image_to_tensor(preprocess_image(o.right, m.input_resolution, correct)).unsqueeze(0);

    model->eval();
    torch::NoGradGuard no_grad;
    const auto scores = scores_from_logits(model->forward(left, right), m.task_mode).to(torch::kDouble).contiguous();
    ordered_json named = ordered_json::object();
    int best = 0;
    std::vector<std::string> positives;
    for (int k = 0; k < kNumClasses; ++k) {
        const double s = scores[0][k].item<double>();
        named[std::string(kClassNames[k])] = s;
        if (s > scores[0][best].item<double>()) best = k;
        if (s >= 0.5) positives.emplace_back(kClassNames[k]);
    }
    ordered_json doc{{"task_mode", to_string(m.task_mode)}, {"scores", named}, {"prediction", std::string(kClassNames[best])}};
    if (m.task_mode == TaskMode::multilabel) doc["positive_classes"] = positives;
    out << doc.dump(2) << '\n';
    return kOk;
}

int cmd_synth(const Options& o, std::ostream& out) {
    if (o.counts.size() > static_cast<std::size_t>(kNumClasses)) {
        throw ConfigError("--counts: at most " + std::to_string(kNumClasses) + " classes");
    }
    SyntheticOdirOptions opts;
    opts.image_size = o.image_size;
    opts.class_counts.fill(0);
    for (std::size_t i = 0; i < o.counts.size(); ++i) opts.class_counts[i] = o.counts[i];
    opts.multilabel_rows = o.multilabel_rows;
    opts.missing_image_rows = o.missing_rows;
    if (o.seed_given) opts.seed = o.seed;
    out << ordered_json{{"csv", write_synthetic_odir(o.out, opts).string()}}.dump() << '\n';
    return kOk;
}

}  // namespace

std::vector<std::string> expand_rows(const std::string& spec) {
    std::vector<std::string> rows;
    std::stringstream ss(spec);
    std::string token;
    while (std::getline(ss, token, ',')) {
        token.erase(0, token.find_first_not_of(" \t"));
        token.erase(token.find_last_not_of(" \t") + 1);
        if (token.empty()) continue;
        if (token == "components") {
            rows.insert(rows.end(), ablation_rows().begin(), ablation_rows().end());
        } else if (token == "backbones") {
            for (const auto& b : backbone_registry()) rows.emplace_back(b.name);
        } else if (is_backbone(token)) {
            rows.push_back(token);
        } else {
            (void)ablation_row_label(token);  // RegistryError for unknown rows
            rows.push_back(token);
        }
    }
    if (rows.empty()) throw ConfigError("--rows: no rows given");
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (std::size_t j = 0; j < i; ++j) {
            if (rows[i] == rows[j]) throw ConfigError("--rows: duplicate row '" + rows[i] + "'");
        }
    }
    return rows;
}

int exit_code_for(const std::exception& e) {
    if (dynamic_cast<const CheckpointError*>(&e)) return kCheckpointError;
    if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const RegistryError*>(&e) ||
        dynamic_cast<const ShapeError*>(&e)) {
        return kConfigError;
    }
    if (dynamic_cast<const DataError*>(&e) || dynamic_cast<const LoadError*>(&e) ||
        dynamic_cast<const LabelError*>(&e) || dynamic_cast<const InputError*>(&e) ||
        dynamic_cast<const UndefinedMetricsError*>(&e)) {
        return kDataError;
    }
    return kFailure;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"DMS-Net paired fundus classification"};
    app.name("dmsnet");
    app.require_subcommand(1);
    Options o;

    auto common = [&](CLI::App* sub) {
        sub->add_option("--config", o.config, "JSON run configuration")->check(CLI::ExistingFile);
        sub->add_option("--set", o.sets, "Override a config key, e.g. --set model.heads=8")->take_all();
        sub->add_option("--seed", o.seed, "Run seed (overrides the config)");
        sub->add_option("--out", o.out, "Output directory");
    };

    auto* prepare = app.add_subcommand("prepare", "Correct, split and augment an ODIR-style dataset");
    common(prepare);

    auto* train = app.add_subcommand("train", "Train on a prepared dataset");
    common(train);
    train->add_option("--checkpoint", o.checkpoint, "Resume from this checkpoint");

    auto* evaluate_cmd = app.add_subcommand("evaluate", "Score a checkpoint on one partition");
    common(evaluate_cmd);
    evaluate_cmd->add_option("--checkpoint", o.checkpoint, "Checkpoint to evaluate")->required();
    evaluate_cmd->add_option("--split", o.split, "train | val | test")->check(CLI::IsMember({"train", "val", "test"}));

    auto* ablate = app.add_subcommand("ablate", "Train and score a set of configurations");
    common(ablate);
    ablate->add_option("--rows", o.rows, "Comma-separated rows; components and backbones expand to full sweeps");
    ablate->add_option("--split", o.split, "Partition scored for the table")->check(CLI::IsMember({"train", "val", "test"}));

    auto* predict_cmd = app.add_subcommand("predict", "Classify one left/right fundus pair");
    predict_cmd->add_option("--checkpoint", o.checkpoint, "Trained checkpoint")->required();
    predict_cmd->add_option("--left", o.left, "Left-eye image")->required();
    predict_cmd->add_option("--right", o.right, "Right-eye image")->required();

    auto* synth = app.add_subcommand("synth", "Write a synthetic ODIR-style dataset for smoke tests");
    synth->add_option("--out", o.out, "Output directory")->required();
    synth->add_option("--seed", o.seed, "Generator seed");
    synth->add_option("--size", o.image_size, "Image side in pixels")->check(CLI::Range(16, 4096));
    synth->add_option("--counts", o.counts, "Samples per class in N,D,G,... order")->delimiter(',');
    synth->add_option("--multilabel", o.multilabel_rows, "Extra rows with two labels");
    synth->add_option("--missing", o.missing_rows, "Extra rows whose images are absent");

    std::vector<const char*> argv{"dmsnet"};
    for (const auto& a : args) argv.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        app.exit(e, out, err);
        return kConfigError;
    }
    for (auto* sub : app.get_subcommands()) {
        const auto* seed = sub->get_option_no_throw("--seed");
        if (seed && seed->count() > 0) o.seed_given = true;
    }

    try {
        if (*prepare) return cmd_prepare(o, out);
        if (*train) return cmd_train(o, out);
        if (*evaluate_cmd) return cmd_evaluate(o, out);
        if (*ablate) return cmd_ablate(o, out);
        if (*predict_cmd) return cmd_predict(o, out);
        if (*synth) return cmd_synth(o, out);
    } catch (const std::exception& e) {
        err << "dmsnet: error: " << e.what() << '\n';
        return exit_code_for(e);
    }
    return kFailure;
}

}  // namespace dmsnet::cli
