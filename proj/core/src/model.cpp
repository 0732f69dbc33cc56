#include "dmsnet/model.hpp"

#include <array>

#include "dmsnet/errors.hpp"

namespace dmsnet {

namespace nn = torch::nn;

namespace {

nn::Conv2d conv1x1(int64_t in, int64_t out) { return nn::Conv2d(nn::Conv2dOptions(in, out, 1)); }

struct RowInfo {
    std::string_view row;
    std::string_view label;
};

constexpr std::array<RowInfo, 8> kRows{{
    {"wo_cafm", "w/o CAFM"},
    {"wo_ciam", "w/o CIAM"},
    {"wo_ccam", "w/o CCAM"},
    {"wo_casfm", "w/o CASFM"},
    {"wo_osim_left", "w/o OSIM(Left)"},
    {"wo_osim_right", "w/o OSIM(Right)"},
    {"wo_osim_all", "w/o OSIM(ALL)"},
    {"all", "ALL"},
}};

}  // namespace

DMSNetImpl::DMSNetImpl(const ModelConfig& config) : config_(config) {
    config_.validate();
    const auto& ab = config_.ablation;
    const int64_t e = config_.embedding_dim;

    backbone = register_module("backbone", build_backbone(config_.backbone_name, config_.pretrained,
                                                          config_.input_resolution, config_.pretrained_weights));
    const int64_t c = backbone->out_channels();
    const int64_t reduced = c / 2;

    if (ab.disable_osim_left) {
        osim_left_bypass = register_module("osim_left_bypass", conv1x1(c, reduced));
    } else {
        osim_left = register_module("osim_left", Osim(c));
    }
    if (ab.disable_osim_right) {
        osim_right_bypass = register_module("osim_right_bypass", conv1x1(c, reduced));
    } else {
        osim_right = register_module("osim_right", Osim(c));
    }

    if (ab.disable_casfm) {
        casfm_bypass_left = register_module("casfm_bypass_left", conv1x1(reduced, e));
        casfm_bypass_right = register_module("casfm_bypass_right", conv1x1(reduced, e));
        casfm_bypass_fuse = register_module("casfm_bypass_fuse", conv1x1(2 * e, e));
    } else {
        CasfmOptions opts{reduced, e, config_.heads, config_.casfm.pool_kernel, config_.casfm.literal_pool_scale};
        casfm = register_module("casfm", Casfm(opts));
    }

    SynergyOptions syn{e, config_.heads, config_.growth_rate, !ab.disable_cafm};
    if (!ab.disable_ccam) ccam = register_module("ccam", Ccam(syn));
    if (!ab.disable_ciam) ciam = register_module("ciam", Ciam(syn));

    dropout = register_module("dropout", nn::Dropout(config_.dropout));
    head = register_module("head", nn::Linear(3 * e, config_.num_classes));
}

ModuleCounts DMSNetImpl::module_counts() const {
    ModuleCounts n;
    n.osim = int(!osim_left.is_empty()) + int(!osim_right.is_empty());
    n.casfm = int(!casfm.is_empty());
    n.ccam = int(!ccam.is_empty());
    n.ciam = int(!ciam.is_empty());
    if (!ccam.is_empty() && ccam->guidance->uses_cafm()) ++n.cafm;
    if (!ciam.is_empty() && ciam->guidance->uses_cafm()) ++n.cafm;
    return n;
}

DMSNetTrace DMSNetImpl::forward_trace(const torch::Tensor& left, const torch::Tensor& right) {
    DMSNetTrace t;
    std::tie(t.backbone_left, t.backbone_right) = extract_pair(backbone, left, right);

    t.osim_left = osim_left ? osim_left(t.backbone_left) : osim_left_bypass(t.backbone_left);
    t.osim_right = osim_right ? osim_right(t.backbone_right) : osim_right_bypass(t.backbone_right);

    if (casfm) {
        auto out = casfm(t.osim_left, t.osim_right);
        t.fused = out.fused;
        t.recalibrated_left = out.left;
        t.recalibrated_right = out.right;
    } else {
        t.recalibrated_left = casfm_bypass_left(t.osim_left);
        t.recalibrated_right = casfm_bypass_right(t.osim_right);
        t.fused = casfm_bypass_fuse(torch::cat({t.recalibrated_left, t.recalibrated_right}, 1));
    }

    const auto& l = t.recalibrated_left;
    const auto& r = t.recalibrated_right;
    t.ccam = ccam ? ccam(l, r) : l - r;
    t.ciam = ciam ? ciam(l, r) : (l + r) * 0.5;

    auto pooled = torch::cat({t.fused, t.ccam, t.ciam}, 1).mean({2, 3});
    t.logits = head(dropout(pooled));
    return t;
}

torch::Tensor DMSNetImpl::forward(const torch::Tensor& left, const torch::Tensor& right) {
    return forward_trace(left, right).logits;
}

DMSNet build_model(const ModelConfig& config) { return DMSNet(config); }

torch::Tensor labels_to_tensor(std::span<const LabelVector> labels) {
    auto t = torch::zeros({static_cast<int64_t>(labels.size()), kNumClasses}, torch::kFloat);
    auto acc = t.accessor<float, 2>();
    for (std::size_t i = 0; i < labels.size(); ++i) {
        for (int c = 0; c < kNumClasses; ++c) acc[static_cast<int64_t>(i)][c] = labels[i].bits[c];
    }
    return t;
}

torch::Tensor compute_loss(const torch::Tensor& logits, std::span<const LabelVector> labels, TaskMode mode) {
    require_rank(logits, 2, "compute_loss");
    if (logits.size(0) != static_cast<int64_t>(labels.size()) || logits.size(1) != kNumClasses) {
        throw ShapeError("compute_loss: logits " + shape_string(logits) + " do not match " +
                         std::to_string(labels.size()) + " labels of " + std::to_string(kNumClasses) + " classes");
    }
    for (const auto& l : labels) l.validate(mode);

    if (mode == TaskMode::multiclass) {
        std::vector<int64_t> targets;
        targets.reserve(labels.size());
        for (const auto& l : labels) targets.push_back(l.single_class());
        auto target = torch::tensor(targets, torch::kLong);
        return torch::nn::functional::cross_entropy(logits, target);
    }
    auto target = labels_to_tensor(labels).to(logits.scalar_type());
    return torch::binary_cross_entropy_with_logits(logits, target);
}

const std::vector<std::string>& ablation_rows() {
    static const std::vector<std::string> rows = [] {
        std::vector<std::string> r;
        for (const auto& info : kRows) r.emplace_back(info.row);
        return r;
    }();
    return rows;
}

std::string ablation_row_label(std::string_view row) {
    for (const auto& info : kRows) {
        if (info.row == row) return std::string(info.label);
    }
    throw RegistryError("unknown ablation row '" + std::string(row) + "'");
}

ModelConfig apply_ablation(const ModelConfig& config, std::string_view row) {
    ModelConfig out = config;
    AblationSpec& a = out.ablation;
    a = AblationSpec{};
    if (row == "all") return out;
    if (row == "wo_cafm") {
        a.disable_cafm = true;
    } else if (row == "wo_ciam") {
        a.disable_ciam = true;
    } else if (row == "wo_ccam") {
        a.disable_ccam = true;
    } else if (row == "wo_casfm") {
        a.disable_casfm = true;
    } else if (row == "wo_osim_left") {
        a.disable_osim_left = true;
    } else if (row == "wo_osim_right") {
        a.disable_osim_right = true;
    } else if (row == "wo_osim_all") {
        a.disable_osim_left = true;
        a.disable_osim_right = true;
    } else {
        throw RegistryError("unknown ablation row '" + std::string(row) + "'");
    }
    return out;
}

torch::Tensor scores_from_logits(const torch::Tensor& logits, TaskMode mode) {
    return mode == TaskMode::multiclass ? torch::softmax(logits, 1) : torch::sigmoid(logits);
}

}  // namespace dmsnet
