#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <torch/torch.h>

#include "dmsnet/backbone.hpp"
#include "dmsnet/casfm.hpp"
#include "dmsnet/config.hpp"
#include "dmsnet/osim.hpp"
#include "dmsnet/synergy.hpp"

namespace dmsnet {

/// Intermediate activations of one forward pass.
struct DMSNetTrace {
    FeatureMap backbone_left, backbone_right;
    FeatureMap osim_left, osim_right;
    FeatureMap fused, recalibrated_left, recalibrated_right;
    FeatureMap ccam, ciam;
    torch::Tensor logits;  // (B, 8)
};

struct ModuleCounts {
    int osim = 0;
    int casfm = 0;
    int ccam = 0;
    int ciam = 0;
    int cafm = 0;
};

/// Binocular classifier: shared backbone -> per-eye OSIM -> CASFM ->
/// parallel CCAM / CIAM -> global average pool over [fused, ccam, ciam] ->
/// dropout -> linear.
///
/// Ablated modules are replaced by shape-preserving stand-ins: a 1x1 conv
/// C -> C/2 for OSIM; per-eye 1x1 convs to E plus a concat 1x1 fuse conv for
/// CASFM; the parameter-free signed difference L - R for CCAM and the mean
/// (L + R)/2 for CIAM; concat + 1x1 conv for CAFM.
class DMSNetImpl : public torch::nn::Module {
public:
    explicit DMSNetImpl(const ModelConfig& config);

    torch::Tensor forward(const torch::Tensor& left, const torch::Tensor& right);
    DMSNetTrace forward_trace(const torch::Tensor& left, const torch::Tensor& right);

    const ModelConfig& config() const { return config_; }
    ModuleCounts module_counts() const;

    Backbone backbone{nullptr};
    Osim osim_left{nullptr}, osim_right{nullptr};
    torch::nn::Conv2d osim_left_bypass{nullptr}, osim_right_bypass{nullptr};
    Casfm casfm{nullptr};
    torch::nn::Conv2d casfm_bypass_left{nullptr}, casfm_bypass_right{nullptr}, casfm_bypass_fuse{nullptr};
    Ccam ccam{nullptr};
    Ciam ciam{nullptr};
    torch::nn::Dropout dropout{nullptr};
    torch::nn::Linear head{nullptr};

private:
    ModelConfig config_;
};
TORCH_MODULE(DMSNet);

/// Validates the config (ConfigError naming the field) and seeds nothing;
/// callers control the torch RNG.
DMSNet build_model(const ModelConfig& config);

/// (B, 8) float tensor of 0/1 indicators.
torch::Tensor labels_to_tensor(std::span<const LabelVector> labels);

/// Softmax cross-entropy (multiclass) or mean binary cross-entropy with
/// logits (multilabel). LabelError for labels inadmissible in `mode`.
torch::Tensor compute_loss(const torch::Tensor& logits, std::span<const LabelVector> labels, TaskMode mode);

/// Ablation rows, in comparison-table order: wo_cafm, wo_ciam, wo_ccam,
/// wo_casfm, wo_osim_left, wo_osim_right, wo_osim_all, all.
const std::vector<std::string>& ablation_rows();
/// Table label such as "w/o CAFM" or "ALL".
std::string ablation_row_label(std::string_view row);
/// Returns `config` with the row's flags set (all others cleared).
/// RegistryError for unknown rows.
ModelConfig apply_ablation(const ModelConfig& config, std::string_view row);

/// Softmax (multiclass) or sigmoid (multilabel) scores.
torch::Tensor scores_from_logits(const torch::Tensor& logits, TaskMode mode);

}  // namespace dmsnet
