#pragma once

#include <array>

#include <torch/torch.h>

#include "dmsnet/attention.hpp"
#include "dmsnet/tensor_util.hpp"

namespace dmsnet {

enum class Side { left = 0, right = 1 };

struct CasfmOptions {
    int64_t in_channels;
    int64_t embed_dim = 256;
    int64_t heads = 4;
    int64_t pool_kernel = 2;
    bool literal_pool_scale = true;
};

struct CasfmOutput {
    FeatureMap fused;    // (B, E, h, w)
    FeatureMap left;     // recalibrated per-eye maps, (B, E, h, w)
    FeatureMap right;
};

/// Calibrated analogous semantic fusion.
///
/// Per eye: two 1x1 convs feed an average- and a max-pooled path which are
/// mixed by a learnable lambda; a 1x1 conv embeds the result into E channels
/// and adds a learned positional vector P0 (scaled by W_p). Both token sets
/// then attend to each other, pass through a shared output projection W^O and
/// an alpha/beta weighted residual, and the two maps are fused by a 1x1 conv.
///
/// lambda, alpha and beta are stored unconstrained and squashed by a sigmoid.
class CasfmImpl : public torch::nn::Module {
public:
    explicit CasfmImpl(const CasfmOptions& options);

    /// lambda * F_max + (1 - lambda) * F_avg. Pooling uses floor division for
    /// maps that do not divide by k.
    FeatureMap dual_pool_mix(const FeatureMap& features, Side side);
    /// token_conv(F) + Interp(P0, (h,w)) * W_p, flattened row-major.
    TokenSequence tokenize_with_pos(const FeatureMap& features, Side side);
    BidirectionalAttention cross_attend(const TokenSequence& left, const TokenSequence& right);
    /// alpha * (Z W^O) + beta * T.
    TokenSequence adaptive_residual(const TokenSequence& attended, const TokenSequence& tokens, Side side);

    CasfmOutput forward(const FeatureMap& left, const FeatureMap& right);

    torch::Tensor lambda(Side side) const;
    torch::Tensor alpha(Side side) const;
    torch::Tensor beta(Side side) const;

    const CasfmOptions& options() const { return options_; }

    struct SideParams {
        torch::nn::Conv2d avg_conv{nullptr};
        torch::nn::Conv2d max_conv{nullptr};
        torch::nn::Conv2d token_conv{nullptr};
        torch::Tensor lambda_raw, alpha_raw, beta_raw;
        torch::Tensor pos_embed;  // P0, (E, 1, 1)
        torch::Tensor pos_scale;  // W_p, (E)
    };

    SideParams& side(Side s) { return sides_[static_cast<std::size_t>(s)]; }
    const SideParams& side(Side s) const { return sides_[static_cast<std::size_t>(s)]; }

    MultiHeadCrossAttention attention{nullptr};
    torch::nn::Linear out_proj{nullptr};  // W^O, shared by both directions
    torch::nn::Conv2d fuse{nullptr};

private:
    CasfmOptions options_;
    std::array<SideParams, 2> sides_;
};
TORCH_MODULE(Casfm);

}  // namespace dmsnet
