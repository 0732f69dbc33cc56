#pragma once

#include <torch/torch.h>

#include "dmsnet/tensor_util.hpp"

namespace dmsnet {

enum class GlobalPool { max, avg };

/// Adaptive average pooling to (scale, scale) followed by bilinear upsampling
/// (half-pixel centres, not corner aligned) back to the input grid.
/// ShapeError when H or W is smaller than `scale`.
FeatureMap spp_branch(const FeatureMap& x, int64_t scale);

/// Per-channel global max or mean broadcast to every spatial position.
FeatureMap global_branch(const FeatureMap& x, GlobalPool kind);

struct OsimTrace {
    FeatureMap output;      // (B, C/2, H, W)
    FeatureMap compressed;  // post-ReLU features before the attention gate
    FeatureMap gate;        // (B, 1, H, W), sigmoid of the attention conv
};

/// OmniPool spatial integrator.
///
/// Concatenates the input with its global-max, global-average and 2x2 / 4x4
/// pyramid branches (5C channels), compresses to floor(C/2) channels with a
/// 1x1 conv + batch norm + ReLU, then multiplies by a single-channel spatial
/// attention map sigmoid(W_s * F + b_s) computed with a 7x7 convolution.
class OsimImpl : public torch::nn::Module {
public:
    explicit OsimImpl(int64_t in_channels);

    FeatureMap forward(const FeatureMap& x);
    OsimTrace forward_trace(const FeatureMap& x);

    int64_t in_channels() const { return in_channels_; }
    int64_t out_channels() const { return in_channels_ / 2; }

    torch::nn::Conv2d compression{nullptr};
    torch::nn::BatchNorm2d norm{nullptr};
    torch::nn::Conv2d attention{nullptr};

private:
    int64_t in_channels_;
};
TORCH_MODULE(Osim);

inline FeatureMap osim_forward(const FeatureMap& x, Osim& params) { return params->forward(x); }

}  // namespace dmsnet
