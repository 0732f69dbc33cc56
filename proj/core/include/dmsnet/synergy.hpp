#pragma once

#include <vector>

#include <torch/torch.h>

#include "dmsnet/attention.hpp"
#include "dmsnet/tensor_util.hpp"

namespace dmsnet {

/// Cross-attention fusion: both maps are tokenized, attend to each other once
/// (the same form as the CASFM exchange) and the two attended streams are
/// averaged back into a single (B,E,h,w) map.
class CafmImpl : public torch::nn::Module {
public:
    CafmImpl(int64_t embed_dim, int64_t heads);
    FeatureMap forward(const FeatureMap& a, const FeatureMap& b);

    MultiHeadCrossAttention attention{nullptr};
};
TORCH_MODULE(Cafm);

/// Guidance signal consumed by CCAM/CIAM. With CAFM ablated it degrades to a
/// 1x1 conv over the concatenated pair.
class GuidanceImpl : public torch::nn::Module {
public:
    GuidanceImpl(int64_t embed_dim, int64_t heads, bool use_cafm);
    FeatureMap forward(const FeatureMap& left, const FeatureMap& right);

    bool uses_cafm() const { return !cafm.is_empty(); }

    Cafm cafm{nullptr};
    torch::nn::Conv2d concat_conv{nullptr};
};
TORCH_MODULE(Guidance);

// 3x3 conv -> batch norm -> ReLU producing `growth` channels.
class DenseLayerImpl : public torch::nn::Module {
public:
    DenseLayerImpl(int64_t in_channels, int64_t growth);
    torch::Tensor forward(const torch::Tensor& x);

    int64_t in_channels() const { return in_channels_; }

private:
    int64_t in_channels_;
    torch::nn::Conv2d conv_{nullptr};
    torch::nn::BatchNorm2d norm_{nullptr};
};
TORCH_MODULE(DenseLayer);

/// Layer i sees the block input concatenated with the outputs of layers
/// 0..i-1, so its input width is in + i * growth.
class DenseBlockImpl : public torch::nn::Module {
public:
    DenseBlockImpl(int64_t in_channels, int64_t layers, int64_t growth);
    torch::Tensor forward(const torch::Tensor& x);

    int64_t out_channels() const { return out_channels_; }
    const std::vector<DenseLayer>& layers() const { return layers_; }

private:
    int64_t out_channels_;
    std::vector<DenseLayer> layers_;
};
TORCH_MODULE(DenseBlock);

/// Two dense blocks of two layers each, then a 1x1 transition back to E.
class DensePathImpl : public torch::nn::Module {
public:
    static constexpr int64_t kLayersPerBlock = 2;

    DensePathImpl(int64_t in_channels, int64_t out_channels, int64_t growth);
    torch::Tensor forward(const torch::Tensor& x);

    DenseBlock first{nullptr}, second{nullptr};
    torch::nn::Conv2d transition{nullptr};
};
TORCH_MODULE(DensePath);

struct SynergyOptions {
    int64_t embed_dim = 256;
    int64_t heads = 4;
    int64_t growth = 32;
    bool use_cafm = true;
};

/// Contrastive alignment: signed difference L - R plus CAFM guidance, fed
/// through the dense path. No residual.
class CcamImpl : public torch::nn::Module {
public:
    explicit CcamImpl(const SynergyOptions& options);
    FeatureMap forward(const FeatureMap& left, const FeatureMap& right);

    Guidance guidance{nullptr};
    DensePath dense{nullptr};
};
TORCH_MODULE(Ccam);

/// Integrative alignment: the mean map (L + R)/2 gated by the per-site cosine
/// similarity of L and R, plus CAFM guidance, fed through the dense path and
/// added back onto the mean map.
class CiamImpl : public torch::nn::Module {
public:
    explicit CiamImpl(const SynergyOptions& options);
    FeatureMap forward(const FeatureMap& left, const FeatureMap& right);

    Guidance guidance{nullptr};
    DensePath dense{nullptr};
};
TORCH_MODULE(Ciam);

inline constexpr double kCosineEpsilon = 1e-8;

/// (B,1,h,w) cosine similarity over channels; 0 wherever either column is
/// the zero vector.
torch::Tensor cosine_similarity_map(const FeatureMap& a, const FeatureMap& b);

}  // namespace dmsnet
