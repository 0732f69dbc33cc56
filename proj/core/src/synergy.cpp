#include "dmsnet/synergy.hpp"

namespace dmsnet {

namespace nn = torch::nn;

CafmImpl::CafmImpl(int64_t embed_dim, int64_t heads) {
    attention = register_module("attention", MultiHeadCrossAttention(embed_dim, heads));
}

FeatureMap CafmImpl::forward(const FeatureMap& a, const FeatureMap& b) {
    require_rank(a, 4, "cafm");
    require_same_shape(a, b, "cafm");
    auto z = cross_attend(flatten_tokens(a), flatten_tokens(b), attention);
    return unflatten_tokens((z.z_left + z.z_right) * 0.5, a.size(2), a.size(3));
}

GuidanceImpl::GuidanceImpl(int64_t embed_dim, int64_t heads, bool use_cafm) {
    if (use_cafm) {
        cafm = register_module("cafm", Cafm(embed_dim, heads));
    } else {
        concat_conv = register_module("concat_conv", nn::Conv2d(nn::Conv2dOptions(2 * embed_dim, embed_dim, 1)));
    }
}

FeatureMap GuidanceImpl::forward(const FeatureMap& left, const FeatureMap& right) {
    if (cafm) return cafm(left, right);
    require_same_shape(left, right, "guidance");
    return concat_conv(torch::cat({left, right}, 1));
}

DenseLayerImpl::DenseLayerImpl(int64_t in_channels, int64_t growth) : in_channels_(in_channels) {
    conv_ = register_module("conv", nn::Conv2d(nn::Conv2dOptions(in_channels, growth, 3).padding(1).bias(false)));
    norm_ = register_module("norm", nn::BatchNorm2d(growth));
}

torch::Tensor DenseLayerImpl::forward(const torch::Tensor& x) { return torch::relu(norm_(conv_(x))); }

DenseBlockImpl::DenseBlockImpl(int64_t in_channels, int64_t layers, int64_t growth) {
    int64_t width = in_channels;
    for (int64_t i = 0; i < layers; ++i) {
        layers_.push_back(register_module("layer" + std::to_string(i), DenseLayer(width, growth)));
        width += growth;
    }
    out_channels_ = width;
}

torch::Tensor DenseBlockImpl::forward(const torch::Tensor& x) {
    std::vector<torch::Tensor> features{x};
    for (auto& layer : layers_) {
        features.push_back(layer(torch::cat(features, 1)));
    }
    return torch::cat(features, 1);
}

DensePathImpl::DensePathImpl(int64_t in_channels, int64_t out_channels, int64_t growth) {
    first = register_module("block1", DenseBlock(in_channels, kLayersPerBlock, growth));
    second = register_module("block2", DenseBlock(first->out_channels(), kLayersPerBlock, growth));
    transition = register_module("transition",
                                 nn::Conv2d(nn::Conv2dOptions(second->out_channels(), out_channels, 1)));
}

torch::Tensor DensePathImpl::forward(const torch::Tensor& x) { return transition(second(first(x))); }

torch::Tensor cosine_similarity_map(const FeatureMap& a, const FeatureMap& b) {
    require_same_shape(a, b, "cosine_similarity_map");
    auto dot = (a * b).sum(1, /*keepdim=*/true);
    auto norms = torch::linalg_vector_norm(a, 2, {1}, /*keepdim=*/true) *
                 torch::linalg_vector_norm(b, 2, {1}, /*keepdim=*/true);
    return dot / (norms + kCosineEpsilon);
}

CcamImpl::CcamImpl(const SynergyOptions& o) {
    guidance = register_module("guidance", Guidance(o.embed_dim, o.heads, o.use_cafm));
    dense = register_module("dense", DensePath(2 * o.embed_dim, o.embed_dim, o.growth));
}

FeatureMap CcamImpl::forward(const FeatureMap& left, const FeatureMap& right) {
    require_rank(left, 4, "ccam");
    require_same_shape(left, right, "ccam");
    auto difference = left - right;
    return dense(torch::cat({difference, guidance(left, right)}, 1));
}

CiamImpl::CiamImpl(const SynergyOptions& o) {
    guidance = register_module("guidance", Guidance(o.embed_dim, o.heads, o.use_cafm));
    dense = register_module("dense", DensePath(2 * o.embed_dim, o.embed_dim, o.growth));
}

FeatureMap CiamImpl::forward(const FeatureMap& left, const FeatureMap& right) {
    require_rank(left, 4, "ciam");
    require_same_shape(left, right, "ciam");
    auto mean = (left + right) * 0.5;
    auto gated = cosine_similarity_map(left, right) * mean;
    auto core = dense(torch::cat({gated, guidance(left, right)}, 1));
    return core + mean;
}

}  // namespace dmsnet
