#include "dmsnet/osim.hpp"

namespace dmsnet {

namespace nn = torch::nn;
namespace F = torch::nn::functional;

FeatureMap spp_branch(const FeatureMap& x, int64_t scale) {
    require_rank(x, 4, "spp_branch");
    const auto h = x.size(2), w = x.size(3);
    if (scale < 1 || h < scale || w < scale) {
        throw ShapeError("spp_branch: " + std::to_string(h) + "x" + std::to_string(w) +
                         " map is smaller than pooling scale " + std::to_string(scale));
    }
    auto pooled = torch::adaptive_avg_pool2d(x, {scale, scale});
    return F::interpolate(pooled, F::InterpolateFuncOptions()
                                      .size(std::vector<int64_t>{h, w})
                                      .mode(torch::kBilinear)
                                      .align_corners(false));
}

FeatureMap global_branch(const FeatureMap& x, GlobalPool kind) {
    require_rank(x, 4, "global_branch");
    auto pooled = kind == GlobalPool::max ? x.amax({2, 3}, /*keepdim=*/true) : x.mean({2, 3}, /*keepdim=*/true);
    return pooled.expand_as(x);
}

OsimImpl::OsimImpl(int64_t in_channels) : in_channels_(in_channels) {
    if (in_channels < 2) {
        throw ShapeError("osim: needs at least 2 input channels, got " + std::to_string(in_channels));
    }
    const auto out = out_channels();
    compression = register_module(
        "compression", nn::Conv2d(nn::Conv2dOptions(5 * in_channels, out, 1).bias(false)));
    norm = register_module("norm", nn::BatchNorm2d(nn::BatchNorm2dOptions(out).eps(1e-5).momentum(0.1)));
    attention = register_module("attention", nn::Conv2d(nn::Conv2dOptions(out, 1, 7).padding(3)));
}

OsimTrace OsimImpl::forward_trace(const FeatureMap& x) {
    require_rank(x, 4, "osim");
    if (x.size(1) != in_channels_) {
        throw ShapeError("osim: expected " + std::to_string(in_channels_) + " channels, got " + shape_string(x));
    }
    auto fused = torch::cat({x, global_branch(x, GlobalPool::max), global_branch(x, GlobalPool::avg),
                             spp_branch(x, 2), spp_branch(x, 4)},
                            1);
    auto compressed = torch::relu(norm(compression(fused)));
    auto gate = torch::sigmoid(attention(compressed));
    return {compressed * gate, compressed, gate};
}

FeatureMap OsimImpl::forward(const FeatureMap& x) { return forward_trace(x).output; }

}  // namespace dmsnet
