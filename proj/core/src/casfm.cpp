#include "dmsnet/casfm.hpp"

namespace dmsnet {

namespace nn = torch::nn;
namespace F = torch::nn::functional;

namespace {

const char* side_name(Side s) { return s == Side::left ? "left" : "right"; }

}  // namespace

CasfmImpl::CasfmImpl(const CasfmOptions& options) : options_(options) {
    const auto c = options.in_channels;
    const auto e = options.embed_dim;
    if (c <= 0) throw ShapeError("casfm: in_channels must be positive");
    if (options.pool_kernel <= 0) throw ShapeError("casfm: pool kernel must be positive");

    for (Side s : {Side::left, Side::right}) {
        const std::string prefix = side_name(s);
        auto& p = side(s);
        p.avg_conv = register_module(prefix + "_avg_conv", nn::Conv2d(nn::Conv2dOptions(c, c, 1)));
        p.max_conv = register_module(prefix + "_max_conv", nn::Conv2d(nn::Conv2dOptions(c, c, 1)));
        p.token_conv = register_module(prefix + "_token_conv", nn::Conv2d(nn::Conv2dOptions(c, e, 1)));
        p.lambda_raw = register_parameter(prefix + "_lambda", torch::zeros({}));
        p.alpha_raw = register_parameter(prefix + "_alpha", torch::zeros({}));
        p.beta_raw = register_parameter(prefix + "_beta", torch::zeros({}));
        p.pos_embed = register_parameter(prefix + "_pos_embed", torch::randn({e, 1, 1}) * 0.02);
        p.pos_scale = register_parameter(prefix + "_pos_scale", torch::ones({e}));
    }
    attention = register_module("attention", MultiHeadCrossAttention(e, options.heads));
    out_proj = register_module("out_proj", nn::Linear(nn::LinearOptions(e, e).bias(false)));
    fuse = register_module("fuse", nn::Conv2d(nn::Conv2dOptions(2 * e, e, 1)));
}

torch::Tensor CasfmImpl::lambda(Side s) const { return torch::sigmoid(side(s).lambda_raw); }
torch::Tensor CasfmImpl::alpha(Side s) const { return torch::sigmoid(side(s).alpha_raw); }
torch::Tensor CasfmImpl::beta(Side s) const { return torch::sigmoid(side(s).beta_raw); }

FeatureMap CasfmImpl::dual_pool_mix(const FeatureMap& features, Side s) {
    require_rank(features, 4, "casfm.dual_pool_mix");
    const auto k = options_.pool_kernel;
    if (features.size(1) != options_.in_channels) {
        throw ShapeError("casfm: expected " + std::to_string(options_.in_channels) + " channels, got " +
                         shape_string(features));
    }
    if (features.size(2) < k || features.size(3) < k) {
        throw ShapeError("casfm: " + shape_string(features) + " is smaller than the pooling kernel " + std::to_string(k));
    }
    auto& p = side(s);
    auto avg = torch::avg_pool2d(p.avg_conv(features), {k, k}, {k, k});
    auto max = torch::max_pool2d(p.max_conv(features), {k, k}, {k, k});
    if (options_.literal_pool_scale) {
        const double scale = 1.0 / static_cast<double>(k * k);
        avg = avg * scale;
        max = max * scale;
    }
    auto lam = lambda(s);
    return lam * max + (1 - lam) * avg;
}

TokenSequence CasfmImpl::tokenize_with_pos(const FeatureMap& features, Side s) {
    require_rank(features, 4, "casfm.tokenize_with_pos");
    auto& p = side(s);
    const auto h = features.size(2), w = features.size(3);
    auto pos = F::interpolate(p.pos_embed.unsqueeze(0), F::InterpolateFuncOptions()
                                                          .size(std::vector<int64_t>{h, w})
                                                          .mode(torch::kBilinear)
                                                          .align_corners(false));
    auto embedded = p.token_conv(features) + pos * p.pos_scale.view({1, -1, 1, 1});
    return flatten_tokens(embedded);
}

BidirectionalAttention CasfmImpl::cross_attend(const TokenSequence& left, const TokenSequence& right) {
    return dmsnet::cross_attend(left, right, attention);
}

TokenSequence CasfmImpl::adaptive_residual(const TokenSequence& attended, const TokenSequence& tokens, Side s) {
    require_same_shape(attended, tokens, "casfm.adaptive_residual");
    return alpha(s) * out_proj(attended) + beta(s) * tokens;
}

CasfmOutput CasfmImpl::forward(const FeatureMap& left, const FeatureMap& right) {
    require_same_shape(left, right, "casfm");
    auto mixed_left = dual_pool_mix(left, Side::left);
    auto mixed_right = dual_pool_mix(right, Side::right);
    const auto h = mixed_left.size(2), w = mixed_left.size(3);

    auto tokens_left = tokenize_with_pos(mixed_left, Side::left);
    auto tokens_right = tokenize_with_pos(mixed_right, Side::right);
    auto z = cross_attend(tokens_left, tokens_right);

    auto rec_left = unflatten_tokens(adaptive_residual(z.z_left, tokens_left, Side::left), h, w);
    auto rec_right = unflatten_tokens(adaptive_residual(z.z_right, tokens_right, Side::right), h, w);
    return {fuse(torch::cat({rec_left, rec_right}, 1)), rec_left, rec_right};
}

}  // namespace dmsnet
