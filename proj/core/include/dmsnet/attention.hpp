#pragma once

#include <torch/torch.h>

#include "dmsnet/tensor_util.hpp"

namespace dmsnet {

/// Flattens (B,E,h,w) row-major into (B,h*w,E).
TokenSequence flatten_tokens(const FeatureMap& map);
/// Inverse of flatten_tokens.
FeatureMap unflatten_tokens(const TokenSequence& tokens, int64_t height, int64_t width);

struct AttentionResult {
    TokenSequence attended;  // (B, Lq, E), heads concatenated
    torch::Tensor weights;   // (B, h, Lq, Lk), rows sum to one
};

/// Multi-head scaled dot-product attention with learned Q/K/V projections.
/// The output projection is owned by the caller.
class MultiHeadCrossAttentionImpl : public torch::nn::Module {
public:
    MultiHeadCrossAttentionImpl(int64_t embed_dim, int64_t heads);

    /// softmax(Q(query_tokens) K(context)^T / sqrt(D_K)) V(context), per head.
    AttentionResult attend(const TokenSequence& query_tokens, const TokenSequence& context_tokens);

    int64_t embed_dim() const { return embed_dim_; }
    int64_t heads() const { return heads_; }
    int64_t head_dim() const { return embed_dim_ / heads_; }

    torch::nn::Linear query{nullptr}, key{nullptr}, value{nullptr};

private:
    int64_t embed_dim_;
    int64_t heads_;
};
TORCH_MODULE(MultiHeadCrossAttention);

struct BidirectionalAttention {
    TokenSequence z_left;   // right queries over left keys/values
    TokenSequence z_right;  // left queries over right keys/values
    torch::Tensor weights_left, weights_right;
};

/// Z_right = softmax(Q_left K_right^T / sqrt(D_K)) V_right and the mirror
/// image for Z_left. Token counts of the two sides may differ; embedding
/// dims and batch sizes may not.
BidirectionalAttention cross_attend(const TokenSequence& left, const TokenSequence& right,
                                    MultiHeadCrossAttention& attention);

}  // namespace dmsnet
