#include "dmsnet/attention.hpp"

#include <cmath>

namespace dmsnet {

namespace nn = torch::nn;

TokenSequence flatten_tokens(const FeatureMap& map) {
    require_rank(map, 4, "flatten_tokens");
    return map.flatten(2).transpose(1, 2);
}

FeatureMap unflatten_tokens(const TokenSequence& tokens, int64_t height, int64_t width) {
    require_rank(tokens, 3, "unflatten_tokens");
    if (tokens.size(1) != height * width) {
        throw ShapeError("unflatten_tokens: " + std::to_string(tokens.size(1)) + " tokens cannot fill a " +
                         std::to_string(height) + "x" + std::to_string(width) + " grid");
    }
    return tokens.transpose(1, 2).reshape({tokens.size(0), tokens.size(2), height, width});
}

MultiHeadCrossAttentionImpl::MultiHeadCrossAttentionImpl(int64_t embed_dim, int64_t heads)
    : embed_dim_(embed_dim), heads_(heads) {
    if (heads <= 0 || embed_dim % heads != 0) {
        throw ShapeError("attention: embedding dim " + std::to_string(embed_dim) + " is not divisible by " +
                         std::to_string(heads) + " heads");
    }
    query = register_module("query", nn::Linear(embed_dim, embed_dim));
    key = register_module("key", nn::Linear(embed_dim, embed_dim));
    value = register_module("value", nn::Linear(embed_dim, embed_dim));
}

AttentionResult MultiHeadCrossAttentionImpl::attend(const TokenSequence& query_tokens,
                                                    const TokenSequence& context_tokens) {
    require_rank(query_tokens, 3, "attention(query)");
    require_rank(context_tokens, 3, "attention(context)");
    if (query_tokens.size(2) != embed_dim_ || context_tokens.size(2) != embed_dim_) {
        throw ShapeError("attention: embedding dim mismatch, expected " + std::to_string(embed_dim_) + ", got " +
                         shape_string(query_tokens) + " and " + shape_string(context_tokens));
    }
    if (query_tokens.size(0) != context_tokens.size(0)) {
        throw ShapeError("attention: batch mismatch " + shape_string(query_tokens) + " vs " +
                         shape_string(context_tokens));
    }
    const auto b = query_tokens.size(0);
    const auto lq = query_tokens.size(1), lk = context_tokens.size(1);
    const auto d = head_dim();

    auto split = [&](const torch::Tensor& t, int64_t len) { return t.reshape({b, len, heads_, d}).transpose(1, 2); };
    auto q = split(query(query_tokens), lq);
    auto k = split(key(context_tokens), lk);
    auto v = split(value(context_tokens), lk);

    auto weights = torch::softmax(torch::matmul(q, k.transpose(-2, -1)) / std::sqrt(static_cast<double>(d)), -1);
    auto attended = torch::matmul(weights, v).transpose(1, 2).reshape({b, lq, embed_dim_});
    return {attended, weights};
}

BidirectionalAttention cross_attend(const TokenSequence& left, const TokenSequence& right,
                                    MultiHeadCrossAttention& attention) {
    auto to_right = attention->attend(left, right);
    auto to_left = attention->attend(right, left);
    return {to_left.attended, to_right.attended, to_left.weights, to_right.weights};
}

}  // namespace dmsnet
