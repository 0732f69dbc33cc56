#pragma once

#include <sstream>
#include <string>
#include <string_view>

#include <torch/torch.h>

#include "dmsnet/errors.hpp"

namespace dmsnet {

// Activations are plain tensors; the aliases name the layout a function expects.
using FeatureMap = torch::Tensor;     // (B, C, H, W)
using TokenSequence = torch::Tensor;  // (B, L, E)

inline std::string shape_string(const torch::Tensor& t) {
    std::ostringstream os;
    os << t.sizes();
    return os.str();
}

inline void require_rank(const torch::Tensor& t, int64_t rank, std::string_view what) {
    if (!t.defined() || t.dim() != rank) {
        throw ShapeError(std::string(what) + ": expected rank " + std::to_string(rank) + " tensor, got " +
                         (t.defined() ? shape_string(t) : std::string("undefined")));
    }
}

inline void require_same_shape(const torch::Tensor& a, const torch::Tensor& b, std::string_view what) {
    if (a.sizes() != b.sizes()) {
        throw ShapeError(std::string(what) + ": shape mismatch " + shape_string(a) + " vs " + shape_string(b));
    }
}

/// Number of trainable scalars reachable from `module`.
inline int64_t count_trainable_parameters(const torch::nn::Module& module) {
    int64_t n = 0;
    for (const auto& p : module.parameters(/*recurse=*/true)) {
        if (p.requires_grad()) n += p.numel();
    }
    return n;
}

}  // namespace dmsnet
