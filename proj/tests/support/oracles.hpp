#pragma once

// Scalar reference implementations used as test oracles. They operate on
// plain std::vector<double> buffers and never call tensor kernels, so they
// stay independent of the code under test.

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <torch/torch.h>

namespace oracle {

/// Single-sample (C, H, W) buffer.
struct Grid {
    int c = 0, h = 0, w = 0;
    std::vector<double> v;

    Grid() = default;
    Grid(int channels, int height, int width) : c(channels), h(height), w(width), v(std::size_t(channels) * height * width) {}

    double& at(int ch, int y, int x) { return v[(std::size_t(ch) * h + y) * w + x]; }
    double at(int ch, int y, int x) const { return v[(std::size_t(ch) * h + y) * w + x]; }
};

/// Copies sample `b` of a (B, C, H, W) tensor.
Grid from_tensor(const torch::Tensor& t, int64_t b = 0);
std::vector<double> values(const torch::Tensor& t);

Grid adaptive_avg_pool(const Grid& x, int out_h, int out_w);
/// Half-pixel bilinear resize (corners not aligned), edge-clamped.
Grid bilinear_resize(const Grid& x, int out_h, int out_w);
Grid spp(const Grid& x, int scale);
Grid global_pool(const Grid& x, bool max);
Grid concat(const std::vector<Grid>& parts);

/// Plain cross-correlation; weight is (out, in, k, k) row-major.
Grid conv2d(const Grid& x, const std::vector<double>& weight, const std::vector<double>& bias, int out_channels,
            int kernel, int padding);
/// Non-overlapping k x k pooling with floor division.
Grid pool(const Grid& x, int k, bool max);

struct OsimParams {
    std::vector<double> compression_w;  // (C/2, 5C, 1, 1)
    std::vector<double> bn_gamma, bn_beta, bn_mean, bn_var;
    double bn_eps = 1e-5;
    std::vector<double> attention_w;  // (1, C/2, 7, 7)
    double attention_b = 0.0;
};

/// Evaluation-mode OSIM on one sample.
Grid osim(const Grid& x, const OsimParams& p);

struct Linear {
    int in = 0, out = 0;
    std::vector<double> w;  // (out, in)
    std::vector<double> b;  // empty for no bias
    std::vector<double> apply(const std::vector<double>& x) const;
};

using Tokens = std::vector<std::vector<double>>;  // L x E

/// Multi-head scaled dot-product attention of `queries` over `context`.
Tokens attend(const Tokens& queries, const Tokens& context, const Linear& q, const Linear& k, const Linear& v, int heads);

/// Row-major flatten of a grid into h*w tokens of c features, and back.
Tokens flatten(const Grid& g);
Grid unflatten(const Tokens& t, int h, int w);

struct CasfmSide {
    std::vector<double> avg_w, avg_b, max_w, max_b, token_w, token_b;
    double lambda = 0.5, alpha = 0.5, beta = 0.5;
    std::vector<double> pos, pos_scale;  // E each
};

struct CasfmParams {
    int in_channels = 0, embed = 0, heads = 1, k = 2;
    bool literal_scale = true;
    CasfmSide left, right;
    Linear q, key, v, out_proj;
    std::vector<double> fuse_w, fuse_b;
};

struct CasfmResult {
    Grid fused, left, right;
};

CasfmResult casfm(const Grid& left, const Grid& right, const CasfmParams& p);

/// Average of the two attended streams of a bidirectional exchange.
Grid cafm(const Grid& a, const Grid& b, const Linear& q, const Linear& k, const Linear& v, int heads);

// ---------------------------------------------------------------------------
// metrics

/// Kappa from per-sample agreement and per-sample marginal counts.
double kappa_by_counting(const std::vector<int>& pred, const std::vector<int>& truth, int k);
/// Exhaustive positive/negative pair enumeration, ties = 1/2.
std::optional<double> auc_by_pairs(const std::vector<double>& scores, const std::vector<int>& positive);

// ---------------------------------------------------------------------------
// finite differences

struct GradcheckResult {
    double max_rel_error = 0.0;
    std::string worst;  // name of the tensor with the largest error
    int64_t checked = 0;
};

/// Compares autograd gradients of `loss()` w.r.t. each named tensor against
/// central differences. Error per tensor is |a - n|_inf / max(|a|_inf, |n|_inf, 1).
GradcheckResult gradcheck(const std::function<torch::Tensor()>& loss,
                          const std::vector<std::pair<std::string, torch::Tensor>>& tensors, double eps = 1e-6);

/// All trainable parameters of a module, by name.
std::vector<std::pair<std::string, torch::Tensor>> named_parameters(const torch::nn::Module& m);

}  // namespace oracle
