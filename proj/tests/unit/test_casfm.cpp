#include <limits>
#include <set>

#include <gtest/gtest.h>

#include "dmsnet/casfm.hpp"
#include "dmsnet/errors.hpp"
#include "oracles.hpp"

using namespace dmsnet;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

Casfm make_casfm(int64_t c, int64_t e, int64_t heads, bool literal = true) {
    Casfm m(CasfmOptions{c, e, heads, 2, literal});
    m->to(torch::kDouble);
    return m;
}

void set_identity(torch::nn::Conv2d& conv) {
    torch::NoGradGuard g;
    conv->weight.zero_();
    for (int64_t i = 0; i < std::min(conv->weight.size(0), conv->weight.size(1)); ++i) conv->weight[i][i][0][0] = 1.0;
    if (conv->bias.defined()) conv->bias.zero_();
}

void set_identity(torch::nn::Linear& lin) {
    torch::NoGradGuard g;
    lin->weight.copy_(torch::eye(lin->weight.size(0), lin->weight.options()));
    if (lin->bias.defined()) lin->bias.zero_();
}

void set_scalar(torch::Tensor& t, double v) {
    torch::NoGradGuard g;
    t.fill_(v);
}

oracle::Linear linear_of(const torch::nn::Linear& l) {
    oracle::Linear o;
    o.in = static_cast<int>(l->weight.size(1));
    o.out = static_cast<int>(l->weight.size(0));
    o.w = oracle::values(l->weight);
    if (l->bias.defined()) o.b = oracle::values(l->bias);
    return o;
}

oracle::CasfmSide side_of(Casfm& m, Side s) {
    auto& p = m->side(s);
    oracle::CasfmSide o;
    o.avg_w = oracle::values(p.avg_conv->weight);
    o.avg_b = oracle::values(p.avg_conv->bias);
    o.max_w = oracle::values(p.max_conv->weight);
    o.max_b = oracle::values(p.max_conv->bias);
    o.token_w = oracle::values(p.token_conv->weight);
    o.token_b = oracle::values(p.token_conv->bias);
    o.lambda = m->lambda(s).item<double>();
    o.alpha = m->alpha(s).item<double>();
    o.beta = m->beta(s).item<double>();
    o.pos = oracle::values(p.pos_embed);
    o.pos_scale = oracle::values(p.pos_scale);
    return o;
}

void randomize_scalars(Casfm& m) {
    torch::NoGradGuard g;
    for (Side s : {Side::left, Side::right}) {
        auto& p = m->side(s);
        p.lambda_raw.uniform_(-1, 1);
        p.alpha_raw.uniform_(-1, 1);
        p.beta_raw.uniform_(-1, 1);
        p.pos_embed.normal_(0, 0.5);
        p.pos_scale.uniform_(0.5, 1.5);
    }
}

void expect_grid_near(const oracle::Grid& got, const oracle::Grid& expect, double tol) {
    ASSERT_EQ(got.v.size(), expect.v.size());
    for (std::size_t i = 0; i < got.v.size(); ++i) EXPECT_NEAR(got.v[i], expect.v[i], tol) << "at " << i;
}

}  // namespace

// ---------------------------------------------------------------------------
// dual pooled paths

TEST(DualPoolMix, HandEvaluatedTwoByTwo) {
    auto m = make_casfm(1, 1, 1);
    set_identity(m->side(Side::left).avg_conv);
    set_identity(m->side(Side::left).max_conv);
    auto x = torch::tensor({1.0, 2.0, 3.0, 4.0}, torch::kDouble).view({1, 1, 2, 2});

    set_scalar(m->side(Side::left).lambda_raw, -kInf);
    EXPECT_DOUBLE_EQ(m->dual_pool_mix(x, Side::left).item<double>(), 0.625);
    set_scalar(m->side(Side::left).lambda_raw, kInf);
    EXPECT_DOUBLE_EQ(m->dual_pool_mix(x, Side::left).item<double>(), 1.0);
    set_scalar(m->side(Side::left).lambda_raw, 0.0);
    EXPECT_DOUBLE_EQ(m->dual_pool_mix(x, Side::left).item<double>(), 0.8125);

    auto standard = make_casfm(1, 1, 1, /*literal=*/false);
    set_identity(standard->side(Side::left).avg_conv);
    set_identity(standard->side(Side::left).max_conv);
    EXPECT_DOUBLE_EQ(standard->dual_pool_mix(x, Side::left).item<double>(), 0.5 * 4.0 + 0.5 * 2.5);
}

TEST(DualPoolMix, LambdaEndpointsSelectOnePathExactly) {
    torch::manual_seed(1);
    auto m = make_casfm(3, 4, 2);
    auto x = torch::randn({2, 3, 6, 6}, torch::kDouble);
    auto& p = m->side(Side::right);
    const double s = 0.25;
    auto avg = torch::avg_pool2d(p.avg_conv(x), 2, 2) * s;
    auto max = torch::max_pool2d(p.max_conv(x), 2, 2) * s;
    set_scalar(p.lambda_raw, kInf);
    EXPECT_TRUE(torch::equal(m->dual_pool_mix(x, Side::right), max));
    set_scalar(p.lambda_raw, -kInf);
    EXPECT_TRUE(torch::equal(m->dual_pool_mix(x, Side::right), avg));
}

TEST(DualPoolMix, FloorsOddGridsAndRejectsTinyOnes) {
    auto m = make_casfm(2, 4, 1);
    EXPECT_EQ(m->dual_pool_mix(torch::randn({1, 2, 7, 7}, torch::kDouble), Side::left).sizes(),
              (std::vector<int64_t>{1, 2, 3, 3}));
    EXPECT_THROW(m->dual_pool_mix(torch::randn({1, 2, 1, 4}, torch::kDouble), Side::left), ShapeError);
    EXPECT_THROW(m->dual_pool_mix(torch::randn({1, 3, 4, 4}, torch::kDouble), Side::left), ShapeError);
}

TEST(Casfm, MixingScalarsStayInUnitInterval) {
    auto m = make_casfm(2, 4, 1);
    for (double raw : {-1e6, -3.0, 0.0, 2.0, 1e6}) {
        set_scalar(m->side(Side::left).lambda_raw, raw);
        set_scalar(m->side(Side::left).alpha_raw, raw);
        set_scalar(m->side(Side::left).beta_raw, raw);
        for (auto v : {m->lambda(Side::left), m->alpha(Side::left), m->beta(Side::left)}) {
            EXPECT_GE(v.item<double>(), 0.0);
            EXPECT_LE(v.item<double>(), 1.0);
        }
    }
    // default initialization: raw 0 -> 0.5
    auto fresh = make_casfm(2, 4, 1);
    EXPECT_DOUBLE_EQ(fresh->lambda(Side::right).item<double>(), 0.5);
    EXPECT_TRUE(torch::equal(fresh->side(Side::right).pos_scale, torch::ones({4}, torch::kDouble)));
}

// ---------------------------------------------------------------------------
// tokens

TEST(Tokenize, ZeroPositionGivesFlattenedConvOutput) {
    auto m = make_casfm(3, 4, 2);
    set_scalar(m->side(Side::left).pos_embed, 0.0);
    auto f = torch::randn({2, 3, 2, 3}, torch::kDouble);
    auto conv = m->side(Side::left).token_conv(f);
    EXPECT_TRUE(torch::equal(m->tokenize_with_pos(f, Side::left), conv.flatten(2).transpose(1, 2)));
}

TEST(Tokenize, PositionalTermIsTheSameVectorForEveryToken) {
    torch::manual_seed(4);
    auto m = make_casfm(3, 4, 2);
    randomize_scalars(m);
    auto f = torch::randn({1, 3, 3, 3}, torch::kDouble);
    auto& p = m->side(Side::right);
    auto delta = m->tokenize_with_pos(f, Side::right) - p.token_conv(f).flatten(2).transpose(1, 2);
    auto expected = (p.pos_embed.view({-1}) * p.pos_scale).view({1, 1, 4}).expand_as(delta);
    EXPECT_TRUE(torch::allclose(delta, expected, 0, 1e-14));
}

TEST(Tokenize, RowMajorTokenOrder) {
    auto m = make_casfm(2, 2, 1);
    set_identity(m->side(Side::left).token_conv);
    set_scalar(m->side(Side::left).pos_embed, 0.0);
    // channel 0 holds 10*y + x, channel 1 its negation
    auto f = torch::tensor({0.0, 1.0, 10.0, 11.0, -0.0, -1.0, -10.0, -11.0}, torch::kDouble).view({1, 2, 2, 2});
    auto t = m->tokenize_with_pos(f, Side::left);
    const double order[4] = {0.0, 1.0, 10.0, 11.0};  // (0,0) (0,1) (1,0) (1,1)
    for (int i = 0; i < 4; ++i) {
        EXPECT_DOUBLE_EQ(t[0][i][0].item<double>(), order[i]);
        EXPECT_DOUBLE_EQ(t[0][i][1].item<double>(), -order[i]);
    }
}

TEST(Tokens, FlattenRoundTripIsExact) {
    auto f = torch::randn({3, 5, 4, 7});
    EXPECT_TRUE(torch::equal(unflatten_tokens(flatten_tokens(f), 4, 7), f));
    EXPECT_THROW(unflatten_tokens(flatten_tokens(f), 5, 5), ShapeError);
}

// ---------------------------------------------------------------------------
// attention

TEST(CrossAttend, SingleTokenReducesToValueProjection) {
    MultiHeadCrossAttention attn(4, 2);
    attn->to(torch::kDouble);
    auto l = torch::randn({2, 1, 4}, torch::kDouble), r = torch::randn({2, 1, 4}, torch::kDouble);
    auto z = cross_attend(l, r, attn);
    EXPECT_TRUE(torch::allclose(z.z_right, attn->value(r), 0, 1e-14));
    EXPECT_TRUE(torch::allclose(z.z_left, attn->value(l), 0, 1e-14));
}

TEST(CrossAttend, RowsAreStochasticForEveryHead) {
    torch::manual_seed(8);
    MultiHeadCrossAttention attn(8, 4);
    auto z = cross_attend(torch::randn({3, 5, 8}) * 4, torch::randn({3, 7, 8}) * 4, attn);
    EXPECT_EQ(z.weights_right.sizes(), (std::vector<int64_t>{3, 4, 5, 7}));
    EXPECT_EQ(z.weights_left.sizes(), (std::vector<int64_t>{3, 4, 7, 5}));
    for (const auto& w : {z.weights_left, z.weights_right}) {
        EXPECT_LT((w.sum(-1) - 1).abs().max().item<float>(), 1e-6f);
        EXPECT_GE(w.min().item<float>(), 0.0f);
    }
}

TEST(CrossAttend, IdentityProjectionsMatchScalarOracle) {
    MultiHeadCrossAttention attn(2, 1);
    attn->to(torch::kDouble);
    set_identity(attn->query);
    set_identity(attn->key);
    set_identity(attn->value);
    auto l = torch::tensor({0.3, -1.2, 0.8, 0.5}, torch::kDouble).view({1, 2, 2});
    auto r = torch::tensor({1.1, 0.4, -0.7, 2.0}, torch::kDouble).view({1, 2, 2});
    auto z = cross_attend(l, r, attn);
    const oracle::Tokens tl{{0.3, -1.2}, {0.8, 0.5}}, tr{{1.1, 0.4}, {-0.7, 2.0}};
    const auto lin = linear_of(attn->query);
    const auto zr = oracle::attend(tl, tr, lin, lin, lin, 1);
    const auto zl = oracle::attend(tr, tl, lin, lin, lin, 1);
    for (int i = 0; i < 2; ++i) {
        for (int c = 0; c < 2; ++c) {
            EXPECT_NEAR(z.z_right[0][i][c].item<double>(), zr[i][c], 1e-10);
            EXPECT_NEAR(z.z_left[0][i][c].item<double>(), zl[i][c], 1e-10);
        }
    }
}

TEST(CrossAttend, MultiHeadMatchesScalarOracle) {
    torch::manual_seed(21);
    MultiHeadCrossAttention attn(8, 4);
    attn->to(torch::kDouble);
    auto l = torch::randn({2, 5, 8}, torch::kDouble), r = torch::randn({2, 3, 8}, torch::kDouble);
    auto z = cross_attend(l, r, attn);
    const auto q = linear_of(attn->query), k = linear_of(attn->key), v = linear_of(attn->value);
    for (int b = 0; b < 2; ++b) {
        oracle::Tokens tl, tr;
        for (int i = 0; i < 5; ++i) tl.push_back(oracle::values(l[b][i]));
        for (int i = 0; i < 3; ++i) tr.push_back(oracle::values(r[b][i]));
        const auto zr = oracle::attend(tl, tr, q, k, v, 4);
        const auto zl = oracle::attend(tr, tl, q, k, v, 4);
        for (int i = 0; i < 5; ++i) {
            for (int c = 0; c < 8; ++c) EXPECT_NEAR(z.z_right[b][i][c].item<double>(), zr[i][c], 1e-10);
        }
        for (int i = 0; i < 3; ++i) {
            for (int c = 0; c < 8; ++c) EXPECT_NEAR(z.z_left[b][i][c].item<double>(), zl[i][c], 1e-10);
        }
    }
}

TEST(CrossAttend, RejectsEmbeddingMismatch) {
    MultiHeadCrossAttention attn(4, 2);
    EXPECT_THROW(cross_attend(torch::randn({1, 3, 4}), torch::randn({1, 3, 6}), attn), ShapeError);
    EXPECT_THROW(cross_attend(torch::randn({1, 3, 4}), torch::randn({2, 3, 4}), attn), ShapeError);
    EXPECT_THROW(MultiHeadCrossAttention(6, 4), ShapeError);
}

// ---------------------------------------------------------------------------
// residual

TEST(AdaptiveResidual, Endpoints) {
    torch::manual_seed(6);
    auto m = make_casfm(2, 4, 2);
    set_identity(m->out_proj);
    auto z = torch::randn({2, 3, 4}, torch::kDouble), t = torch::randn({2, 3, 4}, torch::kDouble);
    auto& p = m->side(Side::left);

    set_scalar(p.alpha_raw, -kInf);
    set_scalar(p.beta_raw, kInf);
    EXPECT_TRUE(torch::equal(m->adaptive_residual(z, t, Side::left), t));

    set_scalar(p.alpha_raw, kInf);
    set_scalar(p.beta_raw, -kInf);
    EXPECT_TRUE(torch::equal(m->adaptive_residual(z, t, Side::left), z));
}

TEST(AdaptiveResidual, Midpoint) {
    auto m = make_casfm(1, 1, 1);
    set_identity(m->out_proj);
    auto z = torch::full({1, 1, 1}, 2.0, torch::kDouble), t = torch::full({1, 1, 1}, 4.0, torch::kDouble);
    EXPECT_DOUBLE_EQ(m->adaptive_residual(z, t, Side::right).item<double>(), 3.0);
}

// ---------------------------------------------------------------------------
// full module

TEST(Casfm, ShapeContractOnBackboneSizedMaps) {
    Casfm m(CasfmOptions{1024, 256, 4, 2, true});
    torch::NoGradGuard g;
    auto out = m->forward(torch::randn({2, 1024, 7, 7}), torch::randn({2, 1024, 7, 7}));
    for (const auto& t : {out.fused, out.left, out.right}) EXPECT_EQ(t.sizes(), (std::vector<int64_t>{2, 256, 3, 3}));
}

TEST(Casfm, SymmetricInputsAndParametersGiveIdenticalMaps) {
    torch::manual_seed(9);
    auto m = make_casfm(4, 8, 2);
    randomize_scalars(m);
    {
        torch::NoGradGuard g;
        auto& l = m->side(Side::left);
        auto& r = m->side(Side::right);
        r.avg_conv->weight.copy_(l.avg_conv->weight);
        r.avg_conv->bias.copy_(l.avg_conv->bias);
        r.max_conv->weight.copy_(l.max_conv->weight);
        r.max_conv->bias.copy_(l.max_conv->bias);
        r.token_conv->weight.copy_(l.token_conv->weight);
        r.token_conv->bias.copy_(l.token_conv->bias);
        for (auto [dst, src] : {std::pair{&r.lambda_raw, &l.lambda_raw}, {&r.alpha_raw, &l.alpha_raw},
                                {&r.beta_raw, &l.beta_raw}, {&r.pos_embed, &l.pos_embed},
                                {&r.pos_scale, &l.pos_scale}}) {
            dst->copy_(*src);
        }
    }
    auto x = torch::randn({2, 4, 6, 6}, torch::kDouble);
    auto out = m->forward(x, x.clone());
    EXPECT_TRUE(torch::equal(out.left, out.right));
}

TEST(Casfm, MatchesScalarOracleEndToEnd) {
    torch::manual_seed(13);
    for (int heads : {1, 2}) {
        auto m = make_casfm(4, 4, heads);
        randomize_scalars(m);
        auto l = torch::randn({1, 4, 4, 4}, torch::kDouble), r = torch::randn({1, 4, 4, 4}, torch::kDouble);
        auto out = m->forward(l, r);

        oracle::CasfmParams p;
        p.in_channels = 4;
        p.embed = 4;
        p.heads = heads;
        p.left = side_of(m, Side::left);
        p.right = side_of(m, Side::right);
        p.q = linear_of(m->attention->query);
        p.key = linear_of(m->attention->key);
        p.v = linear_of(m->attention->value);
        p.out_proj = linear_of(m->out_proj);
        p.fuse_w = oracle::values(m->fuse->weight);
        p.fuse_b = oracle::values(m->fuse->bias);
        const auto expect = oracle::casfm(oracle::from_tensor(l), oracle::from_tensor(r), p);

        expect_grid_near(oracle::from_tensor(out.fused), expect.fused, 1e-10);
        expect_grid_near(oracle::from_tensor(out.left), expect.left, 1e-10);
        expect_grid_near(oracle::from_tensor(out.right), expect.right, 1e-10);
    }
}

TEST(Casfm, BatchPermutationCommutes) {
    torch::manual_seed(17);
    auto m = make_casfm(3, 4, 2);
    auto l = torch::randn({4, 3, 4, 4}, torch::kDouble), r = torch::randn({4, 3, 4, 4}, torch::kDouble);
    auto perm = torch::tensor({2, 0, 3, 1}, torch::kLong);
    auto a = m->forward(l, r);
    auto b = m->forward(l.index_select(0, perm), r.index_select(0, perm));
    EXPECT_TRUE(torch::allclose(b.fused, a.fused.index_select(0, perm), 0, 1e-12));
    EXPECT_TRUE(torch::allclose(b.left, a.left.index_select(0, perm), 0, 1e-12));
    EXPECT_TRUE(torch::allclose(b.right, a.right.index_select(0, perm), 0, 1e-12));
}

TEST(Casfm, GradientsMatchFiniteDifferences) {
    torch::manual_seed(23);
    auto m = make_casfm(4, 4, 2);
    randomize_scalars(m);
    auto l = torch::randn({2, 4, 4, 4}, torch::kDouble).requires_grad_(true);
    auto r = torch::randn({2, 4, 4, 4}, torch::kDouble).requires_grad_(true);
    auto pf = torch::randn({2, 4, 2, 2}, torch::kDouble), pl = torch::randn({2, 4, 2, 2}, torch::kDouble),
         pr = torch::randn({2, 4, 2, 2}, torch::kDouble);
    auto tensors = oracle::named_parameters(*m);
    tensors.emplace_back("input_left", l);
    tensors.emplace_back("input_right", r);
    const auto res = oracle::gradcheck(
        [&] {
            auto out = m->forward(l, r);
            return (out.fused * pf).sum() + (out.left * pl).sum() + (out.right * pr).sum();
        },
        tensors);
    EXPECT_LT(res.max_rel_error, 1e-4) << res.worst;
    // every parameter family of the module is covered
    std::set<std::string> names;
    for (const auto& [n, t] : tensors) names.insert(n);
    for (const char* n : {"left_lambda", "right_alpha", "left_beta", "right_pos_embed", "left_pos_scale",
                          "attention.query.weight", "out_proj.weight", "fuse.weight"}) {
        EXPECT_TRUE(names.count(n)) << n;
    }
}
