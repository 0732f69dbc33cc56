#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace oracle {

Grid from_tensor(const torch::Tensor& t, int64_t b) {
    auto s = t[b].to(torch::kDouble).contiguous();
    Grid g(static_cast<int>(s.size(0)), static_cast<int>(s.size(1)), static_cast<int>(s.size(2)));
    std::copy(s.data_ptr<double>(), s.data_ptr<double>() + s.numel(), g.v.begin());
    return g;
}

std::vector<double> values(const torch::Tensor& t) {
    auto s = t.detach().to(torch::kDouble).contiguous();
    return {s.data_ptr<double>(), s.data_ptr<double>() + s.numel()};
}

Grid adaptive_avg_pool(const Grid& x, int out_h, int out_w) {
    Grid out(x.c, out_h, out_w);
    for (int ch = 0; ch < x.c; ++ch) {
        for (int i = 0; i < out_h; ++i) {
            // bin i covers [floor(i*H/out), ceil((i+1)*H/out))
            const int y0 = (i * x.h) / out_h, y1 = ((i + 1) * x.h + out_h - 1) / out_h;
            for (int j = 0; j < out_w; ++j) {
                const int x0 = (j * x.w) / out_w, x1 = ((j + 1) * x.w + out_w - 1) / out_w;
                double sum = 0.0;
                for (int y = y0; y < y1; ++y) {
                    for (int xx = x0; xx < x1; ++xx) sum += x.at(ch, y, xx);
                }
                out.at(ch, i, j) = sum / ((y1 - y0) * (x1 - x0));
            }
        }
    }
    return out;
}

Grid bilinear_resize(const Grid& x, int out_h, int out_w) {
    auto source = [](int dst, int in, int out, int& lo, int& hi, double& frac) {
        double s = (dst + 0.5) * static_cast<double>(in) / out - 0.5;
        if (s < 0) s = 0;
        lo = std::min(static_cast<int>(std::floor(s)), in - 1);
        hi = std::min(lo + 1, in - 1);
        frac = s - lo;
    };
    Grid out(x.c, out_h, out_w);
    for (int i = 0; i < out_h; ++i) {
        int y0, y1;
        double fy;
        source(i, x.h, out_h, y0, y1, fy);
        for (int j = 0; j < out_w; ++j) {
            int x0, x1;
            double fx;
            source(j, x.w, out_w, x0, x1, fx);
            for (int ch = 0; ch < x.c; ++ch) {
                const double top = (1 - fx) * x.at(ch, y0, x0) + fx * x.at(ch, y0, x1);
                const double bottom = (1 - fx) * x.at(ch, y1, x0) + fx * x.at(ch, y1, x1);
                out.at(ch, i, j) = (1 - fy) * top + fy * bottom;
            }
        }
    }
    return out;
}

Grid spp(const Grid& x, int scale) { return bilinear_resize(adaptive_avg_pool(x, scale, scale), x.h, x.w); }

Grid global_pool(const Grid& x, bool max) {
    Grid out(x.c, x.h, x.w);
    for (int ch = 0; ch < x.c; ++ch) {
        double acc = max ? -std::numeric_limits<double>::infinity() : 0.0;
        for (int y = 0; y < x.h; ++y) {
            for (int xx = 0; xx < x.w; ++xx) acc = max ? std::max(acc, x.at(ch, y, xx)) : acc + x.at(ch, y, xx);
        }
        if (!max) acc /= x.h * x.w;
        for (int y = 0; y < x.h; ++y) {
            for (int xx = 0; xx < x.w; ++xx) out.at(ch, y, xx) = acc;
        }
    }
    return out;
}

Grid concat(const std::vector<Grid>& parts) {
    int c = 0;
    for (const auto& p : parts) c += p.c;
    Grid out(c, parts.front().h, parts.front().w);
    auto it = out.v.begin();
    for (const auto& p : parts) it = std::copy(p.v.begin(), p.v.end(), it);
    return out;
}

Grid conv2d(const Grid& x, const std::vector<double>& weight, const std::vector<double>& bias, int out_channels,
            int kernel, int padding) {
    const int oh = x.h + 2 * padding - kernel + 1, ow = x.w + 2 * padding - kernel + 1;
    Grid out(out_channels, oh, ow);
    for (int o = 0; o < out_channels; ++o) {
        for (int i = 0; i < oh; ++i) {
            for (int j = 0; j < ow; ++j) {
                double acc = bias.empty() ? 0.0 : bias[o];
                for (int ch = 0; ch < x.c; ++ch) {
                    for (int u = 0; u < kernel; ++u) {
                        const int y = i + u - padding;
                        if (y < 0 || y >= x.h) continue;
                        for (int v = 0; v < kernel; ++v) {
                            const int xx = j + v - padding;
                            if (xx < 0 || xx >= x.w) continue;
                            acc += weight[((std::size_t(o) * x.c + ch) * kernel + u) * kernel + v] * x.at(ch, y, xx);
                        }
                    }
                }
                out.at(o, i, j) = acc;
            }
        }
    }
    return out;
}

Grid pool(const Grid& x, int k, bool max) {
    Grid out(x.c, x.h / k, x.w / k);
    for (int ch = 0; ch < x.c; ++ch) {
        for (int i = 0; i < out.h; ++i) {
            for (int j = 0; j < out.w; ++j) {
                double acc = max ? -std::numeric_limits<double>::infinity() : 0.0;
                for (int u = 0; u < k; ++u) {
                    for (int v = 0; v < k; ++v) {
                        const double val = x.at(ch, i * k + u, j * k + v);
                        acc = max ? std::max(acc, val) : acc + val;
                    }
                }
                out.at(ch, i, j) = max ? acc : acc / (k * k);
            }
        }
    }
    return out;
}

Grid osim(const Grid& x, const OsimParams& p) {
    const int half = x.c / 2;
    const Grid fused = concat({x, global_pool(x, true), global_pool(x, false), spp(x, 2), spp(x, 4)});
    Grid compressed = conv2d(fused, p.compression_w, {}, half, 1, 0);
    for (int ch = 0; ch < half; ++ch) {
        const double scale = p.bn_gamma[ch] / std::sqrt(p.bn_var[ch] + p.bn_eps);
        for (int y = 0; y < x.h; ++y) {
            for (int xx = 0; xx < x.w; ++xx) {
                double& v = compressed.at(ch, y, xx);
                v = std::max(0.0, (v - p.bn_mean[ch]) * scale + p.bn_beta[ch]);
            }
        }
    }
    const Grid logits = conv2d(compressed, p.attention_w, {p.attention_b}, 1, 7, 3);
    Grid out = compressed;
    for (int ch = 0; ch < half; ++ch) {
        for (int y = 0; y < x.h; ++y) {
            for (int xx = 0; xx < x.w; ++xx) out.at(ch, y, xx) *= 1.0 / (1.0 + std::exp(-logits.at(0, y, xx)));
        }
    }
    return out;
}

std::vector<double> Linear::apply(const std::vector<double>& x) const {
    std::vector<double> y(static_cast<std::size_t>(out));
    for (int o = 0; o < out; ++o) {
        double acc = b.empty() ? 0.0 : b[o];
        for (int i = 0; i < in; ++i) acc += w[std::size_t(o) * in + i] * x[i];
        y[o] = acc;
    }
    return y;
}

Tokens attend(const Tokens& queries, const Tokens& context, const Linear& q, const Linear& k, const Linear& v, int heads) {
    const int e = q.out, d = e / heads;
    Tokens qs, ks, vs;
    for (const auto& t : queries) qs.push_back(q.apply(t));
    for (const auto& t : context) {
        ks.push_back(k.apply(t));
        vs.push_back(v.apply(t));
    }
    Tokens out(queries.size(), std::vector<double>(static_cast<std::size_t>(e), 0.0));
    for (int h = 0; h < heads; ++h) {
        for (std::size_t i = 0; i < qs.size(); ++i) {
            std::vector<double> logits(ks.size());
            double peak = -std::numeric_limits<double>::infinity();
            for (std::size_t j = 0; j < ks.size(); ++j) {
                double dot = 0.0;
                for (int c = h * d; c < (h + 1) * d; ++c) dot += qs[i][c] * ks[j][c];
                logits[j] = dot / std::sqrt(static_cast<double>(d));
                peak = std::max(peak, logits[j]);
            }
            double norm = 0.0;
            for (auto& l : logits) norm += (l = std::exp(l - peak));
            for (std::size_t j = 0; j < ks.size(); ++j) {
                for (int c = h * d; c < (h + 1) * d; ++c) out[i][c] += logits[j] / norm * vs[j][c];
            }
        }
    }
    return out;
}

Tokens flatten(const Grid& g) {
    Tokens t(std::size_t(g.h) * g.w, std::vector<double>(static_cast<std::size_t>(g.c)));
    for (int y = 0; y < g.h; ++y) {
        for (int x = 0; x < g.w; ++x) {
            for (int ch = 0; ch < g.c; ++ch) t[std::size_t(y) * g.w + x][ch] = g.at(ch, y, x);
        }
    }
    return t;
}

Grid unflatten(const Tokens& t, int h, int w) {
    Grid g(static_cast<int>(t.front().size()), h, w);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            for (int ch = 0; ch < g.c; ++ch) g.at(ch, y, x) = t[std::size_t(y) * w + x][ch];
        }
    }
    return g;
}

namespace {

Tokens side_tokens(const Grid& f, const CasfmSide& s, const CasfmParams& p) {
    const double scale = p.literal_scale ? 1.0 / (p.k * p.k) : 1.0;
    const Grid avg = pool(conv2d(f, s.avg_w, s.avg_b, p.in_channels, 1, 0), p.k, false);
    const Grid mx = pool(conv2d(f, s.max_w, s.max_b, p.in_channels, 1, 0), p.k, true);
    Grid mixed(avg.c, avg.h, avg.w);
    for (std::size_t i = 0; i < mixed.v.size(); ++i) {
        mixed.v[i] = s.lambda * scale * mx.v[i] + (1 - s.lambda) * scale * avg.v[i];
    }
    Grid embedded = conv2d(mixed, s.token_w, s.token_b, p.embed, 1, 0);
    // a 1x1 positional map interpolates to a constant
    for (int ch = 0; ch < p.embed; ++ch) {
        for (int y = 0; y < embedded.h; ++y) {
            for (int x = 0; x < embedded.w; ++x) embedded.at(ch, y, x) += s.pos[ch] * s.pos_scale[ch];
        }
    }
    return flatten(embedded);
}

Tokens residual(const Tokens& z, const Tokens& t, const CasfmSide& s, const Linear& out_proj) {
    Tokens r(t.size());
    for (std::size_t i = 0; i < t.size(); ++i) {
        const auto projected = out_proj.apply(z[i]);
        r[i].resize(t[i].size());
        for (std::size_t c = 0; c < t[i].size(); ++c) r[i][c] = s.alpha * projected[c] + s.beta * t[i][c];
    }
    return r;
}

}  // namespace

CasfmResult casfm(const Grid& left, const Grid& right, const CasfmParams& p) {
    const int h = left.h / p.k, w = left.w / p.k;
    const Tokens tl = side_tokens(left, p.left, p);
    const Tokens tr = side_tokens(right, p.right, p);
    const Tokens z_right = attend(tl, tr, p.q, p.key, p.v, p.heads);
    const Tokens z_left = attend(tr, tl, p.q, p.key, p.v, p.heads);
    CasfmResult r;
    r.left = unflatten(residual(z_left, tl, p.left, p.out_proj), h, w);
    r.right = unflatten(residual(z_right, tr, p.right, p.out_proj), h, w);
    r.fused = conv2d(concat({r.left, r.right}), p.fuse_w, p.fuse_b, p.embed, 1, 0);
    return r;
}

Grid cafm(const Grid& a, const Grid& b, const Linear& q, const Linear& k, const Linear& v, int heads) {
    const Tokens ta = flatten(a), tb = flatten(b);
    const Tokens za = attend(tb, ta, q, k, v, heads);
    const Tokens zb = attend(ta, tb, q, k, v, heads);
    Tokens mean(ta.size());
    for (std::size_t i = 0; i < ta.size(); ++i) {
        mean[i].resize(ta[i].size());
        for (std::size_t c = 0; c < ta[i].size(); ++c) mean[i][c] = 0.5 * (za[i][c] + zb[i][c]);
    }
    return unflatten(mean, a.h, a.w);
}

double kappa_by_counting(const std::vector<int>& pred, const std::vector<int>& truth, int k) {
    const double n = static_cast<double>(pred.size());
    double agree = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) agree += pred[i] == truth[i];
    double chance = 0.0;
    for (int c = 0; c < k; ++c) {
        double np = 0.0, nt = 0.0;
        for (std::size_t i = 0; i < pred.size(); ++i) {
            np += pred[i] == c;
            nt += truth[i] == c;
        }
        chance += (np / n) * (nt / n);
    }
    const double po = agree / n;
    if (chance == 1.0) return po == 1.0 ? 1.0 : 0.0;
    return (po - chance) / (1.0 - chance);
}

std::optional<double> auc_by_pairs(const std::vector<double>& scores, const std::vector<int>& positive) {
    double won = 0.0, pairs = 0.0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (!positive[i]) continue;
        for (std::size_t j = 0; j < scores.size(); ++j) {
            if (positive[j]) continue;
            pairs += 1.0;
            won += scores[i] > scores[j] ? 1.0 : scores[i] == scores[j] ? 0.5 : 0.0;
        }
    }
    if (pairs == 0.0) return std::nullopt;
    return won / pairs;
}

GradcheckResult gradcheck(const std::function<torch::Tensor()>& loss,
                          const std::vector<std::pair<std::string, torch::Tensor>>& tensors, double eps) {
    for (const auto& [name, t] : tensors) {
        if (t.grad().defined()) t.mutable_grad().zero_();
    }
    loss().backward();

    GradcheckResult result;
    for (const auto& [name, t] : tensors) {
        auto analytic = t.grad().defined() ? t.grad().detach().clone() : torch::zeros_like(t);
        auto numeric = torch::zeros_like(t);
        auto flat = t.detach().view({-1});
        auto num_flat = numeric.view({-1});
        {
            torch::NoGradGuard no_grad;
            for (int64_t i = 0; i < flat.numel(); ++i) {
                const double orig = flat[i].item<double>();
                flat[i] = orig + eps;
                const double up = loss().item<double>();
                flat[i] = orig - eps;
                const double down = loss().item<double>();
                flat[i] = orig;
                num_flat[i] = (up - down) / (2 * eps);
            }
        }
        const double diff = (analytic - numeric).abs().max().item<double>();
        const double scale = std::max(analytic.abs().max().item<double>(), numeric.abs().max().item<double>());
        // Unit floor: a parameter whose exact gradient vanishes (e.g. a key
        // bias under softmax) has pure round-off on both sides.
        const double rel = diff / std::max(scale, 1.0);
        result.checked += t.numel();
        if (rel >= result.max_rel_error) {
            result.max_rel_error = rel;
            result.worst = name;
        }
    }
    return result;
}

std::vector<std::pair<std::string, torch::Tensor>> named_parameters(const torch::nn::Module& m) {
    std::vector<std::pair<std::string, torch::Tensor>> out;
    for (const auto& item : m.named_parameters(true)) {
        if (item.value().requires_grad()) out.emplace_back(item.key(), item.value());
    }
    return out;
}

}  // namespace oracle
