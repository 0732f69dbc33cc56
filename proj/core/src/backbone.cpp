#include "dmsnet/backbone.hpp"

#include <array>
#include <cmath>
#include <filesystem>

#include "dmsnet/errors.hpp"
#include "dmsnet/tensor_util.hpp"

namespace dmsnet {

namespace nn = torch::nn;

namespace {

// ---------------------------------------------------------------------------
// ResNet / ResNeXt

nn::Conv2d conv(int64_t in, int64_t out, int64_t kernel, int64_t stride = 1, int64_t groups = 1) {
    return nn::Conv2d(nn::Conv2dOptions(in, out, kernel).stride(stride).padding(kernel / 2).groups(groups).bias(false));
}

class BottleneckImpl : public nn::Module {
public:
    static constexpr int64_t kExpansion = 4;

    BottleneckImpl(int64_t in_planes, int64_t planes, int64_t stride, int64_t groups, int64_t base_width) {
        const int64_t width = planes * base_width / 64 * groups;
        conv1_ = register_module("conv1", conv(in_planes, width, 1));
        bn1_ = register_module("bn1", nn::BatchNorm2d(width));
        conv2_ = register_module("conv2", conv(width, width, 3, stride, groups));
        bn2_ = register_module("bn2", nn::BatchNorm2d(width));
        conv3_ = register_module("conv3", conv(width, planes * kExpansion, 1));
        bn3_ = register_module("bn3", nn::BatchNorm2d(planes * kExpansion));
        if (stride != 1 || in_planes != planes * kExpansion) {
            downsample_ = register_module(
                "downsample", nn::Sequential(conv(in_planes, planes * kExpansion, 1, stride),
                                             nn::BatchNorm2d(planes * kExpansion)));
        }
    }

    torch::Tensor forward(const torch::Tensor& x) {
        auto out = torch::relu(bn1_(conv1_(x)));
        out = torch::relu(bn2_(conv2_(out)));
        out = bn3_(conv3_(out));
        auto identity = downsample_ ? downsample_->forward(x) : x;
        return torch::relu(out + identity);
    }

private:
    nn::Conv2d conv1_{nullptr}, conv2_{nullptr}, conv3_{nullptr};
    nn::BatchNorm2d bn1_{nullptr}, bn2_{nullptr}, bn3_{nullptr};
    nn::Sequential downsample_{nullptr};
};
TORCH_MODULE(Bottleneck);

class ResNetBodyImpl : public FeatureExtractorImpl {
public:
    ResNetBodyImpl(std::array<int64_t, 4> depths, int64_t groups, int64_t width_per_group)
        : groups_(groups), base_width_(width_per_group) {
        stem_conv_ = register_module("conv1", nn::Conv2d(nn::Conv2dOptions(3, 64, 7).stride(2).padding(3).bias(false)));
        stem_bn_ = register_module("bn1", nn::BatchNorm2d(64));
        layer1_ = register_module("layer1", make_layer(64, depths[0], 1));
        layer2_ = register_module("layer2", make_layer(128, depths[1], 2));
        layer3_ = register_module("layer3", make_layer(256, depths[2], 2));
        layer4_ = register_module("layer4", make_layer(512, depths[3], 2));

        for (auto& m : modules(/*include_self=*/false)) {
            if (auto* c = m->as<nn::Conv2d>()) {
                nn::init::kaiming_normal_(c->weight, 0.0, torch::kFanOut, torch::kReLU);
            } else if (auto* b = m->as<nn::BatchNorm2d>()) {
                nn::init::ones_(b->weight);
                nn::init::zeros_(b->bias);
            }
        }
    }

    torch::Tensor forward(const torch::Tensor& images) override {
        auto x = torch::relu(stem_bn_(stem_conv_(images)));
        x = torch::max_pool2d(x, 3, 2, 1);
        x = layer1_->forward(x);
        x = layer2_->forward(x);
        x = layer3_->forward(x);
        return layer4_->forward(x);
    }

private:
    nn::Sequential make_layer(int64_t planes, int64_t blocks, int64_t stride) {
        nn::Sequential layer;
        layer->push_back(Bottleneck(in_planes_, planes, stride, groups_, base_width_));
        in_planes_ = planes * BottleneckImpl::kExpansion;
        for (int64_t i = 1; i < blocks; ++i) {
            layer->push_back(Bottleneck(in_planes_, planes, 1, groups_, base_width_));
        }
        return layer;
    }

    int64_t in_planes_ = 64;
    int64_t groups_;
    int64_t base_width_;
    nn::Conv2d stem_conv_{nullptr};
    nn::BatchNorm2d stem_bn_{nullptr};
    nn::Sequential layer1_{nullptr}, layer2_{nullptr}, layer3_{nullptr}, layer4_{nullptr};
};

// ---------------------------------------------------------------------------
// ViT-B/16

constexpr int64_t kVitPatch = 16;
constexpr int64_t kVitDim = 768;
constexpr int64_t kVitHeads = 12;
constexpr int64_t kVitDepth = 12;
constexpr int64_t kVitMlp = 3072;

class VitBlockImpl : public nn::Module {
public:
    VitBlockImpl() {
        norm1_ = register_module("norm1", nn::LayerNorm(nn::LayerNormOptions({kVitDim}).eps(1e-6)));
        qkv_ = register_module("qkv", nn::Linear(kVitDim, 3 * kVitDim));
        proj_ = register_module("proj", nn::Linear(kVitDim, kVitDim));
        norm2_ = register_module("norm2", nn::LayerNorm(nn::LayerNormOptions({kVitDim}).eps(1e-6)));
        fc1_ = register_module("fc1", nn::Linear(kVitDim, kVitMlp));
        fc2_ = register_module("fc2", nn::Linear(kVitMlp, kVitDim));
    }

    torch::Tensor forward(const torch::Tensor& x) {
        const auto b = x.size(0), n = x.size(1);
        constexpr int64_t head_dim = kVitDim / kVitHeads;
        auto qkv = qkv_(norm1_(x)).reshape({b, n, 3, kVitHeads, head_dim}).permute({2, 0, 3, 1, 4});
        auto q = qkv[0], k = qkv[1], v = qkv[2];
        auto attn = torch::softmax(torch::matmul(q, k.transpose(-2, -1)) / std::sqrt(double(head_dim)), -1);
        auto mixed = torch::matmul(attn, v).transpose(1, 2).reshape({b, n, kVitDim});
        auto h = x + proj_(mixed);
        return h + fc2_(torch::gelu(fc1_(norm2_(h))));
    }

private:
    nn::LayerNorm norm1_{nullptr}, norm2_{nullptr};
    nn::Linear qkv_{nullptr}, proj_{nullptr}, fc1_{nullptr}, fc2_{nullptr};
};
TORCH_MODULE(VitBlock);

class VitBodyImpl : public FeatureExtractorImpl {
public:
    explicit VitBodyImpl(int64_t input_resolution) : grid_(input_resolution / kVitPatch) {
        patch_embed_ = register_module(
            "patch_embed", nn::Conv2d(nn::Conv2dOptions(3, kVitDim, kVitPatch).stride(kVitPatch)));
        cls_token_ = register_parameter("cls_token", torch::zeros({1, 1, kVitDim}));
        pos_embed_ = register_parameter("pos_embed", torch::zeros({1, grid_ * grid_ + 1, kVitDim}));
        {
            torch::NoGradGuard no_grad;
            pos_embed_.normal_(0.0, 0.02).clamp_(-0.04, 0.04);
            cls_token_.normal_(0.0, 0.02).clamp_(-0.04, 0.04);
        }
        blocks_ = register_module("blocks", nn::ModuleList());
        for (int64_t i = 0; i < kVitDepth; ++i) blocks_->push_back(VitBlock());
        norm_ = register_module("norm", nn::LayerNorm(nn::LayerNormOptions({kVitDim}).eps(1e-6)));
    }

    torch::Tensor forward(const torch::Tensor& images) override {
        const auto b = images.size(0);
        auto x = patch_embed_(images).flatten(2).transpose(1, 2);  // (B, N, D)
        x = torch::cat({cls_token_.expand({b, 1, kVitDim}), x}, 1) + pos_embed_;
        for (auto& block : *blocks_) x = block->as<VitBlock>()->forward(x);
        x = norm_(x);
        // class token dropped; patch tokens back onto their grid
        return x.slice(1, 1).transpose(1, 2).reshape({b, kVitDim, grid_, grid_});
    }

private:
    int64_t grid_;
    nn::Conv2d patch_embed_{nullptr};
    torch::Tensor cls_token_, pos_embed_;
    nn::ModuleList blocks_{nullptr};
    nn::LayerNorm norm_{nullptr};
};

int64_t conv_out(int64_t n, int64_t kernel, int64_t stride, int64_t pad) {
    return (n + 2 * pad - kernel) / stride + 1;
}

}  // namespace

const std::vector<BackboneInfo>& backbone_registry() {
    static const std::vector<BackboneInfo> registry{
        {"vit", "ViT", kVitDim},
        {"resnext", "ResNeXt", 2048},  // 50-layer, 32x4d
        {"resnet50", "ResNet-50", 2048},
        {"resnet101", "ResNet-101", 2048},
        {"resnet152", "ResNet-152", 2048},
    };
    return registry;
}

const BackboneInfo& backbone_info(std::string_view name) {
    for (const auto& info : backbone_registry()) {
        if (info.name == name) return info;
    }
    throw RegistryError("unknown backbone '" + std::string(name) +
                        "' (supported: resnet50, resnet101, resnet152, resnext, vit)");
}

std::pair<int64_t, int64_t> backbone_spatial_dims(std::string_view name, int64_t input_resolution) {
    const auto& info = backbone_info(name);
    if (info.name == "vit") {
        if (input_resolution % kVitPatch != 0) {
            throw ShapeError("vit: input resolution " + std::to_string(input_resolution) +
                             " is not a multiple of the 16-pixel patch size");
        }
        const auto g = input_resolution / kVitPatch;
        return {g, g};
    }
    auto n = conv_out(input_resolution, 7, 2, 3);
    n = conv_out(n, 3, 2, 1);
    for (int i = 0; i < 3; ++i) n = conv_out(n, 3, 2, 1);
    if (n < 1) throw ShapeError(std::string(name) + ": input resolution " + std::to_string(input_resolution) + " too small");
    return {n, n};
}

BackboneImpl::BackboneImpl(std::string_view name, int64_t input_resolution)
    : name_(name), out_channels_(backbone_info(name).out_channels), input_resolution_(input_resolution) {
    (void)backbone_spatial_dims(name, input_resolution);
    if (name_ == "resnet50") {
        body_ = std::make_shared<ResNetBodyImpl>(std::array<int64_t, 4>{3, 4, 6, 3}, 1, 64);
    } else if (name_ == "resnet101") {
        body_ = std::make_shared<ResNetBodyImpl>(std::array<int64_t, 4>{3, 4, 23, 3}, 1, 64);
    } else if (name_ == "resnet152") {
        body_ = std::make_shared<ResNetBodyImpl>(std::array<int64_t, 4>{3, 8, 36, 3}, 1, 64);
    } else if (name_ == "resnext") {
        body_ = std::make_shared<ResNetBodyImpl>(std::array<int64_t, 4>{3, 4, 6, 3}, 32, 4);
    } else {
        body_ = std::make_shared<VitBodyImpl>(input_resolution);
    }
    register_module("body", body_);
}

std::pair<int64_t, int64_t> BackboneImpl::spatial_dims() const {
    return backbone_spatial_dims(name_, input_resolution_);
}

torch::Tensor BackboneImpl::forward(const torch::Tensor& images) {
    require_rank(images, 4, name_);
    if (images.size(1) != 3) throw ShapeError(name_ + ": expected 3-channel images, got " + shape_string(images));
    if (name_ == "vit" && (images.size(2) != input_resolution_ || images.size(3) != input_resolution_)) {
        throw ShapeError("vit: built for " + std::to_string(input_resolution_) + "px inputs, got " + shape_string(images));
    }
    return body_->forward(images);
}

Backbone build_backbone(std::string_view name, bool pretrained, int64_t input_resolution,
                        const std::string& weights_path) {
    Backbone backbone(name, input_resolution);
    if (!pretrained) return backbone;

    if (weights_path.empty()) throw LoadError("pretrained weights requested for '" + std::string(name) + "' but no path given");
    if (!std::filesystem::is_regular_file(weights_path)) {
        throw LoadError("backbone weight file not found: " + weights_path);
    }
    try {
        torch::serialize::InputArchive archive;
        archive.load_from(weights_path);
        backbone->load(archive);
    } catch (const c10::Error& e) {
        throw LoadError("cannot load backbone weights from " + weights_path + ": " + e.what_without_backtrace());
    }
    return backbone;
}

void save_backbone_weights(Backbone& backbone, const std::string& path) {
    torch::serialize::OutputArchive archive;
    backbone->save(archive);
    archive.save_to(path);
}

std::pair<torch::Tensor, torch::Tensor> extract_pair(Backbone& backbone, const torch::Tensor& left,
                                                     const torch::Tensor& right) {
    require_rank(left, 4, "extract_pair(left)");
    require_rank(right, 4, "extract_pair(right)");
    require_same_shape(left, right, "extract_pair");
    return {backbone->forward(left), backbone->forward(right)};
}

}  // namespace dmsnet
