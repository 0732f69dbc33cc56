#pragma once

#include <memory>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <torch/torch.h>

namespace dmsnet {

/// Convolutional trunk of a stock architecture with its classifier removed.
class FeatureExtractorImpl : public torch::nn::Module {
public:
    ~FeatureExtractorImpl() override = default;
    /// (B,3,r,r) image batch -> (B,C,H,W) final-stage feature map.
    virtual torch::Tensor forward(const torch::Tensor& images) = 0;
};

struct BackboneInfo {
    std::string_view name;
    std::string_view display_name;  // label used in comparison tables
    int64_t out_channels;
};

/// Supported backbone names: resnet50, resnet101, resnet152, resnext, vit.
const std::vector<BackboneInfo>& backbone_registry();
/// RegistryError for unsupported names.
const BackboneInfo& backbone_info(std::string_view name);

/// Output grid (H, W) for a square input of `input_resolution` pixels.
std::pair<int64_t, int64_t> backbone_spatial_dims(std::string_view name, int64_t input_resolution);

/// Siamese feature extractor. A single instance is applied to both eyes so
/// the two branches share one parameter collection.
class BackboneImpl : public torch::nn::Module {
public:
    BackboneImpl(std::string_view name, int64_t input_resolution);

    torch::Tensor forward(const torch::Tensor& images);

    const std::string& name() const { return name_; }
    int64_t out_channels() const { return out_channels_; }
    int64_t input_resolution() const { return input_resolution_; }
    std::pair<int64_t, int64_t> spatial_dims() const;

private:
    std::string name_;
    int64_t out_channels_;
    int64_t input_resolution_;
    std::shared_ptr<FeatureExtractorImpl> body_;
};
TORCH_MODULE(Backbone);

/// Builds a backbone from the registry. With `pretrained`, parameters are read
/// from `weights_path` (a torch archive written by save_backbone_weights);
/// a missing or unreadable file raises LoadError naming the path.
Backbone build_backbone(std::string_view name, bool pretrained, int64_t input_resolution,
                        const std::string& weights_path = {});

void save_backbone_weights(Backbone& backbone, const std::string& path);

/// Runs both eyes through the same backbone. ShapeError unless both batches
/// have identical shape (B,3,r,r).
std::pair<torch::Tensor, torch::Tensor> extract_pair(Backbone& backbone, const torch::Tensor& left,
                                                     const torch::Tensor& right);

}  // namespace dmsnet
