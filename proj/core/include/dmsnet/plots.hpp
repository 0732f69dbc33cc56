#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include "dmsnet/config.hpp"
#include "dmsnet/metrics.hpp"

namespace dmsnet {

/// Confusion-matrix heatmap (rows = truth, columns = prediction) as PNG.
void write_confusion_heatmap(const ConfusionMatrix& cm, const std::filesystem::path& path);

/// One ROC PNG per class with both outcomes present, named roc_<class>.png.
/// `scores` is row-major (n x 8). Returns the written paths.
std::vector<std::filesystem::path> write_roc_curves(std::span<const double> scores,
                                                    std::span<const LabelVector> labels,
                                                    const std::filesystem::path& dir);

}  // namespace dmsnet
