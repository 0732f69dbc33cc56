#include "dmsnet/plots.hpp"

#include <algorithm>
#include <cstdio>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "dmsnet/errors.hpp"

namespace dmsnet {

namespace fs = std::filesystem;

namespace {

const cv::Scalar kInk(40, 40, 40);
constexpr int kFont = cv::FONT_HERSHEY_SIMPLEX;

void save_png(const fs::path& path, const cv::Mat& image) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    if (!cv::imwrite(path.string(), image)) throw PathError("cannot write plot: " + path.string());
}

void centered_text(cv::Mat& img, const std::string& text, cv::Point center, double scale, const cv::Scalar& color) {
    int baseline = 0;
    const auto size = cv::getTextSize(text, kFont, scale, 1, &baseline);
    cv::putText(img, text, {center.x - size.width / 2, center.y + size.height / 2}, kFont, scale, color, 1, cv::LINE_AA);
}

}  // namespace

void write_confusion_heatmap(const ConfusionMatrix& cm, const fs::path& path) {
    const int k = cm.classes();
    const int cell = 56, margin = 60;
    cv::Mat img(margin + k * cell + 20, margin + k * cell + 20, CV_8UC3, cv::Scalar(255, 255, 255));

    std::int64_t peak = 1;
    for (int i = 0; i < k; ++i) {
        for (int j = 0; j < k; ++j) peak = std::max(peak, cm.at(i, j));
    }
    for (int i = 0; i < k; ++i) {
        for (int j = 0; j < k; ++j) {
            const double v = static_cast<double>(cm.at(i, j)) / static_cast<double>(peak);
            cv::Mat swatch(1, 1, CV_8UC1, cv::Scalar(static_cast<int>(std::lround(v * 255))));
            cv::Mat colored;
            cv::applyColorMap(swatch, colored, cv::COLORMAP_VIRIDIS);
            const cv::Vec3b c = colored.at<cv::Vec3b>(0, 0);
            const cv::Rect r(margin + j * cell, margin + i * cell, cell, cell);
            cv::rectangle(img, r, cv::Scalar(c[0], c[1], c[2]), cv::FILLED);
            cv::rectangle(img, r, cv::Scalar(255, 255, 255), 1);
            const cv::Scalar text = v > 0.6 ? kInk : cv::Scalar(255, 255, 255);
            centered_text(img, std::to_string(cm.at(i, j)), {r.x + cell / 2, r.y + cell / 2}, 0.45, text);
        }
    }
    for (int i = 0; i < k; ++i) {
        const std::string name = i < kNumClasses ? std::string(kClassNames[static_cast<std::size_t>(i)]) : std::to_string(i);
        centered_text(img, name, {margin - 18, margin + i * cell + cell / 2}, 0.5, kInk);
        centered_text(img, name, {margin + i * cell + cell / 2, margin - 18}, 0.5, kInk);
    }
    cv::putText(img, "pred", {margin + k * cell / 2 - 18, 18}, kFont, 0.45, kInk, 1, cv::LINE_AA);
    cv::putText(img, "true", {4, margin + k * cell / 2}, kFont, 0.45, kInk, 1, cv::LINE_AA);
    save_png(path, img);
}

std::vector<fs::path> write_roc_curves(std::span<const double> scores, std::span<const LabelVector> labels,
                                       const fs::path& dir) {
    const std::size_t n = labels.size();
    if (scores.size() != n * kNumClasses) throw InputError("write_roc_curves: scores do not match labels");
    std::vector<fs::path> written;
    const int size = 320, margin = 40;
    const int plot = size - 2 * margin;
    auto to_px = [&](double fpr, double tpr) {
        return cv::Point(margin + static_cast<int>(std::lround(fpr * plot)),
                         size - margin - static_cast<int>(std::lround(tpr * plot)));
    };

    for (int c = 0; c < kNumClasses; ++c) {
        std::vector<double> s(n);
        std::vector<std::uint8_t> pos(n);
        for (std::size_t i = 0; i < n; ++i) {
            s[i] = scores[i * kNumClasses + static_cast<std::size_t>(c)];
            pos[i] = labels[i].bits[static_cast<std::size_t>(c)];
        }
        const auto auc = pairwise_auc(s, pos);
        if (!auc) continue;
        const auto roc = roc_curve(s, pos);

        cv::Mat img(size, size, CV_8UC3, cv::Scalar(255, 255, 255));
        cv::rectangle(img, to_px(0, 1), to_px(1, 0), kInk, 1);
        cv::line(img, to_px(0, 0), to_px(1, 1), cv::Scalar(180, 180, 180), 1, cv::LINE_AA);
        for (std::size_t i = 1; i < roc.fpr.size(); ++i) {
            cv::line(img, to_px(roc.fpr[i - 1], roc.tpr[i - 1]), to_px(roc.fpr[i], roc.tpr[i]), cv::Scalar(180, 80, 20),
                     2, cv::LINE_AA);
        }
        char title[64];
        std::snprintf(title, sizeof title, "%s  AUC %.3f", std::string(kClassNames[static_cast<std::size_t>(c)]).c_str(),
                      *auc);
        cv::putText(img, title, {margin, margin - 12}, kFont, 0.5, kInk, 1, cv::LINE_AA);
        cv::putText(img, "FPR", {size / 2 - 12, size - 12}, kFont, 0.4, kInk, 1, cv::LINE_AA);
        cv::putText(img, "TPR", {4, size / 2}, kFont, 0.4, kInk, 1, cv::LINE_AA);

        const auto path = dir / ("roc_" + std::string(kClassNames[static_cast<std::size_t>(c)]) + ".png");
        save_png(path, img);
        written.push_back(path);
    }
    return written;
}

}  // namespace dmsnet
