#include "dmsnet/synthetic.hpp"

#include <cmath>
#include <fstream>
#include <numbers>

#include <opencv2/imgproc.hpp>

#include "dmsnet/errors.hpp"

namespace dmsnet {

namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kSynthStream = 100;

int uniform_int(SampleRng& rng, int lo, int hi) { return lo + static_cast<int>(rng.below(static_cast<std::uint64_t>(hi - lo + 1))); }

}  // namespace

cv::Mat synthetic_fundus(int size, int cls, SampleRng& rng) {
    cv::Mat img(size, size, CV_8UC3, cv::Scalar(0, 0, 0));
    const cv::Point2d center(size / 2.0, size / 2.0);
    const double radius = size * 0.46;
    const double tilt = rng.uniform() * 2.0 * std::numbers::pi;

    // retina with off-centre illumination
    for (int y = 0; y < size; ++y) {
        auto* row = img.ptr<cv::Vec3b>(y);
        for (int x = 0; x < size; ++x) {
            const double dx = x - center.x, dy = y - center.y;
            const double r = std::hypot(dx, dy) / radius;
            if (r > 1.0) continue;
            const double light = 0.55 + 0.35 * (1.0 - r * r) + 0.15 * (dx * std::cos(tilt) + dy * std::sin(tilt)) / radius;
            row[x] = cv::Vec3b(cv::saturate_cast<uchar>(200 * light), cv::saturate_cast<uchar>(90 * light),
                               cv::saturate_cast<uchar>(40 * light));
        }
    }
    const int t = std::max(1, size / 64);
    const cv::Point disc(static_cast<int>(center.x + radius * 0.45), static_cast<int>(center.y));
    cv::circle(img, disc, std::max(2, size / 14), cv::Scalar(250, 200, 120), cv::FILLED, cv::LINE_AA);
    for (int v = 0; v < 4; ++v) {
        const double a = tilt + v * std::numbers::pi / 2.0 + rng.uniform() * 0.6;
        const cv::Point end(static_cast<int>(disc.x + std::cos(a) * radius), static_cast<int>(disc.y + std::sin(a) * radius));
        cv::line(img, disc, end, cv::Scalar(120, 20, 20), t, cv::LINE_AA);
    }

    // class signature: lesion colour and position sector
    if (cls > 0) {
        const cv::Scalar colour = cls % 2 ? cv::Scalar(255, 240, 120) : cv::Scalar(90, 0, 0);
        const double sector = cls * std::numbers::pi / 4.0;
        const int count = 3 + static_cast<int>(rng.below(4));
        for (int i = 0; i < count; ++i) {
            const double a = sector + (rng.uniform() - 0.5) * 0.8;
            const double d = radius * (0.2 + 0.5 * rng.uniform());
            const cv::Point p(static_cast<int>(center.x + std::cos(a) * d), static_cast<int>(center.y + std::sin(a) * d));
            cv::circle(img, p, std::max(1, uniform_int(rng, size / 40, size / 18)), colour, cv::FILLED, cv::LINE_AA);
        }
    }
    cv::Mat noise(size, size, CV_8UC3);
    // cv::randu draws from OpenCV's global RNG; reseed it so output depends on `rng` only
    cv::theRNG().state = rng.below(std::numeric_limits<std::uint32_t>::max()) + 1;
    cv::randu(noise, cv::Scalar::all(0), cv::Scalar::all(6));
    img += noise;
    return img;
}

fs::path write_synthetic_odir(const fs::path& dir, const SyntheticOdirOptions& options) {
    const fs::path image_dir = dir / "images";
    fs::create_directories(image_dir);
    const fs::path csv = dir / "odir.csv";
    std::ofstream out(csv, std::ios::binary | std::ios::trunc);
    if (!out) throw PathError("cannot write " + csv.string());
    out << "ID,Patient Age,Patient Sex,Left-Fundus,Right-Fundus,N,D,G,C,A,H,M,O\n";

    int id = 0;
    auto write_row = [&](const LabelVector& labels, int cls, bool with_images) {
        const std::string pid = std::to_string(id);
        SampleRng rng(options.seed, kSynthStream, static_cast<std::uint64_t>(id));
        const std::string left = pid + "_left.png", right = pid + "_right.png";
        if (with_images) {
            write_rgb(image_dir / left, synthetic_fundus(options.image_size, cls, rng));
            write_rgb(image_dir / right, synthetic_fundus(options.image_size, cls, rng));
        }
        out << pid << ',' << 40 + id % 40 << ',' << (id % 2 ? "Female" : "Male") << ",images/" << left << ",images/"
            << right;
        for (auto b : labels.bits) out << ',' << int(b);
        out << '\n';
        ++id;
    };
    for (int c = 0; c < kNumClasses; ++c) {
        for (int i = 0; i < options.class_counts[static_cast<std::size_t>(c)]; ++i) write_row(LabelVector::one_hot(c), c, true);
    }
    for (int i = 0; i < options.multilabel_rows; ++i) {
        LabelVector v = LabelVector::one_hot(1);
        v.bits[6] = 1;
        write_row(v, 1, true);
    }
    for (int i = 0; i < options.missing_image_rows; ++i) write_row(LabelVector::one_hot(0), 0, false);
    return csv;
}

TensorPairs separable_pairs(int n, int resolution, std::uint64_t seed) {
    std::vector<torch::Tensor> left, right;
    std::vector<LabelVector> labels;
    for (int i = 0; i < n; ++i) {
        const int cls = i % 2;
        SampleRng rng(seed, kSynthStream + 1, static_cast<std::uint64_t>(i));
        left.push_back(image_to_tensor(synthetic_fundus(resolution, cls, rng)));
        right.push_back(image_to_tensor(synthetic_fundus(resolution, cls, rng)));
        labels.push_back(LabelVector::one_hot(cls));
    }
    return TensorPairs(torch::stack(left), torch::stack(right), std::move(labels));
}

}  // namespace dmsnet
