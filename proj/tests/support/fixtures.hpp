#pragma once

#include <atomic>
#include <filesystem>
#include <string>

#include <unistd.h>

#include "dmsnet/config.hpp"

namespace testing_support {

/// Scratch directory removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag = "dmsnet") {
        static std::atomic<int> counter{0};
        path_ = std::filesystem::temp_directory_path() /
                (tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

/// Smallest full model that still exercises every module: a 112 px input
/// gives a 4x4 backbone grid (needed by the 4x4 pyramid branch) and a 2x2
/// CASFM token grid.
inline dmsnet::ModelConfig desk_model() {
    dmsnet::ModelConfig m;
    m.backbone_name = "resnet50";
    m.input_resolution = 112;
    m.embedding_dim = 64;
    m.heads = 4;
    m.growth_rate = 16;
    return m;
}

}  // namespace testing_support
