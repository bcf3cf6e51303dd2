#pragma once

#include <cstdint>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "tfpatch/fixture.hpp"
#include "tfpatch/model.hpp"
#include "tfpatch/tokenizer.hpp"

namespace tfpatch::testing {

inline std::shared_ptr<const Tokenizer> fixture_tokenizer(std::size_t max_positions = 128,
                                                          TokenizerMode mode = TokenizerMode::wordpiece) {
    return std::make_shared<const Tokenizer>(fixture_vocabulary(), mode, max_positions);
}

inline WeightManifest tiny_manifest(std::uint64_t seed, std::size_t layers = 2, std::size_t heads = 2,
                                    std::size_t head_dim = 4, std::size_t max_positions = 128) {
    return random_manifest(fixture_config(layers, heads, head_dim, fixture_vocabulary().size(), max_positions),
                           seed);
}

inline Model tiny_model(std::uint64_t seed, std::size_t layers = 2, std::size_t heads = 2, std::size_t head_dim = 4) {
    return Model::from_manifest(tiny_manifest(seed, layers, heads, head_dim));
}

inline double max_abs_diff(const std::vector<float>& a, const std::vector<double>& b) {
    double m = 0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(double(a[i]) - b[i]));
    return a.size() == b.size() ? m : INFINITY;
}

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
  public:
    explicit TempDir(const std::string& tag) {
        std::random_device rd;
        path_ = std::filesystem::temp_directory_path() / ("tfpatch_" + tag + "_" + std::to_string(rd()));
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

inline std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void spit(const std::filesystem::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary);
    out << text;
}

}  // namespace tfpatch::testing
