#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace tfpatch {

enum class NormStyle { post, pre };

std::string_view to_string(NormStyle style) noexcept;

struct ModelConfig {
    std::size_t num_layers = 0;
    std::size_t num_heads = 0;
    std::size_t model_dim = 0;
    std::size_t head_dim = 0;
    std::size_t ffn_dim = 0;
    std::size_t vocab_size = 0;
    std::size_t max_positions = 0;
    double layernorm_epsilon = 1e-12;
    NormStyle norm_style = NormStyle::post;

    /// Throws Errc::config on a violated structural invariant.
    void validate() const;

    friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<float> data;

    std::size_t numel() const noexcept;
    friend bool operator==(const Tensor&, const Tensor&) = default;
};

struct TensorSpec {
    std::string name;
    std::vector<std::size_t> shape;
};

/// Every tensor the engine needs for `config`, in canonical file order.
/// Linear weights are stored [out, in] so that y = W x + b.
std::vector<TensorSpec> required_tensors(const ModelConfig& config);

struct WeightManifest {
    ModelConfig config;
    std::map<std::string, Tensor> tensors;
};

/// Deterministic random weights, scaled so that tiny models produce
/// well-separated scores.
WeightManifest random_manifest(const ModelConfig& config, std::uint64_t seed);

struct LinearView {
    std::span<const float> weight;  // [out, in]
    std::span<const float> bias;    // [out]
    std::size_t out = 0;
    std::size_t in = 0;
};

struct NormView {
    std::span<const float> weight;
    std::span<const float> bias;
};

struct LayerView {
    LinearView q, k, v, o;
    NormView attn_norm;
    LinearView ffn_in, ffn_out;
    NormView ffn_norm;
};

/// Validated, immutable weights. Copies share storage, so a Model can be
/// handed to any number of concurrent encode calls.
class Model {
  public:
    /// Validates names, shapes and finiteness. Throws Errc::load_missing,
    /// Errc::load_shape or Errc::load_non_finite.
    static Model from_manifest(WeightManifest manifest);

    const ModelConfig& config() const noexcept;
    const WeightManifest& manifest() const noexcept;
    const Tensor& tensor(std::string_view name) const;

    std::span<const float> token_embedding() const noexcept;
    std::span<const float> position_embedding() const noexcept;
    const NormView& embed_norm() const noexcept;
    const LayerView& layer(std::size_t index) const;

    /// FNV-1a of the serialized manifest.
    const std::string& fingerprint() const noexcept;

  private:
    struct Impl;
    explicit Model(std::shared_ptr<const Impl> impl) : impl_(std::move(impl)) {}
    std::shared_ptr<const Impl> impl_;
};

// Weight-manifest container: "APWM0001", u32 LE header length, JSON header,
// then little-endian float32 payloads at the header's byte offsets.
std::vector<std::uint8_t> save_weights(const WeightManifest& manifest);
std::vector<std::uint8_t> save_weights(const Model& model);
void save_weights_file(const WeightManifest& manifest, const std::filesystem::path& path);

WeightManifest parse_manifest(std::span<const std::uint8_t> bytes);
Model load_weights(std::span<const std::uint8_t> bytes);
Model load_weights_file(const std::filesystem::path& path);

}  // namespace tfpatch
