#include "tfpatch/model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <random>

#include <fmt/format.h>
#include <fmt/ranges.h>
#include <json.hpp>

#include "tfpatch/error.hpp"
#include "tfpatch/hash.hpp"

namespace tfpatch {

namespace {

using json = nlohmann::ordered_json;

constexpr std::string_view kMagic = "APWM0001";

std::string layer_name(std::size_t l, std::string_view suffix) { return fmt::format("layers.{}.{}", l, suffix); }

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xFFU));
}

std::uint32_t get_u32(std::span<const std::uint8_t> bytes, std::size_t at) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes[at + i]) << (8 * i);
    return v;
}

json config_to_json(const ModelConfig& c) {
    return json{{"num_layers", c.num_layers},   {"num_heads", c.num_heads},
                {"model_dim", c.model_dim},     {"head_dim", c.head_dim},
                {"ffn_dim", c.ffn_dim},         {"vocab_size", c.vocab_size},
                {"max_positions", c.max_positions}, {"layernorm_epsilon", c.layernorm_epsilon},
                {"norm_style", std::string(to_string(c.norm_style))}};
}

ModelConfig config_from_json(const json& j) {
    ModelConfig c;
    c.num_layers = j.at("num_layers").get<std::size_t>();
    c.num_heads = j.at("num_heads").get<std::size_t>();
    c.model_dim = j.at("model_dim").get<std::size_t>();
    c.head_dim = j.at("head_dim").get<std::size_t>();
    c.ffn_dim = j.at("ffn_dim").get<std::size_t>();
    c.vocab_size = j.at("vocab_size").get<std::size_t>();
    c.max_positions = j.at("max_positions").get<std::size_t>();
    c.layernorm_epsilon = j.value("layernorm_epsilon", 1e-12);
    auto style = j.value("norm_style", std::string("post"));
    if (style == "post") {
        c.norm_style = NormStyle::post;
    } else if (style == "pre") {
        c.norm_style = NormStyle::pre;
    } else {
        throw Error(Errc::load_format, fmt::format("unknown norm_style '{}'", style));
    }
    return c;
}

// Uniform in [-1, 1) from the top 53 bits; independent of the standard library's distributions.
double uniform_pm1(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53 * 2.0 - 1.0;
}

}  // namespace

std::string_view to_string(NormStyle style) noexcept { return style == NormStyle::post ? "post" : "pre"; }

void ModelConfig::validate() const {
    if (num_layers < 1) throw Error(Errc::config, "num_layers must be at least 1");
    if (num_heads < 1) throw Error(Errc::config, "num_heads must be at least 1");
    if (head_dim < 1) throw Error(Errc::config, "head_dim must be at least 1");
    if (model_dim != num_heads * head_dim) {
        throw Error(Errc::config, fmt::format("model_dim {} != num_heads {} x head_dim {}", model_dim, num_heads, head_dim));
    }
    if (ffn_dim < 1) throw Error(Errc::config, "ffn_dim must be at least 1");
    if (vocab_size < 4) throw Error(Errc::config, "vocab_size must be at least 4");
    if (max_positions < 2) throw Error(Errc::config, "max_positions must be at least 2");
    if (!(layernorm_epsilon > 0.0) || !std::isfinite(layernorm_epsilon)) {
        throw Error(Errc::config, "layernorm_epsilon must be positive and finite");
    }
}

std::size_t Tensor::numel() const noexcept {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    return n;
}

std::vector<TensorSpec> required_tensors(const ModelConfig& c) {
    std::vector<TensorSpec> specs;
    specs.push_back({"token_embedding", {c.vocab_size, c.model_dim}});
    specs.push_back({"position_embedding", {c.max_positions, c.model_dim}});
    specs.push_back({"embed_norm.weight", {c.model_dim}});
    specs.push_back({"embed_norm.bias", {c.model_dim}});
    for (std::size_t l = 0; l < c.num_layers; ++l) {
        for (std::string_view p : {"q", "k", "v", "o"}) {
            specs.push_back({layer_name(l, fmt::format("attn.{}.weight", p)), {c.model_dim, c.model_dim}});
            specs.push_back({layer_name(l, fmt::format("attn.{}.bias", p)), {c.model_dim}});
        }
        specs.push_back({layer_name(l, "attn_norm.weight"), {c.model_dim}});
        specs.push_back({layer_name(l, "attn_norm.bias"), {c.model_dim}});
        specs.push_back({layer_name(l, "ffn.in.weight"), {c.ffn_dim, c.model_dim}});
        specs.push_back({layer_name(l, "ffn.in.bias"), {c.ffn_dim}});
        specs.push_back({layer_name(l, "ffn.out.weight"), {c.model_dim, c.ffn_dim}});
        specs.push_back({layer_name(l, "ffn.out.bias"), {c.model_dim}});
        specs.push_back({layer_name(l, "ffn_norm.weight"), {c.model_dim}});
        specs.push_back({layer_name(l, "ffn_norm.bias"), {c.model_dim}});
    }
    return specs;
}

WeightManifest random_manifest(const ModelConfig& config, std::uint64_t seed) {
    config.validate();
    std::mt19937_64 rng(seed);
    WeightManifest m;
    m.config = config;
    for (auto& spec : required_tensors(config)) {
        Tensor t;
        t.shape = spec.shape;
        t.data.resize(t.numel());
        const bool is_norm = spec.name.find("norm.") != std::string::npos;
        const bool is_bias = spec.name.ends_with(".bias");
        const bool is_embedding = spec.name.ends_with("embedding");
        double scale = 1.0;
        double offset = 0.0;
        if (is_embedding) {
            scale = 1.0;
        } else if (is_norm && !is_bias) {
            scale = 0.1;
            offset = 1.0;
        } else if (is_bias) {
            scale = 0.1;
        } else {
            scale = std::sqrt(3.0 / static_cast<double>(spec.shape[1]));
        }
        for (auto& v : t.data) v = static_cast<float>(offset + scale * uniform_pm1(rng));
        m.tensors.emplace(spec.name, std::move(t));
    }
    return m;
}

struct Model::Impl {
    WeightManifest manifest;
    std::vector<LayerView> layers;
    NormView embed_norm;
    std::span<const float> token_embedding;
    std::span<const float> position_embedding;
    std::string fingerprint;
};

Model Model::from_manifest(WeightManifest manifest) {
    const auto& config = manifest.config;
    try {
        config.validate();
    } catch (const Error& e) {
        throw Error(Errc::load_shape, fmt::format("invalid model config: {}", e.what()));
    }
    for (const auto& spec : required_tensors(config)) {
        auto it = manifest.tensors.find(spec.name);
        if (it == manifest.tensors.end()) {
            throw Error(Errc::load_missing, fmt::format("missing tensor '{}'", spec.name));
        }
        const auto& t = it->second;
        if (t.shape != spec.shape) {
            throw Error(Errc::load_shape, fmt::format("tensor '{}' has shape [{}], expected [{}]", spec.name,
                                                      fmt::join(t.shape, ", "), fmt::join(spec.shape, ", ")));
        }
        if (t.data.size() != t.numel()) {
            throw Error(Errc::load_shape, fmt::format("tensor '{}' holds {} values for shape [{}]", spec.name,
                                                      t.data.size(), fmt::join(t.shape, ", ")));
        }
        for (std::size_t i = 0; i < t.data.size(); ++i) {
            if (!std::isfinite(t.data[i])) {
                throw Error(Errc::load_non_finite,
                            fmt::format("tensor '{}' has non-finite value at flat index {}", spec.name, i));
            }
        }
    }

    auto impl = std::make_shared<Impl>();
    impl->manifest = std::move(manifest);
    const auto& tensors = impl->manifest.tensors;
    auto data = [&](const std::string& name) -> std::span<const float> { return tensors.at(name).data; };
    auto linear = [&](std::size_t l, std::string_view stem) {
        const auto& w = tensors.at(layer_name(l, fmt::format("{}.weight", stem)));
        return LinearView{w.data, data(layer_name(l, fmt::format("{}.bias", stem))), w.shape[0], w.shape[1]};
    };
    auto norm = [&](const std::string& stem) { return NormView{data(stem + ".weight"), data(stem + ".bias")}; };

    impl->token_embedding = data("token_embedding");
    impl->position_embedding = data("position_embedding");
    impl->embed_norm = norm("embed_norm");
    for (std::size_t l = 0; l < impl->manifest.config.num_layers; ++l) {
        LayerView lv;
        lv.q = linear(l, "attn.q");
        lv.k = linear(l, "attn.k");
        lv.v = linear(l, "attn.v");
        lv.o = linear(l, "attn.o");
        lv.attn_norm = norm(layer_name(l, "attn_norm"));
        lv.ffn_in = linear(l, "ffn.in");
        lv.ffn_out = linear(l, "ffn.out");
        lv.ffn_norm = norm(layer_name(l, "ffn_norm"));
        impl->layers.push_back(lv);
    }
    auto bytes = save_weights(impl->manifest);
    Fnv1a h;
    h.update(std::as_bytes(std::span(bytes)));
    impl->fingerprint = h.hex();
    return Model(std::move(impl));
}

const ModelConfig& Model::config() const noexcept { return impl_->manifest.config; }
const WeightManifest& Model::manifest() const noexcept { return impl_->manifest; }

const Tensor& Model::tensor(std::string_view name) const {
    auto it = impl_->manifest.tensors.find(std::string(name));
    if (it == impl_->manifest.tensors.end()) throw Error(Errc::load_missing, fmt::format("no tensor '{}'", name));
    return it->second;
}

std::span<const float> Model::token_embedding() const noexcept { return impl_->token_embedding; }
std::span<const float> Model::position_embedding() const noexcept { return impl_->position_embedding; }
const NormView& Model::embed_norm() const noexcept { return impl_->embed_norm; }
const LayerView& Model::layer(std::size_t index) const { return impl_->layers.at(index); }
const std::string& Model::fingerprint() const noexcept { return impl_->fingerprint; }

std::vector<std::uint8_t> save_weights(const WeightManifest& manifest) {
    // Required tensors first in canonical order, then any extras by name.
    std::vector<const std::pair<const std::string, Tensor>*> order;
    for (const auto& spec : required_tensors(manifest.config)) {
        auto it = manifest.tensors.find(spec.name);
        if (it != manifest.tensors.end()) order.push_back(&*it);
    }
    for (const auto& entry : manifest.tensors) {
        if (std::find(order.begin(), order.end(), &entry) == order.end()) order.push_back(&entry);
    }

    json header;
    header["config"] = config_to_json(manifest.config);
    header["tensors"] = json::array();
    std::size_t offset = 0;
    for (const auto* entry : order) {
        header["tensors"].push_back({{"name", entry->first}, {"shape", entry->second.shape}, {"offset", offset}});
        offset += entry->second.data.size() * sizeof(float);
    }
    const std::string text = header.dump();

    std::vector<std::uint8_t> out;
    out.reserve(kMagic.size() + 4 + text.size() + offset);
    out.insert(out.end(), kMagic.begin(), kMagic.end());
    put_u32(out, static_cast<std::uint32_t>(text.size()));
    out.insert(out.end(), text.begin(), text.end());
    for (const auto* entry : order) {
        for (float v : entry->second.data) put_u32(out, std::bit_cast<std::uint32_t>(v));
    }
    return out;
}

std::vector<std::uint8_t> save_weights(const Model& model) { return save_weights(model.manifest()); }

void save_weights_file(const WeightManifest& manifest, const std::filesystem::path& path) {
    auto bytes = save_weights(manifest);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(Errc::io, fmt::format("cannot write weights '{}'", path.string()));
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

WeightManifest parse_manifest(std::span<const std::uint8_t> bytes) {
    if (bytes.size() >= kMagic.size() &&
        std::memcmp(bytes.data(), kMagic.data(), kMagic.size()) != 0) {
        throw Error(Errc::load_magic, "weight manifest magic mismatch (expected APWM0001)");
    }
    if (bytes.size() < kMagic.size() + 4) throw Error(Errc::load_truncated, "weight manifest shorter than its preamble");
    const std::size_t header_len = get_u32(bytes, kMagic.size());
    const std::size_t payload_start = kMagic.size() + 4 + header_len;
    if (payload_start > bytes.size()) {
        throw Error(Errc::load_truncated, fmt::format("header length {} exceeds file size", header_len));
    }

    json header;
    try {
        header = json::parse(bytes.begin() + static_cast<std::ptrdiff_t>(kMagic.size() + 4),
                             bytes.begin() + static_cast<std::ptrdiff_t>(payload_start));
    } catch (const json::exception& e) {
        throw Error(Errc::load_format, fmt::format("weight manifest header is not valid JSON: {}", e.what()));
    }

    WeightManifest m;
    const auto payload = bytes.subspan(payload_start);
    try {
        m.config = config_from_json(header.at("config"));
        for (const auto& entry : header.at("tensors")) {
            Tensor t;
            auto name = entry.at("name").get<std::string>();
            t.shape = entry.at("shape").get<std::vector<std::size_t>>();
            auto offset = entry.at("offset").get<std::size_t>();
            const std::size_t count = t.numel();
            if (offset % sizeof(float) != 0 || offset > payload.size() ||
                count > (payload.size() - offset) / sizeof(float)) {
                throw Error(Errc::load_truncated, fmt::format("payload of tensor '{}' is truncated", name));
            }
            t.data.resize(count);
            for (std::size_t i = 0; i < count; ++i) {
                t.data[i] = std::bit_cast<float>(get_u32(payload, offset + i * sizeof(float)));
            }
            if (!m.tensors.emplace(name, std::move(t)).second) {
                throw Error(Errc::load_format, fmt::format("tensor '{}' listed twice", name));
            }
        }
    } catch (const json::exception& e) {
        throw Error(Errc::load_format, fmt::format("malformed weight manifest header: {}", e.what()));
    }
    return m;
}

Model load_weights(std::span<const std::uint8_t> bytes) { return Model::from_manifest(parse_manifest(bytes)); }

Model load_weights_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(Errc::io, fmt::format("cannot open weights '{}'", path.string()));
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return load_weights(bytes);
}

}  // namespace tfpatch
