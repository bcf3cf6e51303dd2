#include "config.hpp"

#include <fstream>

#include <fmt/format.h>

#include "tfpatch/encoder.hpp"
#include "tfpatch/hash.hpp"
#include "tfpatch/instance.hpp"
#include "tfpatch/tokenizer.hpp"

namespace tfpatch::cli {

namespace {

template <typename T>
void read_field(const nlohmann::json& j, const char* key, T& out) {
    try {
        out = j.get<T>();
    } catch (const nlohmann::json::exception&) {
        throw Error(Errc::config, fmt::format("config field '{}' has the wrong type", key));
    }
}

}  // namespace

void RunConfig::validate() const {
    if (!(fraction > 0.0 && fraction <= 0.5)) throw Error(Errc::config, "fraction must be in (0, 0.5]");
    if (k_min > k_max) throw Error(Errc::config, fmt::format("empty K range {}..{}", k_min, k_max));
    if (!(delta > 0.0)) throw Error(Errc::config, "delta must be positive");
    if (workers == 0) throw Error(Errc::config, "workers must be >= 1");
    if (scorer != "bm25" && scorer != "neural") throw Error(Errc::config, fmt::format("unknown scorer '{}'", scorer));
    if (tfc2_selection != "inherit" && tfc2_selection != "native") {
        throw Error(Errc::config, fmt::format("unknown tfc2_selection '{}'", tfc2_selection));
    }
    if (mode != "blocks" && mode != "heads") throw Error(Errc::config, fmt::format("unknown patch mode '{}'", mode));
    if (norm_style != "post" && norm_style != "pre") {
        throw Error(Errc::config, fmt::format("unknown norm_style '{}'", norm_style));
    }
    if (kinds.empty()) throw Error(Errc::config, "at least one perturbation kind is required");
    for (const auto& k : kinds) parse_perturbation_kind(k);
    parse_tokenizer_mode(tokenizer_mode);
    parse_token_class(source_class);
    for (const auto& h : head_group) {
        const auto dot = h.find('.');
        if (dot == std::string::npos || dot == 0 || dot + 1 == h.size() ||
            h.find_first_not_of("0123456789.") != std::string::npos || h.find('.', dot + 1) != std::string::npos) {
            throw Error(Errc::config, fmt::format("head '{}' must be written layer.head", h));
        }
    }
}

nlohmann::ordered_json to_json(const RunConfig& c) {
    nlohmann::ordered_json j;
    j["corpus"] = c.corpus;
    j["queries"] = c.queries;
    j["vocab"] = c.vocab;
    j["weights"] = c.weights;
    j["out_dir"] = c.out_dir;
    j["inputs"] = c.inputs;
    j["tokenizer_mode"] = c.tokenizer_mode;
    j["kinds"] = c.kinds;
    j["k_min"] = c.k_min;
    j["k_max"] = c.k_max;
    j["fraction"] = c.fraction;
    j["seed"] = c.seed;
    j["workers"] = c.workers;
    j["delta"] = c.delta;
    j["scorer"] = c.scorer;
    j["tfc2_selection"] = c.tfc2_selection;
    j["top_k"] = c.top_k;
    j["num_queries"] = c.num_queries;
    j["mode"] = c.mode;
    j["absolute"] = c.absolute;
    j["layer"] = c.layer;
    j["head"] = c.head;
    j["source_class"] = c.source_class;
    j["head_group"] = c.head_group;
    j["force"] = c.force;
    j["num_layers"] = c.num_layers;
    j["num_heads"] = c.num_heads;
    j["head_dim"] = c.head_dim;
    j["max_positions"] = c.max_positions;
    j["norm_style"] = c.norm_style;
    j["num_docs"] = c.num_docs;
    j["fixture_queries"] = c.fixture_queries;
    return j;
}

void merge_json(RunConfig& c, const nlohmann::json& j) {
    if (!j.is_object()) throw Error(Errc::config, "config must be a JSON object");
    for (const auto& [key, v] : j.items()) {
        const char* k = key.c_str();
        if (key == "corpus") read_field(v, k, c.corpus);
        else if (key == "queries") read_field(v, k, c.queries);
        else if (key == "vocab") read_field(v, k, c.vocab);
        else if (key == "weights") read_field(v, k, c.weights);
        else if (key == "out_dir") read_field(v, k, c.out_dir);
        else if (key == "inputs") read_field(v, k, c.inputs);
        else if (key == "tokenizer_mode") read_field(v, k, c.tokenizer_mode);
        else if (key == "kinds") read_field(v, k, c.kinds);
        else if (key == "k_min") read_field(v, k, c.k_min);
        else if (key == "k_max") read_field(v, k, c.k_max);
        else if (key == "fraction") read_field(v, k, c.fraction);
        else if (key == "seed") read_field(v, k, c.seed);
        else if (key == "workers") read_field(v, k, c.workers);
        else if (key == "delta") read_field(v, k, c.delta);
        else if (key == "scorer") read_field(v, k, c.scorer);
        else if (key == "tfc2_selection") read_field(v, k, c.tfc2_selection);
        else if (key == "top_k") read_field(v, k, c.top_k);
        else if (key == "num_queries") read_field(v, k, c.num_queries);
        else if (key == "mode") read_field(v, k, c.mode);
        else if (key == "absolute") read_field(v, k, c.absolute);
        else if (key == "layer") read_field(v, k, c.layer);
        else if (key == "head") read_field(v, k, c.head);
        else if (key == "source_class") read_field(v, k, c.source_class);
        else if (key == "head_group") read_field(v, k, c.head_group);
        else if (key == "force") read_field(v, k, c.force);
        else if (key == "num_layers") read_field(v, k, c.num_layers);
        else if (key == "num_heads") read_field(v, k, c.num_heads);
        else if (key == "head_dim") read_field(v, k, c.head_dim);
        else if (key == "max_positions") read_field(v, k, c.max_positions);
        else if (key == "norm_style") read_field(v, k, c.norm_style);
        else if (key == "num_docs") read_field(v, k, c.num_docs);
        else if (key == "fixture_queries") read_field(v, k, c.fixture_queries);
        else throw Error(Errc::config, fmt::format("unknown config field '{}'", key));
    }
}

RunConfig load_config(const std::filesystem::path& path) {
    require_file(path.string(), "config");
    std::ifstream in(path);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw Error(Errc::config, fmt::format("{}: {}", path.string(), e.what()));
    }
    RunConfig c;
    merge_json(c, j);
    return c;
}

std::string config_hash(const RunConfig& c) {
    nlohmann::ordered_json j;
    j["corpus"] = c.corpus;
    j["queries"] = c.queries;
    j["vocab"] = c.vocab;
    j["weights"] = c.weights;
    j["tokenizer_mode"] = c.tokenizer_mode;
    j["kinds"] = c.kinds;
    j["k_min"] = c.k_min;
    j["k_max"] = c.k_max;
    j["fraction"] = c.fraction;
    j["seed"] = c.seed;
    j["delta"] = c.delta;
    j["scorer"] = c.scorer;
    j["tfc2_selection"] = c.tfc2_selection;
    j["top_k"] = c.top_k;
    j["num_queries"] = c.num_queries;
    return fnv1a_hex(j.dump());
}

void require_file(const std::string& path, std::string_view what) {
    if (path.empty()) throw Error(Errc::config, fmt::format("no {} path given", what));
    if (!std::filesystem::exists(path)) throw Error(Errc::io, fmt::format("{} file not found: {}", what, path));
}

}  // namespace tfpatch::cli
