#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "tfpatch/error.hpp"

namespace tfpatch::cli {

/// Everything a stage needs. Loaded from a JSON file, then overridden by flags.
struct RunConfig {
    std::string corpus;
    std::string queries;
    std::string vocab;
    std::string weights;
    std::string out_dir = "out";
    std::vector<std::string> inputs;

    std::string tokenizer_mode = "wordpiece";
    std::vector<std::string> kinds = {"tfc1_inject_append"};
    std::size_t k_min = 0;
    std::size_t k_max = 0;
    double fraction = 0.10;
    std::uint64_t seed = 0;
    std::size_t workers = 1;
    double delta = 1e-6;

    std::string scorer = "bm25";  // bm25 | neural
    std::string tfc2_selection = "inherit";
    std::size_t top_k = 100;
    std::size_t num_queries = 100;

    std::string mode = "heads";  // patch: blocks | heads
    bool absolute = false;
    std::size_t layer = 0;
    std::size_t head = 0;
    std::string source_class = "tok_inj";
    std::vector<std::string> head_group;  // "layer.head"
    bool force = false;

    // export-fixture
    std::size_t num_layers = 2;
    std::size_t num_heads = 2;
    std::size_t head_dim = 8;
    std::size_t max_positions = 128;
    std::string norm_style = "post";
    std::size_t num_docs = 120;
    std::size_t fixture_queries = 12;

    /// Throws Errc::config on out-of-range values or unknown names.
    void validate() const;
};

nlohmann::ordered_json to_json(const RunConfig& config);

/// Unknown keys are rejected so typos do not pass silently.
void merge_json(RunConfig& config, const nlohmann::json& j);

RunConfig load_config(const std::filesystem::path& path);

/// Hash of the fields that define an experiment. Output location, worker
/// count and per-invocation inputs are excluded.
std::string config_hash(const RunConfig& config);

/// Throws Errc::io when a required path does not exist.
void require_file(const std::string& path, std::string_view what);

}  // namespace tfpatch::cli
