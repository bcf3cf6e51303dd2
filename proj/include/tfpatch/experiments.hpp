#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "tfpatch/encoder.hpp"
#include "tfpatch/instance.hpp"
#include "tfpatch/metric.hpp"
#include "tfpatch/tokenizer.hpp"

namespace tfpatch {

/// Mean normalized patching score per (layer, column). Columns are token
/// classes for block sweeps and heads for head sweeps. A cell that no instance
/// reached has count 0 and no value.
struct HeatmapGrid {
    std::string site_kind;
    std::vector<std::string> row_labels;
    std::vector<std::string> col_labels;
    std::vector<std::optional<double>> values;  // row-major
    std::vector<std::size_t> counts;
    nlohmann::ordered_json metadata = nlohmann::ordered_json::object();

    std::size_t rows() const noexcept { return row_labels.size(); }
    std::size_t cols() const noexcept { return col_labels.size(); }
    std::optional<double> value(std::size_t r, std::size_t c) const { return values.at(r * cols() + c); }
    std::size_t count(std::size_t r, std::size_t c) const { return counts.at(r * cols() + c); }
};

/// `row,col,value,count` lines; empty cells print "empty" as the value.
/// Metadata lines, if given, come first prefixed with '#'.
std::string to_csv(const HeatmapGrid& grid, std::span<const std::string> comment_lines = {});
nlohmann::ordered_json to_json(const HeatmapGrid& grid);

struct SweepOptions {
    double delta = kDefaultDegeneracyDelta;
    std::size_t workers = 1;
    bool absolute = false;  // aggregate |normalized| instead of normalized
};

struct PreparedInstance {
    TokenizedText query;
    TokenizedText baseline;
    TokenizedText perturbed;
    std::vector<TokenClass> classes;
};

/// Tokenizes all three texts and classifies the perturbed positions.
PreparedInstance prepare_instance(const Tokenizer& tokenizer, const DiagnosticInstance& instance);

/// Layers x 6 token classes. Each cell patches every position of one class at
/// one layer's site in a single patched run. Degenerate instances, and
/// instances without tokens of a class, do not contribute to that cell.
/// Throws Errc::ingestion on an empty dataset and Errc::degenerate when every
/// instance is degenerate.
HeatmapGrid block_sweep(const Model& model, const Tokenizer& tokenizer, std::span<const DiagnosticInstance> dataset,
                        SiteKind site_kind, const SweepOptions& options = {});

/// Layers x heads; each cell patches one head's output at all positions.
HeatmapGrid head_sweep(const Model& model, const Tokenizer& tokenizer, std::span<const DiagnosticInstance> dataset,
                       const SweepOptions& options = {});

/// Baseline-document score of every instance, in dataset order.
std::vector<double> baseline_scores(const Model& model, const Tokenizer& tokenizer,
                                    std::span<const DiagnosticInstance> dataset, std::size_t workers = 1);

/// Instance indices (ascending) of the top and bottom ranked documents.
struct RankSplit {
    std::vector<std::size_t> top;
    std::vector<std::size_t> bottom;
    double fraction = 0.10;
};

/// Per query, sorts documents by score (descending, ties by doc_id) and takes
/// ceil(fraction * n) from each end. Throws Errc::domain naming the query when
/// it has fewer than ceil(1 / fraction) documents or the two ends would overlap.
RankSplit split_by_rank(std::span<const DiagnosticInstance> dataset, std::span<const double> scores,
                        double fraction = 0.10);

using ClassDistribution = std::array<double, kNumTokenClasses>;

/// Attention mass from `source` positions of the perturbed document to each
/// token class at one head: rows are averaged first, then summed per class.
/// Throws Errc::domain when the instance has no `source` tokens.
ClassDistribution attention_to_classes(const Model& model, const Tokenizer& tokenizer,
                                       const DiagnosticInstance& instance, std::size_t layer, std::size_t head,
                                       TokenClass source = TokenClass::inj);

}  // namespace tfpatch
