#include "tfpatch/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <utility>

#include <fmt/format.h>

#include "tfpatch/diagnostics.hpp"
#include "tfpatch/error.hpp"
#include "tfpatch/parallel.hpp"
#include "tfpatch/patching.hpp"

namespace tfpatch {

namespace {

using CellValues = std::vector<std::pair<std::size_t, double>>;

struct SweepResult {
    CellValues cells;
    bool degenerate = false;
};

HeatmapGrid empty_grid(std::string site_kind, std::size_t rows, std::vector<std::string> cols) {
    HeatmapGrid g;
    g.site_kind = std::move(site_kind);
    for (std::size_t r = 0; r < rows; ++r) g.row_labels.push_back(std::to_string(r));
    g.col_labels = std::move(cols);
    g.values.assign(g.rows() * g.cols(), std::nullopt);
    g.counts.assign(g.rows() * g.cols(), 0);
    return g;
}

// Sums in dataset order so the result does not depend on the worker count.
void reduce(HeatmapGrid& grid, const std::vector<SweepResult>& results, const Model& model,
            const SweepOptions& options) {
    const double delta = options.delta;
    std::vector<double> sums(grid.values.size(), 0.0);
    std::size_t degenerate = 0;
    for (const auto& r : results) {
        if (r.degenerate) {
            ++degenerate;
            continue;
        }
        for (const auto& [cell, v] : r.cells) {
            sums[cell] += options.absolute ? std::abs(v) : v;
            ++grid.counts[cell];
        }
    }
    if (degenerate == results.size()) {
        throw Error(Errc::degenerate, fmt::format("all {} instances are degenerate (|perturbed - baseline| < {}); "
                                                  "lower delta or review the dataset",
                                                  results.size(), delta));
    }
    for (std::size_t i = 0; i < sums.size(); ++i) {
        if (grid.counts[i] > 0) grid.values[i] = sums[i] / static_cast<double>(grid.counts[i]);
    }
    grid.metadata["site"] = grid.site_kind;
    grid.metadata["model_hash"] = model.fingerprint();
    grid.metadata["delta"] = delta;
    grid.metadata["instances"] = results.size();
    grid.metadata["degenerate_skipped"] = degenerate;
    grid.metadata["aggregation"] = options.absolute ? "mean_abs" : "mean";
}

void require_nonempty(std::span<const DiagnosticInstance> dataset) {
    if (dataset.empty()) throw Error(Errc::ingestion, "cannot sweep an empty dataset");
}

}  // namespace

std::string to_csv(const HeatmapGrid& grid, std::span<const std::string> comment_lines) {
    std::string out;
    for (const auto& line : comment_lines) out += fmt::format("# {}\n", line);
    out += "row,col,value,count\n";
    for (std::size_t r = 0; r < grid.rows(); ++r) {
        for (std::size_t c = 0; c < grid.cols(); ++c) {
            const auto v = grid.value(r, c);
            out += fmt::format("{},{},{},{}\n", grid.row_labels[r], grid.col_labels[c],
                               v ? fmt::format("{:.17g}", *v) : std::string("empty"), grid.count(r, c));
        }
    }
    return out;
}

nlohmann::ordered_json to_json(const HeatmapGrid& grid) {
    nlohmann::ordered_json j;
    j["site_kind"] = grid.site_kind;
    j["rows"] = grid.row_labels;
    j["cols"] = grid.col_labels;
    auto values = nlohmann::ordered_json::array();
    auto counts = nlohmann::ordered_json::array();
    for (std::size_t r = 0; r < grid.rows(); ++r) {
        auto vrow = nlohmann::ordered_json::array();
        auto crow = nlohmann::ordered_json::array();
        for (std::size_t c = 0; c < grid.cols(); ++c) {
            const auto v = grid.value(r, c);
            vrow.push_back(v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr));
            crow.push_back(grid.count(r, c));
        }
        values.push_back(std::move(vrow));
        counts.push_back(std::move(crow));
    }
    j["values"] = std::move(values);
    j["counts"] = std::move(counts);
    j["metadata"] = grid.metadata;
    return j;
}

PreparedInstance prepare_instance(const Tokenizer& tokenizer, const DiagnosticInstance& instance) {
    PreparedInstance p;
    p.query = tokenizer.tokenize(instance.query_text);
    p.baseline = tokenizer.tokenize(instance.baseline_text);
    p.perturbed = tokenizer.tokenize(instance.perturbed_text);
    if (p.baseline.size() != p.perturbed.size()) {
        throw Error(Errc::alignment, fmt::format("instance ({}, {}) has {} baseline vs {} perturbed positions",
                                                 instance.query_id, instance.doc_id, p.baseline.size(),
                                                 p.perturbed.size()));
    }
    p.classes = classify_tokens(instance, instance.query_text, tokenizer);
    return p;
}

HeatmapGrid block_sweep(const Model& model, const Tokenizer& tokenizer, std::span<const DiagnosticInstance> dataset,
                        SiteKind site_kind, const SweepOptions& options) {
    require_nonempty(dataset);
    if (site_kind == SiteKind::head_out) throw Error(Errc::spec, "block sweeps take residual or sublayer sites");
    const auto& config = model.config();
    std::vector<std::string> cols;
    for (auto c : kAllTokenClasses) cols.emplace_back(to_string(c));
    auto grid = empty_grid(std::string(to_string(site_kind)), config.num_layers, std::move(cols));
    const auto taps = all_sites(config, site_kind);

    auto results = parallel_map(dataset.size(), options.workers, [&](std::size_t i) {
        auto prepared = prepare_instance(tokenizer, dataset[i]);
        PatchSession session(model, prepared.query, std::move(prepared.baseline), std::move(prepared.perturbed), taps,
                             options.delta);
        SweepResult out;
        if (session.degenerate()) {
            out.degenerate = true;
            return out;
        }
        for (std::size_t c = 0; c < kNumTokenClasses; ++c) {
            std::vector<std::size_t> positions;
            for (std::size_t p = 0; p < prepared.classes.size(); ++p) {
                if (prepared.classes[p] == kAllTokenClasses[c]) positions.push_back(p);
            }
            if (positions.empty()) continue;
            for (std::size_t l = 0; l < config.num_layers; ++l) {
                const PatchSpec patch{{site_kind, l, std::nullopt}, positions};
                const auto outcome = session.outcome({&patch, 1});
                out.cells.emplace_back(l * kNumTokenClasses + c, *outcome.normalized);
            }
        }
        std::sort(out.cells.begin(), out.cells.end());
        return out;
    });
    reduce(grid, results, model, options);
    return grid;
}

HeatmapGrid head_sweep(const Model& model, const Tokenizer& tokenizer, std::span<const DiagnosticInstance> dataset,
                       const SweepOptions& options) {
    require_nonempty(dataset);
    const auto& config = model.config();
    std::vector<std::string> cols;
    for (std::size_t h = 0; h < config.num_heads; ++h) cols.push_back(std::to_string(h));
    auto grid = empty_grid(std::string(to_string(SiteKind::head_out)), config.num_layers, std::move(cols));
    const auto taps = all_sites(config, SiteKind::head_out);

    auto results = parallel_map(dataset.size(), options.workers, [&](std::size_t i) {
        const auto& instance = dataset[i];
        const auto query = tokenizer.tokenize(instance.query_text);
        PatchSession session(model, query, tokenizer.tokenize(instance.baseline_text),
                             tokenizer.tokenize(instance.perturbed_text), taps, options.delta);
        SweepResult out;
        if (session.degenerate()) {
            out.degenerate = true;
            return out;
        }
        std::vector<std::size_t> all(session.baseline().size());
        for (std::size_t p = 0; p < all.size(); ++p) all[p] = p;
        for (std::size_t l = 0; l < config.num_layers; ++l) {
            for (std::size_t h = 0; h < config.num_heads; ++h) {
                const PatchSpec patch{{SiteKind::head_out, l, h}, all};
                out.cells.emplace_back(l * config.num_heads + h, *session.outcome({&patch, 1}).normalized);
            }
        }
        return out;
    });
    reduce(grid, results, model, options);
    return grid;
}

std::vector<double> baseline_scores(const Model& model, const Tokenizer& tokenizer,
                                    std::span<const DiagnosticInstance> dataset, std::size_t workers) {
    return parallel_map(dataset.size(), workers, [&](std::size_t i) {
        return relevance_score(model, tokenizer.tokenize(dataset[i].query_text),
                               tokenizer.tokenize(dataset[i].baseline_text));
    });
}

RankSplit split_by_rank(std::span<const DiagnosticInstance> dataset, std::span<const double> scores,
                        double fraction) {
    if (!(fraction > 0.0 && fraction <= 0.5)) throw Error(Errc::config, "split fraction must be in (0, 0.5]");
    if (scores.size() != dataset.size()) throw Error(Errc::alignment, "one score per instance is required");

    // Absorbs representation error such as 0.1 * 100 = 10.000000000000002.
    auto ceil_tol = [](double v) { return static_cast<std::size_t>(std::ceil(v - 1e-9)); };
    const auto min_docs = ceil_tol(1.0 / fraction);

    std::map<std::string, std::vector<std::size_t>> by_query;
    for (std::size_t i = 0; i < dataset.size(); ++i) by_query[dataset[i].query_id].push_back(i);

    RankSplit split;
    split.fraction = fraction;
    for (auto& [query_id, idx] : by_query) {
        const auto n = idx.size();
        const auto m = ceil_tol(fraction * static_cast<double>(n));
        if (n < min_docs || 2 * m > n) {
            throw Error(Errc::domain, fmt::format("query '{}' has {} documents; a {} split needs at least {}", query_id,
                                                  n, fraction, std::max(min_docs, 2 * m)));
        }
        std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
            if (scores[a] != scores[b]) return scores[a] > scores[b];
            return dataset[a].doc_id < dataset[b].doc_id;
        });
        split.top.insert(split.top.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(m));
        split.bottom.insert(split.bottom.end(), idx.end() - static_cast<std::ptrdiff_t>(m), idx.end());
    }
    std::sort(split.top.begin(), split.top.end());
    std::sort(split.bottom.begin(), split.bottom.end());
    return split;
}

ClassDistribution attention_to_classes(const Model& model, const Tokenizer& tokenizer,
                                       const DiagnosticInstance& instance, std::size_t layer, std::size_t head,
                                       TokenClass source) {
    validate_site(model.config(), {SiteKind::head_out, layer, head});
    const auto prepared = prepare_instance(tokenizer, instance);
    std::vector<std::size_t> rows;
    for (std::size_t p = 0; p < prepared.classes.size(); ++p) {
        if (prepared.classes[p] == source) rows.push_back(p);
    }
    if (rows.empty()) {
        throw Error(Errc::domain, fmt::format("instance ({}, {}) has no {} tokens", instance.query_id, instance.doc_id,
                                              to_string(source)));
    }
    EncodeOptions options;
    options.attention_probs = true;
    const auto result = encode(model, prepared.perturbed, {}, options);
    const Matrix& probs = result.attention.at(layer * model.config().num_heads + head);

    const std::size_t n = prepared.perturbed.size();
    std::vector<double> mean_row(n, 0.0);
    for (auto r : rows) {
        for (std::size_t j = 0; j < n; ++j) mean_row[j] += probs(r, j);
    }
    ClassDistribution dist{};
    for (std::size_t j = 0; j < n; ++j) {
        dist[static_cast<std::size_t>(prepared.classes[j])] += mean_row[j] / static_cast<double>(rows.size());
    }
    return dist;
}

}  // namespace tfpatch
