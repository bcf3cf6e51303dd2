#include "tfpatch/patching.hpp"

#include <map>
#include <set>

#include <fmt/format.h>

#include "tfpatch/error.hpp"

namespace tfpatch {

namespace {

std::vector<SiteId> patched_sites(std::span<const PatchSpec> patches) {
    std::set<SiteId> sites;
    for (const auto& p : patches) sites.insert(p.site);
    return {sites.begin(), sites.end()};
}

void require_same_length(std::size_t baseline, std::size_t other, std::string_view what) {
    if (baseline != other) {
        throw Error(Errc::alignment,
                    fmt::format("baseline document has {} positions but {} has {}", baseline, what, other));
    }
}

}  // namespace

ScoredCapture capture_run(const Model& model, const TokenizedText& query, const TokenizedText& doc,
                          std::span<const SiteId> taps) {
    const auto q = encode(model, query);
    auto d = encode(model, doc, taps);
    return {dot(q.pooled, d.pooled), std::move(d.cache)};
}

void validate_patches(const ModelConfig& config, std::span<const PatchSpec> patches, std::size_t source_len) {
    std::map<SiteId, std::set<std::size_t>> claimed;
    for (const auto& patch : patches) {
        validate_site(config, patch.site);
        auto& used = claimed[patch.site];
        for (std::size_t i = 0; i < patch.positions.size(); ++i) {
            const auto p = patch.positions[i];
            if (p >= source_len) {
                throw Error(Errc::spec, fmt::format("patch position {} outside [0, {}) at {}", p, source_len,
                                                    to_string(patch.site)));
            }
            if (i > 0 && p <= patch.positions[i - 1]) {
                throw Error(Errc::spec, fmt::format("patch positions at {} must be strictly increasing",
                                                    to_string(patch.site)));
            }
            if (!used.insert(p).second) {
                throw Error(Errc::spec, fmt::format("overlapping patches at {} position {}", to_string(patch.site), p));
            }
        }
    }
}

double patched_run(const Model& model, const TokenizedText& query, const TokenizedText& doc_baseline,
                   const ActivationCache& cache, std::span<const PatchSpec> patches) {
    require_same_length(doc_baseline.size(), cache.source_len, "the cached run");
    validate_patches(model.config(), patches, cache.source_len);
    const auto q = encode(model, query);
    const auto d = encode_patched(model, doc_baseline, {}, cache, patches);
    return dot(q.pooled, d.pooled);
}

PatchSession::PatchSession(const Model& model, const TokenizedText& query, TokenizedText baseline,
                           TokenizedText perturbed, std::span<const SiteId> taps, double delta)
    : model_(&model), baseline_(std::move(baseline)), perturbed_(std::move(perturbed)), delta_(delta) {
    require_same_length(baseline_.size(), perturbed_.size(), "the perturbed document");
    query_pooled_ = encode(model, query).pooled;
    baseline_score_ = dot(query_pooled_, encode(model, baseline_).pooled);
    auto captured = encode(model, perturbed_, taps);
    perturbed_score_ = dot(query_pooled_, captured.pooled);
    cache_ = std::move(captured.cache);
    degenerate_ = !normalized_score(baseline_score_, perturbed_score_, baseline_score_, delta_).has_value();
}

double PatchSession::patched_score(std::span<const PatchSpec> patches) const {
    validate_patches(model_->config(), patches, cache_.source_len);
    if (patches.empty()) return baseline_score_;
    return dot(query_pooled_, encode_patched(*model_, baseline_, {}, cache_, patches).pooled);
}

PatchOutcome PatchSession::outcome(std::span<const PatchSpec> patches) const {
    PatchOutcome out;
    out.baseline_score = baseline_score_;
    out.perturbed_score = perturbed_score_;
    out.patched_score = patched_score(patches);
    out.normalized = normalized_score(baseline_score_, perturbed_score_, out.patched_score, delta_);
    out.degenerate = !out.normalized.has_value();
    return out;
}

PatchOutcome three_run(const Model& model, const TokenizedText& query, const TokenizedText& baseline,
                       const TokenizedText& perturbed, std::span<const PatchSpec> patches, double delta) {
    require_same_length(baseline.size(), perturbed.size(), "the perturbed document");
    validate_patches(model.config(), patches, baseline.size());
    const auto taps = patched_sites(patches);
    PatchSession session(model, query, baseline, perturbed, taps, delta);
    return session.outcome(patches);
}

PatchOutcome three_run(const Model& model, const Tokenizer& tokenizer, const DiagnosticInstance& instance,
                       std::span<const PatchSpec> patches, double delta) {
    const auto query = tokenizer.tokenize(instance.query_text);
    const auto baseline = tokenizer.tokenize(instance.baseline_text);
    const auto perturbed = tokenizer.tokenize(instance.perturbed_text);
    return three_run(model, query, baseline, perturbed, patches, delta);
}

}  // namespace tfpatch
