#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "tfpatch/encoder.hpp"
#include "tfpatch/instance.hpp"
#include "tfpatch/metric.hpp"

namespace tfpatch {

struct ScoredCapture {
    double score = 0.0;
    ActivationCache cache;
};

/// Perturbed run: score the document and keep the requested activations.
ScoredCapture capture_run(const Model& model, const TokenizedText& query, const TokenizedText& doc,
                          std::span<const SiteId> taps);

/// Checks sites, position ranges, ordering, and that no two patches touch the
/// same (site, position). Throws Errc::spec.
void validate_patches(const ModelConfig& config, std::span<const PatchSpec> patches, std::size_t source_len);

/// Patched run: forward pass over the baseline document with the patched rows
/// taken from `cache`. Throws Errc::alignment when the document length differs
/// from cache.source_len.
double patched_run(const Model& model, const TokenizedText& query, const TokenizedText& doc_baseline,
                   const ActivationCache& cache, std::span<const PatchSpec> patches);

struct PatchOutcome {
    double baseline_score = 0.0;
    double perturbed_score = 0.0;
    double patched_score = 0.0;
    std::optional<double> normalized;  // unset iff degenerate
    bool degenerate = false;
};

/// Baseline and perturbed runs done once; any number of patched runs after.
/// The query is encoded once and never patched.
class PatchSession {
  public:
    /// `taps` must cover every site later patched. Throws Errc::alignment if
    /// the two documents differ in length.
    PatchSession(const Model& model, const TokenizedText& query, TokenizedText baseline, TokenizedText perturbed,
                 std::span<const SiteId> taps, double delta = kDefaultDegeneracyDelta);

    double baseline_score() const noexcept { return baseline_score_; }
    double perturbed_score() const noexcept { return perturbed_score_; }
    bool degenerate() const noexcept { return degenerate_; }
    const ActivationCache& cache() const noexcept { return cache_; }
    const TokenizedText& baseline() const noexcept { return baseline_; }
    const TokenizedText& perturbed() const noexcept { return perturbed_; }

    double patched_score(std::span<const PatchSpec> patches) const;
    PatchOutcome outcome(std::span<const PatchSpec> patches) const;

  private:
    const Model* model_;
    std::vector<float> query_pooled_;
    TokenizedText baseline_;
    TokenizedText perturbed_;
    ActivationCache cache_;
    double baseline_score_ = 0.0;
    double perturbed_score_ = 0.0;
    double delta_;
    bool degenerate_ = false;
};

/// Baseline run, perturbed run with capture, patched run, then the normalized
/// score. Degenerate instances are flagged, not thrown.
PatchOutcome three_run(const Model& model, const TokenizedText& query, const TokenizedText& baseline,
                       const TokenizedText& perturbed, std::span<const PatchSpec> patches,
                       double delta = kDefaultDegeneracyDelta);

PatchOutcome three_run(const Model& model, const Tokenizer& tokenizer, const DiagnosticInstance& instance,
                       std::span<const PatchSpec> patches, double delta = kDefaultDegeneracyDelta);

}  // namespace tfpatch
