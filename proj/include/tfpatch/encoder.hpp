#pragma once

#include <compare>
#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tfpatch/matrix.hpp"
#include "tfpatch/model.hpp"
#include "tfpatch/tokenizer.hpp"

namespace tfpatch {

enum class SiteKind { resid_pre, resid_post, attn_out, mlp_out, head_out };

std::string_view to_string(SiteKind kind) noexcept;
SiteKind parse_site_kind(std::string_view text);

/// A patchable activation. `head` is set iff kind == head_out.
struct SiteId {
    SiteKind kind = SiteKind::resid_pre;
    std::size_t layer = 0;
    std::optional<std::size_t> head;

    friend auto operator<=>(const SiteId&, const SiteId&) = default;
};

std::string to_string(const SiteId& site);

/// Throws Errc::spec if the site does not exist in a model with this config.
void validate_site(const ModelConfig& config, const SiteId& site);

/// Every site of `kind` across all layers (and heads, for head_out).
std::vector<SiteId> all_sites(const ModelConfig& config, SiteKind kind);

/// Per-position activations captured during a forward pass. Residual and
/// sublayer sites are positions x model_dim; head_out is positions x head_dim.
struct ActivationCache {
    std::map<SiteId, Matrix> entries;
    std::size_t source_len = 0;

    bool contains(const SiteId& site) const { return entries.contains(site); }
    const Matrix& at(const SiteId& site) const;
};

/// Overwrite the rows at `positions` of `site` with rows from a source cache.
struct PatchSpec {
    SiteId site;
    std::vector<std::size_t> positions;
};

struct EncodeOptions {
    /// Record softmax probabilities for every (layer, head).
    bool attention_probs = false;
    /// Record LayerNorm outputs before the affine scale and shift.
    bool norm_debug = false;
    /// Keys holding this id get an additive -1e9 score. Unset: nothing is masked.
    std::optional<TokenId> pad_id;
};

struct EncodeResult {
    std::vector<float> pooled;
    ActivationCache cache;
    /// Indexed layer * num_heads + head; positions x positions.
    std::vector<Matrix> attention;
    /// Pre-affine LayerNorm outputs in evaluation order.
    std::vector<Matrix> normalized;
};

EncodeResult encode(const Model& model, const TokenizedText& tokens, std::span<const SiteId> taps = {},
                    const EncodeOptions& options = {});

/// Forward pass where each patched site has the listed rows replaced by the
/// matching rows of `source` as soon as the site is written. Taps record the
/// value after patching. Validation of the patch set is the caller's job
/// (see patching.hpp); this only checks that the source holds each site.
EncodeResult encode_patched(const Model& model, const TokenizedText& tokens, std::span<const SiteId> taps,
                            const ActivationCache& source, std::span<const PatchSpec> patches,
                            const EncodeOptions& options = {});

/// Dot product with a double accumulator.
double dot(std::span<const float> a, std::span<const float> b) noexcept;

/// Bi-encoder relevance: dot(pooled(query), pooled(doc)).
double relevance_score(const Model& model, const TokenizedText& query, const TokenizedText& doc);

}  // namespace tfpatch
