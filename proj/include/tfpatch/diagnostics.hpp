#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tfpatch/corpus.hpp"
#include "tfpatch/instance.hpp"
#include "tfpatch/scorer.hpp"
#include "tfpatch/tokenizer.hpp"

namespace tfpatch {

enum class InjectSide { append, prepend };

struct PerturbationSpec {
    PerturbationKind kind = PerturbationKind::tfc1_inject_append;
    std::size_t k = 0;  // tfc2_inject only
};

// Perturbations. Each returns an instance with empty query/doc ids; the
// baseline and perturbed texts always tokenize to the same length. A term that
// splits into t subword tokens is balanced by t filler tokens. Texts that no
// longer fit in max_positions throw Errc::length.

/// perturbed = doc + term (or term + doc); baseline = doc + t fillers at the same end.
DiagnosticInstance perturb_tfc1_inject(std::string_view doc, std::string_view term, InjectSide side,
                                       const Tokenizer& tokenizer);

/// baseline = doc; perturbed = doc with every occurrence of term replaced by
/// t fillers. Sets no_op when the term does not occur.
DiagnosticInstance perturb_tfc1_replace(std::string_view doc, std::string_view term, const Tokenizer& tokenizer);

/// baseline = doc + k copies of term + t fillers; perturbed = doc + (k + 1) copies.
DiagnosticInstance perturb_tfc2(std::string_view doc, std::string_view term, std::size_t k,
                                const Tokenizer& tokenizer);

DiagnosticInstance perturb(std::string_view doc, std::string_view term, const PerturbationSpec& spec,
                           const Tokenizer& tokenizer);

/// Token class of every position of the perturbed document. Positions touched
/// by the perturbation are tok_inj; subword positions take the class of their
/// word. Throws Errc::classification when the instance is inconsistent.
std::vector<TokenClass> classify_tokens(const DiagnosticInstance& instance, std::string_view query_text,
                                        const Tokenizer& tokenizer);

/// The fixed stopword list excluded from term selection.
std::span<const std::string_view> stopwords() noexcept;

/// Distinct query words minus stopwords and the filler, in first-seen order.
std::vector<std::string> candidate_terms(std::string_view query, TokenizerMode mode);

struct RankedDoc {
    std::string doc_id;
    double score = 0.0;

    friend bool operator==(const RankedDoc&, const RankedDoc&) = default;
};

/// Top-k documents by descending score, ties by ascending doc_id.
/// Throws Errc::empty_corpus for an empty corpus and Errc::config for k == 0.
std::vector<RankedDoc> rank_documents(const Scorer& scorer, std::string_view query, const Corpus& corpus,
                                      std::size_t k);

struct TermChoice {
    std::string term;
    double mean_delta = 0.0;  // mean of score(perturbed) - score(baseline)
};

/// Mean delta oriented so that larger means a bigger change in the direction
/// the perturbation is expected to move the score (down for replacements).
double selection_key(PerturbationKind kind, double mean_delta) noexcept;

/// Picks the candidate term whose perturbation changes the score most on
/// average over `docs` (by selection_key); ties go to the lexicographically
/// smaller term. Documents that overflow max_positions after perturbation are
/// skipped. Throws Errc::selection when no candidate survives filtering.
TermChoice select_term(std::string_view query, std::span<const std::string> docs, const Scorer& scorer,
                       const PerturbationSpec& spec, const Tokenizer& tokenizer);

struct QuerySelection {
    Query query;
    TermChoice choice;
    std::vector<RankedDoc> docs;
};

struct SelectionOptions {
    PerturbationSpec spec;
    std::size_t top_k = 100;
    std::size_t num_queries = 100;
    std::size_t workers = 1;
};

/// Retrieves top_k documents per query with `retrieval`, selects each query's
/// term under `scorer`, and keeps the num_queries queries with the largest
/// selection_key (ties by query_id). Queries without candidate terms are dropped.
std::vector<QuerySelection> select_queries(std::span<const Query> queries, const Corpus& corpus,
                                           const Scorer& retrieval, const Scorer& scorer,
                                           const Tokenizer& tokenizer, const SelectionOptions& options);

struct GenerationStats {
    std::size_t instances = 0;
    std::size_t no_op = 0;
    std::size_t skipped_length = 0;
};

/// One instance per (selected query, retrieved doc), ordered by (query_id, doc_id).
std::vector<DiagnosticInstance> build_instances(std::span<const QuerySelection> selections, const Corpus& corpus,
                                                const PerturbationSpec& spec, const Tokenizer& tokenizer,
                                                GenerationStats* stats = nullptr);

}  // namespace tfpatch
