#include <algorithm>
#include <array>
#include <cctype>
#include <numeric>
#include <optional>
#include <tuple>

#include <fmt/format.h>

#include "tfpatch/diagnostics.hpp"
#include "tfpatch/error.hpp"
#include "tfpatch/parallel.hpp"

namespace tfpatch {

namespace {

constexpr std::array<std::string_view, 30> kStopwords = {
    "a",  "an", "and", "are",  "as",   "at",   "be",  "by",   "for", "from",
    "has", "he", "in",  "is",   "it",   "its",  "of",  "on",   "that", "the",
    "to", "was", "were", "will", "with", "what", "how", "who", "which", "does"};

bool by_score_then_id(const RankedDoc& a, const RankedDoc& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.doc_id < b.doc_id;
}

}  // namespace

double selection_key(PerturbationKind kind, double mean_delta) noexcept {
    return kind == PerturbationKind::tfc1_replace ? -mean_delta : mean_delta;
}

std::span<const std::string_view> stopwords() noexcept { return kStopwords; }

std::vector<std::string> candidate_terms(std::string_view query, TokenizerMode mode) {
    std::vector<std::string> out;
    for (auto& w : split_words(query, mode)) {
        if (w == kFillerToken) continue;
        if (std::find(kStopwords.begin(), kStopwords.end(), w) != kStopwords.end()) continue;
        // Bare punctuation is never a useful term.
        if (w.size() == 1 && !std::isalnum(static_cast<unsigned char>(w[0]))) continue;
        if (std::find(out.begin(), out.end(), w) == out.end()) out.push_back(std::move(w));
    }
    return out;
}

std::vector<RankedDoc> rank_documents(const Scorer& scorer, std::string_view query, const Corpus& corpus,
                                      std::size_t k) {
    if (k == 0) throw Error(Errc::config, "rank_documents needs k >= 1");
    if (corpus.empty()) throw Error(Errc::empty_corpus, "cannot rank an empty corpus");
    std::vector<RankedDoc> all;
    all.reserve(corpus.size());
    for (const auto& [id, text] : corpus.docs()) all.push_back({id, scorer(query, text)});
    const auto keep = std::min(k, all.size());
    std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(keep), all.end(), by_score_then_id);
    all.resize(keep);
    return all;
}

TermChoice select_term(std::string_view query, std::span<const std::string> docs, const Scorer& scorer,
                       const PerturbationSpec& spec, const Tokenizer& tokenizer) {
    auto candidates = candidate_terms(query, tokenizer.mode());
    if (candidates.empty()) {
        throw Error(Errc::selection, fmt::format("query '{}' has no candidate terms after stopword filtering", query));
    }
    std::sort(candidates.begin(), candidates.end());

    std::optional<TermChoice> best;
    for (const auto& term : candidates) {
        double total = 0.0;
        std::size_t used = 0;
        for (const auto& doc : docs) {
            DiagnosticInstance in;
            try {
                in = perturb(doc, term, spec, tokenizer);
            } catch (const Error& e) {
                if (e.code() == Errc::length) continue;
                throw;
            }
            total += scorer(query, in.perturbed_text) - scorer(query, in.baseline_text);
            ++used;
        }
        const double mean = used == 0 ? 0.0 : total / static_cast<double>(used);
        // Candidates are visited in lexicographic order, so strict '>' keeps the smaller term on ties.
        if (!best || selection_key(spec.kind, mean) > selection_key(spec.kind, best->mean_delta)) {
            best = TermChoice{term, mean};
        }
    }
    return *best;
}

std::vector<QuerySelection> select_queries(std::span<const Query> queries, const Corpus& corpus,
                                           const Scorer& retrieval, const Scorer& scorer,
                                           const Tokenizer& tokenizer, const SelectionOptions& options) {
    if (options.num_queries > queries.size()) {
        throw Error(Errc::config, fmt::format("asked for {} queries but only {} are available", options.num_queries,
                                              queries.size()));
    }
    auto per_query = parallel_map(queries.size(), options.workers, [&](std::size_t i) -> std::optional<QuerySelection> {
        const auto& q = queries[i];
        if (candidate_terms(q.text, tokenizer.mode()).empty()) return std::nullopt;
        QuerySelection sel;
        sel.query = q;
        sel.docs = rank_documents(retrieval, q.text, corpus, options.top_k);
        std::vector<std::string> texts;
        texts.reserve(sel.docs.size());
        for (const auto& d : sel.docs) texts.push_back(corpus.text(d.doc_id));
        sel.choice = select_term(q.text, texts, scorer, options.spec, tokenizer);
        return sel;
    });

    std::vector<QuerySelection> kept;
    for (auto& s : per_query) {
        if (s) kept.push_back(std::move(*s));
    }
    const auto kind = options.spec.kind;
    std::stable_sort(kept.begin(), kept.end(), [kind](const QuerySelection& a, const QuerySelection& b) {
        const double ka = selection_key(kind, a.choice.mean_delta);
        const double kb = selection_key(kind, b.choice.mean_delta);
        if (ka != kb) return ka > kb;
        return a.query.id < b.query.id;
    });
    if (kept.size() > options.num_queries) kept.resize(options.num_queries);
    return kept;
}

std::vector<DiagnosticInstance> build_instances(std::span<const QuerySelection> selections, const Corpus& corpus,
                                                const PerturbationSpec& spec, const Tokenizer& tokenizer,
                                                GenerationStats* stats) {
    GenerationStats local;
    std::vector<DiagnosticInstance> out;
    for (const auto& sel : selections) {
        for (const auto& d : sel.docs) {
            DiagnosticInstance in;
            try {
                in = perturb(corpus.text(d.doc_id), sel.choice.term, spec, tokenizer);
            } catch (const Error& e) {
                if (e.code() != Errc::length) throw;
                ++local.skipped_length;
                continue;
            }
            in.query_id = sel.query.id;
            in.query_text = sel.query.text;
            in.doc_id = d.doc_id;
            if (in.no_op) ++local.no_op;
            out.push_back(std::move(in));
        }
    }
    std::stable_sort(out.begin(), out.end(), [](const DiagnosticInstance& a, const DiagnosticInstance& b) {
        return std::tie(a.query_id, a.doc_id) < std::tie(b.query_id, b.doc_id);
    });
    local.instances = out.size();
    if (stats) *stats = local;
    return out;
}

}  // namespace tfpatch
