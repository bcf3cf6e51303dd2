#pragma once

#include <span>
#include <string>

#include "tfpatch/corpus.hpp"

namespace tfpatch {

struct Bm25Params {
    double k1 = 1.2;
    double b = 0.75;
};

/// ln((N - df + 0.5) / (df + 0.5) + 1), always positive.
double bm25_idf(std::size_t df, std::size_t num_docs);

/// Okapi BM25 of a document against query terms, using collection statistics
/// fixed at ingestion time. Each query term contributes
/// idf * tf (k1 + 1) / (tf + k1 (1 - b + b dl / avgdl)).
/// Throws Errc::empty_corpus for empty statistics.
double bm25_score(std::span<const std::string> query_terms, std::span<const std::string> doc_terms,
                  const CorpusStats& stats, Bm25Params params = {});

}  // namespace tfpatch
