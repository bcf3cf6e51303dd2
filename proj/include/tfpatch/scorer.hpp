#pragma once

#include <functional>
#include <memory>
#include <string_view>

#include "tfpatch/bm25.hpp"
#include "tfpatch/corpus.hpp"
#include "tfpatch/model.hpp"
#include "tfpatch/tokenizer.hpp"

namespace tfpatch {

/// Relevance of a document text for a query text. Must be safe to call
/// concurrently.
using Scorer = std::function<double(std::string_view query, std::string_view doc)>;

/// BM25 over split_words terms with the corpus statistics frozen at
/// construction. The filler token never counts as a query term, so padding a
/// baseline document with fillers cannot raise its score.
Scorer make_bm25_scorer(const Corpus& corpus, Bm25Params params = {});

/// Bi-encoder dot product of the model's pooled embeddings.
Scorer make_neural_scorer(Model model, std::shared_ptr<const Tokenizer> tokenizer);

Scorer make_constant_scorer(double value);

}  // namespace tfpatch
