#include "tfpatch/scorer.hpp"

#include <algorithm>

#include "tfpatch/encoder.hpp"
#include "tfpatch/error.hpp"

namespace tfpatch {

Scorer make_bm25_scorer(const Corpus& corpus, Bm25Params params) {
    if (corpus.empty()) throw Error(Errc::empty_corpus, "BM25 scorer needs a non-empty corpus");
    auto stats = std::make_shared<const CorpusStats>(corpus.stats());
    const auto mode = corpus.mode();
    return [stats, mode, params](std::string_view query, std::string_view doc) {
        auto q = split_words(query, mode);
        std::erase(q, std::string(kFillerToken));
        const auto d = split_words(doc, mode);
        return bm25_score(q, d, *stats, params);
    };
}

Scorer make_neural_scorer(Model model, std::shared_ptr<const Tokenizer> tokenizer) {
    return [model = std::move(model), tokenizer = std::move(tokenizer)](std::string_view query, std::string_view doc) {
        return relevance_score(model, tokenizer->tokenize(query), tokenizer->tokenize(doc));
    };
}

Scorer make_constant_scorer(double value) {
    return [value](std::string_view, std::string_view) { return value; };
}

}  // namespace tfpatch
