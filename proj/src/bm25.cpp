#include "tfpatch/bm25.hpp"

#include <cmath>
#include <unordered_map>

#include "tfpatch/error.hpp"

namespace tfpatch {

double bm25_idf(std::size_t df, std::size_t num_docs) {
    const auto n = static_cast<double>(num_docs);
    const auto f = static_cast<double>(df);
    return std::log((n - f + 0.5) / (f + 0.5) + 1.0);
}

double bm25_score(std::span<const std::string> query_terms, std::span<const std::string> doc_terms,
                  const CorpusStats& stats, Bm25Params params) {
    if (stats.num_docs == 0 || !(stats.avg_doc_length > 0.0)) {
        throw Error(Errc::empty_corpus, "BM25 needs a non-empty corpus");
    }
    std::unordered_map<std::string_view, std::size_t> tf;
    for (const auto& t : doc_terms) ++tf[t];
    const double norm =
        params.k1 * (1.0 - params.b + params.b * static_cast<double>(doc_terms.size()) / stats.avg_doc_length);

    double score = 0.0;
    for (const auto& term : query_terms) {
        auto it = tf.find(term);
        if (it == tf.end()) continue;
        const auto f = static_cast<double>(it->second);
        score += bm25_idf(stats.df(term), stats.num_docs) * f * (params.k1 + 1.0) / (f + norm);
    }
    return score;
}

}  // namespace tfpatch
