#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "tfpatch/tokenizer.hpp"

namespace tfpatch {

struct CorpusStats {
    std::size_t num_docs = 0;
    double avg_doc_length = 0.0;  // in terms, see split_words
    std::unordered_map<std::string, std::size_t> doc_freq;

    std::size_t df(const std::string& term) const {
        auto it = doc_freq.find(term);
        return it == doc_freq.end() ? 0 : it->second;
    }
};

/// Documents keyed (and iterated) by ascending doc_id, plus collection statistics.
class Corpus {
  public:
    Corpus() = default;
    /// Throws Errc::ingestion on a duplicate id.
    Corpus(std::vector<std::pair<std::string, std::string>> docs, TokenizerMode mode);

    const std::map<std::string, std::string>& docs() const noexcept { return docs_; }
    const CorpusStats& stats() const noexcept { return stats_; }
    TokenizerMode mode() const noexcept { return mode_; }
    std::size_t size() const noexcept { return docs_.size(); }
    bool empty() const noexcept { return docs_.empty(); }
    const std::string& text(const std::string& doc_id) const;

  private:
    std::map<std::string, std::string> docs_;
    CorpusStats stats_;
    TokenizerMode mode_ = TokenizerMode::wordpiece;
};

/// TSV (`doc_id<TAB>text`) or JSONL (`{"doc_id": ..., "text": ...}`), detected
/// from the first non-blank line. Errors carry the 1-based line number.
Corpus ingest_corpus(const std::filesystem::path& path, TokenizerMode mode);

struct Query {
    std::string id;
    std::string text;
};

/// TSV `query_id<TAB>text`, in file order.
std::vector<Query> read_queries(const std::filesystem::path& path);

}  // namespace tfpatch
