#include "tfpatch/corpus.hpp"

#include <fstream>
#include <optional>
#include <set>

#include <fmt/format.h>
#include <json.hpp>

#include "tfpatch/error.hpp"

namespace tfpatch {

namespace {

bool blank(const std::string& line) { return line.find_first_not_of(" \t\r\n") == std::string::npos; }

void strip_cr(std::string& line) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
}

std::pair<std::string, std::string> split_tsv(const std::string& line, const std::filesystem::path& path,
                                              std::size_t line_no) {
    auto tab = line.find('\t');
    if (tab == std::string::npos || tab == 0) {
        throw Error(Errc::ingestion, fmt::format("{}:{}: expected 'id<TAB>text'", path.string(), line_no));
    }
    return {line.substr(0, tab), line.substr(tab + 1)};
}

}  // namespace

Corpus::Corpus(std::vector<std::pair<std::string, std::string>> docs, TokenizerMode mode) : mode_(mode) {
    std::size_t total_terms = 0;
    for (auto& [id, text] : docs) {
        auto terms = split_words(text, mode_);
        total_terms += terms.size();
        std::set<std::string> unique(terms.begin(), terms.end());
        for (const auto& t : unique) ++stats_.doc_freq[t];
        if (!docs_.emplace(id, std::move(text)).second) {
            throw Error(Errc::ingestion, fmt::format("duplicate doc_id '{}'", id));
        }
    }
    stats_.num_docs = docs_.size();
    stats_.avg_doc_length =
        docs_.empty() ? 0.0 : static_cast<double>(total_terms) / static_cast<double>(docs_.size());
}

const std::string& Corpus::text(const std::string& doc_id) const {
    auto it = docs_.find(doc_id);
    if (it == docs_.end()) throw Error(Errc::ingestion, fmt::format("unknown doc_id '{}'", doc_id));
    return it->second;
}

Corpus ingest_corpus(const std::filesystem::path& path, TokenizerMode mode) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(Errc::io, fmt::format("cannot open corpus '{}'", path.string()));

    std::vector<std::pair<std::string, std::string>> docs;
    std::set<std::string> seen;
    std::string line;
    std::size_t line_no = 0;
    std::optional<bool> jsonl;
    while (std::getline(in, line)) {
        ++line_no;
        strip_cr(line);
        if (blank(line)) continue;
        if (!jsonl) jsonl = line[line.find_first_not_of(" \t")] == '{';

        std::pair<std::string, std::string> doc;
        if (*jsonl) {
            try {
                auto j = nlohmann::json::parse(line);
                doc = {j.at("doc_id").get<std::string>(), j.at("text").get<std::string>()};
            } catch (const nlohmann::json::exception& e) {
                throw Error(Errc::ingestion, fmt::format("{}:{}: {}", path.string(), line_no, e.what()));
            }
        } else {
            doc = split_tsv(line, path, line_no);
        }
        if (!seen.insert(doc.first).second) {
            throw Error(Errc::ingestion,
                        fmt::format("{}:{}: duplicate doc_id '{}'", path.string(), line_no, doc.first));
        }
        docs.push_back(std::move(doc));
    }
    return Corpus(std::move(docs), mode);
}

std::vector<Query> read_queries(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(Errc::io, fmt::format("cannot open queries '{}'", path.string()));
    std::vector<Query> queries;
    std::set<std::string> seen;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        strip_cr(line);
        if (blank(line)) continue;
        auto [id, text] = split_tsv(line, path, line_no);
        if (!seen.insert(id).second) {
            throw Error(Errc::ingestion, fmt::format("{}:{}: duplicate query_id '{}'", path.string(), line_no, id));
        }
        queries.push_back({std::move(id), std::move(text)});
    }
    return queries;
}

}  // namespace tfpatch
