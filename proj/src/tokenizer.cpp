#include "tfpatch/tokenizer.hpp"

#include <fstream>

#include <fmt/format.h>

#include "tfpatch/error.hpp"

namespace tfpatch {

namespace {

constexpr std::size_t kMaxWordChars = 100;

bool is_space(unsigned char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }

bool is_punct(unsigned char c) {
    return (c >= 33 && c <= 47) || (c >= 58 && c <= 64) || (c >= 91 && c <= 96) || (c >= 123 && c <= 126);
}

bool is_continuation_byte(unsigned char c) { return (c & 0xC0U) == 0x80U; }

}  // namespace

std::string_view to_string(TokenizerMode mode) noexcept {
    return mode == TokenizerMode::wordpiece ? "wordpiece" : "whitespace";
}

TokenizerMode parse_tokenizer_mode(std::string_view text) {
    if (text == "wordpiece") return TokenizerMode::wordpiece;
    if (text == "whitespace") return TokenizerMode::whitespace;
    throw Error(Errc::config, fmt::format("unknown tokenizer mode '{}'", text));
}

Vocabulary::Vocabulary(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
    index_.reserve(tokens_.size());
    for (std::size_t i = 0; i < tokens_.size(); ++i) {
        auto [it, inserted] = index_.emplace(tokens_[i], static_cast<TokenId>(i));
        if (!inserted) {
            throw Error(Errc::config, fmt::format("duplicate vocabulary token '{}' at line {}", tokens_[i], i));
        }
    }
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(Errc::io, fmt::format("cannot open vocabulary '{}'", path.string()));
    std::vector<std::string> tokens;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        tokens.push_back(line);
    }
    return Vocabulary(std::move(tokens));
}

void Vocabulary::save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(Errc::io, fmt::format("cannot write vocabulary '{}'", path.string()));
    for (const auto& t : tokens_) out << t << '\n';
}

std::optional<TokenId> Vocabulary::find(std::string_view token) const {
    auto it = index_.find(std::string(token));
    if (it == index_.end()) return std::nullopt;
    return it->second;
}

std::vector<std::string> split_words(std::string_view text, TokenizerMode mode) {
    std::vector<std::string> words;
    std::string current;
    auto flush = [&] {
        if (!current.empty()) words.push_back(std::move(current));
        current.clear();
    };
    for (char ch : text) {
        auto c = static_cast<unsigned char>(ch);
        if (is_space(c)) {
            flush();
        } else if (mode == TokenizerMode::wordpiece && is_punct(c)) {
            flush();
            words.emplace_back(1, ch);
        } else if (mode == TokenizerMode::wordpiece && c >= 'A' && c <= 'Z') {
            current.push_back(static_cast<char>(c - 'A' + 'a'));
        } else {
            current.push_back(ch);
        }
    }
    flush();
    return words;
}

Tokenizer::Tokenizer(Vocabulary vocab, TokenizerMode mode, std::size_t max_positions)
    : vocab_(std::move(vocab)), mode_(mode), max_positions_(max_positions) {
    if (vocab_.empty()) throw Error(Errc::config, "vocabulary is empty");
    auto require = [&](std::string_view name) {
        auto id = vocab_.find(name);
        if (!id) throw Error(Errc::config, fmt::format("vocabulary lacks required token '{}'", name));
        return *id;
    };
    cls_ = require(kClsToken);
    sep_ = require(kSepToken);
    pad_ = require(kPadToken);
    unk_ = require(kUnkToken);
    filler_ = require(kFillerToken);
    if (max_positions_ < 2) throw Error(Errc::config, "max_positions must leave room for [CLS] and [SEP]");
}

std::vector<TokenId> Tokenizer::segment_word(std::string_view word) const {
    if (mode_ == TokenizerMode::whitespace) {
        return {vocab_.find(word).value_or(unk_)};
    }
    if (word.size() > kMaxWordChars) return {unk_};

    std::vector<TokenId> out;
    std::size_t start = 0;
    std::string candidate;
    while (start < word.size()) {
        std::size_t end = word.size();
        std::optional<TokenId> match;
        while (end > start) {
            // Never cut inside a UTF-8 sequence.
            if (end < word.size() && is_continuation_byte(static_cast<unsigned char>(word[end]))) {
                --end;
                continue;
            }
            candidate.assign(start > 0 ? "##" : "");
            candidate.append(word.substr(start, end - start));
            match = vocab_.find(candidate);
            if (match) break;
            --end;
        }
        if (!match) return {unk_};
        out.push_back(*match);
        start = end;
    }
    return out;
}

std::vector<TokenId> Tokenizer::pieces(std::string_view text) const {
    std::vector<TokenId> out;
    for (const auto& w : split_words(text, mode_)) {
        auto seg = segment_word(w);
        out.insert(out.end(), seg.begin(), seg.end());
    }
    return out;
}

TokenizedText Tokenizer::tokenize(std::string_view text) const {
    TokenizedText out;
    out.ids.push_back(cls_);
    for (const auto& w : split_words(text, mode_)) {
        auto seg = segment_word(w);
        WordSpan span{out.ids.size(), out.ids.size() + seg.size()};
        out.ids.insert(out.ids.end(), seg.begin(), seg.end());
        out.word_spans.push_back(span);
    }
    out.ids.push_back(sep_);
    if (out.ids.size() > max_positions_) {
        throw Error(Errc::length,
                    fmt::format("text tokenizes to {} positions, limit is {}", out.ids.size(), max_positions_));
    }
    out.surface.reserve(out.ids.size());
    for (auto id : out.ids) out.surface.push_back(vocab_.token(id));
    return out;
}

}  // namespace tfpatch
