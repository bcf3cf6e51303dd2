#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace tfpatch {

using TokenId = std::uint32_t;

inline constexpr std::string_view kClsToken = "[CLS]";
inline constexpr std::string_view kSepToken = "[SEP]";
inline constexpr std::string_view kPadToken = "[PAD]";
inline constexpr std::string_view kUnkToken = "[UNK]";
inline constexpr std::string_view kFillerToken = "a";

enum class TokenizerMode { wordpiece, whitespace };

std::string_view to_string(TokenizerMode mode) noexcept;
TokenizerMode parse_tokenizer_mode(std::string_view text);

/// Token strings indexed by id. Loaded from a text file with one token per line.
class Vocabulary {
  public:
    Vocabulary() = default;
    explicit Vocabulary(std::vector<std::string> tokens);

    static Vocabulary load(const std::filesystem::path& path);
    void save(const std::filesystem::path& path) const;

    std::optional<TokenId> find(std::string_view token) const;
    const std::string& token(TokenId id) const { return tokens_.at(id); }
    std::size_t size() const noexcept { return tokens_.size(); }
    bool empty() const noexcept { return tokens_.empty(); }
    const std::vector<std::string>& tokens() const noexcept { return tokens_; }

  private:
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, TokenId> index_;
};

/// Token range [begin, end) produced by one input word.
struct WordSpan {
    std::size_t begin = 0;
    std::size_t end = 0;

    friend bool operator==(const WordSpan&, const WordSpan&) = default;
};

struct TokenizedText {
    std::vector<TokenId> ids;
    std::vector<std::string> surface;
    std::vector<WordSpan> word_spans;

    std::size_t size() const noexcept { return ids.size(); }
};

/// Splits text into words the way the tokenizer does before subword
/// segmentation. Wordpiece mode lowercases and splits punctuation into separate
/// words; whitespace mode splits on whitespace only. Corpus statistics and BM25
/// use the same split so that "term" means the same thing everywhere.
std::vector<std::string> split_words(std::string_view text, TokenizerMode mode);

class Tokenizer {
  public:
    /// Throws Errc::config when the vocabulary is empty or lacks [CLS], [SEP],
    /// [PAD], [UNK] or the single-token filler "a".
    Tokenizer(Vocabulary vocab, TokenizerMode mode, std::size_t max_positions);

    /// [CLS] + tokens + [SEP]. Throws Errc::length past max_positions.
    TokenizedText tokenize(std::string_view text) const;

    /// Subword ids for text without the [CLS]/[SEP] frame and without a length limit.
    std::vector<TokenId> pieces(std::string_view text) const;

    /// Greedy longest-match-first segmentation of one already-split word.
    std::vector<TokenId> segment_word(std::string_view word) const;

    const Vocabulary& vocab() const noexcept { return vocab_; }
    TokenizerMode mode() const noexcept { return mode_; }
    std::size_t max_positions() const noexcept { return max_positions_; }

    TokenId cls_id() const noexcept { return cls_; }
    TokenId sep_id() const noexcept { return sep_; }
    TokenId pad_id() const noexcept { return pad_; }
    TokenId unk_id() const noexcept { return unk_; }
    TokenId filler_id() const noexcept { return filler_; }

  private:
    Vocabulary vocab_;
    TokenizerMode mode_;
    std::size_t max_positions_;
    TokenId cls_ = 0;
    TokenId sep_ = 0;
    TokenId pad_ = 0;
    TokenId unk_ = 0;
    TokenId filler_ = 0;
};

}  // namespace tfpatch
