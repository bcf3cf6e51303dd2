#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "tfpatch/corpus.hpp"
#include "tfpatch/model.hpp"
#include "tfpatch/tokenizer.hpp"

namespace tfpatch {

inline constexpr std::string_view kToolVersion = "0.1.0";

/// Small WordPiece vocabulary: special tokens, the filler, the stopword list,
/// single-piece content words, and stems plus "##" suffixes that spell
/// multi-piece words such as "rainbow" (2 pieces) and "thunderstorms" (3).
Vocabulary fixture_vocabulary();

/// Content words of the fixture vocabulary, grouped by their piece count.
const std::vector<std::string>& fixture_words(std::size_t pieces);

/// Seeded toy corpus with ids "d0000".."dNNNN"; documents mix content words
/// and stopwords and never contain the filler.
std::vector<std::pair<std::string, std::string>> fixture_corpus(std::size_t num_docs, std::uint64_t seed);

/// Seeded queries with ids "q000".. of two or three content words.
std::vector<Query> fixture_queries(std::size_t num_queries, std::uint64_t seed);

/// Tiny post-norm geometry with ffn_dim = 2 * model_dim.
ModelConfig fixture_config(std::size_t num_layers, std::size_t num_heads, std::size_t head_dim,
                           std::size_t vocab_size, std::size_t max_positions = 128);

}  // namespace tfpatch
