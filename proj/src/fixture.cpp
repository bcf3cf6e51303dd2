#include "tfpatch/fixture.hpp"

#include <random>

#include <fmt/format.h>

#include "tfpatch/diagnostics.hpp"
#include "tfpatch/error.hpp"

namespace tfpatch {

namespace {

const std::vector<std::string> kSingle = {
    "apple",  "bridge",  "castle", "dragon", "engine", "forest",  "garden", "harbor",  "island", "jungle",
    "kettle", "lantern", "meadow", "needle", "ocean",  "palace",  "quartz", "river",   "saddle", "temple",
    "valley", "wagon",   "yacht",  "zebra",  "anchor", "beacon",  "canyon", "desert",  "falcon", "glacier",
    "hammer", "ivory",   "lemon",  "marble", "nectar", "orchard", "pepper", "rocket",  "salmon", "tulip",
    "velvet", "walnut",  "basket", "candle", "copper", "dolphin", "ember",  "granite", "honey",  "violin"};

const std::vector<std::string> kStems = {"rain", "thunder", "sun", "moon", "star", "snow"};
const std::vector<std::string> kSuffixes = {"##bow", "##storm", "##light", "##fall", "##flake", "##s"};

const std::vector<std::string> kDouble = {"rainbow", "rainfall", "sunlight", "moonlight", "starfall",
                                          "snowfall", "snowflake", "thunderstorm", "starlight", "suns"};
const std::vector<std::string> kTriple = {"thunderstorms", "snowflakes", "rainbows", "moonlights", "starfalls"};

// Modulo keeps draws identical across standard libraries.
std::size_t draw(std::mt19937_64& rng, std::size_t n) { return static_cast<std::size_t>(rng() % n); }

const std::string& pick_content(std::mt19937_64& rng) {
    const auto r = draw(rng, 10);
    if (r < 6) return kSingle[draw(rng, kSingle.size())];
    if (r < 9) return kDouble[draw(rng, kDouble.size())];
    return kTriple[draw(rng, kTriple.size())];
}

}  // namespace

Vocabulary fixture_vocabulary() {
    std::vector<std::string> tokens = {std::string(kPadToken), std::string(kUnkToken), std::string(kClsToken),
                                       std::string(kSepToken)};
    for (auto w : stopwords()) tokens.emplace_back(w);  // includes the filler "a"
    for (const char* p : {".", ",", "?"}) tokens.emplace_back(p);
    tokens.insert(tokens.end(), kSingle.begin(), kSingle.end());
    tokens.insert(tokens.end(), kStems.begin(), kStems.end());
    tokens.insert(tokens.end(), kSuffixes.begin(), kSuffixes.end());
    return Vocabulary(std::move(tokens));
}

const std::vector<std::string>& fixture_words(std::size_t pieces) {
    switch (pieces) {
        case 1: return kSingle;
        case 2: return kDouble;
        case 3: return kTriple;
        default: throw Error(Errc::config, fmt::format("no fixture words with {} pieces", pieces));
    }
}

std::vector<std::pair<std::string, std::string>> fixture_corpus(std::size_t num_docs, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    const auto stop = stopwords();
    std::vector<std::pair<std::string, std::string>> docs;
    docs.reserve(num_docs);
    for (std::size_t d = 0; d < num_docs; ++d) {
        const auto words = 8 + draw(rng, 13);
        std::string text;
        for (std::size_t w = 0; w < words; ++w) {
            if (!text.empty()) text += ' ';
            if (draw(rng, 3) == 0) {
                auto s = stop[draw(rng, stop.size())];
                text += s == kFillerToken ? "the" : std::string(s);
            } else {
                text += pick_content(rng);
            }
        }
        text += " .";
        docs.emplace_back(fmt::format("d{:04}", d), std::move(text));
    }
    return docs;
}

std::vector<Query> fixture_queries(std::size_t num_queries, std::uint64_t seed) {
    std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
    std::vector<Query> out;
    for (std::size_t q = 0; q < num_queries; ++q) {
        std::string text = draw(rng, 2) == 0 ? "what is" : "how does the";
        const auto words = 2 + draw(rng, 2);
        for (std::size_t w = 0; w < words; ++w) text += " " + pick_content(rng);
        out.push_back({fmt::format("q{:03}", q), std::move(text)});
    }
    return out;
}

ModelConfig fixture_config(std::size_t num_layers, std::size_t num_heads, std::size_t head_dim,
                           std::size_t vocab_size, std::size_t max_positions) {
    ModelConfig c;
    c.num_layers = num_layers;
    c.num_heads = num_heads;
    c.head_dim = head_dim;
    c.model_dim = num_heads * head_dim;
    c.ffn_dim = 2 * c.model_dim;
    c.vocab_size = vocab_size;
    c.max_positions = max_positions;
    c.layernorm_epsilon = 1e-12;
    c.validate();
    return c;
}

}  // namespace tfpatch
