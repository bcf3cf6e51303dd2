#include <doctest.h>

#include <optional>
#include <set>

#include <fmt/format.h>
#include <json.hpp>

#include "helpers.hpp"
#include "tfpatch/bm25.hpp"
#include "tfpatch/corpus.hpp"
#include "tfpatch/error.hpp"
#include "tfpatch/scorer.hpp"

using namespace tfpatch;

namespace {

std::optional<Errc> error_code(auto&& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    return std::nullopt;
}

std::string error_message(auto&& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.what();
    }
    return {};
}

}  // namespace

TEST_CASE("two-document TSV") {
    testing::TempDir dir("corpus");
    testing::spit(dir / "c.tsv", "d1\tthe cat sat\nd2\tthe dog\n");
    auto c = ingest_corpus(dir / "c.tsv", TokenizerMode::wordpiece);
    CHECK(c.size() == 2);
    CHECK(c.stats().num_docs == 2);
    CHECK(c.stats().df("the") == 2);
    CHECK(c.stats().df("cat") == 1);
    CHECK(c.stats().df("bird") == 0);
    CHECK(c.stats().avg_doc_length == 2.5);
    CHECK(c.text("d2") == "the dog");
}

TEST_CASE("an empty corpus loads but scorers reject it") {
    testing::TempDir dir("corpus");
    testing::spit(dir / "empty.tsv", "");
    auto c = ingest_corpus(dir / "empty.tsv", TokenizerMode::wordpiece);
    CHECK(c.empty());
    CHECK(c.stats().avg_doc_length == 0.0);
    CHECK(error_code([&] { make_bm25_scorer(c); }) == Errc::empty_corpus);
    std::vector<std::string> q{"x"};
    CHECK(error_code([&] { bm25_score(q, q, c.stats()); }) == Errc::empty_corpus);
}

TEST_CASE("document frequency over a large JSONL corpus matches a linear scan") {
    testing::TempDir dir("corpus");
    auto docs = fixture_corpus(1000, 17);
    std::string text;
    std::size_t expect_the = 0, expect_rain = 0;
    for (const auto& [id, body] : docs) {
        text += nlohmann::json{{"doc_id", id}, {"text", body}}.dump() + "\n";
        // Words are space separated with punctuation already split off.
        std::string padded = " " + body + " ";
        if (padded.find(" the ") != std::string::npos) ++expect_the;
        if (padded.find(" rain ") != std::string::npos) ++expect_rain;
    }
    testing::spit(dir / "c.jsonl", text);
    auto c = ingest_corpus(dir / "c.jsonl", TokenizerMode::wordpiece);
    CHECK(c.size() == 1000);
    CHECK(expect_the > 0);
    CHECK(c.stats().df("the") == expect_the);
    CHECK(c.stats().df("rain") == expect_rain);
}

TEST_CASE("malformed corpus lines report their line number") {
    testing::TempDir dir("corpus");
    testing::spit(dir / "bad.tsv", "d1\tfine\nno tab here\n");
    CHECK(error_code([&] { ingest_corpus(dir / "bad.tsv", TokenizerMode::wordpiece); }) == Errc::ingestion);
    CHECK(error_message([&] { ingest_corpus(dir / "bad.tsv", TokenizerMode::wordpiece); }).find("2") !=
          std::string::npos);

    testing::spit(dir / "dup.tsv", "d1\tx\n\nd1\ty\n");
    auto msg = error_message([&] { ingest_corpus(dir / "dup.tsv", TokenizerMode::wordpiece); });
    CHECK(msg.find("d1") != std::string::npos);
    CHECK(msg.find("3") != std::string::npos);

    testing::spit(dir / "bad.jsonl", "{\"doc_id\": \"d1\", \"text\": \"x\"}\n{\"doc_id\": 5}\n");
    msg = error_message([&] { ingest_corpus(dir / "bad.jsonl", TokenizerMode::wordpiece); });
    CHECK(msg.find("2") != std::string::npos);

    CHECK(error_code([&] { ingest_corpus(dir / "missing.tsv", TokenizerMode::wordpiece); }) == Errc::io);
}

TEST_CASE("queries are read in file order") {
    testing::TempDir dir("corpus");
    testing::spit(dir / "q.tsv", "q2\twhat is rain\nq1\tsnow\n");
    auto q = read_queries(dir / "q.tsv");
    REQUIRE(q.size() == 2);
    CHECK(q[0].id == "q2");
    CHECK(q[1].text == "snow");
}

TEST_CASE("bm25 closed form") {
    CorpusStats stats;
    stats.num_docs = 10;
    stats.avg_doc_length = 4.0;
    stats.doc_freq = {{"q", 3}};
    const double idf = std::log((10.0 - 3 + 0.5) / (3 + 0.5) + 1.0);
    CHECK(bm25_idf(3, 10) == doctest::Approx(idf).epsilon(1e-15));

    std::vector<std::string> query{"q"};
    std::vector<std::string> doc{"q", "q", "x", "y"};
    for (double b : {0.0, 0.3, 0.75, 1.0}) {
        CHECK(bm25_score(query, doc, stats, {1.2, b}) / idf == doctest::Approx(1.375).epsilon(1e-12));
    }
    std::vector<std::string> none{"x", "y"};
    CHECK(bm25_score(query, none, stats) == 0.0);
}

TEST_CASE("bm25 grows with term frequency and saturates") {
    CorpusStats stats;
    stats.num_docs = 50;
    stats.avg_doc_length = 12.0;
    stats.doc_freq = {{"q", 4}};
    std::vector<std::string> query{"q"};
    std::vector<double> scores;
    for (std::size_t tf = 0; tf <= 10; ++tf) {
        // Fixed document length so only tf changes.
        std::vector<std::string> doc(12, "x");
        for (std::size_t i = 0; i < tf; ++i) doc[i] = "q";
        scores.push_back(bm25_score(query, doc, stats));
    }
    for (std::size_t i = 1; i < scores.size(); ++i) CHECK(scores[i] > scores[i - 1]);
    for (std::size_t i = 2; i < scores.size(); ++i) CHECK(scores[i] - scores[i - 1] < scores[i - 1] - scores[i - 2]);
}

TEST_CASE("the bm25 scorer ignores the filler as a query term") {
    Corpus c({{"d1", "a cat"}, {"d2", "a dog"}, {"d3", "bird"}}, TokenizerMode::wordpiece);
    auto s = make_bm25_scorer(c);
    CHECK(s("a", "a a a") == 0.0);
    CHECK(s("a cat", "cat") == s("cat", "cat"));
    CHECK(make_constant_scorer(2.5)("x", "y") == 2.5);
}
