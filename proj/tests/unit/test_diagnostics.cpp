#include <doctest.h>

#include <optional>

#include "generators.hpp"
#include "helpers.hpp"
#include "tfpatch/diagnostics.hpp"
#include "tfpatch/error.hpp"

using namespace tfpatch;

namespace {

std::shared_ptr<const Tokenizer> toy_tokenizer(std::size_t max_positions = 128) {
    auto tokens = fixture_vocabulary().tokens();
    for (const char* w : {"x", "y", "q", "cat", "likes", "food"}) tokens.emplace_back(w);
    return std::make_shared<const Tokenizer>(Vocabulary(tokens), TokenizerMode::wordpiece, max_positions);
}

std::optional<Errc> error_code(auto&& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    return std::nullopt;
}

std::size_t count_word(const std::string& text, const std::string& word) {
    std::size_t n = 0;
    for (const auto& w : split_words(text, TokenizerMode::wordpiece)) n += w == word;
    return n;
}

std::string drop_trailing_fillers(std::string text, std::size_t count) {
    for (std::size_t i = 0; i < count; ++i) {
        REQUIRE(text.size() >= 2);
        REQUIRE(text.substr(text.size() - 2) == " a");
        text.resize(text.size() - 2);
    }
    return text;
}

}  // namespace

TEST_CASE("injection worked examples") {
    auto tok = toy_tokenizer();
    auto app = perturb_tfc1_inject("x y", "q", InjectSide::append, *tok);
    CHECK(app.perturbed_text == "x y q");
    CHECK(app.baseline_text == "x y a");
    CHECK(app.kind == PerturbationKind::tfc1_inject_append);
    auto pre = perturb_tfc1_inject("x y", "q", InjectSide::prepend, *tok);
    CHECK(pre.perturbed_text == "q x y");
    CHECK(pre.baseline_text == "a x y");
    CHECK(pre.kind == PerturbationKind::tfc1_inject_prepend);
}

TEST_CASE("a multi-piece term is balanced by as many fillers") {
    auto tok = toy_tokenizer();
    REQUIRE(tok->pieces("rainbow").size() == 2);
    auto inst = perturb_tfc1_inject("x y", "rainbow", InjectSide::append, *tok);
    CHECK(inst.baseline_text == "x y a a");
    CHECK(tok->tokenize(inst.baseline_text).size() == tok->tokenize(inst.perturbed_text).size());
    auto three = perturb_tfc1_inject("x", "thunderstorms", InjectSide::prepend, *tok);
    CHECK(three.baseline_text == "a a a x");
}

TEST_CASE("injection past max_positions is a length error") {
    auto tok = toy_tokenizer(5);
    CHECK_NOTHROW(perturb_tfc1_inject("x y", "q", InjectSide::append, *tok));
    CHECK(error_code([&] { perturb_tfc1_inject("x y q", "q", InjectSide::append, *tok); }) == Errc::length);
    CHECK(error_code([&] { perturb_tfc2("x", "q", 3, *tok); }) == Errc::length);
}

TEST_CASE("replacement worked examples") {
    auto tok = toy_tokenizer();
    auto r = perturb_tfc1_replace("q x q", "q", *tok);
    CHECK(r.baseline_text == "q x q");
    CHECK(r.perturbed_text == "a x a");
    CHECK(r.replacements == 2);
    CHECK_FALSE(r.no_op);

    auto none = perturb_tfc1_replace("x y", "q", *tok);
    CHECK(none.no_op);
    CHECK(none.replacements == 0);
    CHECK(none.perturbed_text == none.baseline_text);

    auto multi = perturb_tfc1_replace("rainbow x", "rainbow", *tok);
    CHECK(multi.perturbed_text == "a a x");
}

TEST_CASE("replacement counts over a corpus match a word scan") {
    auto tok = testing::fixture_tokenizer();
    std::size_t total = 0, expected = 0;
    for (const auto& [id, text] : fixture_corpus(300, 4)) {
        for (const auto& term : {std::string("rain"), std::string("snowflake"), std::string("apple")}) {
            auto r = perturb_tfc1_replace(text, term, *tok);
            const auto n = count_word(text, term);
            CHECK(r.replacements == n);
            CHECK(r.no_op == (n == 0));
            CHECK(count_word(r.perturbed_text, term) == 0);
            CHECK(tok->tokenize(r.perturbed_text).size() == tok->tokenize(r.baseline_text).size());
            total += r.replacements;
            expected += n;
        }
    }
    CHECK(total == expected);
    CHECK(total > 0);
}

TEST_CASE("tfc2 construction") {
    auto tok = toy_tokenizer();
    auto k1 = perturb_tfc2("x", "q", 1, *tok);
    CHECK(k1.baseline_text == "x q a");
    CHECK(k1.perturbed_text == "x q q");
    CHECK(k1.k == 1);

    auto k0 = perturb_tfc2("x y", "q", 0, *tok);
    auto app = perturb_tfc1_inject("x y", "q", InjectSide::append, *tok);
    CHECK(k0.baseline_text == app.baseline_text);
    CHECK(k0.perturbed_text == app.perturbed_text);

    auto k10 = perturb_tfc2("x y", "q", 10, *tok);
    auto ids = tok->tokenize(k10.perturbed_text).ids;
    const auto q = *tok->vocab().find("q");
    std::size_t trailing = 0;
    for (std::size_t i = ids.size() - 1; i-- > 0 && ids[i] == q;) ++trailing;
    CHECK(trailing == 11);
}

TEST_CASE("tfc2 ladders compose") {
    auto tok = testing::fixture_tokenizer();
    for (const auto& term : {std::string("apple"), std::string("rainbow"), std::string("snowflakes")}) {
        const auto t = tok->pieces(term).size();
        for (std::size_t k = 0; k < 10; ++k) {
            auto a = perturb_tfc2("the castle by the river .", term, k, *tok);
            auto b = perturb_tfc2("the castle by the river .", term, k + 1, *tok);
            CHECK(a.perturbed_text == drop_trailing_fillers(b.baseline_text, t));
        }
    }
}

TEST_CASE("class assignment worked examples") {
    auto tok = toy_tokenizer();
    DiagnosticInstance inst;
    inst.kind = PerturbationKind::tfc1_inject_append;
    inst.term = "cat";
    inst.baseline_text = "cat likes food a";
    inst.perturbed_text = "cat likes food cat";
    using C = TokenClass;
    CHECK(classify_tokens(inst, "cat food", *tok) ==
          std::vector<C>{C::cls, C::qterm_plus, C::other, C::qterm_minus, C::inj, C::sep});

    auto plain = perturb_tfc1_inject("x y x", "cat", InjectSide::append, *tok);
    CHECK(classify_tokens(plain, "cat food", *tok) ==
          std::vector<C>{C::cls, C::other, C::other, C::other, C::inj, C::sep});

    auto multi = perturb_tfc1_inject("rainbow x", "rainbow", InjectSide::prepend, *tok);
    CHECK(classify_tokens(multi, "rainbow", *tok) ==
          std::vector<C>{C::cls, C::inj, C::inj, C::qterm_plus, C::qterm_plus, C::other, C::sep});

    auto rep = perturb_tfc1_replace("q x q", "q", *tok);
    rep.term = "q";
    CHECK(classify_tokens(rep, "q", *tok) == std::vector<C>{C::cls, C::inj, C::other, C::inj, C::sep});
}

TEST_CASE("inconsistent instances are classification errors") {
    auto tok = toy_tokenizer();
    auto inst = perturb_tfc1_inject("x y", "q", InjectSide::append, *tok);
    inst.perturbed_text = "x y x";
    CHECK(error_code([&] { classify_tokens(inst, "q", *tok); }) == Errc::classification);
    auto rep = perturb_tfc1_replace("q x", "q", *tok);
    rep.perturbed_text = "y x";
    CHECK(error_code([&] { classify_tokens(rep, "q", *tok); }) == Errc::classification);
}

TEST_CASE("generated instances keep equal lengths and classes partition positions") {
    auto tok = testing::fixture_tokenizer();
    for (const auto& g : testing::generate_instances(500, 77, *tok)) {
        const auto& inst = g.instance;
        const auto n = tok->tokenize(inst.perturbed_text).size();
        CHECK(tok->tokenize(inst.baseline_text).size() == n);
        const auto classes = classify_tokens(inst, inst.query_text, *tok);
        REQUIRE(classes.size() == n);
        std::array<std::size_t, kNumTokenClasses> counts{};
        for (auto c : classes) ++counts[static_cast<std::size_t>(c)];
        std::size_t sum = 0;
        for (auto c : counts) sum += c;
        CHECK(sum == n);
        CHECK(counts[0] == 1);
        CHECK(counts[5] == 1);
        CHECK(classes.front() == TokenClass::cls);
        CHECK(classes.back() == TokenClass::sep);
        if (inst.kind == PerturbationKind::tfc1_replace) {
            CHECK(counts[1] == inst.replacements * g.term_pieces);
        } else {
            CHECK(counts[1] == (inst.k + 1) * g.term_pieces);
        }
    }
}

TEST_CASE("candidate terms drop stopwords, the filler and repeats") {
    CHECK(candidate_terms("what is the rain and the rain ?", TokenizerMode::wordpiece) ==
          std::vector<std::string>{"rain"});
    CHECK(candidate_terms("a apple a", TokenizerMode::wordpiece) == std::vector<std::string>{"apple"});
    CHECK(stopwords().size() == 30);
}
