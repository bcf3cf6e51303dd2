#include <doctest.h>

#include <random>

#include <fmt/format.h>

#include "helpers.hpp"
#include "reference.hpp"
#include "tfpatch/encoder.hpp"
#include "tfpatch/error.hpp"

using namespace tfpatch;
using testing::max_abs_diff;

namespace {

TokenizedText random_tokens(std::mt19937_64& rng, std::size_t vocab, std::size_t len) {
    TokenizedText t;
    t.ids.push_back(2);
    for (std::size_t i = 0; i < len; ++i) t.ids.push_back(static_cast<TokenId>(4 + rng() % (vocab - 4)));
    t.ids.push_back(3);
    return t;
}

double max_abs_diff(const Matrix& a, const testing::Rows& b) {
    double m = 0;
    for (std::size_t r = 0; r < a.rows(); ++r)
        for (std::size_t c = 0; c < a.cols(); ++c) m = std::max(m, std::abs(a(r, c) - b[r][c]));
    return m;
}

void zero(WeightManifest& m, const std::string& name) {
    auto& d = m.tensors.at(name).data;
    std::fill(d.begin(), d.end(), 0.0f);
}

}  // namespace

TEST_CASE("no taps gives an empty cache and a pooled vector") {
    auto model = testing::tiny_model(1);
    auto tok = testing::fixture_tokenizer();
    auto r = encode(model, tok->tokenize("apple river"));
    CHECK(r.cache.entries.empty());
    CHECK(r.pooled.size() == 8);
}

TEST_CASE("pooled output and score match the reference") {
    std::mt19937_64 rng(42);
    for (auto style : {NormStyle::post, NormStyle::pre}) {
        auto manifest = testing::tiny_manifest(7);
        manifest.config.norm_style = style;
        auto model = Model::from_manifest(manifest);
        auto q = random_tokens(rng, manifest.config.vocab_size, 3);
        auto d = random_tokens(rng, manifest.config.vocab_size, 9);
        CHECK(max_abs_diff(encode(model, d).pooled, testing::reference_forward(manifest, d.ids).pooled) < 1e-5);
        CHECK(relevance_score(model, q, d) == doctest::Approx(testing::reference_score(manifest, q.ids, d.ids)).epsilon(1e-6));
    }
}

TEST_CASE("every cached site matches the reference intermediates") {
    std::mt19937_64 rng(5);
    auto manifest = testing::tiny_manifest(8);
    auto model = Model::from_manifest(manifest);
    auto d = random_tokens(rng, manifest.config.vocab_size, 7);
    std::vector<SiteId> taps;
    for (auto kind : {SiteKind::resid_pre, SiteKind::resid_post, SiteKind::attn_out, SiteKind::mlp_out,
                      SiteKind::head_out}) {
        auto s = all_sites(manifest.config, kind);
        taps.insert(taps.end(), s.begin(), s.end());
    }
    auto r = encode(model, d, taps);
    auto ref = testing::reference_forward(manifest, d.ids);
    CHECK(r.cache.source_len == d.size());
    for (std::size_t l = 0; l < 2; ++l) {
        CHECK(max_abs_diff(r.cache.at({SiteKind::resid_pre, l, {}}), ref.resid_pre[l]) < 1e-5);
        CHECK(max_abs_diff(r.cache.at({SiteKind::resid_post, l, {}}), ref.resid_post[l]) < 1e-5);
        CHECK(max_abs_diff(r.cache.at({SiteKind::attn_out, l, {}}), ref.attn_out[l]) < 1e-5);
        CHECK(max_abs_diff(r.cache.at({SiteKind::mlp_out, l, {}}), ref.mlp_out[l]) < 1e-5);
        for (std::size_t h = 0; h < 2; ++h) {
            const auto& ho = r.cache.at({SiteKind::head_out, l, h});
            CHECK(ho.cols() == 4);
            CHECK(max_abs_diff(ho, ref.head_out[l][h]) < 1e-5);
        }
    }
}

TEST_CASE("attention rows are distributions matching the reference") {
    std::mt19937_64 rng(9);
    auto manifest = testing::tiny_manifest(10, 3, 2, 4);
    auto model = Model::from_manifest(manifest);
    auto d = random_tokens(rng, manifest.config.vocab_size, 12);
    EncodeOptions opts;
    opts.attention_probs = true;
    auto r = encode(model, d, {}, opts);
    auto ref = testing::reference_forward(manifest, d.ids);
    REQUIRE(r.attention.size() == 6);
    for (std::size_t l = 0; l < 3; ++l)
        for (std::size_t h = 0; h < 2; ++h) {
            const auto& a = r.attention[l * 2 + h];
            CHECK(max_abs_diff(a, ref.attention[l][h]) < 1e-6);
            for (std::size_t i = 0; i < a.rows(); ++i) {
                double s = 0;
                for (std::size_t j = 0; j < a.cols(); ++j) s += a(i, j);
                CHECK(std::abs(s - 1.0) < 1e-6);
            }
        }
}

TEST_CASE("zero query and key projections give uniform attention") {
    auto manifest = testing::tiny_manifest(4);
    for (std::size_t l = 0; l < 2; ++l)
        for (auto p : {"q", "k"})
            for (auto s : {"weight", "bias"}) zero(manifest, fmt::format("layers.{}.attn.{}.{}", l, p, s));
    auto model = Model::from_manifest(manifest);
    auto d = testing::fixture_tokenizer()->tokenize("apple river temple ocean");
    EncodeOptions opts;
    opts.attention_probs = true;
    for (const auto& a : encode(model, d, {}, opts).attention)
        for (std::size_t i = 0; i < a.rows(); ++i)
            for (std::size_t j = 0; j < a.cols(); ++j) CHECK(std::abs(a(i, j) - 1.0 / d.size()) < 1e-7);
}

TEST_CASE("layer norm outputs are standardized before the affine step") {
    std::mt19937_64 rng(3);
    for (auto style : {NormStyle::post, NormStyle::pre}) {
        auto manifest = testing::tiny_manifest(21);
        manifest.config.norm_style = style;
        auto model = Model::from_manifest(manifest);
        EncodeOptions opts;
        opts.norm_debug = true;
        auto r = encode(model, random_tokens(rng, manifest.config.vocab_size, 10), {}, opts);
        CHECK(r.normalized.size() == 5);
        for (const auto& m : r.normalized)
            for (std::size_t i = 0; i < m.rows(); ++i) {
                double mu = 0, var = 0;
                for (std::size_t c = 0; c < m.cols(); ++c) mu += m(i, c);
                mu /= m.cols();
                for (std::size_t c = 0; c < m.cols(); ++c) var += (m(i, c) - mu) * (m(i, c) - mu);
                var /= m.cols();
                CHECK(std::abs(mu) < 1e-5);
                CHECK(std::abs(var - 1.0) < 1e-4);
            }
    }
}

TEST_CASE("encode is pure") {
    auto model = testing::tiny_model(6);
    auto d = testing::fixture_tokenizer()->tokenize("rainbow over the castle");
    auto taps = all_sites(model.config(), SiteKind::head_out);
    auto a = encode(model, d, taps);
    auto b = encode(model, d, taps);
    CHECK(a.pooled == b.pooled);
    for (const auto& [site, m] : a.cache.entries) CHECK(m == b.cache.at(site));
}

TEST_CASE("head outputs through the output projection reproduce attn_out") {
    auto model = testing::tiny_model(12, 2, 4, 2);
    auto d = testing::fixture_tokenizer()->tokenize("snowflakes fall on the quiet meadow");
    std::vector<SiteId> taps = all_sites(model.config(), SiteKind::head_out);
    auto attn = all_sites(model.config(), SiteKind::attn_out);
    taps.insert(taps.end(), attn.begin(), attn.end());
    auto r = encode(model, d, taps);
    for (std::size_t l = 0; l < 2; ++l) {
        const auto& o = model.layer(l).o;
        const auto& expect = r.cache.at({SiteKind::attn_out, l, {}});
        for (std::size_t p = 0; p < d.size(); ++p)
            for (std::size_t out = 0; out < o.out; ++out) {
                double s = o.bias[out];
                for (std::size_t h = 0; h < 4; ++h) {
                    const auto& ho = r.cache.at({SiteKind::head_out, l, h});
                    for (std::size_t c = 0; c < 2; ++c) s += double(o.weight[out * o.in + h * 2 + c]) * ho(p, c);
                }
                CHECK(std::abs(s - expect(p, out)) < 1e-5);
            }
    }
}

TEST_CASE("relevance score edge cases") {
    auto manifest = testing::tiny_manifest(30);
    auto model = Model::from_manifest(manifest);
    auto tok = testing::fixture_tokenizer();
    auto t = tok->tokenize("honey and lemon");
    auto v = encode(model, t).pooled;
    double norm2 = 0;
    for (float x : v) norm2 += double(x) * x;
    CHECK(relevance_score(model, t, t) == doctest::Approx(norm2).epsilon(1e-12));
    CHECK(relevance_score(model, t, t) >= 0);

    zero(manifest, "layers.1.ffn_norm.weight");
    zero(manifest, "layers.1.ffn_norm.bias");
    auto dead = Model::from_manifest(manifest);
    CHECK(relevance_score(dead, t, tok->tokenize("apple")) == 0.0);
}

TEST_CASE("site and input validation") {
    auto model = testing::tiny_model(2);
    auto d = testing::fixture_tokenizer()->tokenize("apple");
    auto spec_error = [&](SiteId s) {
        try {
            std::vector<SiteId> taps{s};
            encode(model, d, taps);
        } catch (const Error& e) {
            return e.code() == Errc::spec;
        }
        return false;
    };
    CHECK(spec_error({SiteKind::resid_pre, 2, {}}));
    CHECK(spec_error({SiteKind::head_out, 0, 2}));
    CHECK(spec_error({SiteKind::head_out, 0, {}}));
    CHECK(spec_error({SiteKind::attn_out, 0, 0}));
    CHECK(to_string(SiteId{SiteKind::head_out, 1, 6}) == "head_out.1.6");
    CHECK(parse_site_kind("mlp_out") == SiteKind::mlp_out);

    TokenizedText too_long;
    too_long.ids.assign(129, 5);
    CHECK_THROWS_AS(encode(model, too_long), Error);
    TokenizedText bad_id;
    bad_id.ids = {2, 100000, 3};
    CHECK_THROWS_AS(encode(model, bad_id), Error);
}

TEST_CASE("padding keys are masked out") {
    auto model = testing::tiny_model(14);
    auto tok = testing::fixture_tokenizer();
    auto d = tok->tokenize("apple river");
    auto padded = d;
    padded.ids.push_back(tok->pad_id());
    padded.ids.push_back(tok->pad_id());
    EncodeOptions opts;
    opts.pad_id = tok->pad_id();
    opts.attention_probs = true;
    auto a = encode(model, d, {}, opts);
    auto b = encode(model, padded, {}, opts);
    CHECK(max_abs_diff(a.pooled, std::vector<double>(b.pooled.begin(), b.pooled.end())) < 1e-6);
    for (const auto& m : b.attention) CHECK(m(0, d.size()) < 1e-12);
}
