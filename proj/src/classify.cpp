#include <algorithm>
#include <set>

#include <fmt/format.h>

#include "tfpatch/diagnostics.hpp"
#include "tfpatch/error.hpp"

namespace tfpatch {

namespace {

[[noreturn]] void inconsistent(const DiagnosticInstance& in, std::string_view why) {
    throw Error(Errc::classification,
                fmt::format("instance ({}, {}, {}): {}", in.query_id, in.doc_id, to_string(in.kind), why));
}

// Marks `copies` consecutive copies of the term starting at `start`.
void mark_block(const DiagnosticInstance& in, const TokenizedText& text, const std::vector<TokenId>& term,
                std::size_t start, std::size_t copies, std::vector<bool>& injected) {
    const std::size_t n = text.size();
    if (start < 1 || start + copies * term.size() > n - 1) inconsistent(in, "injected term does not fit");
    for (std::size_t c = 0; c < copies; ++c) {
        for (std::size_t i = 0; i < term.size(); ++i) {
            const auto p = start + c * term.size() + i;
            if (text.ids[p] != term[i]) inconsistent(in, fmt::format("injected term not found at position {}", p));
            injected[p] = true;
        }
    }
}

}  // namespace

std::vector<TokenClass> classify_tokens(const DiagnosticInstance& in, std::string_view query_text,
                                        const Tokenizer& tokenizer) {
    const auto baseline = tokenizer.tokenize(in.baseline_text);
    const auto perturbed = tokenizer.tokenize(in.perturbed_text);
    const std::size_t n = perturbed.size();
    if (baseline.size() != n) inconsistent(in, "baseline and perturbed lengths differ");
    const auto term = tokenizer.pieces(in.term);
    if (term.empty()) inconsistent(in, "term produces no tokens");

    std::vector<bool> injected(n, false);
    switch (in.kind) {
        case PerturbationKind::tfc1_inject_append:
            if (n < term.size() + 2) inconsistent(in, "document too short");
            mark_block(in, perturbed, term, n - 1 - term.size(), 1, injected);
            break;
        case PerturbationKind::tfc1_inject_prepend: mark_block(in, perturbed, term, 1, 1, injected); break;
        case PerturbationKind::tfc2_inject: {
            const auto span = (in.k + 1) * term.size();
            if (n < span + 2) inconsistent(in, "document too short");
            mark_block(in, perturbed, term, n - 1 - span, in.k + 1, injected);
            break;
        }
        case PerturbationKind::tfc1_replace:
            for (std::size_t p = 1; p + 1 < n; ++p) {
                if (baseline.ids[p] == perturbed.ids[p]) continue;
                if (perturbed.ids[p] != tokenizer.filler_id()) {
                    inconsistent(in, fmt::format("position {} differs but is not a filler", p));
                }
                injected[p] = true;
            }
            if (in.no_op && std::find(injected.begin(), injected.end(), true) != injected.end()) {
                inconsistent(in, "no_op instance has replaced positions");
            }
            break;
    }

    const auto mode = tokenizer.mode();
    const auto words = split_words(in.perturbed_text, mode);
    if (words.size() != perturbed.word_spans.size()) inconsistent(in, "word spans disagree with word split");
    const auto needle = split_words(in.term, mode);
    std::set<std::string> other_terms;
    for (auto& t : candidate_terms(query_text, mode)) {
        if (std::find(needle.begin(), needle.end(), t) == needle.end()) other_terms.insert(std::move(t));
    }

    std::vector<TokenClass> classes(n, TokenClass::other);
    classes.front() = TokenClass::cls;
    classes.back() = TokenClass::sep;
    auto word_injected = [&](std::size_t w) {
        const auto& s = perturbed.word_spans[w];
        return std::any_of(injected.begin() + static_cast<std::ptrdiff_t>(s.begin),
                           injected.begin() + static_cast<std::ptrdiff_t>(s.end), [](bool b) { return b; });
    };
    auto assign = [&](std::size_t w, TokenClass cls) {
        const auto& s = perturbed.word_spans[w];
        std::fill(classes.begin() + static_cast<std::ptrdiff_t>(s.begin),
                  classes.begin() + static_cast<std::ptrdiff_t>(s.end), cls);
    };

    for (std::size_t w = 0; w < words.size();) {
        if (word_injected(w)) {
            assign(w++, TokenClass::inj);
            continue;
        }
        bool match = !needle.empty() && w + needle.size() <= words.size();
        for (std::size_t i = 0; match && i < needle.size(); ++i) {
            match = words[w + i] == needle[i] && !word_injected(w + i);
        }
        if (match) {
            for (std::size_t i = 0; i < needle.size(); ++i) assign(w + i, TokenClass::qterm_plus);
            w += needle.size();
            continue;
        }
        assign(w, other_terms.contains(words[w]) ? TokenClass::qterm_minus : TokenClass::other);
        ++w;
    }
    return classes;
}

}  // namespace tfpatch
