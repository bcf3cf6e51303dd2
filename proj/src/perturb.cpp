#include <fmt/format.h>

#include "tfpatch/diagnostics.hpp"
#include "tfpatch/error.hpp"

namespace tfpatch {

namespace {

std::string join(std::string_view a, std::string_view b) {
    if (a.empty()) return std::string(b);
    if (b.empty()) return std::string(a);
    std::string out;
    out.reserve(a.size() + b.size() + 1);
    out.append(a).append(" ").append(b);
    return out;
}

std::string repeat(std::string_view word, std::size_t times) {
    std::string out;
    for (std::size_t i = 0; i < times; ++i) out = join(out, word);
    return out;
}

std::size_t term_length(std::string_view term, const Tokenizer& tokenizer) {
    const auto t = tokenizer.pieces(term).size();
    if (t == 0) throw Error(Errc::config, fmt::format("term '{}' produces no tokens", term));
    return t;
}

// Both texts must fit and must line up position by position.
void check_lengths(const DiagnosticInstance& in, const Tokenizer& tokenizer) {
    const auto b = tokenizer.tokenize(in.baseline_text).size();
    const auto p = tokenizer.tokenize(in.perturbed_text).size();
    if (b != p) {
        throw Error(Errc::alignment, fmt::format("perturbation of term '{}' produced {} vs {} positions", in.term,
                                                 b, p));
    }
}

}  // namespace

DiagnosticInstance perturb_tfc1_inject(std::string_view doc, std::string_view term, InjectSide side,
                                       const Tokenizer& tokenizer) {
    const auto t = term_length(term, tokenizer);
    const auto filler = repeat(kFillerToken, t);
    DiagnosticInstance in;
    in.term = std::string(term);
    if (side == InjectSide::append) {
        in.kind = PerturbationKind::tfc1_inject_append;
        in.perturbed_text = join(doc, term);
        in.baseline_text = join(doc, filler);
    } else {
        in.kind = PerturbationKind::tfc1_inject_prepend;
        in.perturbed_text = join(term, doc);
        in.baseline_text = join(filler, doc);
    }
    check_lengths(in, tokenizer);
    return in;
}

DiagnosticInstance perturb_tfc1_replace(std::string_view doc, std::string_view term, const Tokenizer& tokenizer) {
    const auto t = term_length(term, tokenizer);
    const auto mode = tokenizer.mode();
    const auto words = split_words(doc, mode);
    const auto needle = split_words(term, mode);

    std::vector<std::string> out;
    std::size_t replacements = 0;
    for (std::size_t i = 0; i < words.size();) {
        if (i + needle.size() <= words.size() && std::equal(needle.begin(), needle.end(), words.begin() + i)) {
            for (std::size_t f = 0; f < t; ++f) out.emplace_back(kFillerToken);
            i += needle.size();
            ++replacements;
        } else {
            out.push_back(words[i++]);
        }
    }

    DiagnosticInstance in;
    in.kind = PerturbationKind::tfc1_replace;
    in.term = std::string(term);
    in.baseline_text = std::string(doc);
    in.replacements = replacements;
    in.no_op = replacements == 0;
    if (in.no_op) {
        in.perturbed_text = in.baseline_text;
    } else {
        for (const auto& w : out) in.perturbed_text = join(in.perturbed_text, w);
    }
    check_lengths(in, tokenizer);
    return in;
}

DiagnosticInstance perturb_tfc2(std::string_view doc, std::string_view term, std::size_t k,
                                const Tokenizer& tokenizer) {
    const auto t = term_length(term, tokenizer);
    const auto prior = join(doc, repeat(term, k));
    DiagnosticInstance in;
    in.kind = PerturbationKind::tfc2_inject;
    in.term = std::string(term);
    in.k = k;
    in.baseline_text = join(prior, repeat(kFillerToken, t));
    in.perturbed_text = join(prior, term);
    check_lengths(in, tokenizer);
    return in;
}

DiagnosticInstance perturb(std::string_view doc, std::string_view term, const PerturbationSpec& spec,
                           const Tokenizer& tokenizer) {
    switch (spec.kind) {
        case PerturbationKind::tfc1_inject_append: return perturb_tfc1_inject(doc, term, InjectSide::append, tokenizer);
        case PerturbationKind::tfc1_inject_prepend:
            return perturb_tfc1_inject(doc, term, InjectSide::prepend, tokenizer);
        case PerturbationKind::tfc1_replace: return perturb_tfc1_replace(doc, term, tokenizer);
        case PerturbationKind::tfc2_inject: return perturb_tfc2(doc, term, spec.k, tokenizer);
    }
    throw Error(Errc::config, "unknown perturbation kind");
}

}  // namespace tfpatch
