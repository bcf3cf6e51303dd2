#include "tfpatch/axioms.hpp"

#include <algorithm>

#include <fmt/format.h>

#include "tfpatch/error.hpp"

namespace tfpatch {

bool satisfies_tfc1(const DiagnosticInstance& in, const Scorer& scorer) {
    const double baseline = scorer(in.query_text, in.baseline_text);
    const double perturbed = scorer(in.query_text, in.perturbed_text);
    return in.kind == PerturbationKind::tfc1_replace ? baseline > perturbed : perturbed > baseline;
}

AdherenceReport tfc1_adherence(std::span<const DiagnosticInstance> instances, const Scorer& scorer) {
    AdherenceReport report;
    for (const auto& in : instances) {
        if (in.kind == PerturbationKind::tfc1_replace && in.no_op) continue;
        const bool ok = satisfies_tfc1(in, scorer);
        auto& bucket = report.per_k[in.k];
        ++bucket.total;
        ++report.total_pairs;
        if (ok) {
            ++bucket.satisfying;
            ++report.satisfying;
        }
    }
    auto ratio = [](std::size_t num, std::size_t den) {
        return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
    };
    report.fraction = ratio(report.satisfying, report.total_pairs);
    for (auto& [k, bucket] : report.per_k) bucket.fraction = ratio(bucket.satisfying, bucket.total);
    return report;
}

std::vector<DiagnosticInstance> tfc2_filter(std::span<const DiagnosticInstance> ladder, const Scorer& scorer) {
    std::vector<DiagnosticInstance> kept;
    for (const auto& in : ladder) {
        if (satisfies_tfc1(in, scorer)) kept.push_back(in);
    }
    return kept;
}

std::map<LadderKey, std::vector<DiagnosticInstance>> group_ladders(std::span<const DiagnosticInstance> instances) {
    std::map<LadderKey, std::vector<DiagnosticInstance>> out;
    for (const auto& in : instances) out[{in.query_id, in.doc_id}].push_back(in);
    for (auto& [key, ladder] : out) {
        std::stable_sort(ladder.begin(), ladder.end(),
                         [](const DiagnosticInstance& a, const DiagnosticInstance& b) { return a.k < b.k; });
    }
    return out;
}

GapSeries tfc2_gap_check(std::span<const DiagnosticInstance> ladder, const Scorer& scorer) {
    if (ladder.size() < 3) throw Error(Errc::domain, "gap check needs at least three consecutive K values");
    std::vector<const DiagnosticInstance*> sorted;
    for (const auto& in : ladder) sorted.push_back(&in);
    std::stable_sort(sorted.begin(), sorted.end(), [](auto* a, auto* b) { return a->k < b->k; });
    for (std::size_t i = 0; i < sorted.size(); ++i) {
        const auto& in = *sorted[i];
        if (in.kind != PerturbationKind::tfc2_inject) throw Error(Errc::domain, "gap check needs tfc2_inject instances");
        if (in.query_id != sorted[0]->query_id || in.doc_id != sorted[0]->doc_id) {
            throw Error(Errc::domain, "gap check ladder mixes (query, doc) pairs");
        }
        if (i > 0 && in.k != sorted[i - 1]->k + 1) {
            throw Error(Errc::domain, fmt::format("gap check ladder skips from K={} to K={}", sorted[i - 1]->k, in.k));
        }
    }

    GapSeries out;
    for (const auto* in : sorted) {
        out.k.push_back(in->k);
        out.gaps.push_back(scorer(in->query_text, in->perturbed_text) - scorer(in->query_text, in->baseline_text));
    }
    out.decreasing = true;
    for (std::size_t i = 1; i < out.gaps.size(); ++i) {
        if (!(out.gaps[i] < out.gaps[i - 1])) out.decreasing = false;
    }
    return out;
}

nlohmann::ordered_json to_json(const AdherenceReport& report) {
    nlohmann::ordered_json j;
    j["total_pairs"] = report.total_pairs;
    j["satisfying"] = report.satisfying;
    j["fraction"] = report.fraction;
    auto& per_k = j["per_k"] = nlohmann::ordered_json::array();
    for (const auto& [k, b] : report.per_k) {
        per_k.push_back({{"k", k}, {"total", b.total}, {"satisfying", b.satisfying}, {"fraction", b.fraction}});
    }
    return j;
}

}  // namespace tfpatch
