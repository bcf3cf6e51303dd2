#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "tfpatch/instance.hpp"
#include "tfpatch/scorer.hpp"

namespace tfpatch {

struct KAdherence {
    std::size_t total = 0;
    std::size_t satisfying = 0;
    double fraction = 0.0;
};

struct AdherenceReport {
    std::size_t total_pairs = 0;
    std::size_t satisfying = 0;
    double fraction = 0.0;  // 0 when there are no pairs
    std::map<std::size_t, KAdherence> per_k;
};

/// Does the document with more occurrences of the term score strictly higher?
/// For injections that is the perturbed document; for replacements, the
/// baseline. Equal scores violate the axiom.
bool satisfies_tfc1(const DiagnosticInstance& instance, const Scorer& scorer);

/// TFC1 adherence over instances, grouped by K. No-op replacements are not
/// pairs and are skipped.
AdherenceReport tfc1_adherence(std::span<const DiagnosticInstance> instances, const Scorer& scorer);

/// Keeps only the pairs that satisfy TFC1.
std::vector<DiagnosticInstance> tfc2_filter(std::span<const DiagnosticInstance> ladder, const Scorer& scorer);

using LadderKey = std::pair<std::string, std::string>;  // (query_id, doc_id)

/// Groups TFC2 instances by (query_id, doc_id), each ladder sorted by K.
std::map<LadderKey, std::vector<DiagnosticInstance>> group_ladders(std::span<const DiagnosticInstance> instances);

struct GapSeries {
    std::vector<std::size_t> k;
    std::vector<double> gaps;  // score(K + 1 copies) - score(K copies)
    bool decreasing = false;   // strictly
};

/// Gap series over one ladder. Needs at least three consecutive K values of
/// the same (query, doc); throws Errc::domain otherwise.
GapSeries tfc2_gap_check(std::span<const DiagnosticInstance> ladder, const Scorer& scorer);

nlohmann::ordered_json to_json(const AdherenceReport& report);

}  // namespace tfpatch
