#pragma once

#include <cmath>
#include <optional>

namespace tfpatch {

/// Instances with |perturbed - baseline| below this are degenerate and excluded.
inline constexpr double kDefaultDegeneracyDelta = 1e-6;

/// (patched - baseline) / (perturbed - baseline). 0 means the patch had no
/// effect, 1 means it fully recovers the perturbed score. Returns nullopt when
/// the denominator is below `delta` in magnitude.
inline std::optional<double> normalized_score(double baseline, double perturbed, double patched,
                                              double delta = kDefaultDegeneracyDelta) {
    const double denom = perturbed - baseline;
    if (!(std::abs(denom) >= delta)) return std::nullopt;
    return (patched - baseline) / denom;
}

}  // namespace tfpatch
