#pragma once

#include <cstddef>
#include <span>

#include <json.hpp>

namespace tfpatch {

struct Point {
    double x = 0.0;
    double y = 0.0;
};

/// y ~ a ln(x) + b by least squares.
struct LogFit {
    double a = 0.0;
    double b = 0.0;
    double r2 = 0.0;
    std::size_t n = 0;

    double operator()(double x) const;
};

/// Throws Errc::domain for x <= 0 or fewer than two distinct x values, and
/// Errc::undefined_r2 when y is constant.
LogFit fit_log(std::span<const Point> points);

/// True iff a > 0 and the fitted increments g(x + 1) - g(x) for x = lo, lo + 1,
/// ... up to hi - 1 are positive and strictly decreasing. False for lo <= 0.
bool check_sublinear(const LogFit& fit, double lo, double hi);

/// The same verdict read off observed data: slopes between consecutive points
/// (sorted by x) must be positive and strictly decreasing beyond rounding
/// noise. Needs at least three points; a linear series fails.
bool check_sublinear(std::span<const Point> series);

nlohmann::ordered_json to_json(const LogFit& fit);

}  // namespace tfpatch
