#include "tfpatch/fit.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

#include "tfpatch/error.hpp"

namespace tfpatch {

double LogFit::operator()(double x) const { return a * std::log(x) + b; }

LogFit fit_log(std::span<const Point> points) {
    std::set<double> distinct;
    for (const auto& p : points) {
        if (!(p.x > 0.0)) throw Error(Errc::domain, "log fit needs x > 0");
        distinct.insert(p.x);
    }
    if (distinct.size() < 2) throw Error(Errc::domain, "log fit needs at least two distinct x values");

    const auto n = static_cast<double>(points.size());
    double u_mean = 0.0;
    double y_mean = 0.0;
    for (const auto& p : points) {
        u_mean += std::log(p.x);
        y_mean += p.y;
    }
    u_mean /= n;
    y_mean /= n;

    double suu = 0.0;
    double suy = 0.0;
    double ss_tot = 0.0;
    for (const auto& p : points) {
        const double du = std::log(p.x) - u_mean;
        const double dy = p.y - y_mean;
        suu += du * du;
        suy += du * dy;
        ss_tot += dy * dy;
    }
    if (ss_tot == 0.0) throw Error(Errc::undefined_r2, "R^2 is undefined for a constant series");

    LogFit fit;
    fit.a = suy / suu;
    fit.b = y_mean - fit.a * u_mean;
    fit.n = points.size();
    double ss_res = 0.0;
    for (const auto& p : points) {
        const double r = p.y - fit(p.x);
        ss_res += r * r;
    }
    fit.r2 = 1.0 - ss_res / ss_tot;
    return fit;
}

bool check_sublinear(const LogFit& fit, double lo, double hi) {
    if (!(fit.a > 0.0) || !(lo > 0.0)) return false;
    double previous = INFINITY;
    for (double x = lo; x + 1.0 <= hi; x += 1.0) {
        // g(x + 1) - g(x) = a ln(1 + 1/x)
        const double inc = fit.a * std::log1p(1.0 / x);
        if (!(inc > 0.0) || !(inc < previous)) return false;
        previous = inc;
    }
    return true;
}

bool check_sublinear(std::span<const Point> series) {
    if (series.size() < 3) return false;
    std::vector<Point> sorted(series.begin(), series.end());
    std::sort(sorted.begin(), sorted.end(), [](const Point& l, const Point& r) { return l.x < r.x; });
    std::vector<double> slopes;
    for (std::size_t i = 1; i < sorted.size(); ++i) {
        const double dx = sorted[i].x - sorted[i - 1].x;
        if (!(dx > 0.0)) return false;
        slopes.push_back((sorted[i].y - sorted[i - 1].y) / dx);
    }
    for (std::size_t i = 0; i < slopes.size(); ++i) {
        if (!(slopes[i] > 0.0)) return false;
        if (i > 0) {
            const double noise = 1e-9 * std::max(std::abs(slopes[i]), std::abs(slopes[i - 1]));
            if (!(slopes[i] < slopes[i - 1] - noise)) return false;
        }
    }
    return true;
}

nlohmann::ordered_json to_json(const LogFit& fit) {
    return {{"a", fit.a}, {"b", fit.b}, {"r2", fit.r2}, {"n", fit.n}};
}

}  // namespace tfpatch
