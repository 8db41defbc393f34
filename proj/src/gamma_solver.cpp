#include "fedpoison/gamma_solver.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace fedpoison {

GammaResult solve_gamma_iterative(const FeasibilityOracle& oracle, GammaDirection dir, double gamma_init, double eps) {
    if (!(eps > 0.0) || !(gamma_init > eps)) throw std::invalid_argument("gamma solver needs gamma_init > eps > 0");
    GammaResult r;
    double gamma = gamma_init;
    double step = gamma_init / 2.0;
    const bool minimize = dir == GammaDirection::Minimize;
    while (true) {
        bool ok = oracle(gamma);
        ++r.oracle_calls;
        r.probes.push_back(gamma);
        if (ok && (!r.feasible || (minimize ? gamma < r.gamma : gamma > r.gamma))) {
            r.gamma = gamma;
            r.feasible = true;
        }
        if (step <= eps) break;
        gamma += (ok == minimize) ? -step : step;
        step /= 2.0;
        ++r.step_updates;
    }
    return r;
}

std::optional<Interval> quadratic_le_zero(double A, double B, double C) {
    if (!(A > 0.0)) throw std::invalid_argument("quadratic_le_zero needs A > 0");
    double disc = B * B - 4.0 * A * C;
    if (disc < 0.0) return std::nullopt;
    double sq = std::sqrt(disc);
    // numerically stable pair of roots
    double q = -0.5 * (B + (B >= 0.0 ? sq : -sq));
    double r1, r2;
    if (q == 0.0) {
        r1 = r2 = 0.0;
    } else {
        r1 = q / A;
        r2 = C / q;
    }
    if (r1 > r2) std::swap(r1, r2);
    return Interval{r1, r2};
}

AnalyticResult solve_gamma_analytic(const ParamVector& g_p, const ParamVector& g_b,
                                    const std::vector<ParamVector>& benign, double c) {
    AnalyticResult res;
    if (benign.empty()) throw std::invalid_argument("analytic solver needs benign gradients");
    const ParamVector dir = sub(g_b, g_p);
    const double A = dot(dir, dir);
    if (!(A > 0.0)) {
        // g_b == g_p: gamma has no effect
        bool ok = std::all_of(benign.begin(), benign.end(), [&](const ParamVector& g) { return distance(g_p, g) <= c; });
        res.feasible = ok;
        return res;
    }
    double lo = 0.0, hi = std::numeric_limits<double>::infinity();
    for (const auto& g : benign) {
        ParamVector u = sub(g_p, g);
        double B = 2.0 * dot(u, dir);
        double C = dot(u, u) - c * c;
        auto iv = quadratic_le_zero(A, B, C);
        if (!iv) return res;
        res.intervals.push_back(*iv);
        lo = std::max(lo, iv->lo);
        hi = std::min(hi, iv->hi);
    }
    if (lo <= hi) {
        res.gamma = lo;
        res.feasible = true;
    }
    return res;
}

std::optional<double> min_gamma_covered(const std::vector<Interval>& intervals, int need) {
    if (need <= 0) return 0.0;
    // sweep left-to-right; opens before closes at equal coordinates
    std::vector<std::pair<double, int>> ev;
    for (const auto& iv : intervals) {
        if (iv.hi < 0.0) continue;
        ev.push_back({std::max(0.0, iv.lo), 0});
        ev.push_back({iv.hi, 1});
    }
    std::sort(ev.begin(), ev.end());
    int open = 0;
    for (const auto& [x, kind] : ev) {
        if (kind == 0) {
            if (++open >= need) return x;
        } else {
            --open;
        }
    }
    return std::nullopt;
}

}  // namespace fedpoison
