#pragma once

#include <functional>
#include <optional>
#include <stdexcept>
#include <vector>

#include "fedpoison/param_vector.hpp"

namespace fedpoison {

enum class GammaDirection {
    Minimize,  // targeted: smallest feasible gamma
    Maximize   // untargeted: largest feasible gamma
};

using FeasibilityOracle = std::function<bool(double gamma)>;

struct GammaResult {
    double gamma = 0.0;      // best feasible gamma seen; meaningless if !feasible
    bool feasible = false;   // false is the NeverFeasible sentinel
    int oracle_calls = 0;
    int step_updates = 0;
    std::vector<double> probes;
};

// Step-halving search: probe gamma, move it by +/- step toward the preferred
// end (or back toward feasibility), halve step, stop once step <= eps.
// Oracle calls = ceil(log2(gamma_init / eps)); reachable range (0, 2 gamma_init).
GammaResult solve_gamma_iterative(const FeasibilityOracle& oracle, GammaDirection dir, double gamma_init, double eps);

struct Interval {
    double lo, hi;
};

// Solution set of A g^2 + B g + C <= 0 for A > 0; nullopt when empty.
std::optional<Interval> quadratic_le_zero(double A, double B, double C);

// A constraint whose quadratic has no real root makes the whole instance
// infeasible (feasible = false).
struct AnalyticResult {
    double gamma = 0.0;
    bool feasible = false;
    std::vector<Interval> intervals;  // per benign index, squared-distance constraint
};

// Smallest gamma >= 0 with ||g_p + gamma (g_b - g_p) - g_j|| <= c for every j.
AnalyticResult solve_gamma_analytic(const ParamVector& g_p, const ParamVector& g_b,
                                    const std::vector<ParamVector>& benign, double c);

// Smallest gamma >= 0 that lies inside at least `need` of the intervals.
std::optional<double> min_gamma_covered(const std::vector<Interval>& intervals, int need);

}  // namespace fedpoison
