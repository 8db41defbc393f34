#include <cmath>

#include "doctest.h"
#include "fedpoison/rng.hpp"
#include "fedpoison/stats.hpp"

using namespace fedpoison;

namespace {

// P(X <= k) for X ~ Binomial(m, p), summed in long double.
long double binom_cdf(int k, int m, long double p) {
    if (k < 0) return 0.0L;
    if (k >= m) return 1.0L;
    long double s = 0.0L;
    for (int i = 0; i <= k; ++i) {
        long double logc = std::lgamma(m + 1.0L) - std::lgamma(i + 1.0L) - std::lgamma(m - i + 1.0L);
        s += std::exp(logc + i * std::log(p) + (m - i) * std::log1p(-p));
    }
    return s;
}

// Bisection on the binomial tail: lower bound solves P(X >= k) = alpha,
// upper bound solves P(X <= k) = alpha.
double bisect_bound(int k, int m, double alpha, bool lower) {
    long double lo = 0.0L, hi = 1.0L;
    for (int it = 0; it < 200; ++it) {
        long double mid = 0.5L * (lo + hi);
        long double tail = lower ? 1.0L - binom_cdf(k - 1, m, mid) : binom_cdf(k, m, mid);
        // lower: tail grows with p; upper: tail shrinks with p
        if ((tail < alpha) == lower) lo = mid; else hi = mid;
    }
    return static_cast<double>(0.5L * (lo + hi));
}

double bisect_quantile(double p) {
    double lo = -40, hi = 40;
    for (int it = 0; it < 200; ++it) {
        double mid = 0.5 * (lo + hi);
        if (0.5 * std::erfc(-mid / std::sqrt(2.0)) < p) lo = mid; else hi = mid;
    }
    return 0.5 * (lo + hi);
}

}  // namespace

TEST_CASE("normal quantile inverts the cdf") {
    for (double p : {1e-6, 0.001, 0.1, 0.3, 0.5, 0.6, 0.9, 0.999}) {
        CHECK(normal_quantile(p) == doctest::Approx(bisect_quantile(p)).epsilon(1e-9));
        CHECK(normal_cdf(normal_quantile(p)) == doctest::Approx(p).epsilon(1e-12));
    }
    CHECK(normal_quantile(0.6) == doctest::Approx(0.2533471031).epsilon(1e-9));
    CHECK(std::isinf(normal_quantile(0.0)));
    CHECK(std::isinf(normal_quantile(1.0)));
}

TEST_CASE("clopper_pearson closed forms") {
    CHECK(clopper_pearson(100, 100, 0.05, BoundSide::Lower) == doctest::Approx(std::pow(0.05, 1.0 / 100)));
    CHECK(clopper_pearson(0, 100, 0.05, BoundSide::Lower) == 0.0);
    CHECK(clopper_pearson(100, 100, 0.05, BoundSide::Upper) == 1.0);
    CHECK(clopper_pearson(0, 100, 0.05, BoundSide::Upper) == doctest::Approx(1.0 - std::pow(0.05, 1.0 / 100)));
}

TEST_CASE("clopper_pearson matches binomial-cdf bisection") {
    CHECK(std::abs(clopper_pearson(70, 100, 0.05, BoundSide::Lower) - bisect_bound(70, 100, 0.05, true)) < 1e-6);
    CHECK(clopper_pearson(70, 100, 0.05, BoundSide::Lower) == doctest::Approx(0.6157793872).epsilon(1e-8));
    for (int m : {2, 10, 57, 100}) {
        for (int k = 0; k <= m; k += std::max(1, m / 7)) {
            for (double alpha : {0.001, 0.05}) {
                if (k > 0) CHECK(std::abs(clopper_pearson(k, m, alpha, BoundSide::Lower) - bisect_bound(k, m, alpha, true)) < 1e-6);
                if (k < m) CHECK(std::abs(clopper_pearson(k, m, alpha, BoundSide::Upper) - bisect_bound(k, m, alpha, false)) < 1e-6);
            }
        }
    }
}

TEST_CASE("labeled streams are reproducible and independent") {
    CHECK(derive_seed(1, "a", {1, 2}) == derive_seed(1, "a", {1, 2}));
    CHECK(derive_seed(1, "a", {1, 2}) != derive_seed(1, "a", {2, 1}));
    CHECK(derive_seed(1, "a") != derive_seed(1, "b"));
    CHECK(derive_seed(1, "a") != derive_seed(2, "a"));
    Rng r1 = make_rng(9, "x", {3}), r2 = make_rng(9, "x", {3});
    for (int i = 0; i < 10; ++i) CHECK(r1() == r2());
}
