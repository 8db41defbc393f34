#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <random>

#include "doctest.h"
#include "fedpoison/clustering.hpp"
#include "json.hpp"

using namespace fedpoison;

namespace {

// Same noise set and same grouping, up to renaming of cluster ids.
bool same_partition(const std::vector<int>& a, const std::vector<int>& b) {
    if (a.size() != b.size()) return false;
    std::map<int, int> ab, ba;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if ((a[i] < 0) != (b[i] < 0)) return false;
        if (a[i] < 0) continue;
        auto [it1, new1] = ab.emplace(a[i], b[i]);
        auto [it2, new2] = ba.emplace(b[i], a[i]);
        if (it1->second != b[i] || it2->second != a[i]) return false;
    }
    return true;
}

DistanceMatrix block_matrix(const std::vector<int>& group, double within, double across) {
    const std::size_t n = group.size();
    DistanceMatrix d(n, std::vector<double>(n, 0.0));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            if (i != j) d[i][j] = group[i] == group[j] ? within : across;
    return d;
}

double brute_force_2means(const std::vector<double>& xs) {
    const int n = static_cast<int>(xs.size());
    double best = INFINITY;
    for (int mask = 1; mask < (1 << n) - 1; ++mask) {
        double w = 0.0;
        for (int side = 0; side < 2; ++side) {
            double s = 0.0;
            int c = 0;
            for (int i = 0; i < n; ++i)
                if (((mask >> i) & 1) == side) s += xs[i], ++c;
            double m = s / c;
            for (int i = 0; i < n; ++i)
                if (((mask >> i) & 1) == side) w += (xs[i] - m) * (xs[i] - m);
        }
        best = std::min(best, w);
    }
    return best;
}

}  // namespace

TEST_CASE("hdbscan on block matrices") {
    SUBCASE("two well separated groups") {
        auto d = block_matrix({0, 0, 0, 0, 0, 0, 1, 1, 1, 1, 1, 1}, 0.01, 1.9);
        auto labels = hdbscan(d, 4);
        CHECK(same_partition(labels, {0, 0, 0, 0, 0, 0, 1, 1, 1, 1, 1, 1}));
    }
    SUBCASE("identical points form one cluster") {
        DistanceMatrix d(7, std::vector<double>(7, 0.0));
        CHECK(hdbscan(d, 4) == std::vector<int>(7, 0));
    }
    SUBCASE("far outlier is noise") {
        auto d = block_matrix({0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 1}, 0.05, 3.0);
        auto labels = hdbscan(d, 6);
        CHECK(labels[10] == -1);
        for (int i = 0; i < 10; ++i) CHECK(labels[i] == 0);
    }
    SUBCASE("errors") {
        DistanceMatrix d(3, std::vector<double>(3, 1.0));
        for (int i = 0; i < 3; ++i) d[i][i] = 0.0;
        CHECK_THROWS_AS(hdbscan(d, 4), TooFewPoints);
        d[0][1] = 2.0;
        CHECK_THROWS_AS(validate_distance_matrix(d), std::invalid_argument);
        d[0][1] = d[1][0] = -1.0;
        CHECK_THROWS_AS(validate_distance_matrix(d), std::invalid_argument);
    }
}

TEST_CASE("hdbscan matches scikit-learn on recorded matrices") {
    std::ifstream in(std::string(FEDPOISON_SOURCE_DIR) + "/tests/fixtures/hdbscan_sklearn.json");
    REQUIRE(in.good());
    auto cases = nlohmann::json::parse(in);
    REQUIRE(cases.size() >= 20);
    int idx = 0;
    for (const auto& c : cases) {
        CAPTURE(idx);
        HdbscanOptions opt;
        opt.min_cluster_size = c["min_cluster_size"];
        opt.min_samples = c["min_samples"];
        opt.allow_single_cluster = c["allow_single_cluster"];
        auto d = c["dist"].get<DistanceMatrix>();
        auto expected = c["labels"].get<std::vector<int>>();
        auto got = hdbscan(d, opt);
        CHECK(same_partition(got, expected));
        ++idx;
    }
}

TEST_CASE("hdbscan is equivariant under permutation") {
    std::ifstream in(std::string(FEDPOISON_SOURCE_DIR) + "/tests/fixtures/hdbscan_sklearn.json");
    auto cases = nlohmann::json::parse(in);
    std::mt19937_64 rng(7);
    for (std::size_t k : {0u, 6u, 20u}) {
        const auto& c = cases[k];
        HdbscanOptions opt;
        opt.min_cluster_size = c["min_cluster_size"];
        opt.min_samples = c["min_samples"];
        opt.allow_single_cluster = c["allow_single_cluster"];
        auto d = c["dist"].get<DistanceMatrix>();
        const std::size_t n = d.size();
        std::vector<std::size_t> p(n);
        std::iota(p.begin(), p.end(), 0);
        std::shuffle(p.begin(), p.end(), rng);
        DistanceMatrix dp(n, std::vector<double>(n));
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) dp[i][j] = d[p[i]][p[j]];
        auto base = hdbscan(d, opt), perm = hdbscan(dp, opt);
        std::vector<int> mapped(n);
        for (std::size_t i = 0; i < n; ++i) mapped[i] = base[p[i]];
        CHECK(same_partition(perm, mapped));
    }
}

TEST_CASE("kmeans_1d") {
    auto r = kmeans_1d({0.1, 0.9, 0.1, 0.9}, 2);
    CHECK(r.labels == std::vector<int>{0, 1, 0, 1});
    CHECK(r.wcss == doctest::Approx(0.0));
    CHECK(kmeans_1d({0.3, 0.5, 0.1}, 1).labels == std::vector<int>{0, 0, 0});

    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-2.0, 5.0);
    for (int trial = 0; trial < 25; ++trial) {
        std::vector<double> xs(8);
        for (double& x : xs) x = u(rng);
        auto km = kmeans_1d(xs, 2);
        CHECK(km.wcss == doctest::Approx(brute_force_2means(xs)).epsilon(1e-10));
        for (int k = 1; k <= 4; ++k) {
            auto res = kmeans_1d(xs, k);
            std::vector<std::size_t> order(xs.size());
            std::iota(order.begin(), order.end(), 0);
            std::sort(order.begin(), order.end(), [&](auto a, auto b) { return xs[a] < xs[b]; });
            for (std::size_t i = 1; i < order.size(); ++i) CHECK(res.labels[order[i]] >= res.labels[order[i - 1]]);
        }
    }
}

TEST_CASE("gap statistic") {
    SUBCASE("constant scores give one cluster") {
        CHECK(gap_statistic(std::vector<double>(12, 0.4), 5, 10, 1).k == 1);
    }
    SUBCASE("two point masses give at least two clusters") {
        std::vector<double> xs(10, 0.0);
        xs.insert(xs.end(), 10, 1.0);
        for (std::uint64_t s = 0; s < 100; ++s) CHECK(gap_statistic(xs, 5, 10, s).k >= 2);
    }
    SUBCASE("uniform scores mostly give one cluster and k stays in range") {
        int ones = 0;
        for (std::uint64_t s = 0; s < 100; ++s) {
            std::mt19937_64 rng(1000 + s);
            std::uniform_real_distribution<double> u(0.0, 1.0);
            std::vector<double> xs(20);
            for (double& x : xs) x = u(rng);
            int k = gap_statistic(xs, 5, 10, s).k;
            CHECK(k >= 1);
            CHECK(k <= 5);
            ones += k == 1;
        }
        CHECK(ones > 50);
    }
}
