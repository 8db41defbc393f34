#include <algorithm>
#include <cmath>
#include <random>

#include "doctest.h"
#include "fedpoison/aggregators.hpp"

using namespace fedpoison;

namespace {

ParamVector random_vec(std::mt19937_64& rng, int d, double sd = 1.0) {
    std::normal_distribution<double> n(0.0, sd);
    ParamVector v(d);
    for (double& x : v) x = n(rng);
    return v;
}

// Smallest-diameter subset of size n - f by trying every subset.
double brute_force_min_diameter(const std::vector<ParamVector>& vs, int f) {
    const int n = static_cast<int>(vs.size());
    double best = INFINITY;
    for (int mask = 0; mask < (1 << n); ++mask) {
        if (__builtin_popcount(mask) != n - f) continue;
        std::vector<int> s;
        for (int i = 0; i < n; ++i)
            if ((mask >> i) & 1) s.push_back(i);
        best = std::min(best, subset_diameter(vs, s));
    }
    return best;
}

}  // namespace

TEST_CASE("fedavg") {
    CHECK(fedavg({{1, 1}, {3, 3}}) == ParamVector{2, 2});
    CHECK(fedavg({{0.3, -7}}) == ParamVector{0.3, -7});
    ParamVector v{0.1, 0.2, 0.7};
    ParamVector m = fedavg({v, v, v});
    for (int k = 0; k < 3; ++k) CHECK(m[k] == doctest::Approx(v[k]));
    CHECK_THROWS(fedavg({}));
    CHECK_THROWS(fedavg({{1, 2}, {1}}));
}

TEST_CASE("cc_aggregate") {
    std::mt19937_64 rng(2);
    SUBCASE("inactive clipping equals fedavg") {
        std::vector<ParamVector> u{{1, 0}, {0, 2}, {-1, -1}};
        auto r = cc_aggregate(u, 10.0);
        auto avg = fedavg(u);
        for (int k = 0; k < 2; ++k) CHECK(r.update[k] == doctest::Approx(avg[k]));
        CHECK(r.trace.count_clipped() == 0);
    }
    SUBCASE("one large update among zeros") {
        const double tau = 2.0;
        std::vector<ParamVector> u(4, ParamVector{0, 0, 0});
        u.push_back({0, 20, 0});
        auto r = cc_aggregate(u, tau);
        CHECK(l2_norm(r.update) == doctest::Approx(tau / 5));
        CHECK(r.trace.entries[4].clipped_factor == doctest::Approx(0.1));
    }
    SUBCASE("trace factors and output norm bound") {
        for (int rep = 0; rep < 20; ++rep) {
            std::vector<ParamVector> u;
            for (int i = 0; i < 8; ++i) u.push_back(random_vec(rng, 5, 3.0));
            const double tau = 1.0 + rep * 0.25;
            auto r = cc_aggregate(u, tau);
            CHECK(l2_norm(r.update) <= tau * (1 + 1e-12));
            for (int i = 0; i < 8; ++i)
                CHECK(r.trace.entries[i].clipped_factor == std::min(1.0, tau / l2_norm(u[i])));
        }
    }
    CHECK_THROWS(cc_aggregate({{1.0}}, 0.0));
}

TEST_CASE("ccb_aggregate") {
    std::mt19937_64 rng(4);
    std::vector<ParamVector> u;
    for (int i = 0; i < 5; ++i) u.push_back(random_vec(rng, 3));
    SUBCASE("s=1 is bitwise CC") {
        auto a = ccb_aggregate(u, 1.5, 1, 77), b = cc_aggregate(u, 1.5);
        CHECK(a.update == b.update);
    }
    SUBCASE("buckets follow the seeded permutation") {
        auto perm = ccb_permutation(5, 9);
        std::vector<std::size_t> sorted = perm;
        std::sort(sorted.begin(), sorted.end());
        CHECK(sorted == std::vector<std::size_t>{0, 1, 2, 3, 4});
        CHECK(ccb_permutation(5, 9) == perm);
        // buckets {p0,p1}, {p2,p3}, {p4}; tau large so clipping is off
        ParamVector expect(3, 0.0);
        for (int k = 0; k < 3; ++k)
            expect[k] = ((u[perm[0]][k] + u[perm[1]][k]) / 2 + (u[perm[2]][k] + u[perm[3]][k]) / 2 + u[perm[4]][k]) / 3;
        auto r = ccb_aggregate(u, 1e9, 2, 9);
        for (int k = 0; k < 3; ++k) CHECK(r.update[k] == doctest::Approx(expect[k]));
        CHECK(r.trace.entries.size() == 5);
    }
    SUBCASE("bucket means average to fedavg when s divides n") {
        std::vector<ParamVector> four(u.begin(), u.begin() + 4);
        auto r = ccb_aggregate(four, 1e9, 2, 3);
        auto avg = fedavg(four);
        for (int k = 0; k < 3; ++k) CHECK(r.update[k] == doctest::Approx(avg[k]));
    }
}

TEST_CASE("flame_aggregate") {
    FlameParams p;
    std::mt19937_64 rng(6);
    SUBCASE("identical benign updates pass through") {
        std::vector<ParamVector> u(5, ParamVector{0.5, -1.0, 2.0});
        auto r = flame_aggregate(u, zeros(3), p, 1);
        for (int k = 0; k < 3; ++k) CHECK(r.update[k] == doctest::Approx(u[0][k]));
        CHECK(r.trace.count_rejected() == 0);
    }
    SUBCASE("opposite-direction updates are rejected") {
        ParamVector dir(10, 1.0);
        std::vector<ParamVector> u;
        for (int i = 0; i < 9; ++i) u.push_back(add(dir, random_vec(rng, 10, 0.05)));
        u.push_back(scale(dir, -1.0));
        u.push_back(add(scale(dir, -1.0), random_vec(rng, 10, 0.05)));
        auto r = flame_aggregate(u, zeros(10), p, 1);
        CHECK_FALSE(r.trace.entries[9].accepted);
        CHECK_FALSE(r.trace.entries[10].accepted);
        CHECK(r.trace.entries[0].cluster_label.has_value());
    }
    SUBCASE("median clipping bound") {
        ParamVector dir{0.6, 0.8};
        std::vector<ParamVector> u;
        for (double s : {1.0, 2.0, 3.0, 4.0, 100.0}) u.push_back(scale(dir, s));
        auto e = flame_clip_reference(u, zeros(2), FlameClipMode::ParamDistance);
        CHECK(median(e) == doctest::Approx(3.0));
        auto r = flame_aggregate(u, zeros(2), p, 1);
        CHECK(r.trace.entries[4].clipped_factor <= 3.0 / 100 + 1e-12);
        CHECK(r.trace.entries[0].clipped_factor == 1.0);
        // output = mean of admitted clipped updates: norms 1,2,3,3,3
        CHECK(l2_norm(r.update) == doctest::Approx(12.0 / 5));
    }
    SUBCASE("clip reference modes") {
        std::vector<ParamVector> u{{3, 4}, {0, 1}};
        ParamVector w{3, 0};
        auto pd = flame_clip_reference(u, w, FlameClipMode::ParamDistance);
        auto un = flame_clip_reference(u, w, FlameClipMode::UpdateNorm);
        CHECK(pd[0] == doctest::Approx(4.0));
        CHECK(pd[1] == doctest::Approx(std::sqrt(10.0)));
        CHECK(un[0] == doctest::Approx(5.0));
        CHECK(un[1] == doctest::Approx(1.0));
    }
    SUBCASE("output is the mean of admitted clipped updates") {
        for (int rep = 0; rep < 10; ++rep) {
            ParamVector base = random_vec(rng, 6);
            std::vector<ParamVector> u;
            for (int i = 0; i < 12; ++i) u.push_back(add(base, random_vec(rng, 6, 0.3 + 0.1 * (i % 3))));
            ParamVector w = random_vec(rng, 6);
            auto r = flame_aggregate(u, w, p, 1);
            ParamVector expect(6, 0.0);
            int admitted = 0;
            for (int i = 0; i < 12; ++i)
                if (r.trace.entries[i].accepted) {
                    axpy(r.trace.entries[i].clipped_factor, u[i], expect);
                    ++admitted;
                }
            REQUIRE(admitted >= 7);
            for (int k = 0; k < 6; ++k) CHECK(r.update[k] == doctest::Approx(expect[k] / admitted));
        }
    }
    SUBCASE("noise is seeded") {
        FlameParams noisy = p;
        noisy.sigma = 0.1;
        std::vector<ParamVector> u(5, ParamVector{1.0, 1.0});
        auto a = flame_aggregate(u, zeros(2), noisy, 3), b = flame_aggregate(u, zeros(2), noisy, 3);
        CHECK(a.update == b.update);
        CHECK(a.update != flame_aggregate(u, zeros(2), noisy, 4).update);
    }
    CHECK_THROWS(flame_aggregate({{1.0}, {2.0}}, zeros(1), p, 1));
}

TEST_CASE("mdam selection") {
    SUBCASE("1-D example") {
        std::vector<ParamVector> m{{0}, {1}, {2}, {100}};
        CHECK(mdam_select(m, 1) == std::vector<int>{0, 1, 2});
    }
    SUBCASE("matches brute force for n <= 12") {
        std::mt19937_64 rng(12);
        for (int n = 3; n <= 12; ++n)
            for (int f = 0; 2 * f < n; ++f) {
                std::vector<ParamVector> m;
                for (int i = 0; i < n; ++i) m.push_back(random_vec(rng, 2));
                auto s = mdam_select(m, f);
                CHECK(s.size() == static_cast<std::size_t>(n - f));
                CHECK(std::is_sorted(s.begin(), s.end()));
                CHECK(subset_diameter(m, s) == doctest::Approx(brute_force_min_diameter(m, f)));
            }
    }
}

TEST_CASE("MdamAggregator") {
    AggregatorSpec spec;
    spec.kind = AggregatorKind::Mdam;
    spec.f_assumed = 1;
    SUBCASE("beta 0 uses raw updates") {
        spec.beta = 0.0;
        auto agg = make_aggregator(spec);
        auto r = agg->aggregate({{0}, {1}, {2}, {100}}, zeros(1), 1);
        CHECK(r.update[0] == doctest::Approx(1.0));
        CHECK_FALSE(r.trace.entries[3].accepted);
        CHECK(r.trace.count_rejected() == 1);
    }
    SUBCASE("momentum folds over rounds") {
        spec.beta = 0.5;
        MdamAggregator agg(spec);
        agg.aggregate({{2}, {2}, {2}, {2}}, zeros(1), 1);
        CHECK(agg.momenta()[0][0] == doctest::Approx(1.0));
        agg.aggregate({{4}, {4}, {4}, {4}}, zeros(1), 2);
        CHECK(agg.momenta()[0][0] == doctest::Approx(2.5));
        MdamAggregator copy(spec);
        copy.load_state(agg.save_state());
        CHECK(copy.momenta() == agg.momenta());
    }
    SUBCASE("needs n > 2f") {
        spec.f_assumed = 2;
        auto agg = make_aggregator(spec);
        CHECK_THROWS(agg->aggregate({{0}, {1}, {2}, {3}}, zeros(1), 1));
    }
}

TEST_CASE("FLDetector") {
    CHECK(normalize_l1({1, 1, 2}) == std::vector<double>{0.25, 0.25, 0.5});
    CHECK(normalize_l1({0, 0}) == std::vector<double>{0.5, 0.5});

    AggregatorSpec spec;
    spec.kind = AggregatorKind::FLDetector;
    spec.n_window = 3;

    SUBCASE("identical updates filter nobody") {
        FLDetectorAggregator agg(spec);
        ParamVector w{1.0, -1.0, 0.5};
        for (int t = 0; t < 10; ++t) {
            std::vector<ParamVector> u(6, scale(w, 0.5));
            auto r = agg.aggregate(u, w, t);
            CHECK(r.trace.count_rejected() == 0);
            axpy(-0.2, r.update, w);
            if (agg.warmed_up()) CHECK(agg.last_k() == 1);
        }
    }
    SUBCASE("fixed random vector on a quadratic is filtered after warm-up") {
        // honest gradient of 0.5 w'Aw plus small noise; client 0 repeats one vector
        std::mt19937_64 rng(21);
        const int d = 8;
        std::vector<double> diag(d);
        for (int k = 0; k < d; ++k) diag[k] = 0.5 + 0.25 * k;
        ParamVector w = random_vec(rng, d, 2.0);
        ParamVector bad = random_vec(rng, d, 2.0);
        FLDetectorAggregator agg(spec);
        int filtered = 0, post = 0;
        for (int t = 0; t < 20; ++t) {
            std::vector<ParamVector> u{bad};
            for (int i = 0; i < 9; ++i) {
                ParamVector g(d);
                for (int k = 0; k < d; ++k) g[k] = diag[k] * w[k];
                u.push_back(add(g, random_vec(rng, d, 0.01)));
            }
            auto r = agg.aggregate(u, w, t);
            if (agg.warmed_up()) {
                ++post;
                filtered += !r.trace.entries[0].accepted;
                auto sc = *r.trace.entries[0].suspicious_score;
                for (int i = 1; i < 10; ++i) CHECK(*r.trace.entries[i].suspicious_score < sc);
            }
            axpy(-0.1, r.update, w);
        }
        CHECK(post > 0);
        CHECK(filtered == post);
    }
    SUBCASE("state round trip") {
        FLDetectorAggregator a(spec), b(spec);
        std::mt19937_64 rng(1);
        ParamVector w = random_vec(rng, 4);
        for (int t = 0; t < 6; ++t) {
            std::vector<ParamVector> u;
            for (int i = 0; i < 5; ++i) u.push_back(random_vec(rng, 4));
            a.aggregate(u, w, t);
            axpy(-0.1, fedavg(u), w);
        }
        b.load_state(a.save_state());
        std::vector<ParamVector> u;
        for (int i = 0; i < 5; ++i) u.push_back(random_vec(rng, 4));
        CHECK(a.aggregate(u, w, 99).update == b.aggregate(u, w, 99).update);
    }
}

TEST_CASE("aggregator names round trip") {
    for (auto k : {AggregatorKind::FedAvg, AggregatorKind::Flame, AggregatorKind::Mdam, AggregatorKind::FLDetector,
                   AggregatorKind::CC, AggregatorKind::CCB})
        CHECK(aggregator_kind_from_string(to_string(k)) == k);
    CHECK_THROWS(aggregator_kind_from_string("krum"));
}
