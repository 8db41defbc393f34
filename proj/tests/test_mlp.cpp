#include <cmath>
#include <random>

#include "doctest.h"
#include "fedpoison/mlp.hpp"
#include "fedpoison/rng.hpp"

using namespace fedpoison;

namespace {

Dataset random_dataset(int n, int side, int classes, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Dataset ds;
    ds.height = ds.width = side;
    ds.num_classes = classes;
    for (int i = 0; i < n; ++i) {
        LabeledExample e;
        for (int k = 0; k < side * side; ++k) e.pixels.push_back(u(rng));
        e.label = static_cast<int>(rng() % classes);
        ds.push_back(e);
    }
    return ds;
}

}  // namespace

TEST_CASE("parameter count and flatten round trip") {
    Mlp m(ModelSpec{{196, 64, 10}, Loss::CrossEntropy, 0});
    CHECK(m.num_params() == 196 * 64 + 64 + 64 * 10 + 10);
    ParamVector w = m.init_params(4);
    CHECK(m.flatten(m.unflatten(w)) == w);
    auto layers = m.unflatten(w);
    REQUIRE(layers.size() == 2);
    CHECK(layers[0].in == 196);
    CHECK(layers[0].out == 64);
    CHECK(layers[1].bias.size() == 10);
    for (double x : layers[0].weight) CHECK(std::abs(x) <= 1.0 / std::sqrt(196.0));
    CHECK(m.init_params(4) == w);
    CHECK(m.init_params(5) != w);
}

TEST_CASE("squared-error linear model gradient matches closed form") {
    Mlp m(ModelSpec{{2, 2}, Loss::SquaredError, 0});
    // W = [[1,2],[3,4]] stored column-major, b = [0.5,-0.5]
    ParamVector w{1, 3, 2, 4, 0.5, -0.5};
    double x[2] = {0.2, -0.3};
    int y = 1;
    ParamVector g;
    double loss = m.loss_and_grad(w, x, &y, 1, &g);
    double z0 = 1 * 0.2 + 2 * -0.3 + 0.5;  // -0.1
    double z1 = 3 * 0.2 + 4 * -0.3 - 0.5;  // -1.1
    double r0 = z0, r1 = z1 - 1.0;
    CHECK(loss == doctest::Approx(0.5 * (r0 * r0 + r1 * r1)));
    CHECK(g[0] == doctest::Approx(r0 * x[0]));
    CHECK(g[1] == doctest::Approx(r1 * x[0]));
    CHECK(g[2] == doctest::Approx(r0 * x[1]));
    CHECK(g[3] == doctest::Approx(r1 * x[1]));
    CHECK(g[4] == doctest::Approx(r0));
    CHECK(g[5] == doctest::Approx(r1));
}

TEST_CASE("gradient agrees with central finite differences") {
    Mlp m(ModelSpec{{16, 8, 4}, Loss::CrossEntropy, 0});
    Dataset ds = random_dataset(6, 4, 4, 11);
    std::mt19937_64 pick(99);
    int checked = 0;
    for (int model = 0; model < 10; ++model) {
        ParamVector w = m.init_params(100 + model);
        ParamVector g;
        m.loss_and_grad(w, ds.pixels.data(), ds.labels.data(), ds.size(), &g);
        for (int s = 0; s < 20; ++s) {
            std::size_t k = pick() % w.size();
            const double eps = 1e-4;
            ParamVector wp = w, wm = w;
            wp[k] += eps;
            wm[k] -= eps;
            double fd = (m.loss_and_grad(wp, ds.pixels.data(), ds.labels.data(), ds.size(), nullptr) -
                         m.loss_and_grad(wm, ds.pixels.data(), ds.labels.data(), ds.size(), nullptr)) /
                        (2 * eps);
            double denom = std::max({std::abs(fd), std::abs(g[k]), 1e-6});
            CHECK(std::abs(fd - g[k]) / denom < 1e-3);
            ++checked;
        }
    }
    CHECK(checked == 200);
}

TEST_CASE("one small step on a batch lowers its loss") {
    Mlp m(ModelSpec{{16, 8, 4}, Loss::CrossEntropy, 0});
    Dataset ds = random_dataset(12, 4, 4, 3);
    ParamVector w = m.init_params(1), g;
    double before = m.loss_and_grad(w, ds.pixels.data(), ds.labels.data(), ds.size(), &g);
    axpy(-0.01, g, w);
    CHECK(m.loss(w, ds) < before);
}

TEST_CASE("local_train") {
    Mlp m(ModelSpec{{16, 8, 4}, Loss::CrossEntropy, 0});
    Dataset ds = random_dataset(40, 4, 4, 8);
    ParamVector w = m.init_params(2);
    TrainConfig cfg;
    cfg.batch_size = 8;

    SUBCASE("zero epochs give the zero vector") {
        cfg.local_epochs = 0;
        CHECK(local_train(m, w, ds, cfg, 1) == zeros(w.size()));
    }
    SUBCASE("deterministic given the seed") {
        CHECK(local_train(m, w, ds, cfg, 1) == local_train(m, w, ds, cfg, 1));
        CHECK(local_train(m, w, ds, cfg, 1) != local_train(m, w, ds, cfg, 2));
    }
    SUBCASE("one full batch step returns the batch gradient") {
        cfg.batch_size = 40;
        ParamVector g;
        m.loss_and_grad(w, ds.pixels.data(), ds.labels.data(), ds.size(), &g);
        ParamVector lt = local_train(m, w, ds, cfg, 1);
        for (std::size_t k = 0; k < g.size(); ++k) CHECK(lt[k] == doctest::Approx(g[k]).epsilon(1e-9));
    }
    SUBCASE("training lowers the shard loss") {
        cfg.local_epochs = 5;
        ParamVector g = local_train(m, w, ds, cfg, 1);
        ParamVector after = w;
        axpy(-1.0, g, after);
        CHECK(m.loss(after, ds) < m.loss(w, ds));
    }
    SUBCASE("empty shard is rejected") {
        CHECK_THROWS_AS(local_train(m, w, ds.empty_like(), cfg, 1), std::invalid_argument);
    }
}

TEST_CASE("evaluate") {
    SUBCASE("separable two-class data with an explicit separator") {
        Mlp m(ModelSpec{{4, 2}, Loss::CrossEntropy, 0});
        Dataset ds;
        ds.height = ds.width = 2;
        ds.num_classes = 2;
        ds.push_back({{1, 0, 0, 0}, 0});
        ds.push_back({{0.9, 0.1, 0, 0}, 0});
        ds.push_back({{0, 0, 0, 1}, 1});
        ds.push_back({{0, 0.2, 0, 0.8}, 1});
        // class 0 score x0, class 1 score x3
        ParamVector w(10, 0.0);
        w[0 + 0 * 2] = 1.0;
        w[1 + 3 * 2] = 1.0;
        CHECK(evaluate(m, w, ds, nullptr).ma == 1.0);
    }
    SUBCASE("model that always predicts the target has BA 1") {
        Mlp m(ModelSpec{{16, 4}, Loss::CrossEntropy, 0});
        Dataset ds = random_dataset(30, 4, 4, 5);
        ParamVector w(m.num_params(), 0.0);
        w[16 * 4 + 2] = 5.0;  // bias of class 2
        TriggerSpec t;
        t.target_label = 2;
        t.shape = {0, 0, 2, 2};
        t.n_local = 2;
        Accuracy a = evaluate(m, w, ds, &t);
        CHECK(a.ba == 1.0);
        int twos = 0;
        for (int y : ds.labels) twos += y == 2;
        CHECK(a.ma == doctest::Approx(twos / 30.0));
    }
    SUBCASE("untrained model is near chance on the test set") {
        const std::string root = std::string(FEDPOISON_SOURCE_DIR) + "/data/";
        Dataset test = load_idx(root + "t10k-images-idx3-ubyte", root + "t10k-labels-idx1-ubyte", 2);
        Mlp m(ModelSpec{{196, 64, 10}, Loss::CrossEntropy, 0});
        double ma = evaluate(m, m.init_params(1), test, nullptr).ma;
        CHECK(std::abs(ma - 0.10) <= 0.03 + 1e-12);
    }
    SUBCASE("empty test set") {
        Mlp m(ModelSpec{{16, 4}, Loss::CrossEntropy, 0});
        CHECK_THROWS(evaluate(m, zeros(m.num_params()), Dataset{4, 4, 4, {}, {}}, nullptr));
    }
}
