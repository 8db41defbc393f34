#include "fedpoison/mlp.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "fedpoison/rng.hpp"

namespace fedpoison {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMat = Eigen::Map<const Eigen::MatrixXd>;
using ConstVec = Eigen::Map<const Eigen::VectorXd>;

}  // namespace

Mlp::Mlp(ModelSpec spec) : spec_(std::move(spec)) {
    if (spec_.layer_widths.size() < 2) throw std::invalid_argument("model needs at least input and output widths");
    for (int w : spec_.layer_widths)
        if (w < 1) throw std::invalid_argument("layer widths must be positive");
    std::size_t off = 0;
    for (std::size_t l = 0; l + 1 < spec_.layer_widths.size(); ++l) {
        offsets_.push_back(off);
        off += static_cast<std::size_t>(spec_.layer_widths[l]) * spec_.layer_widths[l + 1] + spec_.layer_widths[l + 1];
    }
    num_params_ = off;
}

ParamVector Mlp::init_params(std::uint64_t seed) const {
    ParamVector w(num_params_);
    Rng rng(derive_seed(seed, "model_init"));
    for (std::size_t l = 0; l + 1 < spec_.layer_widths.size(); ++l) {
        const int in = spec_.layer_widths[l], out = spec_.layer_widths[l + 1];
        const double a = 1.0 / std::sqrt(static_cast<double>(in));
        std::uniform_real_distribution<double> u(-a, a);
        std::size_t cnt = static_cast<std::size_t>(in) * out + out;
        for (std::size_t k = 0; k < cnt; ++k) w[offsets_[l] + k] = u(rng);
    }
    return w;
}

std::vector<Mlp::Layer> Mlp::unflatten(const ParamVector& w) const {
    if (w.size() != num_params_) throw DimensionMismatch("Mlp::unflatten");
    std::vector<Layer> layers;
    for (std::size_t l = 0; l + 1 < spec_.layer_widths.size(); ++l) {
        Layer L;
        L.in = spec_.layer_widths[l];
        L.out = spec_.layer_widths[l + 1];
        auto p = w.begin() + offsets_[l];
        L.weight.assign(p, p + static_cast<std::size_t>(L.in) * L.out);
        p += static_cast<std::ptrdiff_t>(L.weight.size());
        L.bias.assign(p, p + L.out);
        layers.push_back(std::move(L));
    }
    return layers;
}

ParamVector Mlp::flatten(const std::vector<Layer>& layers) const {
    if (layers.size() + 1 != spec_.layer_widths.size()) throw DimensionMismatch("Mlp::flatten");
    ParamVector w;
    w.reserve(num_params_);
    for (std::size_t l = 0; l < layers.size(); ++l) {
        const auto& L = layers[l];
        if (L.in != spec_.layer_widths[l] || L.out != spec_.layer_widths[l + 1] ||
            L.weight.size() != static_cast<std::size_t>(L.in) * L.out || L.bias.size() != static_cast<std::size_t>(L.out))
            throw DimensionMismatch("Mlp::flatten");
        w.insert(w.end(), L.weight.begin(), L.weight.end());
        w.insert(w.end(), L.bias.begin(), L.bias.end());
    }
    return w;
}

double Mlp::loss_and_grad(const ParamVector& w, const double* X, const int* y, std::size_t n,
                          ParamVector* grad) const {
    if (w.size() != num_params_) throw DimensionMismatch("Mlp::loss_and_grad");
    if (n == 0) throw std::invalid_argument("empty batch");
    const std::size_t L = spec_.layer_widths.size() - 1;
    std::vector<RowMat> acts;  // acts[0] = input, acts[l] = post-activation of layer l
    acts.reserve(L + 1);
    acts.emplace_back(Eigen::Map<const RowMat>(X, static_cast<Eigen::Index>(n), input_dim()));
    for (std::size_t l = 0; l < L; ++l) {
        const int in = spec_.layer_widths[l], out = spec_.layer_widths[l + 1];
        ConstMat W(w.data() + offsets_[l], out, in);
        ConstVec b(w.data() + offsets_[l] + static_cast<std::size_t>(in) * out, out);
        RowMat z = acts[l] * W.transpose();
        z.rowwise() += b.transpose();
        if (l + 1 < L) z = z.cwiseMax(0.0);
        acts.push_back(std::move(z));
    }

    RowMat& z = acts.back();
    const int k = num_classes();
    RowMat delta(static_cast<Eigen::Index>(n), k);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        if (y[i] < 0 || y[i] >= k) throw std::invalid_argument("label out of range");
        if (spec_.loss == Loss::CrossEntropy) {
            double m = z.row(i).maxCoeff();
            double s = 0.0;
            for (int c = 0; c < k; ++c) s += std::exp(z(i, c) - m);
            double lse = m + std::log(s);
            total += lse - z(i, y[i]);
            for (int c = 0; c < k; ++c) delta(i, c) = std::exp(z(i, c) - lse);
            delta(i, y[i]) -= 1.0;
        } else {
            for (int c = 0; c < k; ++c) {
                double r = z(i, c) - (c == y[i] ? 1.0 : 0.0);
                total += 0.5 * r * r;
                delta(i, c) = r;
            }
        }
    }
    const double inv_n = 1.0 / static_cast<double>(n);
    if (!grad) return total * inv_n;

    delta *= inv_n;
    grad->assign(num_params_, 0.0);
    for (std::size_t l = L; l-- > 0;) {
        const int in = spec_.layer_widths[l], out = spec_.layer_widths[l + 1];
        Eigen::Map<Eigen::MatrixXd> gW(grad->data() + offsets_[l], out, in);
        Eigen::Map<Eigen::VectorXd> gb(grad->data() + offsets_[l] + static_cast<std::size_t>(in) * out, out);
        gW.noalias() = delta.transpose() * acts[l];
        gb = delta.colwise().sum().transpose();
        if (l > 0) {
            ConstMat W(w.data() + offsets_[l], out, in);
            RowMat prev = delta * W;
            delta = (acts[l].array() > 0.0).select(prev, 0.0);
        }
    }
    return total * inv_n;
}

double Mlp::loss(const ParamVector& w, const Dataset& ds) const {
    return loss_and_grad(w, ds.pixels.data(), ds.labels.data(), ds.size(), nullptr);
}

std::vector<double> Mlp::logits(const ParamVector& w, const double* X, std::size_t n) const {
    if (w.size() != num_params_) throw DimensionMismatch("Mlp::logits");
    RowMat a = Eigen::Map<const RowMat>(X, static_cast<Eigen::Index>(n), input_dim());
    const std::size_t L = spec_.layer_widths.size() - 1;
    for (std::size_t l = 0; l < L; ++l) {
        const int in = spec_.layer_widths[l], out = spec_.layer_widths[l + 1];
        ConstMat W(w.data() + offsets_[l], out, in);
        ConstVec b(w.data() + offsets_[l] + static_cast<std::size_t>(in) * out, out);
        RowMat z = a * W.transpose();
        z.rowwise() += b.transpose();
        if (l + 1 < L) z = z.cwiseMax(0.0);
        a = std::move(z);
    }
    return std::vector<double>(a.data(), a.data() + a.size());
}

std::vector<int> Mlp::predict(const ParamVector& w, const double* X, std::size_t n) const {
    auto z = logits(w, X, n);
    const int k = num_classes();
    std::vector<int> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double* r = z.data() + i * k;
        out[i] = static_cast<int>(std::max_element(r, r + k) - r);  // first maximum wins ties
    }
    return out;
}

std::vector<int> Mlp::predict(const ParamVector& w, const Dataset& ds) const {
    return predict(w, ds.pixels.data(), ds.size());
}

ParamVector local_train(const Mlp& model, const ParamVector& w, const Dataset& shard, const TrainConfig& cfg,
                        std::uint64_t seed) {
    if (shard.size() == 0) throw std::invalid_argument("local_train: empty shard");
    if (cfg.batch_size < 1 || !(cfg.client_lr > 0.0) || cfg.local_epochs < 0)
        throw std::invalid_argument("local_train: bad train config");
    ParamVector cur = w, grad;
    std::vector<std::size_t> order(shard.size());
    std::vector<double> xb;
    std::vector<int> yb;
    const int dim = shard.dim();
    long steps = 0;
    for (int e = 0; e < cfg.local_epochs; ++e) {
        std::iota(order.begin(), order.end(), 0);
        Rng rng(derive_seed(seed, "batch_order", {static_cast<std::uint64_t>(e)}));
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t s = 0; s < order.size(); s += cfg.batch_size) {
            std::size_t m = std::min<std::size_t>(cfg.batch_size, order.size() - s);
            xb.resize(m * dim);
            yb.resize(m);
            for (std::size_t t = 0; t < m; ++t) {
                std::copy(shard.row(order[s + t]), shard.row(order[s + t]) + dim, xb.begin() + t * dim);
                yb[t] = shard.labels[order[s + t]];
            }
            model.loss_and_grad(cur, xb.data(), yb.data(), m, &grad);
            axpy(-cfg.client_lr, grad, cur);
            ++steps;
        }
    }
    if (steps == 0) return zeros(w.size());
    ParamVector g = sub(w, cur);
    for (double& x : g) x /= cfg.client_lr * static_cast<double>(steps);
    return g;
}

Accuracy evaluate(const Mlp& model, const ParamVector& w, const Dataset& test, const TriggerSpec* trig) {
    if (test.size() == 0) throw std::invalid_argument("evaluate: empty test set");
    Accuracy acc;
    auto pred = model.predict(w, test);
    std::size_t ok = 0;
    for (std::size_t i = 0; i < test.size(); ++i) ok += pred[i] == test.labels[i];
    acc.ma = static_cast<double>(ok) / test.size();
    if (trig) {
        std::vector<std::size_t> keep;
        for (std::size_t i = 0; i < test.size(); ++i)
            if (test.labels[i] != trig->target_label) keep.push_back(i);
        if (!keep.empty()) {
            Dataset t = test.subset(keep);
            for (std::size_t i = 0; i < t.size(); ++i) apply_rect(t.row(i), t.width, trig->shape, trig->pixel_value);
            auto pb = model.predict(w, t);
            std::size_t hit = 0;
            for (int p : pb) hit += p == trig->target_label;
            acc.ba = static_cast<double>(hit) / t.size();
        }
    }
    return acc;
}

}  // namespace fedpoison
