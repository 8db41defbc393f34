#include "fedpoison/data.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "fedpoison/rng.hpp"

namespace fedpoison {

LabeledExample Dataset::example(std::size_t i) const {
    LabeledExample e;
    e.pixels.assign(row(i), row(i) + dim());
    e.label = labels[i];
    return e;
}

void Dataset::push_back(const LabeledExample& e) {
    if (static_cast<int>(e.pixels.size()) != dim()) throw std::invalid_argument("example size mismatch");
    pixels.insert(pixels.end(), e.pixels.begin(), e.pixels.end());
    labels.push_back(e.label);
}

Dataset Dataset::empty_like() const {
    Dataset d;
    d.height = height;
    d.width = width;
    d.num_classes = num_classes;
    return d;
}

Dataset Dataset::subset(const std::vector<std::size_t>& idx) const {
    Dataset d = empty_like();
    d.pixels.reserve(idx.size() * dim());
    d.labels.reserve(idx.size());
    for (std::size_t i : idx) {
        d.pixels.insert(d.pixels.end(), row(i), row(i) + dim());
        d.labels.push_back(labels[i]);
    }
    return d;
}

Dataset downsample(const Dataset& ds, int factor) {
    if (factor < 1 || ds.height % factor || ds.width % factor)
        throw std::invalid_argument("downsample factor must divide the image size");
    Dataset out = ds.empty_like();
    out.height = ds.height / factor;
    out.width = ds.width / factor;
    out.labels = ds.labels;
    out.pixels.assign(ds.size() * out.dim(), 0.0);
    const double inv = 1.0 / (factor * factor);
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const double* src = ds.row(i);
        double* dst = out.row(i);
        for (int r = 0; r < ds.height; ++r)
            for (int c = 0; c < ds.width; ++c) dst[(r / factor) * out.width + c / factor] += src[r * ds.width + c] * inv;
    }
    return out;
}

// ---- partitioning ----

namespace {

std::vector<std::vector<std::size_t>> split_even(const std::vector<std::size_t>& order, int n) {
    std::vector<std::vector<std::size_t>> out(n);
    const std::size_t total = order.size();
    for (int c = 0; c < n; ++c) {
        std::size_t lo = total * c / n, hi = total * (c + 1) / n;
        out[c].assign(order.begin() + lo, order.begin() + hi);
    }
    return out;
}

}  // namespace

std::vector<std::vector<std::size_t>> partition(const std::vector<int>& labels, int num_classes,
                                                const PartitionSpec& spec) {
    const int n = spec.n_clients;
    if (n < 1) throw std::invalid_argument("partition: n_clients must be positive");
    if (static_cast<std::size_t>(n) > labels.size()) throw EmptyShard("partition: more clients than examples");
    Rng rng(derive_seed(spec.seed, "partition"));
    std::vector<std::vector<std::size_t>> shards;

    if (spec.mode == PartitionMode::IID) {
        std::vector<std::size_t> order(labels.size());
        std::iota(order.begin(), order.end(), 0);
        std::shuffle(order.begin(), order.end(), rng);
        shards = split_even(order, n);
    } else if (spec.mode == PartitionMode::Dirichlet) {
        if (!(spec.alpha > 0.0)) throw std::invalid_argument("partition: alpha must be positive");
        shards.assign(n, {});
        std::gamma_distribution<double> gam(spec.alpha, 1.0);
        for (int y = 0; y < num_classes; ++y) {
            std::vector<std::size_t> members;
            for (std::size_t i = 0; i < labels.size(); ++i)
                if (labels[i] == y) members.push_back(i);
            std::shuffle(members.begin(), members.end(), rng);
            std::vector<double> p(n);
            double s = 0.0;
            for (double& v : p) s += (v = gam(rng));
            if (s <= 0.0) {  // all draws underflowed; fall back to a single owner
                std::fill(p.begin(), p.end(), 0.0);
                p[std::uniform_int_distribution<int>(0, n - 1)(rng)] = 1.0;
                s = 1.0;
            }
            double cum = 0.0;
            std::size_t start = 0;
            for (int c = 0; c < n; ++c) {
                cum += p[c] / s;
                std::size_t end = (c == n - 1) ? members.size()
                                               : std::min(members.size(), static_cast<std::size_t>(
                                                                              std::llround(cum * members.size())));
                end = std::max(end, start);
                shards[c].insert(shards[c].end(), members.begin() + start, members.begin() + end);
                start = end;
            }
        }
        for (auto& s : shards) std::sort(s.begin(), s.end());
    } else {
        const int m = n * spec.shards_per_client;
        if (spec.shards_per_client < 1 || static_cast<std::size_t>(m) > labels.size())
            throw std::invalid_argument("partition: bad shards_per_client");
        std::vector<std::size_t> order(labels.size());
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return labels[a] < labels[b]; });
        auto pieces = split_even(order, m);
        std::vector<int> assign(m);
        std::iota(assign.begin(), assign.end(), 0);
        std::shuffle(assign.begin(), assign.end(), rng);
        shards.assign(n, {});
        for (int k = 0; k < m; ++k) {
            auto& dst = shards[k / spec.shards_per_client];
            dst.insert(dst.end(), pieces[assign[k]].begin(), pieces[assign[k]].end());
        }
        for (auto& s : shards) std::sort(s.begin(), s.end());
    }

    for (int c = 0; c < n; ++c)
        if (shards[c].empty()) throw EmptyShard("client " + std::to_string(c) + " received no examples");
    return shards;
}

// ---- poisoning ----

Rect TriggerSpec::local_rect(int index) const {
    if (index < 0 || index >= n_local) throw IndexOutOfRange("local trigger index " + std::to_string(index));
    Rect r = shape;
    r.row = shape.row + shape.height * index / n_local;
    r.height = shape.row + shape.height * (index + 1) / n_local - r.row;
    return r;
}

void TriggerSpec::validate(int height, int width) const {
    if (shape.row < 0 || shape.col < 0 || shape.height < 1 || shape.width < 1 || shape.row + shape.height > height ||
        shape.col + shape.width > width)
        throw IndexOutOfRange("trigger rectangle outside the image");
    if (n_local < 1 || n_local > shape.height) throw std::invalid_argument("n_local must be in [1, trigger height]");
    if (!(pixel_value >= 0.0 && pixel_value <= 1.0)) throw std::invalid_argument("trigger pixel value outside [0,1]");
    if (!(poison_rate > 0.0 && poison_rate <= 1.0)) throw std::invalid_argument("poison rate outside (0,1]");
}

void apply_rect(double* pixels, int width, const Rect& r, double value) {
    for (int i = r.row; i < r.row + r.height; ++i)
        for (int j = r.col; j < r.col + r.width; ++j) pixels[i * width + j] = value;
}

LabeledExample inject_trigger(const LabeledExample& ex, const TriggerSpec& trig, int height, int width,
                              std::optional<int> local_index) {
    trig.validate(height, width);
    if (static_cast<int>(ex.pixels.size()) != height * width) throw std::invalid_argument("example size mismatch");
    LabeledExample out = ex;
    Rect r = local_index ? trig.local_rect(*local_index) : trig.shape;
    apply_rect(out.pixels.data(), width, r, trig.pixel_value);
    out.label = trig.target_label;
    return out;
}

std::size_t poison_count(double rate, std::size_t count) {
    // guard against 0.5*100 landing a hair above 50
    return std::min(count, static_cast<std::size_t>(std::ceil(rate * static_cast<double>(count) - 1e-9)));
}

Dataset poison_shard(const Dataset& shard, const TriggerSpec& trig, std::optional<int> local_index,
                     std::uint64_t seed) {
    trig.validate(shard.height, shard.width);
    Rect r = local_index ? trig.local_rect(*local_index) : trig.shape;
    std::vector<std::size_t> order(shard.size());
    std::iota(order.begin(), order.end(), 0);
    Rng rng(derive_seed(seed, "poison_select"));
    std::shuffle(order.begin(), order.end(), rng);
    Dataset out = shard;
    const std::size_t k = poison_count(trig.poison_rate, shard.size());
    for (std::size_t t = 0; t < k; ++t) {
        apply_rect(out.row(order[t]), out.width, r, trig.pixel_value);
        out.labels[order[t]] = trig.target_label;
    }
    return out;
}

Dataset flip_labels(const Dataset& shard, const FlipMode& mode, std::uint64_t seed) {
    Dataset out = shard;
    if (mode.kind == FlipMode::UniformFlip) {
        for (int& y : out.labels) y = shard.num_classes - 1 - y;
        return out;
    }
    if (!(mode.rate > 0.0 && mode.rate <= 1.0)) throw std::invalid_argument("class bias rate outside (0,1]");
    std::vector<std::size_t> eligible;
    for (std::size_t i = 0; i < shard.size(); ++i) {
        int y = shard.labels[i];
        if (y != mode.target && (mode.source < 0 || y == mode.source)) eligible.push_back(i);
    }
    Rng rng(derive_seed(seed, "class_bias_select"));
    std::shuffle(eligible.begin(), eligible.end(), rng);
    const std::size_t k = poison_count(mode.rate, eligible.size());
    for (std::size_t t = 0; t < k; ++t) out.labels[eligible[t]] = mode.target;
    return out;
}

}  // namespace fedpoison
