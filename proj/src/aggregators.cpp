#include "fedpoison/aggregators.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "fedpoison/clustering.hpp"
#include "fedpoison/rng.hpp"

namespace fedpoison {

int AggregationTrace::count_rejected() const {
    return static_cast<int>(std::count_if(entries.begin(), entries.end(), [](const Entry& e) { return !e.accepted; }));
}

int AggregationTrace::count_clipped() const {
    return static_cast<int>(
        std::count_if(entries.begin(), entries.end(), [](const Entry& e) { return e.accepted && e.clipped_factor < 1.0; }));
}

std::string to_string(AggregatorKind k) {
    switch (k) {
        case AggregatorKind::FedAvg: return "fedavg";
        case AggregatorKind::Flame: return "flame";
        case AggregatorKind::Mdam: return "mdam";
        case AggregatorKind::FLDetector: return "fldetector";
        case AggregatorKind::CC: return "cc";
        case AggregatorKind::CCB: return "ccb";
    }
    return "?";
}

AggregatorKind aggregator_kind_from_string(const std::string& s) {
    for (auto k : {AggregatorKind::FedAvg, AggregatorKind::Flame, AggregatorKind::Mdam, AggregatorKind::FLDetector,
                   AggregatorKind::CC, AggregatorKind::CCB})
        if (to_string(k) == s) return k;
    throw std::invalid_argument("unknown aggregator '" + s + "'");
}

namespace {

void check_updates(const std::vector<ParamVector>& updates) {
    if (updates.empty()) throw std::invalid_argument("aggregator needs at least one update");
    for (const auto& u : updates) {
        if (u.size() != updates.front().size()) throw DimensionMismatch("aggregator input");
        require_finite(u, "client update");
    }
}

double clip_factor(double norm, double tau) { return norm > tau ? tau / norm : 1.0; }

}  // namespace

ParamVector fedavg(const std::vector<ParamVector>& updates) {
    check_updates(updates);
    return mean(updates);
}

AggregateResult cc_aggregate(const std::vector<ParamVector>& updates, double tau) {
    if (!(tau > 0.0)) throw std::invalid_argument("cc: tau must be positive");
    check_updates(updates);
    AggregateResult r;
    r.update = zeros(updates.front().size());
    for (const auto& u : updates) {
        double f = clip_factor(l2_norm(u), tau);
        axpy(f, u, r.update);
        AggregationTrace::Entry e;
        e.clipped_factor = f;
        r.trace.entries.push_back(e);
    }
    for (double& x : r.update) x /= static_cast<double>(updates.size());
    return r;
}

std::vector<std::size_t> ccb_permutation(std::size_t n, std::uint64_t seed) {
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    Rng rng(derive_seed(seed, "ccb_permutation"));
    std::shuffle(perm.begin(), perm.end(), rng);
    return perm;
}

AggregateResult ccb_aggregate(const std::vector<ParamVector>& updates, double tau, int s, std::uint64_t seed) {
    if (s <= 1) return cc_aggregate(updates, tau);
    check_updates(updates);
    const std::size_t n = updates.size();
    auto perm = ccb_permutation(n, seed);
    std::vector<ParamVector> buckets;
    std::vector<std::vector<std::size_t>> members;
    for (std::size_t start = 0; start < n; start += s) {
        std::size_t end = std::min(n, start + static_cast<std::size_t>(s));
        std::vector<ParamVector> part;
        std::vector<std::size_t> ids;
        for (std::size_t k = start; k < end; ++k) {
            part.push_back(updates[perm[k]]);
            ids.push_back(perm[k]);
        }
        buckets.push_back(mean(part));
        members.push_back(std::move(ids));
    }
    AggregateResult inner = cc_aggregate(buckets, tau);
    AggregateResult r;
    r.update = std::move(inner.update);
    r.trace.entries.resize(n);
    for (std::size_t b = 0; b < buckets.size(); ++b)
        for (std::size_t i : members[b]) {
            r.trace.entries[i].clipped_factor = inner.trace.entries[b].clipped_factor;
            r.trace.entries[i].cluster_label = static_cast<int>(b);
        }
    return r;
}

std::vector<double> flame_clip_reference(const std::vector<ParamVector>& updates, const ParamVector& w_prev,
                                         FlameClipMode mode) {
    std::vector<double> e;
    e.reserve(updates.size());
    for (const auto& u : updates) e.push_back(mode == FlameClipMode::ParamDistance ? distance(w_prev, u) : l2_norm(u));
    return e;
}

AggregateResult flame_aggregate(const std::vector<ParamVector>& updates, const ParamVector& w_prev,
                                const FlameParams& p, std::uint64_t seed) {
    check_updates(updates);
    const int n = static_cast<int>(updates.size());
    if (n < 3) throw std::invalid_argument("flame needs at least 3 updates");
    if (w_prev.size() != updates.front().size()) throw DimensionMismatch("flame_aggregate");

    DistanceMatrix cd(n, std::vector<double>(n, 0.0));
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) cd[i][j] = cd[j][i] = cosine_distance(updates[i], updates[j]);
    HdbscanOptions opt;
    opt.min_cluster_size = n / 2 + 1;
    opt.min_samples = p.min_samples;
    opt.allow_single_cluster = true;
    auto labels = hdbscan(cd, opt);

    std::vector<int> counts;
    for (int l : labels)
        if (l >= 0) {
            if (l >= static_cast<int>(counts.size())) counts.resize(l + 1, 0);
            ++counts[l];
        }
    if (counts.empty()) throw NoBenignCluster("flame: clustering admitted no update");
    const int keep = static_cast<int>(std::max_element(counts.begin(), counts.end()) - counts.begin());

    auto e = flame_clip_reference(updates, w_prev, p.clip);
    const double q = median(e);

    AggregateResult r;
    r.update = zeros(w_prev.size());
    r.trace.entries.resize(n);
    int admitted = 0;
    for (int i = 0; i < n; ++i) {
        auto& entry = r.trace.entries[i];
        entry.cluster_label = labels[i];
        entry.accepted = labels[i] == keep;
        entry.clipped_factor = e[i] > 0.0 ? std::min(1.0, q / e[i]) : 1.0;
        if (!entry.accepted) continue;
        axpy(entry.clipped_factor, updates[i], r.update);
        ++admitted;
    }
    for (double& x : r.update) x /= admitted;
    if (p.sigma > 0.0) {
        Rng rng(derive_seed(seed, "flame_noise"));
        std::normal_distribution<double> nd(0.0, p.sigma);
        for (double& x : r.update) x += nd(rng);
    }
    return r;
}

double subset_diameter(const std::vector<ParamVector>& vs, const std::vector<int>& subset) {
    double m = 0.0;
    for (std::size_t a = 0; a < subset.size(); ++a)
        for (std::size_t b = a + 1; b < subset.size(); ++b) m = std::max(m, distance(vs[subset[a]], vs[subset[b]]));
    return m;
}

namespace {

double binomial(int n, int k) {
    double r = 1.0;
    for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
    return r;
}

std::vector<std::vector<double>> pairwise(const std::vector<ParamVector>& vs) {
    const std::size_t n = vs.size();
    std::vector<std::vector<double>> d(n, std::vector<double>(n, 0.0));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) d[i][j] = d[j][i] = distance(vs[i], vs[j]);
    return d;
}

// Lexicographic enumeration of excluded sets; first strict minimum wins.
std::vector<int> exhaustive_select(const std::vector<std::vector<double>>& d, int n, int f) {
    std::vector<int> excl(f);
    std::iota(excl.begin(), excl.end(), 0);
    std::vector<int> best;
    double best_diam = std::numeric_limits<double>::infinity();
    std::vector<char> out(n);
    while (true) {
        std::fill(out.begin(), out.end(), 0);
        for (int x : excl) out[x] = 1;
        double diam = 0.0;
        for (int i = 0; i < n && diam < best_diam; ++i) {
            if (out[i]) continue;
            for (int j = i + 1; j < n; ++j)
                if (!out[j]) diam = std::max(diam, d[i][j]);
        }
        if (diam < best_diam) {
            best_diam = diam;
            best.clear();
            for (int i = 0; i < n; ++i)
                if (!out[i]) best.push_back(i);
        }
        int k = f - 1;
        while (k >= 0 && excl[k] == n - f + k) --k;
        if (k < 0) break;
        ++excl[k];
        for (int t = k + 1; t < f; ++t) excl[t] = excl[t - 1] + 1;
    }
    return best;
}

}  // namespace

std::vector<int> mdam_select_exhaustive(const std::vector<ParamVector>& momenta, int f) {
    const int n = static_cast<int>(momenta.size());
    if (f < 0 || n <= 2 * f) throw std::invalid_argument("mdam: need n > 2f");
    std::vector<int> all(n);
    std::iota(all.begin(), all.end(), 0);
    if (f == 0) return all;
    return exhaustive_select(pairwise(momenta), n, f);
}

std::vector<int> mdam_select(const std::vector<ParamVector>& momenta, int f) {
    const int n = static_cast<int>(momenta.size());
    if (f < 0 || n <= 2 * f) throw std::invalid_argument("mdam: need n > 2f");
    std::vector<int> all(n);
    std::iota(all.begin(), all.end(), 0);
    if (f == 0) return all;
    auto d = pairwise(momenta);
    if (binomial(n, f) <= 2e5) return exhaustive_select(d, n, f);
    std::vector<int> keep = all;
    for (int r = 0; r < f; ++r) {
        std::size_t worst = 0;
        double worst_val = -1.0;
        for (std::size_t a = 0; a < keep.size(); ++a) {
            double m = 0.0;
            for (int b : keep) m = std::max(m, d[keep[a]][b]);
            if (m > worst_val) {
                worst_val = m;
                worst = a;
            }
        }
        keep.erase(keep.begin() + static_cast<std::ptrdiff_t>(worst));
    }
    return keep;
}

// ---- stateful ----

namespace {

class FedAvgAggregator : public Aggregator {
public:
    explicit FedAvgAggregator(AggregatorSpec s) : Aggregator(std::move(s)) {}
    AggregateResult aggregate(const std::vector<ParamVector>& updates, const ParamVector&, std::uint64_t) override {
        AggregateResult r;
        r.update = fedavg(updates);
        r.trace.entries.resize(updates.size());
        return r;
    }
};

class FlameAggregator : public Aggregator {
public:
    explicit FlameAggregator(AggregatorSpec s) : Aggregator(std::move(s)) {}
    AggregateResult aggregate(const std::vector<ParamVector>& updates, const ParamVector& w_curr,
                              std::uint64_t seed) override {
        FlameParams p{spec_.flame_sigma, spec_.flame_clip, spec_.flame_min_samples};
        return flame_aggregate(updates, w_curr, p, seed);
    }
};

class CCAggregator : public Aggregator {
public:
    explicit CCAggregator(AggregatorSpec s) : Aggregator(std::move(s)) {}
    AggregateResult aggregate(const std::vector<ParamVector>& updates, const ParamVector&, std::uint64_t seed) override {
        if (spec_.kind == AggregatorKind::CCB) return ccb_aggregate(updates, spec_.tau, spec_.bucket_s, seed);
        return cc_aggregate(updates, spec_.tau);
    }
};

nlohmann::json vecs_to_json(const std::vector<ParamVector>& vs) {
    nlohmann::json j = nlohmann::json::array();
    for (const auto& v : vs) j.push_back(v);
    return j;
}

std::vector<ParamVector> vecs_from_json(const nlohmann::json& j) {
    std::vector<ParamVector> vs;
    for (const auto& x : j) vs.push_back(x.get<ParamVector>());
    return vs;
}

}  // namespace

AggregateResult MdamAggregator::aggregate(const std::vector<ParamVector>& updates, const ParamVector&, std::uint64_t) {
    check_updates(updates);
    const std::size_t n = updates.size();
    if (momenta_.size() != n) momenta_.assign(n, zeros(updates.front().size()));
    const double beta = spec_.beta;
    for (std::size_t i = 0; i < n; ++i) {
        ParamVector& m = momenta_[i];
        for (std::size_t k = 0; k < m.size(); ++k) m[k] = beta * m[k] + (1.0 - beta) * updates[i][k];
    }
    auto S = mdam_select(momenta_, spec_.f_assumed);
    AggregateResult r;
    r.update = zeros(updates.front().size());
    r.trace.entries.resize(n);
    for (auto& e : r.trace.entries) e.accepted = false;
    for (int i : S) {
        axpy(1.0, momenta_[i], r.update);
        r.trace.entries[i].accepted = true;
    }
    for (double& x : r.update) x /= static_cast<double>(S.size());
    return r;
}

nlohmann::json MdamAggregator::save_state() const { return {{"momenta", vecs_to_json(momenta_)}}; }

void MdamAggregator::load_state(const nlohmann::json& j) { momenta_ = vecs_from_json(j.at("momenta")); }

std::vector<double> normalize_l1(const std::vector<double>& d) {
    double s = 0.0;
    for (double x : d) s += std::abs(x);
    std::vector<double> out(d.size());
    for (std::size_t i = 0; i < d.size(); ++i) out[i] = s > 0.0 ? d[i] / s : 1.0 / d.size();
    return out;
}

FLDetectorAggregator::FLDetectorAggregator(AggregatorSpec s)
    : Aggregator(std::move(s)), history_(static_cast<std::size_t>(std::max(1, spec_.n_window))) {}

AggregateResult FLDetectorAggregator::aggregate(const std::vector<ParamVector>& updates, const ParamVector& w_curr,
                                                std::uint64_t seed) {
    check_updates(updates);
    const std::size_t n = updates.size();
    ++rounds_seen_;
    last_k_ = 0;

    if (prev_w_ && prev_updates_.size() == n) {
        ParamVector dw = sub(w_curr, *prev_w_);
        ParamVector hv = history_.hessian_vector_product(dw);
        std::vector<double> d(n);
        for (std::size_t i = 0; i < n; ++i) {
            ParamVector pred = add(prev_updates_[i], hv);
            d[i] = distance(pred, updates[i]);
        }
        window_.push_back(normalize_l1(d));
        while (window_.size() > static_cast<std::size_t>(spec_.n_window)) window_.pop_front();
    }

    AggregateResult r;
    r.trace.entries.resize(n);
    std::vector<double> score(n, 0.0);
    if (!window_.empty()) {
        for (const auto& row : window_)
            for (std::size_t i = 0; i < n; ++i) score[i] += row[i];
        for (std::size_t i = 0; i < n; ++i) {
            score[i] /= static_cast<double>(window_.size());
            r.trace.entries[i].suspicious_score = score[i];
        }
    }

    std::vector<ParamVector> benign;
    if (warmed_up() && !window_.empty()) {
        GapResult g = gap_statistic(score, std::min<int>(spec_.gap_k_max, static_cast<int>(n)), spec_.gap_B,
                                    derive_seed(seed, "fldetector_gap"));
        last_k_ = g.k;
        if (g.k > 1) {
            auto km = kmeans_1d(score, 2);
            // cluster 0 has the smaller center
            for (std::size_t i = 0; i < n; ++i) {
                r.trace.entries[i].cluster_label = km.labels[i];
                r.trace.entries[i].accepted = km.labels[i] == 0;
            }
        }
    }
    for (std::size_t i = 0; i < n; ++i)
        if (r.trace.entries[i].accepted) benign.push_back(updates[i]);
    r.update = mean(benign);

    if (prev_w_ && prev_agg_) history_.push(sub(w_curr, *prev_w_), sub(r.update, *prev_agg_));
    prev_w_ = w_curr;
    prev_agg_ = r.update;
    prev_updates_ = updates;
    return r;
}

nlohmann::json FLDetectorAggregator::save_state() const {
    nlohmann::json j;
    j["rounds_seen"] = rounds_seen_;
    j["hist_s"] = vecs_to_json({history_.s_pairs().begin(), history_.s_pairs().end()});
    j["hist_y"] = vecs_to_json({history_.y_pairs().begin(), history_.y_pairs().end()});
    j["prev_w"] = prev_w_ ? nlohmann::json(*prev_w_) : nlohmann::json();
    j["prev_agg"] = prev_agg_ ? nlohmann::json(*prev_agg_) : nlohmann::json();
    j["prev_updates"] = vecs_to_json(prev_updates_);
    j["window"] = window_;
    return j;
}

void FLDetectorAggregator::load_state(const nlohmann::json& j) {
    rounds_seen_ = j.at("rounds_seen").get<int>();
    history_.clear();
    auto hs = vecs_from_json(j.at("hist_s")), hy = vecs_from_json(j.at("hist_y"));
    for (std::size_t k = 0; k < hs.size(); ++k) history_.push(hs[k], hy[k]);
    prev_w_ = j.at("prev_w").is_null() ? std::nullopt : std::optional<ParamVector>(j.at("prev_w").get<ParamVector>());
    prev_agg_ =
        j.at("prev_agg").is_null() ? std::nullopt : std::optional<ParamVector>(j.at("prev_agg").get<ParamVector>());
    prev_updates_ = vecs_from_json(j.at("prev_updates"));
    window_ = j.at("window").get<std::deque<std::vector<double>>>();
}

std::unique_ptr<Aggregator> make_aggregator(const AggregatorSpec& spec) {
    switch (spec.kind) {
        case AggregatorKind::FedAvg: return std::make_unique<FedAvgAggregator>(spec);
        case AggregatorKind::Flame: return std::make_unique<FlameAggregator>(spec);
        case AggregatorKind::Mdam: return std::make_unique<MdamAggregator>(spec);
        case AggregatorKind::FLDetector: return std::make_unique<FLDetectorAggregator>(spec);
        case AggregatorKind::CC:
        case AggregatorKind::CCB: return std::make_unique<CCAggregator>(spec);
    }
    throw std::invalid_argument("unknown aggregator kind");
}

}  // namespace fedpoison
