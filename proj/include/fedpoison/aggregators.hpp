#pragma once

#include <cstdint>
#include <deque>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "fedpoison/lbfgs.hpp"
#include "fedpoison/param_vector.hpp"
#include "json.hpp"

namespace fedpoison {

struct AggregationTrace {
    struct Entry {
        bool accepted = true;
        double clipped_factor = 1.0;
        std::optional<double> suspicious_score;
        std::optional<int> cluster_label;
    };
    std::vector<Entry> entries;

    int count_rejected() const;
    int count_clipped() const;  // accepted entries with factor < 1
};

struct AggregateResult {
    ParamVector update;  // server applies w <- w - eta * update
    AggregationTrace trace;
};

enum class AggregatorKind { FedAvg, Flame, Mdam, FLDetector, CC, CCB };

enum class FlameClipMode {
    ParamDistance,  // e_i = ||w_prev - g_i||
    UpdateNorm      // e_i = ||g_i||
};

struct AggregatorSpec {
    AggregatorKind kind = AggregatorKind::FedAvg;
    // FLAME
    double flame_sigma = 0.0;
    FlameClipMode flame_clip = FlameClipMode::ParamDistance;
    int flame_min_samples = 0;  // 0: equal to min_cluster_size
    // MDAM
    double beta = 0.9;
    int f_assumed = 0;
    // FLDetector
    int n_window = 10;
    int gap_B = 10;
    int gap_k_max = 10;
    // CC / CC-B
    double tau = 10.0;
    int bucket_s = 2;
};

std::string to_string(AggregatorKind k);
AggregatorKind aggregator_kind_from_string(const std::string& s);

struct NoBenignCluster : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// ---- stateless rules ----

ParamVector fedavg(const std::vector<ParamVector>& updates);

AggregateResult cc_aggregate(const std::vector<ParamVector>& updates, double tau);

// Buckets of at most s consecutive updates under a seeded permutation. s <= 1
// is plain CC.
AggregateResult ccb_aggregate(const std::vector<ParamVector>& updates, double tau, int s, std::uint64_t seed);
std::vector<std::size_t> ccb_permutation(std::size_t n, std::uint64_t seed);

struct FlameParams {
    double sigma = 0.0;
    FlameClipMode clip = FlameClipMode::ParamDistance;
    int min_samples = 0;
};

// Cosine-distance HDBSCAN filter, median clipping bound, averaging and noise.
AggregateResult flame_aggregate(const std::vector<ParamVector>& updates, const ParamVector& w_prev,
                                const FlameParams& p, std::uint64_t seed);
// Per-update clipping reference e_i under the chosen mode.
std::vector<double> flame_clip_reference(const std::vector<ParamVector>& updates, const ParamVector& w_prev,
                                         FlameClipMode mode);

// Indices (ascending) of the (n - f)-subset with the smallest diameter.
// Exhaustive for C(n, f) <= 2e5, greedy farthest-point removal otherwise.
std::vector<int> mdam_select(const std::vector<ParamVector>& momenta, int f);
std::vector<int> mdam_select_exhaustive(const std::vector<ParamVector>& momenta, int f);
double subset_diameter(const std::vector<ParamVector>& vs, const std::vector<int>& subset);

// ---- stateful server-side rules ----

class Aggregator {
public:
    virtual ~Aggregator() = default;
    // w_curr is the global model the updates were computed at.
    virtual AggregateResult aggregate(const std::vector<ParamVector>& updates, const ParamVector& w_curr,
                                      std::uint64_t round_seed) = 0;
    virtual nlohmann::json save_state() const { return nlohmann::json::object(); }
    virtual void load_state(const nlohmann::json&) {}
    const AggregatorSpec& spec() const { return spec_; }

protected:
    explicit Aggregator(AggregatorSpec s) : spec_(std::move(s)) {}
    AggregatorSpec spec_;
};

std::unique_ptr<Aggregator> make_aggregator(const AggregatorSpec& spec);

class MdamAggregator : public Aggregator {
public:
    explicit MdamAggregator(AggregatorSpec s) : Aggregator(std::move(s)) {}
    AggregateResult aggregate(const std::vector<ParamVector>& updates, const ParamVector& w_curr,
                              std::uint64_t round_seed) override;
    const std::vector<ParamVector>& momenta() const { return momenta_; }
    nlohmann::json save_state() const override;
    void load_state(const nlohmann::json& j) override;

private:
    std::vector<ParamVector> momenta_;
};

class FLDetectorAggregator : public Aggregator {
public:
    explicit FLDetectorAggregator(AggregatorSpec s);
    AggregateResult aggregate(const std::vector<ParamVector>& updates, const ParamVector& w_curr,
                              std::uint64_t round_seed) override;
    nlohmann::json save_state() const override;
    void load_state(const nlohmann::json& j) override;

    // k chosen by the gap statistic in the last round; 0 during warm-up.
    int last_k() const { return last_k_; }
    bool warmed_up() const { return rounds_seen_ > spec_.n_window; }

private:
    LbfgsHistory history_;
    std::optional<ParamVector> prev_w_, prev_agg_;
    std::vector<ParamVector> prev_updates_;
    std::deque<std::vector<double>> window_;  // normalized distances per round
    int rounds_seen_ = 0;
    int last_k_ = 0;
};

// Normalizes d by its l1 norm; an all-zero d maps to the uniform vector.
std::vector<double> normalize_l1(const std::vector<double>& d);

}  // namespace fedpoison
