#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "fedpoison/aggregators.hpp"
#include "fedpoison/attacks.hpp"
#include "fedpoison/certify.hpp"
#include "fedpoison/config.hpp"
#include "fedpoison/data.hpp"
#include "fedpoison/mlp.hpp"
#include "json.hpp"

namespace fedpoison {

struct DataBundle {
    Dataset train;
    Dataset test;
};

// Loads (and caches per process) the train/test sets named by `d`.
std::shared_ptr<const DataBundle> load_data(const DataConfig& d);

struct RoundLog {
    int round = 0;
    double ma = 0.0;
    double ba = 0.0;
    double gamma = std::numeric_limits<double>::quiet_NaN();  // NaN when no solver ran
    bool attack_feasible = true;
    int oracle_calls = 0;
    int rejected = 0;
    int clipped = 0;
    int malicious_accepted = 0;
    int malicious_unclipped = 0;
    int fld_k = -1;  // FLDetector only; 0 during warm-up
    double update_norm = 0.0;
};

// One federated run. Clients [0, f) are malicious, [f, n) honest. The
// aggregator only sees the list of updates.
class Experiment {
public:
    explicit Experiment(const ExperimentConfig& cfg);
    Experiment(const ExperimentConfig& cfg, std::shared_ptr<const DataBundle> data);
    ~Experiment();
    Experiment(const Experiment&) = delete;
    Experiment& operator=(const Experiment&) = delete;

    RoundLog run_round();
    // Runs until `rounds` rounds are done in total.
    void run_until(int rounds, const std::function<void(const RoundLog&)>& on_round = {});

    int round() const { return round_; }
    const std::vector<RoundLog>& logs() const { return logs_; }
    const ParamVector& global_model() const { return w_; }
    const AggregationTrace& last_trace() const { return last_trace_; }
    const Aggregator& aggregator() const { return *agr_; }
    const Mlp& model() const { return model_; }
    const DataBundle& data() const { return *data_; }
    const ExperimentConfig& config() const { return cfg_; }
    const std::vector<Dataset>& shards() const { return shards_; }
    int benign_reads() const { return benign_reads_; }
    int aggregator_reads() const { return aggregator_reads_; }

    Accuracy evaluate_now() const;

    nlohmann::json checkpoint() const;
    void restore(const nlohmann::json& state);

private:
    struct AdversaryState;

    std::vector<ParamVector> craft(const std::vector<ParamVector>& benign, RoundLog& log);
    ParamVector honest_update(int client) const;

    ExperimentConfig cfg_;
    std::shared_ptr<const DataBundle> data_;
    Mlp model_;
    std::vector<Dataset> shards_;
    std::unique_ptr<Aggregator> agr_;
    std::unique_ptr<AdversaryState> adv_;
    ParamVector w_;
    int round_ = 0;
    std::vector<RoundLog> logs_;
    AggregationTrace last_trace_;
    int benign_reads_ = 0;
    int aggregator_reads_ = 0;
};

struct RunOptions {
    bool quiet = true;
    bool write_outputs = true;
    int checkpoint_every = 0;  // rounds; 0 disables
    bool resume = false;       // continue from <out>/checkpoint.cbor if present
    std::optional<int> stop_after;  // stop early (leaves a checkpoint), for resume tests
};

struct ExperimentResult {
    ExperimentConfig config;
    std::vector<RoundLog> logs;
    Accuracy final_acc;
    ParamVector final_model;
    std::vector<Certificate> certificates;
    std::vector<int> certificate_labels;
};

ExperimentResult run_experiment(const ExperimentConfig& cfg, const RunOptions& opts = {});

// Final global model of a finished run, stored as <out>/model.cbor.
void save_final_model(const std::string& out_dir, const ParamVector& w);
ParamVector load_final_model(const std::string& out_dir);

// Certifies the first `cfg.certify.examples` test examples under `w`.
void certify_model(const ExperimentConfig& cfg, const Mlp& model, const ParamVector& w, const Dataset& test,
                   std::vector<Certificate>& certs, std::vector<int>& labels);

struct GridCell {
    nlohmann::json assignment;  // dotted key -> value
    ExperimentResult result;
};

// Cartesian sweep over cfg.grid; every cell shares the master seed and writes
// into its own subdirectory. Emits grid.csv, and matrix.csv for two keys.
std::vector<GridCell> run_grid(const nlohmann::json& config_tree, const std::string& base_dir,
                               const std::string& out_dir, const RunOptions& opts = {});

}  // namespace fedpoison
