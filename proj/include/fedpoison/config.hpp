#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "fedpoison/aggregators.hpp"
#include "fedpoison/attacks.hpp"
#include "fedpoison/certify.hpp"
#include "fedpoison/data.hpp"
#include "fedpoison/mlp.hpp"
#include "json.hpp"

namespace fedpoison {

struct DataConfig {
    std::string train_images;
    std::string train_labels;
    std::string test_images;
    std::string test_labels;
    int downsample = 2;
    int train_limit = 0;  // 0: all
    int test_limit = 0;
};

struct CertifyConfig {
    bool enabled = false;
    SmoothingConfig smoothing;
    int examples = 200;    // first k eligible test examples
    bool triggered = true;  // certify trigger-injected non-target examples against their true labels
};

struct ExperimentConfig {
    std::string name = "experiment";
    std::uint64_t seed = 0;
    std::string out_dir = "out";
    int n_clients = 20;
    DataConfig data;
    PartitionSpec partition;
    ModelSpec model;
    TrainConfig train;
    AggregatorSpec agr;
    ThreatModel threat;
    TriggerSpec trigger;
    CertifyConfig certify;
    nlohmann::json grid = nlohmann::json::object();  // dotted key -> array of values
};

struct ConfigInvalid : std::runtime_error {
    explicit ConfigInvalid(std::vector<std::string> errors);
    std::vector<std::string> errors;
};

// Parses a config tree. Missing keys take defaults, unknown keys and invalid
// values raise ConfigInvalid listing every offending field. Values outside the
// usual experiment ranges are accepted and reported in `warnings`.
// Relative data paths resolve against `base_dir`.
ExperimentConfig parse_config(const nlohmann::json& j, const std::string& base_dir = "",
                              std::vector<std::string>* warnings = nullptr);
ExperimentConfig load_config(const std::string& path, std::vector<std::string>* warnings = nullptr);
nlohmann::json config_to_json(const ExperimentConfig& c);

// Default data files shipped with the source tree.
DataConfig default_data_config();

// FEDPOISON_OUT replaces out_dir when set.
void apply_env_overrides(ExperimentConfig& c);

// Sets a dotted key ("aggregator.tau") in a config tree.
void set_dotted(nlohmann::json& j, const std::string& dotted, const nlohmann::json& value);

}  // namespace fedpoison
