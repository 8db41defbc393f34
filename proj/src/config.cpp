#include "fedpoison/config.hpp"

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

namespace fedpoison {

namespace fs = std::filesystem;

ConfigInvalid::ConfigInvalid(std::vector<std::string> errs)
    : std::runtime_error([&] {
          std::string msg = "invalid config:";
          for (const auto& e : errs) msg += "\n  " + e;
          return msg;
      }()),
      errors(std::move(errs)) {}

DataConfig default_data_config() {
    const std::string root = std::string(FEDPOISON_SOURCE_DIR) + "/data/";
    DataConfig d;
    d.train_images = root + "train-images-idx3-ubyte";
    d.train_labels = root + "train-labels-idx1-ubyte";
    d.test_images = root + "t10k-images-idx3-ubyte";
    d.test_labels = root + "t10k-labels-idx1-ubyte";
    return d;
}

namespace {

using nlohmann::json;

// Reads one object section, remembering which keys were consumed.
class Section {
public:
    Section(const json& parent, const std::string& key, std::vector<std::string>& errors)
        : path_(key), errors_(errors) {
        if (key.empty()) {
            obj_ = &parent;
        } else if (parent.contains(key)) {
            obj_ = &parent.at(key);
        }
        if (obj_ && !obj_->is_object()) {
            errors_.push_back(path_ + ": expected an object");
            obj_ = nullptr;
        }
    }

    ~Section() {
        if (!obj_) return;
        for (const auto& [k, v] : obj_->items())
            if (!used_.count(k)) errors_.push_back(field(k) + ": unknown key");
    }

    template <class T>
    void get(const std::string& key, T& out) {
        used_.insert(key);
        if (!obj_ || !obj_->contains(key)) return;
        try {
            out = obj_->at(key).get<T>();
        } catch (const json::exception&) {
            errors_.push_back(field(key) + ": wrong type");
        }
    }

    void skip(const std::string& key) { used_.insert(key); }
    bool has(const std::string& key) const { return obj_ && obj_->contains(key); }
    std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

private:
    const json* obj_ = nullptr;
    std::string path_;
    std::vector<std::string>& errors_;
    std::set<std::string> used_;
};

template <class E>
bool parse_enum(const std::string& s, const std::vector<std::pair<E, std::string>>& table, E& out) {
    for (const auto& [e, name] : table)
        if (name == s) {
            out = e;
            return true;
        }
    return false;
}

const std::vector<std::pair<PartitionMode, std::string>> kPartitionNames = {
    {PartitionMode::IID, "iid"}, {PartitionMode::Dirichlet, "dirichlet"}, {PartitionMode::LabelShard, "label_shard"}};
const std::vector<std::pair<Loss, std::string>> kLossNames = {{Loss::CrossEntropy, "cross_entropy"},
                                                              {Loss::SquaredError, "squared_error"}};
const std::vector<std::pair<FlameClipMode, std::string>> kClipNames = {{FlameClipMode::ParamDistance, "param_distance"},
                                                                       {FlameClipMode::UpdateNorm, "update_norm"}};
const std::vector<std::pair<GammaSolverKind, std::string>> kSolverNames = {{GammaSolverKind::Iterative, "iterative"},
                                                                           {GammaSolverKind::Analytic, "analytic"}};

template <class E>
std::string enum_name(E e, const std::vector<std::pair<E, std::string>>& table) {
    for (const auto& [k, name] : table)
        if (k == e) return name;
    return "?";
}

bool in_set(double v, std::initializer_list<double> allowed) {
    for (double a : allowed)
        if (std::abs(v - a) <= 1e-12 * std::max(1.0, std::abs(a))) return true;
    return false;
}

std::string resolve(const std::string& p, const std::string& base) {
    if (p.empty() || fs::path(p).is_absolute() || base.empty()) return p;
    return (fs::path(base) / p).lexically_normal().string();
}

}  // namespace

ExperimentConfig parse_config(const json& j, const std::string& base_dir, std::vector<std::string>* warnings) {
    std::vector<std::string> errors, warns;
    ExperimentConfig c;
    c.data = default_data_config();
    if (!j.is_object()) throw ConfigInvalid({"<root>: expected an object"});

    {
        Section root(j, "", errors);
        root.get("name", c.name);
        root.get("seed", c.seed);
        root.get("out", c.out_dir);
        root.get("n_clients", c.n_clients);
        root.skip("data");
        root.skip("partition");
        root.skip("model");
        root.skip("train");
        root.skip("aggregator");
        root.skip("attack");
        root.skip("trigger");
        root.skip("certify");
        root.get("grid", c.grid);
    }
    {
        Section s(j, "data", errors);
        DataConfig d = c.data;
        for (auto [key, dst] : {std::pair{"train_images", &d.train_images}, std::pair{"train_labels", &d.train_labels},
                                std::pair{"test_images", &d.test_images}, std::pair{"test_labels", &d.test_labels}}) {
            if (s.has(key)) {
                s.get(key, *dst);
                *dst = resolve(*dst, base_dir);
            } else {
                s.skip(key);
            }
        }
        s.get("downsample", d.downsample);
        s.get("train_limit", d.train_limit);
        s.get("test_limit", d.test_limit);
        c.data = d;
        if (d.downsample < 1) errors.push_back("data.downsample: must be >= 1");
        if (d.train_limit < 0 || d.test_limit < 0) errors.push_back("data: limits must be >= 0");
    }
    {
        Section s(j, "partition", errors);
        std::string mode = "iid";
        s.get("mode", mode);
        if (!parse_enum(mode, kPartitionNames, c.partition.mode)) errors.push_back("partition.mode: unknown '" + mode + "'");
        s.get("alpha", c.partition.alpha);
        s.get("shards_per_client", c.partition.shards_per_client);
        if (!(c.partition.alpha > 0.0)) errors.push_back("partition.alpha: must be > 0");
        if (c.partition.shards_per_client < 1) errors.push_back("partition.shards_per_client: must be >= 1");
    }
    {
        Section s(j, "model", errors);
        std::vector<int> hidden{64};
        s.get("hidden", hidden);
        std::string loss = "cross_entropy";
        s.get("loss", loss);
        if (!parse_enum(loss, kLossNames, c.model.loss)) errors.push_back("model.loss: unknown '" + loss + "'");
        for (int h : hidden)
            if (h < 1) errors.push_back("model.hidden: widths must be >= 1");
        c.model.layer_widths = {0};
        c.model.layer_widths.insert(c.model.layer_widths.end(), hidden.begin(), hidden.end());
        c.model.layer_widths.push_back(10);
    }
    {
        Section s(j, "train", errors);
        s.get("client_lr", c.train.client_lr);
        s.get("local_epochs", c.train.local_epochs);
        s.get("batch_size", c.train.batch_size);
        s.get("server_lr", c.train.server_lr);
        s.get("rounds", c.train.rounds);
        if (!(c.train.client_lr > 0.0)) errors.push_back("train.client_lr: must be > 0");
        if (!(c.train.server_lr > 0.0)) errors.push_back("train.server_lr: must be > 0");
        if (c.train.local_epochs < 0) errors.push_back("train.local_epochs: must be >= 0");
        if (c.train.batch_size < 1) errors.push_back("train.batch_size: must be >= 1");
        if (c.train.rounds < 0) errors.push_back("train.rounds: must be >= 0");
    }
    bool f_assumed_set = false;
    {
        Section s(j, "aggregator", errors);
        std::string kind = "fedavg";
        s.get("kind", kind);
        try {
            c.agr.kind = aggregator_kind_from_string(kind);
        } catch (const std::exception&) {
            errors.push_back("aggregator.kind: unknown '" + kind + "'");
        }
        s.get("flame_sigma", c.agr.flame_sigma);
        std::string clip = "param_distance";
        s.get("flame_clip", clip);
        if (!parse_enum(clip, kClipNames, c.agr.flame_clip)) errors.push_back("aggregator.flame_clip: unknown '" + clip + "'");
        s.get("flame_min_samples", c.agr.flame_min_samples);
        s.get("beta", c.agr.beta);
        f_assumed_set = s.has("f_assumed");
        s.get("f_assumed", c.agr.f_assumed);
        s.get("n_window", c.agr.n_window);
        s.get("gap_B", c.agr.gap_B);
        s.get("gap_k_max", c.agr.gap_k_max);
        s.get("tau", c.agr.tau);
        s.get("bucket_s", c.agr.bucket_s);
        if (!(c.agr.flame_sigma >= 0.0)) errors.push_back("aggregator.flame_sigma: must be >= 0");
        if (!(c.agr.beta >= 0.0 && c.agr.beta < 1.0)) errors.push_back("aggregator.beta: must be in [0,1)");
        if (!(c.agr.tau > 0.0)) errors.push_back("aggregator.tau: must be > 0");
        if (c.agr.bucket_s < 0) errors.push_back("aggregator.bucket_s: must be >= 0");
        if (c.agr.n_window < 1) errors.push_back("aggregator.n_window: must be >= 1");
        if (c.agr.gap_B < 1 || c.agr.gap_k_max < 1) errors.push_back("aggregator: gap_B and gap_k_max must be >= 1");
        if (!in_set(c.agr.beta, {0, 0.6, 0.9, 0.99})) warns.push_back("aggregator.beta outside {0,0.6,0.9,0.99}");
        if (!in_set(c.agr.tau, {0.1, 1, 10, 100, 1000})) warns.push_back("aggregator.tau outside {0.1,1,10,100,1000}");
        if (!in_set(c.agr.bucket_s, {0, 2, 5, 10})) warns.push_back("aggregator.bucket_s outside {0,2,5,10}");
    }
    {
        Section s(j, "attack", errors);
        ThreatModel& t = c.threat;
        std::string family = "none";
        s.get("family", family);
        try {
            t.family = attack_family_from_string(family);
        } catch (const std::exception&) {
            errors.push_back("attack.family: unknown '" + family + "'");
        }
        s.get("f", t.f);
        s.get("agr_tailored", t.agr_tailored);
        s.get("gradients_known", t.gradients_known);
        s.get("atk_tau", t.atk_tau);
        s.get("gamma_init", t.gamma_init);
        s.get("gamma_eps", t.gamma_eps);
        s.get("cc_gamma_init", t.cc_gamma_init);
        s.get("fang_gamma_init", t.fang_gamma_init);
        s.get("fang_eps", t.fang_eps);
        s.get("naive_norm", t.naive_norm);
        s.get("class_bias_source", t.class_bias_source);
        s.get("class_bias_rate", t.class_bias_rate);
        std::string solver = "iterative";
        s.get("solver", solver);
        if (!parse_enum(solver, kSolverNames, t.solver)) errors.push_back("attack.solver: unknown '" + solver + "'");
        if (t.f < 0) errors.push_back("attack.f: must be >= 0");
        if (2 * t.f >= c.n_clients) errors.push_back("attack.f: must satisfy f < n_clients / 2");
        if (!(t.atk_tau > 0.0)) errors.push_back("attack.atk_tau: must be > 0");
        if (!(t.gamma_eps > 0.0) || !(t.gamma_init > t.gamma_eps)) errors.push_back("attack: need gamma_init > gamma_eps > 0");
        if (!(t.cc_gamma_init > t.gamma_eps)) errors.push_back("attack.cc_gamma_init: must exceed gamma_eps");
        if (!(t.fang_eps > 0.0) || !(t.fang_gamma_init > 0.0)) errors.push_back("attack: fang parameters must be > 0");
        if (!(t.class_bias_rate > 0.0 && t.class_bias_rate <= 1.0)) errors.push_back("attack.class_bias_rate: must be in (0,1]");
        if (!in_set(t.atk_tau, {0.1, 1, 10, 100, 1000})) warns.push_back("attack.atk_tau outside {0.1,1,10,100,1000}");
        if (t.f > 0 && c.n_clients > 0) {
            const double pct = 100.0 * t.f / c.n_clients;
            if (!in_set(pct, {2, 5, 10, 20, 30})) warns.push_back("attack.f / n_clients outside {2,5,10,20,30}%");
        }
        if ((t.family == AttackFamily::FlameTailored || t.family == AttackFamily::MdamTailored) && !t.agr_tailored)
            errors.push_back("attack.agr_tailored: " + family + " requires aggregator knowledge");
        if (t.family == AttackFamily::None && t.f > 0) warns.push_back("attack.f > 0 with family none: malicious clients train honestly");
        if (t.family != AttackFamily::None && t.f == 0) warns.push_back("attack.family set with f = 0: no attacker");
    }
    if (!f_assumed_set) c.agr.f_assumed = c.threat.f;
    {
        Section s(j, "trigger", errors);
        TriggerSpec& tr = c.trigger;
        s.get("row", tr.shape.row);
        s.get("col", tr.shape.col);
        s.get("height", tr.shape.height);
        s.get("width", tr.shape.width);
        s.get("value", tr.pixel_value);
        s.get("target", tr.target_label);
        s.get("n_local", tr.n_local);
        s.get("poison_rate", tr.poison_rate);
        if (tr.target_label < 0 || tr.target_label > 9) errors.push_back("trigger.target: must be a class in [0,9]");
        if (tr.n_local < 1) errors.push_back("trigger.n_local: must be >= 1");
        if (!(tr.poison_rate > 0.0 && tr.poison_rate <= 1.0)) errors.push_back("trigger.poison_rate: must be in (0,1]");
        if (!(tr.pixel_value >= 0.0 && tr.pixel_value <= 1.0)) errors.push_back("trigger.value: must be in [0,1]");
    }
    {
        Section s(j, "certify", errors);
        s.get("enabled", c.certify.enabled);
        s.get("rho", c.certify.smoothing.rho);
        s.get("sigma", c.certify.smoothing.sigma);
        s.get("samples", c.certify.smoothing.samples);
        s.get("alpha", c.certify.smoothing.alpha);
        s.get("examples", c.certify.examples);
        s.get("triggered", c.certify.triggered);
        try {
            c.certify.smoothing.validate();
        } catch (const std::exception& e) {
            errors.push_back(std::string("certify: ") + e.what());
        }
        if (c.certify.examples < 0) errors.push_back("certify.examples: must be >= 0");
    }
    if (c.n_clients < 1) errors.push_back("n_clients: must be >= 1");
    if (!c.grid.is_object()) {
        errors.push_back("grid: expected an object of dotted keys");
    } else {
        for (const auto& [k, v] : c.grid.items())
            if (!v.is_array() || v.empty()) errors.push_back("grid." + k + ": expected a non-empty array");
    }
    c.partition.n_clients = c.n_clients;

    if (!errors.empty()) throw ConfigInvalid(errors);
    if (warnings) *warnings = warns;
    return c;
}

ExperimentConfig load_config(const std::string& path, std::vector<std::string>* warnings) {
    std::ifstream in(path);
    if (!in) throw ConfigInvalid({path + ": cannot open"});
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigInvalid({path + ": " + e.what()});
    }
    return parse_config(j, fs::path(path).parent_path().string(), warnings);
}

json config_to_json(const ExperimentConfig& c) {
    std::vector<int> hidden(c.model.layer_widths.begin() + 1, c.model.layer_widths.end() - 1);
    const ThreatModel& t = c.threat;
    return {
        {"name", c.name},
        {"seed", c.seed},
        {"out", c.out_dir},
        {"n_clients", c.n_clients},
        {"data",
         {{"train_images", c.data.train_images},
          {"train_labels", c.data.train_labels},
          {"test_images", c.data.test_images},
          {"test_labels", c.data.test_labels},
          {"downsample", c.data.downsample},
          {"train_limit", c.data.train_limit},
          {"test_limit", c.data.test_limit}}},
        {"partition",
         {{"mode", enum_name(c.partition.mode, kPartitionNames)},
          {"alpha", c.partition.alpha},
          {"shards_per_client", c.partition.shards_per_client}}},
        {"model", {{"hidden", hidden}, {"loss", enum_name(c.model.loss, kLossNames)}}},
        {"train",
         {{"client_lr", c.train.client_lr},
          {"local_epochs", c.train.local_epochs},
          {"batch_size", c.train.batch_size},
          {"server_lr", c.train.server_lr},
          {"rounds", c.train.rounds}}},
        {"aggregator",
         {{"kind", to_string(c.agr.kind)},
          {"flame_sigma", c.agr.flame_sigma},
          {"flame_clip", enum_name(c.agr.flame_clip, kClipNames)},
          {"flame_min_samples", c.agr.flame_min_samples},
          {"beta", c.agr.beta},
          {"f_assumed", c.agr.f_assumed},
          {"n_window", c.agr.n_window},
          {"gap_B", c.agr.gap_B},
          {"gap_k_max", c.agr.gap_k_max},
          {"tau", c.agr.tau},
          {"bucket_s", c.agr.bucket_s}}},
        {"attack",
         {{"family", to_string(t.family)},
          {"f", t.f},
          {"agr_tailored", t.agr_tailored},
          {"gradients_known", t.gradients_known},
          {"atk_tau", t.atk_tau},
          {"gamma_init", t.gamma_init},
          {"gamma_eps", t.gamma_eps},
          {"cc_gamma_init", t.cc_gamma_init},
          {"fang_gamma_init", t.fang_gamma_init},
          {"fang_eps", t.fang_eps},
          {"naive_norm", t.naive_norm},
          {"class_bias_source", t.class_bias_source},
          {"class_bias_rate", t.class_bias_rate},
          {"solver", enum_name(t.solver, kSolverNames)}}},
        {"trigger",
         {{"row", c.trigger.shape.row},
          {"col", c.trigger.shape.col},
          {"height", c.trigger.shape.height},
          {"width", c.trigger.shape.width},
          {"value", c.trigger.pixel_value},
          {"target", c.trigger.target_label},
          {"n_local", c.trigger.n_local},
          {"poison_rate", c.trigger.poison_rate}}},
        {"certify",
         {{"enabled", c.certify.enabled},
          {"rho", c.certify.smoothing.rho},
          {"sigma", c.certify.smoothing.sigma},
          {"samples", c.certify.smoothing.samples},
          {"alpha", c.certify.smoothing.alpha},
          {"examples", c.certify.examples},
          {"triggered", c.certify.triggered}}},
        {"grid", c.grid},
    };
}

void apply_env_overrides(ExperimentConfig& c) {
    if (const char* out = std::getenv("FEDPOISON_OUT"); out && *out) c.out_dir = out;
}

void set_dotted(json& j, const std::string& dotted, const json& value) {
    json* cur = &j;
    std::stringstream ss(dotted);
    std::string part;
    std::vector<std::string> parts;
    while (std::getline(ss, part, '.')) parts.push_back(part);
    if (parts.empty()) throw std::invalid_argument("empty grid key");
    for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
        if (!cur->contains(parts[i])) (*cur)[parts[i]] = json::object();
        cur = &(*cur)[parts[i]];
    }
    (*cur)[parts.back()] = value;
}

}  // namespace fedpoison
