#include "fedpoison/experiment.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <random>

#include "fedpoison/report.hpp"
#include "fedpoison/rng.hpp"

namespace fedpoison {

namespace fs = std::filesystem;
using nlohmann::json;

std::shared_ptr<const DataBundle> load_data(const DataConfig& d) {
    static std::mutex mu;
    static std::map<std::string, std::shared_ptr<const DataBundle>> cache;
    const std::string key = d.train_images + "|" + d.train_labels + "|" + d.test_images + "|" + d.test_labels + "|" +
                            std::to_string(d.downsample) + "|" + std::to_string(d.train_limit) + "|" +
                            std::to_string(d.test_limit);
    std::lock_guard<std::mutex> lock(mu);
    if (auto it = cache.find(key); it != cache.end()) return it->second;

    auto limit = [](Dataset ds, int k) {
        if (k <= 0 || static_cast<std::size_t>(k) >= ds.size()) return ds;
        std::vector<std::size_t> idx(k);
        for (int i = 0; i < k; ++i) idx[i] = i;
        return ds.subset(idx);
    };
    auto b = std::make_shared<DataBundle>();
    b->train = limit(load_idx(d.train_images, d.train_labels, d.downsample), d.train_limit);
    b->test = limit(load_idx(d.test_images, d.test_labels, d.downsample), d.test_limit);
    cache[key] = b;
    return b;
}

// Everything the attacker carries between rounds.
struct Experiment::AdversaryState {
    Dataset pooled_poisoned;                 // targeted families: data for the target model
    std::vector<Dataset> malicious_train;    // per malicious client, what it trains on
    std::vector<ParamVector> visible_momenta;  // MDAM: momenta of the visible gradient set
    ParamVector mp;                          // MDAM: momentum of the poisoned gradient
    ParamVector submitted;                   // MDAM: server-side momentum of the submitted update
    ParamVector naive;                       // fixed vector for NaiveFixed
};

namespace {

ModelSpec resolved_model_spec(ModelSpec spec, const Dataset& train, std::uint64_t seed) {
    spec.layer_widths.front() = train.dim();
    spec.layer_widths.back() = train.num_classes;
    spec.init_seed = derive_seed(seed, "init");
    return spec;
}

void momentum_step(ParamVector& m, const ParamVector& g, double beta) {
    if (m.empty()) m = zeros(g.size());
    for (std::size_t k = 0; k < m.size(); ++k) m[k] = beta * m[k] + (1.0 - beta) * g[k];
}

ParamVector random_direction(std::size_t d, double norm, std::uint64_t seed) {
    Rng rng(seed);
    std::normal_distribution<double> nd(0.0, 1.0);
    ParamVector v(d);
    for (double& x : v) x = nd(rng);
    return scale(v, norm / l2_norm(v));
}

json vecs_json(const std::vector<ParamVector>& vs) {
    json a = json::array();
    for (const auto& v : vs) a.push_back(v);
    return a;
}

std::vector<ParamVector> vecs_from(const json& a) {
    std::vector<ParamVector> out;
    for (const auto& v : a) out.push_back(v.get<ParamVector>());
    return out;
}

json log_json(const RoundLog& l) {
    return {{"round", l.round},
            {"ma", l.ma},
            {"ba", l.ba},
            {"gamma", std::isnan(l.gamma) ? json(nullptr) : json(l.gamma)},
            {"attack_feasible", l.attack_feasible},
            {"oracle_calls", l.oracle_calls},
            {"rejected", l.rejected},
            {"clipped", l.clipped},
            {"malicious_accepted", l.malicious_accepted},
            {"malicious_unclipped", l.malicious_unclipped},
            {"fld_k", l.fld_k},
            {"update_norm", l.update_norm}};
}

RoundLog log_from(const json& j) {
    RoundLog l;
    l.round = j.at("round");
    l.ma = j.at("ma");
    l.ba = j.at("ba");
    l.gamma = j.at("gamma").is_null() ? std::numeric_limits<double>::quiet_NaN() : j.at("gamma").get<double>();
    l.attack_feasible = j.at("attack_feasible");
    l.oracle_calls = j.at("oracle_calls");
    l.rejected = j.at("rejected");
    l.clipped = j.at("clipped");
    l.malicious_accepted = j.at("malicious_accepted");
    l.malicious_unclipped = j.at("malicious_unclipped");
    l.fld_k = j.at("fld_k");
    l.update_norm = j.at("update_norm");
    return l;
}

}  // namespace

Experiment::Experiment(const ExperimentConfig& cfg) : Experiment(cfg, load_data(cfg.data)) {}

Experiment::Experiment(const ExperimentConfig& cfg, std::shared_ptr<const DataBundle> data)
    : cfg_(cfg),
      data_(std::move(data)),
      model_(resolved_model_spec(cfg.model, data_->train, cfg.seed)),
      adv_(std::make_unique<AdversaryState>()) {
    cfg_.model = model_.spec();
    const Dataset& train = data_->train;
    cfg_.trigger.validate(train.height, train.width);

    PartitionSpec ps = cfg_.partition;
    ps.n_clients = cfg_.n_clients;
    ps.seed = derive_seed(cfg_.seed, "partition");
    for (const auto& idx : partition(train.labels, train.num_classes, ps)) shards_.push_back(train.subset(idx));

    w_ = model_.init_params(model_.spec().init_seed);
    agr_ = make_aggregator(cfg_.agr);

    const ThreatModel& tm = cfg_.threat;
    const int f = tm.f;
    AdversaryState& a = *adv_;
    a.pooled_poisoned = train.empty_like();
    for (int j = 0; j < f; ++j) {
        const Dataset& shard = shards_[j];
        const std::uint64_t s = derive_seed(cfg_.seed, "poison", {static_cast<std::uint64_t>(j)});
        switch (tm.family) {
            case AttackFamily::DBA:
                a.malicious_train.push_back(poison_shard(shard, cfg_.trigger, dba_local_index(j, cfg_.trigger.n_local), s));
                break;
            case AttackFamily::LabelFlip:
                a.malicious_train.push_back(
                    flip_labels(shard, {FlipMode::UniformFlip, -1, cfg_.trigger.target_label, 1.0}, s));
                break;
            case AttackFamily::ClassBias:
                a.malicious_train.push_back(flip_labels(
                    shard, {FlipMode::ClassBias, tm.class_bias_source, cfg_.trigger.target_label, tm.class_bias_rate},
                    s));
                break;
            default:
                a.malicious_train.push_back(shard);
        }
        if (is_targeted(tm.family) && tm.family != AttackFamily::DBA) {
            Dataset p = poison_shard(shard, cfg_.trigger, std::nullopt, s);
            for (std::size_t i = 0; i < p.size(); ++i) a.pooled_poisoned.push_back(p.example(i));
        }
    }
    if (tm.family == AttackFamily::NaiveFixed)
        a.naive = random_direction(model_.num_params(), tm.naive_norm, derive_seed(cfg_.seed, "naive_vector"));
}

Experiment::~Experiment() = default;

ParamVector Experiment::honest_update(int client) const {
    const Dataset& shard = client < cfg_.threat.f ? adv_->malicious_train[client] : shards_[client];
    return local_train(model_, w_, shard, cfg_.train,
                       derive_seed(cfg_.seed, "client_train",
                                   {static_cast<std::uint64_t>(round_), static_cast<std::uint64_t>(client)}));
}

std::vector<ParamVector> Experiment::craft(const std::vector<ParamVector>& benign, RoundLog& log) {
    const ThreatModel& tm = cfg_.threat;
    const int n = cfg_.n_clients;
    const int f = tm.f;
    AdversaryState& a = *adv_;
    const std::uint64_t t = static_cast<std::uint64_t>(round_);

    // Malicious clients' own gradients on their (possibly poisoned) local data.
    std::vector<ParamVector> own;
    for (int j = 0; j < f; ++j) own.push_back(honest_update(j));

    switch (tm.family) {
        case AttackFamily::None:
        case AttackFamily::DBA:
        case AttackFamily::LabelFlip:
        case AttackFamily::ClassBias:
            return own;
        case AttackFamily::SignFlip:
            return sign_flip(own);
        case AttackFamily::NaiveFixed:
            return std::vector<ParamVector>(f, a.naive);
        case AttackFamily::NaiveRandom:
            return std::vector<ParamVector>(f, random_direction(w_.size(), tm.naive_norm, derive_seed(cfg_.seed, "naive_vector", {t})));
        default:
            break;
    }

    AdversaryView view(tm, n, w_, own, &benign, &cfg_.agr);
    SolverSettings solver{tm.solver, tm.gamma_init, tm.gamma_eps};
    CraftResult r;

    auto poisoned_gradients = [&] {
        ParamVector x = target_model(model_, w_, a.pooled_poisoned, cfg_.train, derive_seed(cfg_.seed, "target_model", {t}));
        return model_replacement_gradients(x, w_, n, f, cfg_.train.server_lr);
    };

    switch (tm.family) {
        case AttackFamily::FlameTailored: {
            const auto& visible = visible_gradients(view);
            const double radius = flame_pgd_radius(visible, w_, view.aggregator().flame_clip);
            r = flame_tailored_attack(poisoned_gradients(), mean(visible), visible, radius, solver);
            break;
        }
        case AttackFamily::MdamTailored: {
            const double beta = view.aggregator().beta;
            const auto& visible = visible_gradients(view);
            if (a.visible_momenta.size() != visible.size()) a.visible_momenta.assign(visible.size(), ParamVector{});
            for (std::size_t i = 0; i < visible.size(); ++i) momentum_step(a.visible_momenta[i], visible[i], beta);
            momentum_step(a.mp, poisoned_gradients().front(), beta);
            if (a.submitted.empty()) a.submitted = zeros(w_.size());
            CraftResult m = mdam_tailored_attack({a.mp}, mean(a.visible_momenta), a.visible_momenta, n, f, solver);
            // submit the update that moves the server-side momentum onto m_c
            ParamVector g = m.updates.front();
            axpy(-beta, a.submitted, g);
            g = scale(g, 1.0 / (1.0 - beta));
            a.submitted = m.updates.front();
            r = m;
            r.updates.assign(f, g);
            break;
        }
        case AttackFamily::AgnosticTargeted: {
            const auto& visible = visible_gradients(view);
            r = agnostic_targeted_attack(poisoned_gradients(), mean(visible), visible, solver);
            break;
        }
        case AttackFamily::CCTailored: {
            const double tau = tm.agr_tailored ? view.aggregator().tau : tm.atk_tau;
            r = cc_tailored_attack(build_reference(view), tau, f, {tm.solver, tm.cc_gamma_init, tm.gamma_eps});
            break;
        }
        case AttackFamily::LIE:
            r = lie_attack(visible_gradients(view), n, f);
            break;
        case AttackFamily::Fang: {
            const auto& visible = visible_gradients(view);
            const ParamVector mu = mean(visible);
            std::optional<AggregatorSpec> spec;
            if (tm.agr_tailored) spec = view.aggregator();
            const std::uint64_t probe_seed = derive_seed(cfg_.seed, "fang_probe", {t});
            auto damaging = [&](const ParamVector& gc) {
                std::vector<ParamVector> ups(f, gc);
                ups.insert(ups.end(), visible.begin(), visible.end());
                ParamVector agg;
                const AggregatorKind kind = spec ? spec->kind : AggregatorKind::FedAvg;
                try {
                    if (kind == AggregatorKind::CC) {
                        agg = cc_aggregate(ups, spec->tau).update;
                    } else if (kind == AggregatorKind::CCB) {
                        agg = ccb_aggregate(ups, spec->tau, spec->bucket_s, probe_seed).update;
                    } else if (kind == AggregatorKind::Flame && ups.size() >= 3) {
                        agg = flame_aggregate(ups, w_, {spec->flame_sigma, spec->flame_clip, spec->flame_min_samples},
                                              probe_seed)
                                  .update;
                    } else {
                        agg = fedavg(ups);
                    }
                } catch (const NoBenignCluster&) {
                    return false;
                }
                return dot(agg, mu) < 0.0;
            };
            r = fang_attack(mu, f, tm.fang_gamma_init, tm.fang_eps, damaging);
            break;
        }
        default:
            throw std::logic_error("unhandled attack family " + to_string(tm.family));
    }
    benign_reads_ += view.benign_reads();
    aggregator_reads_ += view.aggregator_reads();
    log.gamma = r.gamma;
    log.attack_feasible = r.feasible;
    log.oracle_calls = r.oracle_calls;
    return r.updates;
}

RoundLog Experiment::run_round() {
    const int n = cfg_.n_clients;
    const int f = cfg_.threat.f;
    RoundLog log;
    log.round = round_ + 1;

    std::vector<ParamVector> benign;
    benign.reserve(n - f);
    for (int i = f; i < n; ++i) benign.push_back(honest_update(i));

    std::vector<ParamVector> updates;
    if (f > 0) {
        try {
            updates = craft(benign, log);
        } catch (const KnowledgeViolation&) {
            throw;
        } catch (const std::exception& e) {
            throw std::runtime_error("round " + std::to_string(log.round) + ", attack: " + e.what());
        }
    }
    updates.insert(updates.end(), benign.begin(), benign.end());

    AggregateResult res;
    try {
        res = agr_->aggregate(updates, w_, derive_seed(cfg_.seed, "aggregate", {static_cast<std::uint64_t>(round_)}));
    } catch (const std::exception& e) {
        throw std::runtime_error("round " + std::to_string(log.round) + ", aggregation: " + e.what());
    }
    axpy(-cfg_.train.server_lr, res.update, w_);
    require_finite(w_, "global model");

    const auto& entries = res.trace.entries;
    log.rejected = res.trace.count_rejected();
    log.clipped = res.trace.count_clipped();
    for (int j = 0; j < f && j < static_cast<int>(entries.size()); ++j) {
        log.malicious_accepted += entries[j].accepted;
        log.malicious_unclipped += entries[j].clipped_factor >= 1.0;
    }
    if (const auto* fld = dynamic_cast<const FLDetectorAggregator*>(agr_.get())) log.fld_k = fld->last_k();
    log.update_norm = l2_norm(res.update);

    Accuracy acc = evaluate_now();
    log.ma = acc.ma;
    log.ba = acc.ba;
    last_trace_ = std::move(res.trace);
    logs_.push_back(log);
    ++round_;
    return log;
}

void Experiment::run_until(int rounds, const std::function<void(const RoundLog&)>& on_round) {
    while (round_ < rounds) {
        RoundLog l = run_round();
        if (on_round) on_round(l);
    }
}

Accuracy Experiment::evaluate_now() const { return evaluate(model_, w_, data_->test, &cfg_.trigger); }

json Experiment::checkpoint() const {
    json logs = json::array();
    for (const auto& l : logs_) logs.push_back(log_json(l));
    const AdversaryState& a = *adv_;
    return {{"config", config_to_json(cfg_)},
            {"round", round_},
            {"w", w_},
            {"aggregator", agr_->save_state()},
            {"adversary",
             {{"visible_momenta", vecs_json(a.visible_momenta)}, {"mp", a.mp}, {"submitted", a.submitted}}},
            {"reads", {benign_reads_, aggregator_reads_}},
            {"logs", logs}};
}

void Experiment::restore(const json& s) {
    if (s.at("config") != config_to_json(cfg_)) throw std::runtime_error("checkpoint belongs to a different config");
    round_ = s.at("round");
    w_ = s.at("w").get<ParamVector>();
    agr_->load_state(s.at("aggregator"));
    const json& a = s.at("adversary");
    adv_->visible_momenta = vecs_from(a.at("visible_momenta"));
    adv_->mp = a.at("mp").get<ParamVector>();
    adv_->submitted = a.at("submitted").get<ParamVector>();
    benign_reads_ = s.at("reads").at(0);
    aggregator_reads_ = s.at("reads").at(1);
    logs_.clear();
    for (const auto& l : s.at("logs")) logs_.push_back(log_from(l));
}

void certify_model(const ExperimentConfig& cfg, const Mlp& model, const ParamVector& w, const Dataset& test,
                   std::vector<Certificate>& certs, std::vector<int>& labels) {
    Dataset sub = test.empty_like();
    for (std::size_t i = 0; i < test.size() && static_cast<int>(sub.size()) < cfg.certify.examples; ++i) {
        if (!cfg.certify.triggered) {
            sub.push_back(test.example(i));
        } else if (test.labels[i] != cfg.trigger.target_label) {
            LabeledExample ex = inject_trigger(test.example(i), cfg.trigger, test.height, test.width);
            ex.label = test.labels[i];
            sub.push_back(ex);
        }
    }
    certs = certify_dataset(model, w, sub, cfg.certify.smoothing, derive_seed(cfg.seed, "certify"));
    labels = sub.labels;
}

namespace {

void save_checkpoint(const Experiment& e, const fs::path& path) {
    const std::vector<std::uint8_t> bytes = json::to_cbor(e.checkpoint());
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw IoError("cannot write " + tmp.string());
        out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    }
    fs::rename(tmp, path);
}

}  // namespace

void save_final_model(const std::string& out_dir, const ParamVector& w) {
    const std::vector<std::uint8_t> bytes = json::to_cbor(json{{"w", w}});
    write_text((fs::path(out_dir) / "model.cbor").string(), std::string(bytes.begin(), bytes.end()));
}

ParamVector load_final_model(const std::string& out_dir) {
    const std::string text = read_text((fs::path(out_dir) / "model.cbor").string());
    return json::from_cbor(std::vector<std::uint8_t>(text.begin(), text.end())).at("w").get<ParamVector>();
}

ExperimentResult run_experiment(const ExperimentConfig& cfg, const RunOptions& opts) {
    Experiment e(cfg);
    const fs::path out(cfg.out_dir);
    const fs::path ckpt = out / "checkpoint.cbor";
    if (opts.write_outputs || opts.checkpoint_every > 0) fs::create_directories(out);

    if (opts.resume && fs::exists(ckpt)) {
        std::ifstream in(ckpt, std::ios::binary);
        std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        e.restore(json::from_cbor(bytes));
        if (!opts.quiet) std::cerr << "resumed at round " << e.round() << "\n";
    }

    const int total = cfg.train.rounds;
    const int stop = opts.stop_after ? std::min(*opts.stop_after, total) : total;
    e.run_until(stop, [&](const RoundLog& l) {
        if (!opts.quiet)
            std::cerr << "round " << l.round << "/" << total << "  MA " << l.ma << "  BA " << l.ba << "\n";
        if (opts.checkpoint_every > 0 && (l.round % opts.checkpoint_every == 0 || l.round == stop))
            save_checkpoint(e, ckpt);
    });

    ExperimentResult r;
    r.config = e.config();
    r.logs = e.logs();
    r.final_model = e.global_model();
    r.final_acc = r.logs.empty() ? e.evaluate_now() : Accuracy{r.logs.back().ma, r.logs.back().ba};
    if (stop < total) return r;

    if (cfg.certify.enabled) certify_model(cfg, e.model(), e.global_model(), e.data().test, r.certificates, r.certificate_labels);
    if (opts.write_outputs) {
        emit_reports(cfg.out_dir, r.config, r.logs, r.certificates, r.certificate_labels);
        save_final_model(cfg.out_dir, r.final_model);
    }
    return r;
}

namespace {

std::string cell_name(const json& assignment) {
    std::string name;
    for (const auto& [k, v] : assignment.items()) {
        if (!name.empty()) name += ",";
        name += k + "=" + (v.is_string() ? v.get<std::string>() : v.dump());
    }
    for (char& c : name)
        if (c == '/' || c == ' ' || c == '"') c = '_';
    return name;
}

std::string value_text(const json& v) { return v.is_string() ? v.get<std::string>() : v.dump(); }

}  // namespace

std::vector<GridCell> run_grid(const json& tree, const std::string& base_dir, const std::string& out_dir,
                               const RunOptions& opts) {
    const json grid = tree.value("grid", json::object());
    std::vector<std::string> keys;
    std::vector<json> values;
    for (const auto& [k, v] : grid.items()) {
        keys.push_back(k);
        values.push_back(v);
    }
    std::size_t total = 1;
    for (const auto& v : values) total *= v.size();
    std::vector<GridCell> cells;
    for (std::size_t idx = 0; idx < total; ++idx) {
        json cell_tree = tree;
        cell_tree.erase("grid");
        json assignment = json::object();
        std::size_t rest = idx;
        for (std::size_t i = keys.size(); i-- > 0;) {  // last key varies fastest
            const json& v = values[i][rest % values[i].size()];
            rest /= values[i].size();
            set_dotted(cell_tree, keys[i], v);
            assignment[keys[i]] = v;
        }
        ExperimentConfig c = parse_config(cell_tree, base_dir);
        c.out_dir = (fs::path(out_dir) / (keys.empty() ? std::string("cell") : cell_name(assignment))).string();
        if (!opts.quiet) std::cerr << "grid cell " << c.out_dir << "\n";
        cells.push_back({assignment, run_experiment(c, opts)});
    }

    if (opts.write_outputs) {
        fs::create_directories(out_dir);
        std::string csv;
        for (const auto& k : keys) csv += k + ",";
        csv += "final_ma,final_ba\n";
        char buf[64];
        for (const auto& cell : cells) {
            for (const auto& k : keys) csv += value_text(cell.assignment[k]) + ",";
            std::snprintf(buf, sizeof buf, "%.6f,%.6f\n", cell.result.final_acc.ma, cell.result.final_acc.ba);
            csv += buf;
        }
        write_text((fs::path(out_dir) / "grid.csv").string(), csv);
        if (keys.size() == 2) {
            // final MA, rows = first key, columns = second key
            std::string m = keys[0] + "\\" + keys[1];
            for (const auto& v : values[1]) m += "," + value_text(v);
            m += "\n";
            std::size_t c = 0;
            for (const auto& r : values[0]) {
                m += value_text(r);
                for (std::size_t k = 0; k < values[1].size(); ++k, ++c) {
                    std::snprintf(buf, sizeof buf, ",%.4f", cells[c].result.final_acc.ma);
                    m += buf;
                }
                m += "\n";
            }
            write_text((fs::path(out_dir) / "matrix.csv").string(), m);
        }
    }
    return cells;
}

}  // namespace fedpoison
