#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "fedpoison/config.hpp"
#include "fedpoison/experiment.hpp"
#include "fedpoison/report.hpp"

using namespace fedpoison;
namespace fs = std::filesystem;

namespace {

struct CommonFlags {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out;
    std::optional<int> rounds;
    bool quiet = false;
};

void add_common(CLI::App* app, CommonFlags& f, bool config_required) {
    auto* opt = app->add_option("--config", f.config, "experiment config (JSON)");
    if (config_required) opt->required();
    app->add_option("--seed", f.seed, "override the master seed");
    app->add_option("--out", f.out, "output directory");
    app->add_option("--rounds", f.rounds, "override the number of rounds");
    app->add_flag("--quiet", f.quiet, "no progress output");
}

nlohmann::json read_tree(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigInvalid({path + ": cannot open"});
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigInvalid({path + ": " + e.what()});
    }
}

void apply_overrides(nlohmann::json& tree, const CommonFlags& f) {
    if (f.seed) tree["seed"] = *f.seed;
    if (f.rounds) set_dotted(tree, "train.rounds", *f.rounds);
}

ExperimentConfig resolve(const CommonFlags& f) {
    nlohmann::json tree = read_tree(f.config);
    apply_overrides(tree, f);
    std::vector<std::string> warnings;
    ExperimentConfig c = parse_config(tree, fs::path(f.config).parent_path().string(), &warnings);
    if (!f.quiet)
        for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";
    apply_env_overrides(c);
    if (!f.out.empty()) c.out_dir = f.out;
    return c;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Federated poisoning simulator"};
    app.require_subcommand(1);

    CommonFlags run_f, grid_f, cert_f;
    bool resume = false;
    int checkpoint_every = 0;
    auto* run = app.add_subcommand("run", "run one experiment");
    add_common(run, run_f, true);
    run->add_flag("--resume", resume, "continue from <out>/checkpoint.cbor");
    run->add_option("--checkpoint-every", checkpoint_every, "write a checkpoint every N rounds");

    auto* grid = app.add_subcommand("grid", "cartesian sweep over the config's grid section");
    add_common(grid, grid_f, true);

    auto* cert = app.add_subcommand("certify", "smoothing certificates for a finished run");
    add_common(cert, cert_f, true);

    std::string report_dir;
    auto* report = app.add_subcommand("report", "rebuild plots from stored CSV files");
    report->add_option("--out", report_dir, "run output directory")->required();
    bool report_quiet = false;
    report->add_flag("--quiet", report_quiet, "no progress output");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        if (*run) {
            ExperimentConfig c = resolve(run_f);
            RunOptions o;
            o.quiet = run_f.quiet;
            o.resume = resume;
            o.checkpoint_every = checkpoint_every;
            ExperimentResult r = run_experiment(c, o);
            if (!run_f.quiet)
                std::cout << "final MA " << r.final_acc.ma << "  BA " << r.final_acc.ba << "  -> " << c.out_dir << "\n";
        } else if (*grid) {
            nlohmann::json tree = read_tree(grid_f.config);
            apply_overrides(tree, grid_f);
            ExperimentConfig c = resolve(grid_f);
            RunOptions o;
            o.quiet = grid_f.quiet;
            auto cells = run_grid(tree, fs::path(grid_f.config).parent_path().string(), c.out_dir, o);
            if (!grid_f.quiet) std::cout << cells.size() << " cells -> " << c.out_dir << "\n";
        } else if (*cert) {
            ExperimentConfig c = resolve(cert_f);
            c.certify.enabled = true;
            Experiment e(c);
            ParamVector w = load_final_model(c.out_dir);
            std::vector<Certificate> certs;
            std::vector<int> labels;
            certify_model(c, e.model(), w, e.data().test, certs, labels);
            write_text((fs::path(c.out_dir) / "certificates.csv").string(), certificates_csv(certs, labels));
            std::vector<RoundLog> logs;
            const fs::path rpath = fs::path(c.out_dir) / "results.csv";
            if (fs::exists(rpath)) logs = parse_results_csv(read_text(rpath.string()));
            write_text((fs::path(c.out_dir) / "summary.json").string(),
                       summary_json(c, logs, certs, labels).dump(2) + "\n");
            regenerate_plots(c.out_dir);
            if (!cert_f.quiet) std::cout << "mean radius " << mean_radius(certs) << " over " << certs.size() << " examples\n";
        } else if (*report) {
            regenerate_plots(report_dir);
            if (!report_quiet) std::cout << "plots -> " << (fs::path(report_dir) / "plots").string() << "\n";
        }
    } catch (const ConfigInvalid& e) {
        std::cerr << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
    return 0;
}
