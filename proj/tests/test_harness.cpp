#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "fedpoison/config.hpp"
#include "fedpoison/experiment.hpp"
#include "fedpoison/report.hpp"

using namespace fedpoison;
namespace fs = std::filesystem;

namespace {

nlohmann::json small_tree() {
    return nlohmann::json::parse(R"({
        "name": "small", "seed": 3, "n_clients": 6,
        "data": {"train_limit": 600, "test_limit": 200},
        "train": {"rounds": 6},
        "aggregator": {"kind": "fedavg"},
        "attack": {"family": "none", "f": 0}
    })");
}

fs::path scratch(const std::string& name) {
    fs::path p = fs::temp_directory_path() / ("fedpoison_test_" + name);
    fs::remove_all(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

int run_cli(const std::string& args) {
    std::string cmd = std::string(FEDPOISON_CLI) + " " + args + " > /dev/null 2>&1";
    int rc = std::system(cmd.c_str());
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

}  // namespace

TEST_CASE("config parsing") {
    SUBCASE("defaults and overrides") {
        ExperimentConfig c = parse_config(small_tree());
        CHECK(c.n_clients == 6);
        CHECK(c.train.rounds == 6);
        CHECK(c.train.client_lr == 0.1);
        CHECK(c.train.server_lr == 1.0);
        CHECK(c.trigger.target_label == 7);
        CHECK(c.model.layer_widths[1] == 64);
        CHECK(c.model.layer_widths.back() == 10);
        ExperimentConfig back = parse_config(config_to_json(c));
        CHECK(config_to_json(back) == config_to_json(c));
    }
    SUBCASE("field-level errors") {
        auto t = small_tree();
        t["bogus"] = 1;
        t["train"]["rounds"] = "many";
        t["attack"]["f"] = 3;
        t["attack"]["family"] = "lie";
        try {
            parse_config(t);
            FAIL("expected ConfigInvalid");
        } catch (const ConfigInvalid& e) {
            CHECK(e.errors.size() >= 3);
        }
    }
    SUBCASE("tailored attack needs AGR knowledge") {
        auto t = small_tree();
        t["aggregator"] = {{"kind", "flame"}};
        t["attack"] = {{"family", "flame_tailored"}, {"f", 1}, {"agr_tailored", false}};
        CHECK_THROWS_AS(parse_config(t), ConfigInvalid);
    }
    SUBCASE("out-of-range values warn") {
        auto t = small_tree();
        t["aggregator"] = {{"kind", "mdam"}, {"beta", 0.5}};
        std::vector<std::string> warnings;
        CHECK_NOTHROW(parse_config(t, "", &warnings));
        CHECK_FALSE(warnings.empty());
    }
    SUBCASE("dotted keys") {
        auto t = small_tree();
        set_dotted(t, "aggregator.tau", 100.0);
        set_dotted(t, "certify.sigma", 0.5);
        CHECK(t["aggregator"]["tau"] == 100.0);
        CHECK(t["certify"]["sigma"] == 0.5);
        CHECK(parse_config(t).certify.smoothing.sigma == 0.5);
    }
}

TEST_CASE("results CSV and summary JSON") {
    CHECK(results_csv({}) == std::string(kResultsHeader) + "\n");
    CHECK(parse_results_csv(results_csv({})).empty());

    std::vector<RoundLog> logs(2);
    logs[0] = {1, 0.5, 0.25, 0.125, true, 7, 2, 3, 1, 1, -1, 0.75};
    logs[1] = {2, 0.625, 0.0, NAN, false, 0, 0, 0, 0, 0, 1, 1.5};
    auto parsed = parse_results_csv(results_csv(logs));
    REQUIRE(parsed.size() == 2);
    CHECK(parsed[0].gamma == 0.125);
    CHECK(std::isnan(parsed[1].gamma));
    CHECK(parsed[1].attack_feasible == false);
    CHECK(parsed[0].oracle_calls == 7);
    CHECK(parsed[1].fld_k == 1);
    CHECK(results_csv(parsed) == results_csv(logs));

    ExperimentConfig c = parse_config(small_tree());
    auto j = summary_json(c, logs, {}, {});
    auto re = nlohmann::json::parse(j.dump());
    CHECK(re == j);
    CHECK(re["final_ma"] == 0.625);
    CHECK(re["gamma_trace"].size() == 2);
}

TEST_CASE("svg plot is well formed") {
    PlotSpec p;
    p.title = "t";
    p.series.push_back({"ma", {1, 2, 3}, {0.1, 0.5, 0.9}});
    std::string svg = svg_line_plot(p);
    CHECK(svg.rfind("<svg", 0) == 0);
    CHECK(svg.find("</svg>") != std::string::npos);
    CHECK(svg.find("polyline") != std::string::npos);
}

TEST_CASE("experiment round loop") {
    ExperimentConfig c = parse_config(small_tree());
    SUBCASE("no adversary: accuracy improves over early rounds") {
        Experiment e(c);
        e.run_until(6);
        REQUIRE(e.logs().size() == 6);
        CHECK(e.logs().back().ma > e.logs().front().ma);
        for (const auto& l : e.logs()) {
            CHECK(l.ma >= 0.0);
            CHECK(l.ma <= 1.0);
            CHECK(l.rejected == 0);
        }
    }
    SUBCASE("deterministic replay") {
        Experiment a(c), b(c);
        a.run_until(4);
        b.run_until(4);
        CHECK(results_csv(a.logs()) == results_csv(b.logs()));
        CHECK(a.global_model() == b.global_model());
    }
    SUBCASE("checkpoint restore continues identically") {
        Experiment a(c);
        a.run_until(3);
        auto state = a.checkpoint();
        a.run_until(6);
        Experiment b(c);
        b.restore(state);
        b.run_until(6);
        CHECK(results_csv(a.logs()) == results_csv(b.logs()));
        CHECK(a.global_model() == b.global_model());
    }
    SUBCASE("unknown-mode adversary never reads benign updates or AGR settings") {
        auto t = small_tree();
        t["aggregator"] = {{"kind", "cc"}, {"tau", 10.0}};
        t["attack"] = {{"family", "agnostic_targeted"}, {"f", 1}, {"agr_tailored", false}, {"gradients_known", false}};
        Experiment e(parse_config(t));
        e.run_until(3);
        CHECK(e.benign_reads() == 0);
        CHECK(e.aggregator_reads() == 0);
    }
    SUBCASE("known-mode adversary does read them") {
        auto t = small_tree();
        t["aggregator"] = {{"kind", "cc"}, {"tau", 10.0}};
        t["attack"] = {{"family", "cc_tailored"}, {"f", 1}, {"atk_tau", 10.0}};
        Experiment e(parse_config(t));
        e.run_until(2);
        CHECK(e.benign_reads() > 0);
        CHECK(e.aggregator_reads() > 0);
        for (const auto& l : e.logs()) CHECK(l.malicious_unclipped == 1);
    }
}

TEST_CASE("run_experiment outputs, resume and grid") {
    auto t = small_tree();
    SUBCASE("outputs and byte-identical reruns") {
        fs::path out = scratch("outputs");
        t["out"] = out.string();
        t["certify"] = {{"enabled", true}, {"examples", 20}, {"samples", 10}};
        run_experiment(parse_config(t));
        for (auto f : {"results.csv", "summary.json", "certificates.csv", "model.cbor", "plots/ma_ba.svg",
                       "plots/certified_accuracy.svg"})
            CHECK(fs::exists(out / f));
        std::string first = slurp(out / "results.csv");
        CHECK(first.rfind(kResultsHeader, 0) == 0);
        CHECK(parse_results_csv(first).size() == 6);
        run_experiment(parse_config(t));
        CHECK(slurp(out / "results.csv") == first);
        auto summary = nlohmann::json::parse(slurp(out / "summary.json"));
        CHECK(summary["rounds"] == 6);
        CHECK(summary.contains("certify"));
        CHECK(load_final_model(out.string()).size() == 196 * 64 + 64 + 650);
        fs::remove_all(out);
    }
    SUBCASE("resume from checkpoint matches an uninterrupted run") {
        fs::path a = scratch("full"), b = scratch("resumed");
        t["out"] = a.string();
        run_experiment(parse_config(t));
        t["out"] = b.string();
        RunOptions stop;
        stop.checkpoint_every = 2;
        stop.stop_after = 3;
        run_experiment(parse_config(t), stop);
        CHECK(fs::exists(b / "checkpoint.cbor"));
        RunOptions resume;
        resume.resume = true;
        run_experiment(parse_config(t), resume);
        CHECK(slurp(a / "results.csv") == slurp(b / "results.csv"));
        fs::remove_all(a);
        fs::remove_all(b);
    }
    SUBCASE("grid emits a matrix over two keys") {
        fs::path out = scratch("grid");
        t["train"]["rounds"] = 2;
        t["aggregator"] = {{"kind", "cc"}};
        t["attack"] = {{"family", "cc_tailored"}, {"f", 1}};
        t["grid"] = {{"aggregator.tau", {1.0, 10.0}}, {"attack.atk_tau", {0.1, 1.0, 10.0}}};
        auto cells = run_grid(t, "", out.string());
        CHECK(cells.size() == 6);
        CHECK(fs::exists(out / "grid.csv"));
        std::string m = slurp(out / "matrix.csv");
        CHECK(std::count(m.begin(), m.end(), '\n') == 3);
        fs::remove_all(out);
    }
}

TEST_CASE("CLI exit codes") {
    fs::path dir = scratch("cli");
    fs::create_directories(dir);
    auto t = small_tree();
    t["train"]["rounds"] = 2;
    write_text((dir / "ok.json").string(), t.dump());
    t["bogus"] = true;
    write_text((dir / "bad.json").string(), t.dump());
    write_text((dir / "broken.json").string(), "{ not json");
    auto missing = small_tree();
    missing["data"]["train_images"] = (dir / "nope").string();
    write_text((dir / "missing.json").string(), missing.dump());

    const std::string out = " --quiet --out " + (dir / "o").string();
    CHECK(run_cli("run --config " + (dir / "ok.json").string() + out) == 0);
    CHECK(fs::exists(dir / "o" / "results.csv"));
    CHECK(run_cli("report --out " + (dir / "o").string()) == 0);
    CHECK(run_cli("run --config " + (dir / "bad.json").string() + out) == 2);
    CHECK(run_cli("run --config " + (dir / "broken.json").string() + out) == 2);
    CHECK(run_cli("run --config " + (dir / "nowhere.json").string() + out) == 2);
    CHECK(run_cli("run" + out) == 2);
    CHECK(run_cli("run --config " + (dir / "missing.json").string() + out) == 3);
    fs::remove_all(dir);
}
