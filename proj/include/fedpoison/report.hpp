#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "fedpoison/certify.hpp"
#include "fedpoison/config.hpp"
#include "fedpoison/experiment.hpp"
#include "json.hpp"

namespace fedpoison {

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// results.csv columns, in order.
extern const char* const kResultsHeader;

std::string results_csv(const std::vector<RoundLog>& logs);
std::vector<RoundLog> parse_results_csv(const std::string& text);

std::string certificates_csv(const std::vector<Certificate>& certs, const std::vector<int>& labels);

nlohmann::json summary_json(const ExperimentConfig& cfg, const std::vector<RoundLog>& logs,
                            const std::vector<Certificate>& certs, const std::vector<int>& labels);

struct Series {
    std::string name;
    std::vector<double> x;
    std::vector<double> y;
};

struct PlotSpec {
    std::string title;
    std::string x_label;
    std::string y_label;
    std::vector<Series> series;
    double y_min = 0.0;
    double y_max = 1.0;
};

std::string svg_line_plot(const PlotSpec& p);

std::string read_text(const std::string& path);
void write_text(const std::string& path, const std::string& content);

// Writes results.csv, summary.json, plots/ma_ba.svg and, with certificates,
// certificates.csv and plots/certified_accuracy.svg.
void emit_reports(const std::string& out_dir, const ExperimentConfig& cfg, const std::vector<RoundLog>& logs,
                  const std::vector<Certificate>& certs, const std::vector<int>& labels);

// Rebuilds plots/ from the CSV files already in out_dir.
void regenerate_plots(const std::string& out_dir);

}  // namespace fedpoison
