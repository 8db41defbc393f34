#include "fedpoison/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace fedpoison {

namespace fs = std::filesystem;
using nlohmann::json;

const char* const kResultsHeader =
    "round,ma,ba,gamma,attack_feasible,oracle_calls,rejected,clipped,malicious_accepted,malicious_unclipped,fld_k,"
    "update_norm";

namespace {

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

std::vector<std::string> split(const std::string& line, char sep) {
    std::vector<std::string> out;
    std::string cur;
    std::stringstream ss(line);
    while (std::getline(ss, cur, sep)) out.push_back(cur);
    if (!line.empty() && line.back() == sep) out.emplace_back();
    return out;
}

std::string xml_escape(const std::string& s) {
    std::string o;
    for (char c : s) {
        switch (c) {
            case '<': o += "&lt;"; break;
            case '>': o += "&gt;"; break;
            case '&': o += "&amp;"; break;
            case '"': o += "&quot;"; break;
            default: o += c;
        }
    }
    return o;
}

}  // namespace

std::string results_csv(const std::vector<RoundLog>& logs) {
    std::string out = std::string(kResultsHeader) + "\n";
    for (const auto& l : logs) {
        out += std::to_string(l.round) + "," + fmt("%.6f", l.ma) + "," + fmt("%.6f", l.ba) + "," +
               (std::isnan(l.gamma) ? std::string() : fmt("%.9g", l.gamma)) + "," + (l.attack_feasible ? "1" : "0") +
               "," + std::to_string(l.oracle_calls) + "," + std::to_string(l.rejected) + "," +
               std::to_string(l.clipped) + "," + std::to_string(l.malicious_accepted) + "," +
               std::to_string(l.malicious_unclipped) + "," + std::to_string(l.fld_k) + "," +
               fmt("%.9g", l.update_norm) + "\n";
    }
    return out;
}

std::vector<RoundLog> parse_results_csv(const std::string& text) {
    std::stringstream ss(text);
    std::string line;
    if (!std::getline(ss, line) || line != kResultsHeader) throw IoError("results.csv: unexpected header");
    std::vector<RoundLog> logs;
    int lineno = 1;
    while (std::getline(ss, line)) {
        ++lineno;
        if (line.empty()) continue;
        auto c = split(line, ',');
        if (c.size() != 12) throw IoError("results.csv line " + std::to_string(lineno) + ": expected 12 fields");
        try {
            RoundLog l;
            l.round = std::stoi(c[0]);
            l.ma = std::stod(c[1]);
            l.ba = std::stod(c[2]);
            l.gamma = c[3].empty() ? std::numeric_limits<double>::quiet_NaN() : std::stod(c[3]);
            l.attack_feasible = c[4] == "1";
            l.oracle_calls = std::stoi(c[5]);
            l.rejected = std::stoi(c[6]);
            l.clipped = std::stoi(c[7]);
            l.malicious_accepted = std::stoi(c[8]);
            l.malicious_unclipped = std::stoi(c[9]);
            l.fld_k = std::stoi(c[10]);
            l.update_norm = std::stod(c[11]);
            logs.push_back(l);
        } catch (const std::logic_error&) {
            throw IoError("results.csv line " + std::to_string(lineno) + ": bad number");
        }
    }
    return logs;
}

std::string certificates_csv(const std::vector<Certificate>& certs, const std::vector<int>& labels) {
    std::string out = "example_id,label,prediction,radius,p_a_lower,p_b_upper\n";
    for (std::size_t i = 0; i < certs.size(); ++i) {
        const Certificate& c = certs[i];
        out += std::to_string(i) + "," + (i < labels.size() ? std::to_string(labels[i]) : std::string()) + "," +
               (c.prediction == kAbstain ? std::string("abstain") : std::to_string(c.prediction)) + "," +
               fmt("%.9g", c.radius) + "," + fmt("%.9g", c.p_a_lower) + "," + fmt("%.9g", c.p_b_upper) + "\n";
    }
    return out;
}

namespace {

std::vector<double> default_radii(const std::vector<Certificate>& certs) {
    double hi = 0.0;
    for (const auto& c : certs) hi = std::max(hi, c.radius);
    if (hi <= 0.0) hi = 1.0;
    std::vector<double> r;
    for (int i = 0; i <= 50; ++i) r.push_back(hi * i / 50.0);
    return r;
}

}  // namespace

json summary_json(const ExperimentConfig& cfg, const std::vector<RoundLog>& logs,
                  const std::vector<Certificate>& certs, const std::vector<int>& labels) {
    json gammas = json::array();
    for (const auto& l : logs) gammas.push_back(std::isnan(l.gamma) ? json(nullptr) : json(l.gamma));
    json s = {{"config", config_to_json(cfg)},
              {"rounds", logs.size()},
              {"final_ma", logs.empty() ? json(nullptr) : json(logs.back().ma)},
              {"final_ba", logs.empty() ? json(nullptr) : json(logs.back().ba)},
              {"gamma_trace", gammas}};
    if (!certs.empty()) {
        int abstain = 0;
        for (const auto& c : certs) abstain += c.prediction == kAbstain;
        json curve = json::array();
        for (const auto& p : certified_accuracy_curve(certs, labels, default_radii(certs)))
            curve.push_back({p.radius, p.accuracy});
        s["certify"] = {{"examples", certs.size()},
                        {"abstain", abstain},
                        {"mean_radius", mean_radius(certs)},
                        {"mean_certified_radius", mean_certified_radius(certs, labels)},
                        {"certified_accuracy", curve}};
    }
    return s;
}

std::string svg_line_plot(const PlotSpec& p) {
    const double W = 640, H = 400, L = 60, R = 20, T = 40, B = 50;
    double x_min = 0.0, x_max = 1.0;
    bool any = false;
    for (const auto& s : p.series)
        for (double x : s.x) {
            x_min = any ? std::min(x_min, x) : x;
            x_max = any ? std::max(x_max, x) : x;
            any = true;
        }
    if (x_max <= x_min) x_max = x_min + 1.0;
    const double y_span = p.y_max > p.y_min ? p.y_max - p.y_min : 1.0;
    auto px = [&](double x) { return L + (x - x_min) / (x_max - x_min) * (W - L - R); };
    auto py = [&](double y) { return H - B - (y - p.y_min) / y_span * (H - T - B); };

    static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};
    std::string o = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"400\" viewBox=\"0 0 640 400\">\n";
    o += "<rect width=\"640\" height=\"400\" fill=\"white\"/>\n";
    o += "<text x=\"320\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"15\">" +
         xml_escape(p.title) + "</text>\n";
    o += "<line x1=\"" + fmt("%.1f", L) + "\" y1=\"" + fmt("%.1f", H - B) + "\" x2=\"" + fmt("%.1f", W - R) +
         "\" y2=\"" + fmt("%.1f", H - B) + "\" stroke=\"black\"/>\n";
    o += "<line x1=\"" + fmt("%.1f", L) + "\" y1=\"" + fmt("%.1f", T) + "\" x2=\"" + fmt("%.1f", L) + "\" y2=\"" +
         fmt("%.1f", H - B) + "\" stroke=\"black\"/>\n";
    for (int i = 0; i <= 5; ++i) {
        const double yv = p.y_min + y_span * i / 5.0, xv = x_min + (x_max - x_min) * i / 5.0;
        o += "<text x=\"" + fmt("%.1f", L - 6) + "\" y=\"" + fmt("%.1f", py(yv) + 4) +
             "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" + fmt("%.2f", yv) + "</text>\n";
        o += "<text x=\"" + fmt("%.1f", px(xv)) + "\" y=\"" + fmt("%.1f", H - B + 16) +
             "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">" + fmt("%.3g", xv) + "</text>\n";
    }
    o += "<text x=\"" + fmt("%.1f", (L + W - R) / 2) + "\" y=\"" + fmt("%.1f", H - 12) +
         "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">" + xml_escape(p.x_label) + "</text>\n";
    o += "<text x=\"16\" y=\"" + fmt("%.1f", (T + H - B) / 2) + "\" text-anchor=\"middle\" transform=\"rotate(-90 16 " +
         fmt("%.1f", (T + H - B) / 2) + ")\" font-family=\"sans-serif\" font-size=\"12\">" + xml_escape(p.y_label) +
         "</text>\n";
    for (std::size_t k = 0; k < p.series.size(); ++k) {
        const Series& s = p.series[k];
        const char* color = colors[k % 6];
        std::string pts;
        for (std::size_t i = 0; i < s.x.size() && i < s.y.size(); ++i) {
            if (!pts.empty()) pts += " ";
            pts += fmt("%.1f", px(s.x[i])) + "," + fmt("%.1f", py(s.y[i]));
        }
        o += "<polyline fill=\"none\" stroke=\"" + std::string(color) + "\" stroke-width=\"2\" points=\"" + pts + "\"/>\n";
        const double ly = T + 14 + 16.0 * k;
        o += "<line x1=\"" + fmt("%.1f", W - R - 120) + "\" y1=\"" + fmt("%.1f", ly) + "\" x2=\"" +
             fmt("%.1f", W - R - 100) + "\" y2=\"" + fmt("%.1f", ly) + "\" stroke=\"" + color + "\" stroke-width=\"2\"/>\n";
        o += "<text x=\"" + fmt("%.1f", W - R - 95) + "\" y=\"" + fmt("%.1f", ly + 4) +
             "\" font-family=\"sans-serif\" font-size=\"11\">" + xml_escape(s.name) + "</text>\n";
    }
    o += "</svg>\n";
    return o;
}

std::string read_text(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text(const std::string& path, const std::string& content) {
    const fs::path p(path);
    if (p.has_parent_path()) {
        std::error_code ec;
        fs::create_directories(p.parent_path(), ec);
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path);
    out << content;
    if (!out) throw IoError("write failed: " + path);
}

namespace {

PlotSpec round_plot(const std::vector<RoundLog>& logs) {
    PlotSpec p;
    p.title = "Main-task and backdoor accuracy";
    p.x_label = "round";
    p.y_label = "accuracy";
    Series ma{"MA", {}, {}}, ba{"BA", {}, {}};
    for (const auto& l : logs) {
        ma.x.push_back(l.round);
        ma.y.push_back(l.ma);
        ba.x.push_back(l.round);
        ba.y.push_back(l.ba);
    }
    p.series = {ma, ba};
    return p;
}

PlotSpec certified_plot(const std::vector<Certificate>& certs, const std::vector<int>& labels) {
    PlotSpec p;
    p.title = "Certified accuracy";
    p.x_label = "radius";
    p.y_label = "certified accuracy";
    Series s{"certified", {}, {}};
    for (const auto& pt : certified_accuracy_curve(certs, labels, default_radii(certs))) {
        s.x.push_back(pt.radius);
        s.y.push_back(pt.accuracy);
    }
    p.series = {s};
    return p;
}

}  // namespace

void emit_reports(const std::string& out_dir, const ExperimentConfig& cfg, const std::vector<RoundLog>& logs,
                  const std::vector<Certificate>& certs, const std::vector<int>& labels) {
    const fs::path out(out_dir);
    write_text((out / "results.csv").string(), results_csv(logs));
    write_text((out / "summary.json").string(), summary_json(cfg, logs, certs, labels).dump(2) + "\n");
    write_text((out / "plots" / "ma_ba.svg").string(), svg_line_plot(round_plot(logs)));
    if (!certs.empty()) {
        write_text((out / "certificates.csv").string(), certificates_csv(certs, labels));
        write_text((out / "plots" / "certified_accuracy.svg").string(), svg_line_plot(certified_plot(certs, labels)));
    }
}

void regenerate_plots(const std::string& out_dir) {
    const fs::path out(out_dir);
    auto logs = parse_results_csv(read_text((out / "results.csv").string()));
    write_text((out / "plots" / "ma_ba.svg").string(), svg_line_plot(round_plot(logs)));
    const fs::path cpath = out / "certificates.csv";
    if (!fs::exists(cpath)) return;
    std::stringstream ss(read_text(cpath.string()));
    std::string line;
    std::getline(ss, line);
    std::vector<Certificate> certs;
    std::vector<int> labels;
    while (std::getline(ss, line)) {
        if (line.empty()) continue;
        auto c = split(line, ',');
        if (c.size() != 6) throw IoError("certificates.csv: expected 6 fields");
        Certificate cert;
        cert.prediction = c[2] == "abstain" ? kAbstain : std::stoi(c[2]);
        cert.radius = std::stod(c[3]);
        cert.p_a_lower = std::stod(c[4]);
        cert.p_b_upper = std::stod(c[5]);
        certs.push_back(cert);
        labels.push_back(std::stoi(c[1]));
    }
    write_text((out / "plots" / "certified_accuracy.svg").string(), svg_line_plot(certified_plot(certs, labels)));
}

}  // namespace fedpoison
