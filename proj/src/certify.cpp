#include "fedpoison/certify.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "fedpoison/rng.hpp"
#include "fedpoison/stats.hpp"

namespace fedpoison {

void SmoothingConfig::validate() const {
    if (!(rho > 0.0) || !(sigma >= 0.0) || samples < 2 || !(alpha > 0.0 && alpha < 1.0))
        throw std::invalid_argument("smoothing config needs rho > 0, sigma >= 0, samples >= 2, alpha in (0,1)");
}

ParamVector clip_parameters(const ParamVector& w, double rho) { return clip_by_norm(w, rho); }

namespace {

ParamVector noisy_copy(const ParamVector& clipped, double sigma, std::uint64_t seed, int m) {
    ParamVector out = clipped;
    if (sigma == 0.0) return out;
    Rng rng = make_rng(seed, "smoothing_noise", {static_cast<std::uint64_t>(m)});
    std::normal_distribution<double> nd(0.0, sigma);
    for (double& v : out) v += nd(rng);
    return out;
}

}  // namespace

std::vector<int> smooth_predict(const Mlp& model, const ParamVector& w, const double* example,
                                const SmoothingConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    const ParamVector clipped = clip_parameters(w, cfg.rho);
    std::vector<int> counts(model.num_classes(), 0);
    for (int m = 0; m < cfg.samples; ++m) ++counts[model.predict(noisy_copy(clipped, cfg.sigma, seed, m), example, 1)[0]];
    return counts;
}

std::vector<std::vector<int>> smooth_predict_all(const Mlp& model, const ParamVector& w, const Dataset& ds,
                                                 const SmoothingConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    const ParamVector clipped = clip_parameters(w, cfg.rho);
    std::vector<std::vector<int>> counts(ds.size(), std::vector<int>(model.num_classes(), 0));
    for (int m = 0; m < cfg.samples; ++m) {
        std::vector<int> pred = model.predict(noisy_copy(clipped, cfg.sigma, seed, m), ds);
        for (std::size_t i = 0; i < ds.size(); ++i) ++counts[i][pred[i]];
    }
    return counts;
}

double gaussian_radius(double p_a_lower, double p_b_upper, double sigma) {
    return 0.5 * sigma * (normal_quantile(p_a_lower) - normal_quantile(p_b_upper));
}

Certificate certify_counts(const std::vector<int>& counts, const SmoothingConfig& cfg, const RadiusRule& rule) {
    if (counts.size() < 2) throw std::invalid_argument("certify needs at least two classes");
    int a = 0;
    for (int c = 1; c < static_cast<int>(counts.size()); ++c)
        if (counts[c] > counts[a]) a = c;
    int b = a == 0 ? 1 : 0;
    for (int c = 0; c < static_cast<int>(counts.size()); ++c)
        if (c != a && counts[c] > counts[b]) b = c;
    int total = 0;
    for (int c : counts) total += c;

    Certificate cert;
    cert.p_a_lower = clopper_pearson(counts[a], total, cfg.alpha, BoundSide::Lower);
    cert.p_b_upper = clopper_pearson(counts[b], total, cfg.alpha, BoundSide::Upper);
    if (cert.p_a_lower > cert.p_b_upper) {
        cert.prediction = a;
        cert.radius = std::max(0.0, rule(cert.p_a_lower, cert.p_b_upper, cfg.sigma));
    }
    return cert;
}

std::vector<Certificate> certify_dataset(const Mlp& model, const ParamVector& w, const Dataset& ds,
                                         const SmoothingConfig& cfg, std::uint64_t seed, const RadiusRule& rule) {
    std::vector<Certificate> out;
    for (const auto& counts : smooth_predict_all(model, w, ds, cfg, seed)) out.push_back(certify_counts(counts, cfg, rule));
    return out;
}

std::vector<CurvePoint> certified_accuracy_curve(const std::vector<Certificate>& certs,
                                                 const std::vector<int>& labels, const std::vector<double>& radii) {
    if (certs.size() != labels.size()) throw DimensionMismatch("certificates and labels differ in length");
    std::vector<CurvePoint> curve;
    for (double r : radii) {
        std::size_t hit = 0;
        for (std::size_t i = 0; i < certs.size(); ++i)
            hit += certs[i].prediction == labels[i] && certs[i].radius >= r;
        curve.push_back({r, certs.empty() ? 0.0 : static_cast<double>(hit) / certs.size()});
    }
    return curve;
}

double mean_radius(const std::vector<Certificate>& certs) {
    if (certs.empty()) return 0.0;
    double s = 0.0;
    for (const auto& c : certs) s += c.radius;
    return s / certs.size();
}

double mean_certified_radius(const std::vector<Certificate>& certs, const std::vector<int>& labels) {
    if (certs.size() != labels.size()) throw DimensionMismatch("certificates and labels differ in length");
    if (certs.empty()) return 0.0;
    double s = 0.0;
    for (std::size_t i = 0; i < certs.size(); ++i)
        if (certs[i].prediction == labels[i]) s += certs[i].radius;
    return s / certs.size();
}

}  // namespace fedpoison
