#pragma once

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <vector>

#include "fedpoison/data.hpp"
#include "fedpoison/mlp.hpp"
#include "fedpoison/param_vector.hpp"

namespace fedpoison {

struct SmoothingConfig {
    double rho = 10.0;   // parameter norm bound
    double sigma = 0.01; // noise scale
    int samples = 100;
    double alpha = 0.001;

    void validate() const;
};

constexpr int kAbstain = -1;

struct Certificate {
    int prediction = kAbstain;
    double radius = 0.0;
    double p_a_lower = 0.0;
    double p_b_upper = 1.0;
};

// w / max(1, ||w|| / rho).
ParamVector clip_parameters(const ParamVector& w, double rho);

// Vote histogram of M noisy copies of the clipped model on one example.
// Noise draw m comes from stream ("smoothing_noise", m), so the votes for an
// example do not depend on which other examples are certified alongside it.
std::vector<int> smooth_predict(const Mlp& model, const ParamVector& w, const double* example,
                                const SmoothingConfig& cfg, std::uint64_t seed);
// Same histograms for every row of `ds`, one noisy model per sample.
std::vector<std::vector<int>> smooth_predict_all(const Mlp& model, const ParamVector& w, const Dataset& ds,
                                                 const SmoothingConfig& cfg, std::uint64_t seed);

using RadiusRule = std::function<double(double p_a_lower, double p_b_upper, double sigma)>;

// (sigma / 2) (Phi^-1(p_a) - Phi^-1(p_b)).
double gaussian_radius(double p_a_lower, double p_b_upper, double sigma);

// Top-two classes of the histogram, Clopper-Pearson bounds, ABSTAIN with
// radius 0 unless p_a_lower > p_b_upper.
Certificate certify_counts(const std::vector<int>& counts, const SmoothingConfig& cfg,
                           const RadiusRule& rule = gaussian_radius);

std::vector<Certificate> certify_dataset(const Mlp& model, const ParamVector& w, const Dataset& ds,
                                         const SmoothingConfig& cfg, std::uint64_t seed,
                                         const RadiusRule& rule = gaussian_radius);

struct CurvePoint {
    double radius = 0.0;
    double accuracy = 0.0;
};

// Fraction of examples predicted correctly with certified radius >= r.
std::vector<CurvePoint> certified_accuracy_curve(const std::vector<Certificate>& certs,
                                                 const std::vector<int>& labels, const std::vector<double>& radii);

double mean_radius(const std::vector<Certificate>& certs);
// Mean over examples of the radius when the prediction is correct, else 0.
double mean_certified_radius(const std::vector<Certificate>& certs, const std::vector<int>& labels);

}  // namespace fedpoison
