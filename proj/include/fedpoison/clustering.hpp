#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

namespace fedpoison {

using DistanceMatrix = std::vector<std::vector<double>>;

struct TooFewPoints : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Throws std::invalid_argument unless square, symmetric, finite, nonnegative
// with a zero diagonal.
void validate_distance_matrix(const DistanceMatrix& d);

struct HdbscanOptions {
    int min_cluster_size = 5;
    int min_samples = 0;  // 0 means equal to min_cluster_size
    bool allow_single_cluster = true;
};

// Precomputed-distance HDBSCAN with excess-of-mass selection. Labels are
// 0..k-1 in order of cluster creation, -1 marks noise.
std::vector<int> hdbscan(const DistanceMatrix& d, const HdbscanOptions& opt);
std::vector<int> hdbscan(const DistanceMatrix& d, int min_cluster_size);

struct KMeansResult {
    std::vector<int> labels;  // cluster 0 holds the smallest values
    std::vector<double> centers;
    double wcss = 0.0;
};

// Exact 1-D k-means (dynamic programming over sorted scores).
KMeansResult kmeans_1d(const std::vector<double>& scores, int k);

struct GapResult {
    int k = 1;
    std::vector<double> gap;  // gap[k-1]
    std::vector<double> s;    // s[k-1]
};

// Tibshirani gap statistic with B uniform reference draws on [min, max].
GapResult gap_statistic(const std::vector<double>& scores, int k_max, int B, std::uint64_t seed);

}  // namespace fedpoison
