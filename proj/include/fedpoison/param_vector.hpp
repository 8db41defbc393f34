#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace fedpoison {

// Flat model parameters, gradients and momenta all share this type.
using ParamVector = std::vector<double>;

struct ZeroVector : std::invalid_argument {
    ZeroVector() : std::invalid_argument("zero-norm vector in cosine distance") {}
};

struct DimensionMismatch : std::invalid_argument {
    explicit DimensionMismatch(const std::string& where)
        : std::invalid_argument("dimension mismatch in " + where) {}
};

double l2_norm(const ParamVector& v);
double dot(const ParamVector& a, const ParamVector& b);
double distance(const ParamVector& a, const ParamVector& b);
double squared_distance(const ParamVector& a, const ParamVector& b);
double cosine_distance(const ParamVector& a, const ParamVector& b);

ParamVector add(const ParamVector& a, const ParamVector& b);
ParamVector sub(const ParamVector& a, const ParamVector& b);
ParamVector scale(const ParamVector& v, double s);
// y += a * x
void axpy(double a, const ParamVector& x, ParamVector& y);
ParamVector clip_by_norm(const ParamVector& v, double tau);
ParamVector sign(const ParamVector& v);
ParamVector zeros(std::size_t d);
ParamVector mean(const std::vector<ParamVector>& vs);

// Even-length input returns the mean of the two middle values.
double median(std::vector<double> xs);
double median_of_norms(const std::vector<ParamVector>& vs);
double max_pairwise_distance(const std::vector<ParamVector>& vs);
double max_pairwise_cosine_distance(const std::vector<ParamVector>& vs);

bool all_finite(const ParamVector& v);
// Throws std::domain_error naming `what` if any entry is NaN or Inf.
void require_finite(const ParamVector& v, const char* what);

}  // namespace fedpoison
