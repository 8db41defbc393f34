#include "fedpoison/param_vector.hpp"

#include <algorithm>
#include <cmath>

namespace fedpoison {

namespace {
void same_dim(const ParamVector& a, const ParamVector& b, const char* where) {
    if (a.size() != b.size()) throw DimensionMismatch(where);
}
}  // namespace

double dot(const ParamVector& a, const ParamVector& b) {
    same_dim(a, b, "dot");
    double s = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
    return s;
}

double l2_norm(const ParamVector& v) {
    // scaled accumulation avoids overflow for huge entries
    double amax = 0.0;
    for (double x : v) amax = std::max(amax, std::abs(x));
    if (amax == 0.0) return 0.0;
    double s = 0.0;
    for (double x : v) {
        double r = x / amax;
        s += r * r;
    }
    return amax * std::sqrt(s);
}

double squared_distance(const ParamVector& a, const ParamVector& b) {
    same_dim(a, b, "squared_distance");
    double s = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) {
        double t = a[k] - b[k];
        s += t * t;
    }
    return s;
}

double distance(const ParamVector& a, const ParamVector& b) { return std::sqrt(squared_distance(a, b)); }

double cosine_distance(const ParamVector& a, const ParamVector& b) {
    double na = l2_norm(a), nb = l2_norm(b);
    if (na == 0.0 || nb == 0.0) throw ZeroVector();
    double c = dot(a, b) / (na * nb);
    c = std::clamp(c, -1.0, 1.0);
    return 1.0 - c;
}

ParamVector add(const ParamVector& a, const ParamVector& b) {
    same_dim(a, b, "add");
    ParamVector r(a.size());
    for (std::size_t k = 0; k < a.size(); ++k) r[k] = a[k] + b[k];
    return r;
}

ParamVector sub(const ParamVector& a, const ParamVector& b) {
    same_dim(a, b, "sub");
    ParamVector r(a.size());
    for (std::size_t k = 0; k < a.size(); ++k) r[k] = a[k] - b[k];
    return r;
}

ParamVector scale(const ParamVector& v, double s) {
    ParamVector r(v.size());
    for (std::size_t k = 0; k < v.size(); ++k) r[k] = v[k] * s;
    return r;
}

void axpy(double a, const ParamVector& x, ParamVector& y) {
    same_dim(x, y, "axpy");
    for (std::size_t k = 0; k < x.size(); ++k) y[k] += a * x[k];
}

ParamVector clip_by_norm(const ParamVector& v, double tau) {
    if (!(tau > 0.0)) throw std::invalid_argument("clip_by_norm: tau must be positive");
    double n = l2_norm(v);
    if (n <= tau) return v;
    double f = tau / n;
    ParamVector r = scale(v, f);
    // rounding can leave the norm a few ulps above tau; idempotence needs <= tau
    while (l2_norm(r) > tau) {
        f = std::nextafter(f, 0.0);
        r = scale(v, f);
    }
    return r;
}

ParamVector sign(const ParamVector& v) {
    ParamVector r(v.size());
    for (std::size_t k = 0; k < v.size(); ++k) r[k] = (v[k] > 0.0) - (v[k] < 0.0);
    return r;
}

ParamVector zeros(std::size_t d) { return ParamVector(d, 0.0); }

ParamVector mean(const std::vector<ParamVector>& vs) {
    if (vs.empty()) throw std::invalid_argument("mean of empty set");
    ParamVector r = zeros(vs.front().size());
    for (const auto& v : vs) axpy(1.0, v, r);
    for (double& x : r) x /= static_cast<double>(vs.size());
    return r;
}

double median(std::vector<double> xs) {
    if (xs.empty()) throw std::invalid_argument("median of empty list");
    std::sort(xs.begin(), xs.end());
    std::size_t n = xs.size();
    if (n % 2 == 1) return xs[n / 2];
    return 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
}

double median_of_norms(const std::vector<ParamVector>& vs) {
    std::vector<double> ns;
    ns.reserve(vs.size());
    for (const auto& v : vs) ns.push_back(l2_norm(v));
    return median(std::move(ns));
}

double max_pairwise_distance(const std::vector<ParamVector>& vs) {
    double m = 0.0;
    for (std::size_t i = 0; i < vs.size(); ++i)
        for (std::size_t j = i + 1; j < vs.size(); ++j) m = std::max(m, distance(vs[i], vs[j]));
    return m;
}

double max_pairwise_cosine_distance(const std::vector<ParamVector>& vs) {
    double m = 0.0;
    for (std::size_t i = 0; i < vs.size(); ++i)
        for (std::size_t j = i + 1; j < vs.size(); ++j) m = std::max(m, cosine_distance(vs[i], vs[j]));
    return m;
}

bool all_finite(const ParamVector& v) {
    return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

void require_finite(const ParamVector& v, const char* what) {
    if (!all_finite(v)) throw std::domain_error(std::string("non-finite entry in ") + what);
}

}  // namespace fedpoison
