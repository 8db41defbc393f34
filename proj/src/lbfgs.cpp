#include "fedpoison/lbfgs.hpp"

#include <vector>

namespace fedpoison {

bool LbfgsHistory::push(ParamVector s, ParamVector y) {
    if (s.size() != y.size()) throw DimensionMismatch("LbfgsHistory::push");
    if (capacity_ == 0 || !(dot(s, y) > 0.0)) return false;
    s_.push_back(std::move(s));
    y_.push_back(std::move(y));
    while (s_.size() > capacity_) {
        s_.pop_front();
        y_.pop_front();
    }
    return true;
}

void LbfgsHistory::clear() {
    s_.clear();
    y_.clear();
}

// Applies the inverse-BFGS operator defined by pairs (a_i, b_i) with secant
// condition H b_i = a_i.
ParamVector LbfgsHistory::two_loop(const std::deque<ParamVector>& a, const std::deque<ParamVector>& b,
                                   const ParamVector& v) {
    const std::size_t m = a.size();
    if (m == 0) return v;
    ParamVector q = v;
    std::vector<double> alpha(m), rho(m);
    for (std::size_t i = m; i-- > 0;) {
        rho[i] = 1.0 / dot(a[i], b[i]);
        alpha[i] = rho[i] * dot(a[i], q);
        axpy(-alpha[i], b[i], q);
    }
    const double h0 = dot(a[m - 1], b[m - 1]) / dot(b[m - 1], b[m - 1]);
    ParamVector r = scale(q, h0);
    for (std::size_t i = 0; i < m; ++i) {
        double beta = rho[i] * dot(b[i], r);
        axpy(alpha[i] - beta, a[i], r);
    }
    return r;
}

ParamVector LbfgsHistory::hessian_vector_product(const ParamVector& v) const { return two_loop(y_, s_, v); }

ParamVector LbfgsHistory::inverse_hessian_vector_product(const ParamVector& v) const { return two_loop(s_, y_, v); }

}  // namespace fedpoison
