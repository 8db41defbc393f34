#pragma once

#include <deque>

#include "fedpoison/param_vector.hpp"

namespace fedpoison {

// Sliding window of curvature pairs s = w_t - w_{t-1}, y = g_t - g_{t-1}.
class LbfgsHistory {
public:
    explicit LbfgsHistory(std::size_t capacity) : capacity_(capacity) {}

    // Pairs with non-positive curvature s.y are skipped.
    bool push(ParamVector s, ParamVector y);
    std::size_t size() const { return s_.size(); }
    std::size_t capacity() const { return capacity_; }
    void clear();
    const std::deque<ParamVector>& s_pairs() const { return s_; }
    const std::deque<ParamVector>& y_pairs() const { return y_; }

    // B v with B a Hessian approximation built from the window: the two-loop
    // recursion with s and y exchanged, i.e. the dual (DFP) update of the
    // direct Hessian. B s = y holds for the newest pair. Empty window returns v.
    ParamVector hessian_vector_product(const ParamVector& v) const;
    // H v with H the inverse approximation (standard two-loop recursion).
    ParamVector inverse_hessian_vector_product(const ParamVector& v) const;

private:
    static ParamVector two_loop(const std::deque<ParamVector>& a, const std::deque<ParamVector>& b,
                                const ParamVector& v);
    std::size_t capacity_;
    std::deque<ParamVector> s_, y_;
};

}  // namespace fedpoison
