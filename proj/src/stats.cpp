#include "fedpoison/stats.hpp"

#include <boost/math/distributions/beta.hpp>
#include <boost/math/distributions/normal.hpp>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace fedpoison {

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

double normal_quantile(double p) {
    if (!(p >= 0.0 && p <= 1.0)) throw std::domain_error("normal_quantile: p outside [0,1]");
    if (p == 0.0) return -std::numeric_limits<double>::infinity();
    if (p == 1.0) return std::numeric_limits<double>::infinity();
    return boost::math::quantile(boost::math::normal_distribution<double>(0.0, 1.0), p);
}

double clopper_pearson(int count, int trials, double alpha, BoundSide side) {
    if (trials <= 0 || count < 0 || count > trials) throw std::domain_error("clopper_pearson: bad counts");
    if (!(alpha > 0.0 && alpha < 1.0)) throw std::domain_error("clopper_pearson: alpha outside (0,1)");
    const double k = count, m = trials;
    if (side == BoundSide::Lower) {
        if (count == 0) return 0.0;
        return boost::math::quantile(boost::math::beta_distribution<double>(k, m - k + 1.0), alpha);
    }
    if (count == trials) return 1.0;
    return boost::math::quantile(boost::math::beta_distribution<double>(k + 1.0, m - k), 1.0 - alpha);
}

}  // namespace fedpoison
