#pragma once

namespace fedpoison {

double normal_cdf(double x);
// Inverse standard normal CDF; p in (0,1). Returns +/-inf at the endpoints.
double normal_quantile(double p);

enum class BoundSide { Lower, Upper };

// One-sided exact binomial (Clopper-Pearson) bound at level alpha.
double clopper_pearson(int count, int trials, double alpha, BoundSide side);

}  // namespace fedpoison
