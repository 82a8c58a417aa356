#pragma once

#include <span>
#include <vector>

namespace rsts {

double normal_cdf(double x);
double normal_quantile(double p);

// Sample quantile with linear interpolation between order statistics
// (Hyndman-Fan type 7). `sorted` must be ascending and non-empty.
double quantile_sorted(std::span<const double> sorted, double prob);

// sup_t |F_n(t) - Phi(t)| for the empirical distribution of `sample`.
double ks_distance_to_normal(std::span<const double> sample);

// sup_t |F_a(t) - F_b(t)| between two empirical distributions.
double ks_distance_two_sample(std::span<const double> a, std::span<const double> b);

double mean(std::span<const double> v);
// Sample variance with divisor n - 1.
double sample_variance(std::span<const double> v);

}  // namespace rsts
