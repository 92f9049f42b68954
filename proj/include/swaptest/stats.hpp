#pragma once

#include <span>
#include <vector>

namespace swaptest {

enum class Norm { L1 = 1, L2 = 2 };

// Linear interpolation between order statistics: with sorted values v[0..n-1],
// the p-th percentile sits at rank h = (n - 1) * p / 100 and equals
// v[floor(h)] + (h - floor(h)) * (v[floor(h) + 1] - v[floor(h)]).
double percentile(std::span<const float> values, double p);
double percentile_sorted(std::span<const float> sorted, double p);

double lp_distance(std::span<const float> a, std::span<const float> b, Norm p);
double lp_distance(std::span<const double> a, std::span<const double> b, Norm p);

// Sample Pearson correlation. Throws StatsError on length mismatch, fewer than
// two values, or zero variance in either input.
double pearson(std::span<const float> a, std::span<const float> b);
double pearson(std::span<const double> a, std::span<const double> b);

double mean(std::span<const double> v);
// Standard error of the mean (sample std / sqrt(n)); 0 for n < 2.
double standard_error(std::span<const double> v);

}  // namespace swaptest
