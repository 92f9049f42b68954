#include "swaptest/stats.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "swaptest/error.hpp"

namespace swaptest {

namespace {

template <typename T>
double lp_distance_impl(std::span<const T> a, std::span<const T> b, Norm p) {
  if (a.size() != b.size()) {
    throw StatsError("lp_distance length mismatch: " + std::to_string(a.size()) +
                     " vs " + std::to_string(b.size()));
  }
  double acc = 0.0;
  if (p == Norm::L1) {
    for (std::size_t i = 0; i < a.size(); ++i)
      acc += std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i]));
    return acc;
  }
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    acc += d * d;
  }
  return std::sqrt(acc);
}

// Single-pass co-moment update (Welford).
template <typename T>
double pearson_impl(std::span<const T> a, std::span<const T> b) {
  if (a.size() != b.size()) throw StatsError("pearson length mismatch");
  if (a.size() < 2) throw StatsError("pearson needs at least two values");
  double mean_a = 0.0, mean_b = 0.0, m2a = 0.0, m2b = 0.0, cab = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double n = static_cast<double>(i + 1);
    const double da = static_cast<double>(a[i]) - mean_a;
    const double db = static_cast<double>(b[i]) - mean_b;
    mean_a += da / n;
    mean_b += db / n;
    const double da2 = static_cast<double>(a[i]) - mean_a;
    const double db2 = static_cast<double>(b[i]) - mean_b;
    m2a += da * da2;
    m2b += db * db2;
    cab += da * db2;
  }
  if (!(m2a > 0.0) || !(m2b > 0.0)) {
    throw StatsError("pearson undefined: zero variance input");
  }
  return std::clamp(cab / std::sqrt(m2a * m2b), -1.0, 1.0);
}

}  // namespace

double percentile_sorted(std::span<const float> sorted, double p) {
  if (sorted.empty()) throw StatsError("percentile of empty input");
  if (!(p >= 0.0 && p <= 100.0)) throw StatsError("percentile out of [0, 100]");
  const double h = static_cast<double>(sorted.size() - 1) * p / 100.0;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = h - static_cast<double>(lo);
  return static_cast<double>(sorted[lo]) +
         frac * (static_cast<double>(sorted[hi]) - static_cast<double>(sorted[lo]));
}

double percentile(std::span<const float> values, double p) {
  std::vector<float> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  return percentile_sorted(sorted, p);
}

double lp_distance(std::span<const float> a, std::span<const float> b, Norm p) {
  return lp_distance_impl(a, b, p);
}
double lp_distance(std::span<const double> a, std::span<const double> b,
                   Norm p) {
  return lp_distance_impl(a, b, p);
}

double pearson(std::span<const float> a, std::span<const float> b) {
  return pearson_impl(a, b);
}
double pearson(std::span<const double> a, std::span<const double> b) {
  return pearson_impl(a, b);
}

double mean(std::span<const double> v) {
  if (v.empty()) return 0.0;
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double standard_error(std::span<const double> v) {
  if (v.size() < 2) return 0.0;
  const double m = mean(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  const double var = ss / static_cast<double>(v.size() - 1);
  return std::sqrt(var / static_cast<double>(v.size()));
}

}  // namespace swaptest
