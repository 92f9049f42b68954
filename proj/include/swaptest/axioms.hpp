#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "swaptest/classifier.hpp"
#include "swaptest/explain.hpp"
#include "swaptest/stats.hpp"

namespace swaptest {

struct AxiomConfig {
  int n_images = 50;
  int n_perturbations = 8;
  double sigma = 0.02;
  Norm norm = Norm::L2;
  std::uint64_t seed = 13;

  void validate() const;
};

using Explainer = std::function<Heatmap(const Scan&)>;

// v + N(0, sigma^2) per voxel, clamped to [0, 1].
Volume perturb(const Volume& v, double sigma, std::uint64_t seed);

struct ContinuityResult {
  double ratio = 0.0;     // max_k |C(x) - C(x'_k)| / |x - x'_k|_2
  double distance = 0.0;  // max_k |C(x) - C(x'_k)|, undivided
  int used = 0;           // perturbations with x' != x
};

// Perturbation k uses seed derive_seed(cfg.seed, {key, k}). Perturbations that
// leave x unchanged are skipped; if all are skipped a StatsError is thrown.
// `original`, when given, is taken as C(x) instead of recomputing it.
ContinuityResult continuity(const Explainer& explainer, const Scan& x, const AxiomConfig& cfg,
                            std::uint64_t key = 0, const Heatmap* original = nullptr);

// Mean pairwise distance over all unordered pairs. Needs >= 2 heatmaps on the
// same grid.
double heatmap_baseline(std::span<const Heatmap> heatmaps, Norm norm = Norm::L2);

// Pearson correlation of standard and reversed cells; nullopt when either map
// has zero variance.
std::optional<double> selectivity(const Heatmap& standard, const Heatmap& reversed);

struct ImageRecord {
  std::size_t test_index = 0;
  std::string scan_id;
  double continuity = 0.0;
  double perturbed_distance = 0.0;
  std::optional<double> selectivity;
};

struct MethodReport {
  Method method = Method::Swap;
  std::vector<ImageRecord> images;
  double mean_continuity = 0.0;
  double se_continuity = 0.0;
  double mean_perturbed_distance = 0.0;
  double se_perturbed_distance = 0.0;
  double baseline = 0.0;
  std::optional<double> mean_selectivity;
  double se_selectivity = 0.0;
  int selectivity_excluded = 0;

  // Recomputes the aggregate fields from `images`.
  void aggregate();
};

struct AxiomReport {
  AxiomConfig config;
  ExplainConfig explain;
  std::vector<MethodReport> methods;

  const MethodReport& get(Method m) const;
};

// Samples cfg.n_images test scans (seeded) and, per method, computes the
// continuity statistic, the perturbed-pair heatmap distance and selectivity
// for each, plus the inter-image baseline over their standard heatmaps. Swap
// references are drawn per image from the test set.
AxiomReport evaluate_axioms(const Predictor& model, std::span<const Scan> test_set,
                            std::span<const Method> methods, const AxiomConfig& cfg,
                            const ExplainConfig& explain);

// Indices chosen by evaluate_axioms, in evaluation order.
std::vector<std::size_t> sample_images(std::size_t test_size, int n_images, std::uint64_t seed);

}  // namespace swaptest
