#include "swaptest/axioms.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "swaptest/error.hpp"
#include "swaptest/seeding.hpp"

namespace swaptest {

void AxiomConfig::validate() const {
  if (n_images < 1) throw ConfigError("n_images must be >= 1");
  if (n_perturbations < 1) throw ConfigError("n_perturbations must be >= 1");
  if (!(sigma > 0.0)) throw ConfigError("perturbation sigma must be positive");
}

Volume perturb(const Volume& v, double sigma, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, sigma);
  std::vector<float> out(v.values().begin(), v.values().end());
  for (auto& x : out)
    x = static_cast<float>(std::clamp(static_cast<double>(x) + noise(rng), 0.0, 1.0));
  return Volume(v.dims(), std::move(out), v.standardized());
}

ContinuityResult continuity(const Explainer& explainer, const Scan& x, const AxiomConfig& cfg,
                            std::uint64_t key, const Heatmap* original) {
  cfg.validate();
  const Heatmap base = original ? *original : explainer(x);
  ContinuityResult r;
  for (int k = 0; k < cfg.n_perturbations; ++k) {
    Scan xp = x;
    xp.volume = perturb(x.volume, cfg.sigma,
                        derive_seed(cfg.seed, {key, static_cast<std::uint64_t>(k)}));
    const double dx = lp_distance(x.volume.values(), xp.volume.values(), Norm::L2);
    if (!(dx > 0.0)) continue;
    const Heatmap hp = explainer(xp);
    if (hp.grid != base.grid) throw ShapeError("perturbed heatmap uses a different grid");
    const double dh = lp_distance(std::span<const float>(base.cells),
                                  std::span<const float>(hp.cells), cfg.norm);
    r.ratio = std::max(r.ratio, dh / dx);
    r.distance = std::max(r.distance, dh);
    ++r.used;
  }
  if (r.used == 0) throw StatsError("continuity: every perturbation left the input unchanged");
  return r;
}

double heatmap_baseline(std::span<const Heatmap> heatmaps, Norm norm) {
  if (heatmaps.size() < 2) throw StatsError("baseline needs at least two heatmaps");
  double total = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < heatmaps.size(); ++i)
    for (std::size_t j = i + 1; j < heatmaps.size(); ++j) {
      if (heatmaps[i].grid != heatmaps[j].grid)
        throw ShapeError("baseline heatmaps must share a grid");
      total += lp_distance(std::span<const float>(heatmaps[i].cells),
                           std::span<const float>(heatmaps[j].cells), norm);
      ++pairs;
    }
  return total / static_cast<double>(pairs);
}

std::optional<double> selectivity(const Heatmap& standard, const Heatmap& reversed) {
  if (standard.grid != reversed.grid)
    throw ShapeError("standard and reversed heatmaps must share a grid");
  try {
    return pearson(std::span<const float>(standard.cells), std::span<const float>(reversed.cells));
  } catch (const StatsError&) {
    return std::nullopt;
  }
}

void MethodReport::aggregate() {
  std::vector<double> cont, dist, sel;
  for (const auto& im : images) {
    cont.push_back(im.continuity);
    dist.push_back(im.perturbed_distance);
    if (im.selectivity) sel.push_back(*im.selectivity);
  }
  mean_continuity = mean(cont);
  se_continuity = standard_error(cont);
  mean_perturbed_distance = mean(dist);
  se_perturbed_distance = standard_error(dist);
  selectivity_excluded = static_cast<int>(images.size() - sel.size());
  mean_selectivity = sel.empty() ? std::nullopt : std::optional<double>(mean(sel));
  se_selectivity = standard_error(sel);
}

const MethodReport& AxiomReport::get(Method m) const {
  for (const auto& r : methods)
    if (r.method == m) return r;
  throw ConfigError(std::string("report has no rows for method ") + to_string(m));
}

std::vector<std::size_t> sample_images(std::size_t test_size, int n_images, std::uint64_t seed) {
  if (n_images < 1 || test_size < static_cast<std::size_t>(n_images))
    throw ConfigError("axiom evaluation needs " + std::to_string(n_images) +
                      " test images, only " + std::to_string(test_size) + " available");
  std::vector<std::size_t> idx(test_size);
  std::iota(idx.begin(), idx.end(), 0);
  std::mt19937_64 rng(derive_seed(seed, "sample"));
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(static_cast<std::size_t>(n_images));
  return idx;
}

AxiomReport evaluate_axioms(const Predictor& model, std::span<const Scan> test_set,
                            std::span<const Method> methods, const AxiomConfig& cfg,
                            const ExplainConfig& explain) {
  cfg.validate();
  explain.validate();
  const auto sampled = sample_images(test_set.size(), cfg.n_images, cfg.seed);
  const auto predictions = predict_all(model, test_set, explain.threads);

  ExplainConfig standard_cfg = explain;
  standard_cfg.direction = Direction::Standard;

  AxiomReport report;
  report.config = cfg;
  report.explain = explain;
  for (Method method : methods) {
    MethodReport mr;
    mr.method = method;
    std::vector<Heatmap> standards;
    for (std::size_t idx : sampled) {
      const Scan& x = test_set[idx];
      std::vector<Scan> refs;
      if (method == Method::Swap) {
        const Label predicted = predictions[idx] >= 0.5 ? Label::AD : Label::CN;
        refs = select_references(test_set, predictions, predicted, explain.n_references,
                                 derive_seed(explain.seed, {static_cast<std::uint64_t>(idx)}),
                                 x.subject_id);
      }
      const Explainer explainer = [&](const Scan& s) {
        return method == Method::Swap ? swap_heatmap(model, s, refs, standard_cfg)
                                      : occlusion_heatmap(model, s, standard_cfg);
      };
      Heatmap standard = explainer(x);
      const ContinuityResult c = continuity(explainer, x, cfg, idx, &standard);
      const Heatmap reversed = reversed_heatmap(model, x, refs, method, standard_cfg);

      ImageRecord rec;
      rec.test_index = idx;
      rec.scan_id = x.id();
      rec.continuity = c.ratio;
      rec.perturbed_distance = c.distance;
      rec.selectivity = selectivity(standard, reversed);
      mr.images.push_back(rec);
      standards.push_back(std::move(standard));
    }
    mr.aggregate();
    mr.baseline = standards.size() >= 2 ? heatmap_baseline(standards, cfg.norm) : 0.0;
    report.methods.push_back(std::move(mr));
  }
  return report;
}

}  // namespace swaptest
