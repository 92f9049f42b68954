#include "swaptest/explain.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "swaptest/error.hpp"
#include "swaptest/parallel.hpp"

namespace swaptest {

const char* to_string(Method m) { return m == Method::Swap ? "swap" : "occlusion"; }
const char* to_string(Direction d) { return d == Direction::Standard ? "standard" : "reversed"; }

Method method_from_string(const std::string& s) {
  if (s == "swap") return Method::Swap;
  if (s == "occlusion") return Method::Occlusion;
  throw ConfigError("unknown method '" + s + "' (expected swap or occlusion)");
}

Direction direction_from_string(const std::string& s) {
  if (s == "standard") return Direction::Standard;
  if (s == "reversed") return Direction::Reversed;
  throw ConfigError("unknown direction '" + s + "'");
}

void ExplainConfig::validate() const {
  if (patch_size < 1) throw ConfigError("patch_size must be >= 1");
  if (stride < 0 || stride > patch_size) throw ConfigError("stride must lie in [1, patch_size]");
  if (n_references < 1) throw ConfigError("n_references must be >= 1");
  if (!(occlusion_value >= 0.0 && occlusion_value <= 1.0))
    throw ConfigError("occlusion_value must lie in [0, 1]");
  if (threads < 1) throw ConfigError("threads must be >= 1");
}

int default_patch_size(Vec3i dims) {
  // Smallest divisor of the shortest side that reaches a fifth of it, so the
  // grid tiles exactly (100 -> 20, 32 -> 8). Awkward sizes fall back to m/5.
  const int m = std::min({dims.x, dims.y, dims.z});
  const double target = m * 0.2;
  for (int p = 1; p <= m; ++p)
    if (m % p == 0 && p >= target) {
      if (p <= 2.0 * target) return p;
      break;
    }
  return std::max(1, static_cast<int>(std::lround(target)));
}

std::vector<float> Heatmap::deltas() const {
  std::vector<float> d(cells.size());
  for (std::size_t i = 0; i < cells.size(); ++i)
    d[i] = static_cast<float>(static_cast<double>(cells[i]) - baseline_prob);
  return d;
}

Volume swap_composite(const Volume& input, const Volume& reference, Vec3i origin,
                      int patch_size, Direction direction) {
  if (direction == Direction::Standard) return copy_patch(input, reference, origin, patch_size);
  return copy_patch(reference, input, origin, patch_size);
}

Volume occlusion_composite(const Volume& input, Vec3i origin, int patch_size, float fill,
                           Direction direction) {
  if (direction == Direction::Standard) return fill_patch(input, origin, patch_size, fill);
  Volume out(input.dims(), fill, input.standardized());
  copy_patch_into(input, out, origin, patch_size);
  return out;
}

std::vector<Scan> select_references(std::span<const Scan> test_set,
                                    std::span<const double> predictions,
                                    Label input_prediction, int n, std::uint64_t seed,
                                    int exclude_subject) {
  if (predictions.size() != test_set.size())
    throw ShapeError("select_references: one prediction per test scan required");
  if (n < 1) throw ConfigError("number of references must be >= 1");
  const Label wanted = opposite(input_prediction);
  std::vector<std::size_t> eligible;
  for (std::size_t i = 0; i < test_set.size(); ++i) {
    const Label predicted = predictions[i] >= 0.5 ? Label::AD : Label::CN;
    if (test_set[i].label == wanted && predicted == wanted &&
        test_set[i].subject_id != exclude_subject)
      eligible.push_back(i);
  }
  if (eligible.size() < static_cast<std::size_t>(n))
    throw ReferencePoolError("only " + std::to_string(eligible.size()) + " eligible " +
                                 (wanted == Label::AD ? "true positives" : "true negatives") +
                                 " for " + std::to_string(n) + " references",
                             eligible.size());
  std::mt19937_64 rng(seed);
  std::shuffle(eligible.begin(), eligible.end(), rng);
  eligible.resize(static_cast<std::size_t>(n));
  std::sort(eligible.begin(), eligible.end());
  std::vector<Scan> out;
  out.reserve(eligible.size());
  for (auto i : eligible) out.push_back(test_set[i]);
  return out;
}

std::vector<Scan> select_references(std::span<const Scan> test_set, const Predictor& model,
                                    Label input_prediction, int n, std::uint64_t seed,
                                    int exclude_subject) {
  const auto p = predict_all(model, test_set);
  return select_references(test_set, p, input_prediction, n, seed, exclude_subject);
}

namespace {

void check_inputs(const Scan& input, std::span<const Scan> refs, const ExplainConfig& cfg,
                  Method method) {
  cfg.validate();
  if (method == Method::Swap) {
    if (refs.empty()) throw ConfigError("swap test needs at least one reference");
    for (const auto& r : refs) {
      if (r.volume.dims() != input.volume.dims())
        throw ShapeError("reference " + r.id() + " dims " + to_string(r.volume.dims()) +
                         " differ from input " + to_string(input.volume.dims()));
      if (!r.volume.standardized())
        throw ConfigError("reference " + r.id() + " is not standardized");
    }
    if (!input.volume.standardized()) throw ConfigError("input volume is not standardized");
  }
}

Heatmap make_heatmap(const Scan& input, const ExplainConfig& cfg, Method method,
                     Direction direction) {
  Heatmap h;
  h.grid = build_patch_grid(input.volume.dims(), cfg.patch_size, cfg.effective_stride());
  h.cells.assign(h.grid.size(), 0.0f);
  h.method = method;
  h.direction = direction;
  h.config = cfg;
  h.config.direction = direction;
  h.input_id = input.id();
  return h;
}

Heatmap swap_impl(const Predictor& model, const Scan& input, std::span<const Scan> refs,
                  const ExplainConfig& cfg, Direction direction) {
  check_inputs(input, refs, cfg, Method::Swap);
  Heatmap h = make_heatmap(input, cfg, Method::Swap, direction);
  const int s = cfg.patch_size;
  parallel_for(h.grid.size(), cfg.threads, [&](std::size_t c) {
    const Vec3i o = h.grid.origins[c];
    double sum = 0.0;
    for (const auto& r : refs) {
      if (direction == Direction::Standard) {
        Volume composite = r.volume;
        copy_patch_into(input.volume, composite, o, s);
        sum += model.predict_proba(composite, r.covariates());
      } else {
        Volume composite = input.volume;
        copy_patch_into(r.volume, composite, o, s);
        sum += model.predict_proba(composite, input.covariates());
      }
    }
    h.cells[c] = static_cast<float>(sum / static_cast<double>(refs.size()));
  });
  if (direction == Direction::Standard) {
    double sum = 0.0;
    for (const auto& r : refs) sum += model.predict_proba(r);
    h.baseline_prob = sum / static_cast<double>(refs.size());
  } else {
    h.baseline_prob = model.predict_proba(input);
  }
  return h;
}

Heatmap occlusion_impl(const Predictor& model, const Scan& input, const ExplainConfig& cfg,
                       Direction direction) {
  check_inputs(input, {}, cfg, Method::Occlusion);
  Heatmap h = make_heatmap(input, cfg, Method::Occlusion, direction);
  const float fill = static_cast<float>(cfg.occlusion_value);
  parallel_for(h.grid.size(), cfg.threads, [&](std::size_t c) {
    const Volume composite =
        occlusion_composite(input.volume, h.grid.origins[c], cfg.patch_size, fill, direction);
    h.cells[c] = static_cast<float>(model.predict_proba(composite, input.covariates()));
  });
  h.baseline_prob = model.predict_proba(input);
  return h;
}

}  // namespace

Heatmap swap_heatmap(const Predictor& model, const Scan& input,
                     std::span<const Scan> references, const ExplainConfig& cfg) {
  return swap_impl(model, input, references, cfg, cfg.direction);
}

Heatmap occlusion_heatmap(const Predictor& model, const Scan& input, const ExplainConfig& cfg) {
  return occlusion_impl(model, input, cfg, cfg.direction);
}

Heatmap reversed_heatmap(const Predictor& model, const Scan& input,
                         std::span<const Scan> references, Method method,
                         const ExplainConfig& cfg) {
  if (method == Method::Swap) return swap_impl(model, input, references, cfg, Direction::Reversed);
  return occlusion_impl(model, input, cfg, Direction::Reversed);
}

Volume upsample_heatmap(const Heatmap& h, bool subtract_baseline) {
  const Vec3i d = h.grid.dims;
  std::vector<double> sum(d.product(), 0.0);
  std::vector<int> count(d.product(), 0);
  const int s = h.grid.patch_size;
  for (std::size_t c = 0; c < h.grid.size(); ++c) {
    const Vec3i o = h.grid.origins[c];
    const double v = static_cast<double>(h.cells[c]) - (subtract_baseline ? h.baseline_prob : 0.0);
    for (int z = o.z; z < o.z + s; ++z)
      for (int y = o.y; y < o.y + s; ++y)
        for (int x = o.x; x < o.x + s; ++x) {
          const std::size_t i = static_cast<std::size_t>(x) +
                                static_cast<std::size_t>(d.x) *
                                    (static_cast<std::size_t>(y) + static_cast<std::size_t>(d.y) * z);
          sum[i] += v;
          ++count[i];
        }
  }
  std::vector<float> out(d.product());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = count[i] ? static_cast<float>(sum[i] / count[i]) : 0.0f;
  return Volume(d, std::move(out), false);
}

std::size_t hotspot_index(const Heatmap& h, Polarity polarity) {
  if (h.cells.empty()) throw ShapeError("hotspot of an empty heatmap");
  std::size_t best = 0;
  double best_v = static_cast<double>(h.cells[0]) - h.baseline_prob;
  for (std::size_t i = 1; i < h.cells.size(); ++i) {
    const double v = static_cast<double>(h.cells[i]) - h.baseline_prob;
    if (polarity == Polarity::Increase ? v > best_v : v < best_v) {
      best = i;
      best_v = v;
    }
  }
  return best;
}

Vec3i hotspot(const Heatmap& h, Polarity polarity) {
  return h.grid.origins[hotspot_index(h, polarity)];
}

}  // namespace swaptest
