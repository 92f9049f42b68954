#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "swaptest/classifier.hpp"
#include "swaptest/phantom.hpp"
#include "swaptest/volume.hpp"

namespace swaptest {

enum class Method { Swap, Occlusion };
enum class Direction { Standard, Reversed };
enum class Polarity { Increase, Decrease };

const char* to_string(Method m);
const char* to_string(Direction d);
Method method_from_string(const std::string& s);
Direction direction_from_string(const std::string& s);

struct ExplainConfig {
  int patch_size = 8;
  int stride = 0;  // 0 means stride = patch_size
  int n_references = 5;
  double occlusion_value = 0.0;
  Direction direction = Direction::Standard;
  std::uint64_t seed = 11;
  int threads = 1;

  int effective_stride() const { return stride > 0 ? stride : patch_size; }
  void validate() const;
};

// Default patch side: smallest divisor of the shortest side >= 20% of it (32 -> 8, 100 -> 20).
int default_patch_size(Vec3i dims);

struct Heatmap {
  PatchGrid grid;
  std::vector<float> cells;  // one per grid origin, grid order
  Method method = Method::Swap;
  Direction direction = Direction::Standard;
  ExplainConfig config;
  double baseline_prob = 0.0;
  std::string input_id;
  std::string model_hash;

  std::vector<float> deltas() const;  // cell - baseline_prob
};

// Standard swap: the reference with the input's patch at o, reference covariates.
// Reversed swap: the input with the reference's patch at o, input covariates.
// Standard occlusion: the input with the patch at o filled.
// Reversed occlusion: the input with everything outside the patch at o filled.
Volume swap_composite(const Volume& input, const Volume& reference, Vec3i origin,
                      int patch_size, Direction direction);
Volume occlusion_composite(const Volume& input, Vec3i origin, int patch_size, float fill,
                           Direction direction);

// Correctly classified scans of the class opposite to `input_prediction`,
// excluding `exclude_subject`: true positives for CN-classified inputs, true
// negatives for AD-classified ones. `predictions` holds p(AD) per test scan.
// Picks n uniformly without replacement (seeded) and returns them in test-set
// order. Throws ReferencePoolError if fewer than n are eligible.
std::vector<Scan> select_references(std::span<const Scan> test_set,
                                    std::span<const double> predictions,
                                    Label input_prediction, int n, std::uint64_t seed,
                                    int exclude_subject = -1);
std::vector<Scan> select_references(std::span<const Scan> test_set, const Predictor& model,
                                    Label input_prediction, int n, std::uint64_t seed,
                                    int exclude_subject = -1);

// Heatmap with the direction taken from cfg.direction.
Heatmap swap_heatmap(const Predictor& model, const Scan& input,
                     std::span<const Scan> references, const ExplainConfig& cfg);
Heatmap occlusion_heatmap(const Predictor& model, const Scan& input, const ExplainConfig& cfg);

// Reversed variant of either method regardless of cfg.direction. `references`
// is ignored for occlusion.
Heatmap reversed_heatmap(const Predictor& model, const Scan& input,
                         std::span<const Scan> references, Method method,
                         const ExplainConfig& cfg);

// Per-voxel mean of the cells whose patch covers the voxel. `subtract_baseline`
// maps cells to cell - baseline_prob first.
Volume upsample_heatmap(const Heatmap& h, bool subtract_baseline = false);

// Origin of the extreme cell - baseline_prob; first in grid order on ties.
Vec3i hotspot(const Heatmap& h, Polarity polarity);
std::size_t hotspot_index(const Heatmap& h, Polarity polarity);

}  // namespace swaptest
