#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "swaptest/classifier.hpp"
#include "swaptest/phantom.hpp"

namespace swaptest {

struct AdamParams {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

template <typename T>
struct AdamState {
  std::vector<T> m;
  std::vector<T> v;
  long step = 0;

  explicit AdamState(std::size_t n = 0) : m(n, T(0)), v(n, T(0)) {}
};

// One bias-corrected Adam update. Increments state.step before use.
template <typename T>
void adam_step(std::span<T> params, std::span<const T> grads, AdamState<T>& state,
               const AdamParams& cfg);

struct TrainConfig {
  int epochs = 50;
  double learning_rate = 1e-4;
  int batch_size = 16;
  double dropout_rate = 0.5;
  std::uint64_t seed = 7;
  int threads = 1;

  void validate() const;
};

// Called after each epoch; handy for progress output.
using EpochCallback = std::function<void(const EpochRecord&)>;

// Mini-batch Adam on cross-entropy. Examples in a batch are processed
// independently and their gradients summed in example order, so the result
// does not depend on the thread count. The config's dropout rate is written
// into the network's dropout layers. Returns the per-epoch history (also
// appended to the model).
std::vector<EpochRecord> train(Classifier& model, std::span<const Scan> train_set,
                               std::span<const Scan> validation_set, const TrainConfig& cfg,
                               const EpochCallback& on_epoch = {});

std::vector<EpochRecord> train(Classifier& model, const DatasetSplits& splits,
                               const TrainConfig& cfg, const EpochCallback& on_epoch = {});

// Mean eval-mode cross-entropy (temperature 1) over the scans.
double mean_loss(const Classifier& model, std::span<const Scan> scans, int threads = 1);

}  // namespace swaptest
