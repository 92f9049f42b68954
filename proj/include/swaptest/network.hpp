#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "swaptest/network_spec.hpp"
#include "swaptest/volume.hpp"

namespace swaptest {

enum class Mode { Train, Eval };

// Activations recorded by a forward pass. acts[i] is the input of layer i and
// acts.back() the logits.
template <typename T>
struct ForwardCache {
  std::vector<std::vector<T>> acts;
  std::vector<std::vector<std::uint32_t>> pool_argmax;  // per layer, empty unless pool
  std::vector<std::vector<T>> dropout_mask;             // per layer, empty unless dropout
};

// Lays the volume out as the network input tensor (c, d, h, w). For 2D+C
// inputs, slice k of the plane axis (k = 0, step, 2 step, ...) becomes
// channel k / step.
template <typename T>
std::vector<T> make_input(const NetworkSpec& spec, const Volume& volume);

// Computes the two class logits (CN, AD). Softmax layers are not applied
// here; callers turn logits into probabilities. Train mode applies inverted
// dropout with masks drawn from `dropout_seed`.
template <typename T>
std::array<T, 2> forward(const NetworkSpec& spec, std::span<const T> params,
                         std::span<const T> input, std::span<const T> covariates,
                         Mode mode, std::uint64_t dropout_seed = 0,
                         ForwardCache<T>* cache = nullptr);

// Accumulates dLoss/dparams into `grad` (same length as params) given the
// loss gradient with respect to the logits.
template <typename T>
void backward(const NetworkSpec& spec, std::span<const T> params,
              const ForwardCache<T>& cache, std::array<T, 2> logit_grad,
              std::span<T> grad);

// Cross-entropy of softmax(logits) against `target` (0 = CN, 1 = AD), and its
// gradient softmax(logits) - onehot(target).
template <typename T>
T cross_entropy(std::array<T, 2> logits, int target, std::array<T, 2>* grad = nullptr);

// Stable two-class softmax of logits / temperature.
std::array<double, 2> softmax2(std::array<double, 2> logits, double temperature = 1.0);

// He-normal weights and zero biases.
std::vector<float> init_parameters(const NetworkSpec& spec, std::uint64_t seed);

}  // namespace swaptest
