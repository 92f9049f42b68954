#include "swaptest/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "swaptest/error.hpp"
#include "swaptest/network.hpp"
#include "swaptest/parallel.hpp"
#include "swaptest/seeding.hpp"

namespace swaptest {

template <typename T>
void adam_step(std::span<T> params, std::span<const T> grads, AdamState<T>& state,
               const AdamParams& cfg) {
  if (grads.size() != params.size() || state.m.size() != params.size() ||
      state.v.size() != params.size())
    throw ShapeError("adam_step: parameter, gradient and moment sizes differ");
  ++state.step;
  const double b1t = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double b2t = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = static_cast<double>(grads[i]);
    const double m = cfg.beta1 * static_cast<double>(state.m[i]) + (1.0 - cfg.beta1) * g;
    const double v = cfg.beta2 * static_cast<double>(state.v[i]) + (1.0 - cfg.beta2) * g * g;
    state.m[i] = static_cast<T>(m);
    state.v[i] = static_cast<T>(v);
    const double m_hat = m / b1t;
    const double v_hat = v / b2t;
    params[i] = static_cast<T>(static_cast<double>(params[i]) -
                               cfg.learning_rate * m_hat / (std::sqrt(v_hat) + cfg.epsilon));
  }
}

template void adam_step<float>(std::span<float>, std::span<const float>, AdamState<float>&,
                               const AdamParams&);
template void adam_step<double>(std::span<double>, std::span<const double>,
                                AdamState<double>&, const AdamParams&);

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (learning_rate < 0.0 || !std::isfinite(learning_rate))
    throw ConfigError("learning rate must be finite and non-negative");
  if (batch_size < 1) throw ConfigError("batch size must be >= 1");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0))
    throw ConfigError("dropout rate must lie in [0, 1)");
  if (threads < 1) throw ConfigError("threads must be >= 1");
}

namespace {

struct Prepared {
  std::vector<std::vector<float>> inputs;
  std::vector<std::array<float, 2>> covariates;
  std::vector<int> targets;
};

Prepared prepare(const Classifier& model, std::span<const Scan> scans, int threads) {
  Prepared p;
  p.inputs.resize(scans.size());
  p.covariates.resize(scans.size());
  p.targets.resize(scans.size());
  parallel_for(scans.size(), threads, [&](std::size_t i) {
    p.inputs[i] = make_input<float>(model.spec(), scans[i].volume);
    p.covariates[i] = model.covariate_vector(scans[i].covariates());
    p.targets[i] = static_cast<int>(scans[i].label);
  });
  return p;
}

double prepared_loss(const Classifier& model, const Prepared& data, int threads) {
  std::vector<double> losses(data.inputs.size());
  parallel_for(data.inputs.size(), threads, [&](std::size_t i) {
    const auto z = forward<float>(model.spec(), model.params(), data.inputs[i],
                                  data.covariates[i], Mode::Eval);
    losses[i] = cross_entropy<double>({z[0], z[1]}, data.targets[i]);
  });
  double total = 0.0;
  for (double l : losses) total += l;
  return data.inputs.empty() ? 0.0 : total / static_cast<double>(data.inputs.size());
}

}  // namespace

double mean_loss(const Classifier& model, std::span<const Scan> scans, int threads) {
  return prepared_loss(model, prepare(model, scans, threads), threads);
}

std::vector<EpochRecord> train(Classifier& model, std::span<const Scan> train_set,
                               std::span<const Scan> validation_set, const TrainConfig& cfg,
                               const EpochCallback& on_epoch) {
  cfg.validate();
  if (train_set.empty()) throw ConfigError("training set is empty");
  for (auto& l : model.mutable_spec().layers)
    if (l.kind == LayerKind::Dropout) l.rate = cfg.dropout_rate;

  const Prepared train_data = prepare(model, train_set, cfg.threads);
  const Prepared val_data = prepare(model, validation_set, cfg.threads);
  const NetworkSpec& spec = model.spec();
  const std::size_t n_params = spec.parameter_count();
  const std::size_t n = train_data.inputs.size();
  const std::size_t batch = static_cast<std::size_t>(cfg.batch_size);

  AdamState<float> state(n_params);
  AdamParams adam;
  adam.learning_rate = cfg.learning_rate;

  std::vector<std::vector<float>> grads(std::min(batch, n), std::vector<float>(n_params));
  std::vector<double> losses(std::min(batch, n));
  std::vector<float> total(n_params);
  std::vector<std::size_t> order(n);
  std::vector<EpochRecord> history;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(derive_seed(cfg.seed, {fnv1a("epoch"), static_cast<std::uint64_t>(epoch)}));
    std::shuffle(order.begin(), order.end(), rng);

    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < n; start += batch) {
      const std::size_t count = std::min(batch, n - start);
      parallel_for(count, cfg.threads, [&](std::size_t k) {
        const std::size_t ex = order[start + k];
        const std::uint64_t dseed = derive_seed(
            cfg.seed, {fnv1a("dropout"), static_cast<std::uint64_t>(epoch),
                       static_cast<std::uint64_t>(start + k)});
        ForwardCache<float> cache;
        const auto z = forward<float>(spec, model.params(), train_data.inputs[ex],
                                      train_data.covariates[ex], Mode::Train, dseed, &cache);
        std::array<double, 2> dz{};
        losses[k] = cross_entropy<double>({z[0], z[1]}, train_data.targets[ex], &dz);
        std::fill(grads[k].begin(), grads[k].end(), 0.0f);
        backward<float>(spec, model.params(), cache,
                        {static_cast<float>(dz[0]), static_cast<float>(dz[1])}, grads[k]);
      });
      std::fill(total.begin(), total.end(), 0.0f);
      for (std::size_t k = 0; k < count; ++k) {
        if (!std::isfinite(losses[k]))
          throw TrainingError("non-finite loss at epoch " + std::to_string(epoch) +
                              ", example " + std::to_string(order[start + k]) + " (scan " +
                              train_set[order[start + k]].id() + ")");
        epoch_loss += losses[k];
        for (std::size_t j = 0; j < n_params; ++j) total[j] += grads[k][j];
      }
      const float inv = 1.0f / static_cast<float>(count);
      for (auto& g : total) g *= inv;
      adam_step<float>(model.mutable_params(), total, state, adam);
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = epoch_loss / static_cast<double>(n);
    rec.validation_loss =
        val_data.inputs.empty() ? 0.0 : prepared_loss(model, val_data, cfg.threads);
    if (!std::isfinite(rec.validation_loss))
      throw TrainingError("non-finite validation loss at epoch " + std::to_string(epoch));
    history.push_back(rec);
    model.mutable_history().push_back(rec);
    if (on_epoch) on_epoch(rec);
  }
  return history;
}

std::vector<EpochRecord> train(Classifier& model, const DatasetSplits& splits,
                               const TrainConfig& cfg, const EpochCallback& on_epoch) {
  return train(model, splits.train, splits.validation, cfg, on_epoch);
}

}  // namespace swaptest
