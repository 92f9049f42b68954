#include "swaptest/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "swaptest/error.hpp"
#include "swaptest/network.hpp"
#include "swaptest/parallel.hpp"

namespace swaptest {

Classifier::Classifier(NetworkSpec spec, AgeRange ages, std::uint64_t init_seed)
    : spec_(std::move(spec)), ages_(ages), seed_(init_seed) {
  spec_.validate();
  params_ = init_parameters(spec_, init_seed);
}

Classifier::Classifier(NetworkSpec spec, AgeRange ages, std::vector<float> params,
                       double temperature, std::uint64_t seed)
    : spec_(std::move(spec)), ages_(ages), params_(std::move(params)), seed_(seed) {
  spec_.validate();
  if (params_.size() != spec_.parameter_count())
    throw ShapeError("parameter count " + std::to_string(params_.size()) +
                     " does not match network (" + std::to_string(spec_.parameter_count()) + ")");
  set_temperature(temperature);
}

void Classifier::set_temperature(double t) {
  if (!(t > 0.0) || !std::isfinite(t)) throw ConfigError("temperature must be positive");
  temperature_ = t;
}

std::array<float, 2> Classifier::covariate_vector(const Covariates& cov) const {
  return {static_cast<float>(normalize_age(cov.age, ages_.min, ages_.max)),
          static_cast<float>(cov.sex)};
}

std::array<double, 2> Classifier::logits(const Volume& volume, const Covariates& cov) const {
  const auto input = make_input<float>(spec_, volume);
  const auto c = covariate_vector(cov);
  const auto z = forward<float>(spec_, params_, input, c, Mode::Eval);
  return {static_cast<double>(z[0]), static_cast<double>(z[1])};
}

std::array<double, 2> Classifier::predict_probs(const Volume& volume,
                                                const Covariates& cov) const {
  return softmax2(logits(volume, cov), temperature_);
}

double Classifier::predict_proba(const Volume& volume, const Covariates& cov) const {
  return predict_probs(volume, cov)[1];
}

double auc(std::span<const double> scores, std::span<const Label> labels) {
  if (scores.size() != labels.size()) throw StatsError("auc: scores and labels differ in length");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Average 1-based ranks over tie groups.
  std::vector<double> rank(scores.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) rank[order[k]] = r;
    i = j + 1;
  }
  double n_pos = 0, n_neg = 0, rank_sum = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] == Label::AD) {
      n_pos += 1;
      rank_sum += rank[i];
    } else {
      n_neg += 1;
    }
  }
  if (n_pos == 0 || n_neg == 0) throw StatsError("auc needs both classes");
  return (rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg);
}

std::vector<double> predict_all(const Predictor& model, std::span<const Scan> scans,
                                int threads) {
  std::vector<double> out(scans.size());
  parallel_for(scans.size(), threads,
               [&](std::size_t i) { out[i] = model.predict_proba(scans[i]); });
  return out;
}

double temperature_nll(std::span<const std::array<double, 2>> logits,
                       std::span<const Label> labels, double t) {
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const double a = logits[i][0] / t, b = logits[i][1] / t;
    const double m = std::max(a, b);
    const double lse = m + std::log(std::exp(a - m) + std::exp(b - m));
    total += lse - (labels[i] == Label::AD ? b : a);
  }
  return total / static_cast<double>(logits.size());
}

double calibrate_temperature_from_logits(std::span<const std::array<double, 2>> logits,
                                         std::span<const Label> labels) {
  if (logits.size() != labels.size() || logits.empty())
    throw StatsError("calibration needs matching, nonempty logits and labels");
  const bool has_ad = std::any_of(labels.begin(), labels.end(), [](Label l) { return l == Label::AD; });
  const bool has_cn = std::any_of(labels.begin(), labels.end(), [](Label l) { return l == Label::CN; });
  if (!has_ad || !has_cn) throw StatsError("calibration set must contain both classes");

  auto f = [&](double t) { return temperature_nll(logits, labels, t); };
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = kTemperatureMin, b = kTemperatureMax;
  double c = b - inv_phi * (b - a), d = a + inv_phi * (b - a);
  double fc = f(c), fd = f(d);
  while (b - a > kTemperatureTolerance) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - inv_phi * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + inv_phi * (b - a);
      fd = f(d);
    }
  }
  const double t = 0.5 * (a + b);
  return f(t) <= f(1.0) ? t : 1.0;
}

double calibrate_temperature(Classifier& model, std::span<const Scan> validation, int threads) {
  std::vector<std::array<double, 2>> z(validation.size());
  std::vector<Label> y(validation.size());
  parallel_for(validation.size(), threads, [&](std::size_t i) {
    z[i] = model.logits(validation[i].volume, validation[i].covariates());
    y[i] = validation[i].label;
  });
  const double t = calibrate_temperature_from_logits(z, y);
  model.set_temperature(t);
  return t;
}

}  // namespace swaptest
