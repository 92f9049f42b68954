#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "swaptest/network_spec.hpp"
#include "swaptest/phantom.hpp"
#include "swaptest/volume.hpp"

namespace swaptest {

// Anything that maps (volume, covariates) to p(AD). The heatmap engines and
// axiom evaluation only see this interface.
class Predictor {
 public:
  virtual ~Predictor() = default;
  virtual double predict_proba(const Volume& volume, const Covariates& cov) const = 0;

  double predict_proba(const Scan& scan) const {
    return predict_proba(scan.volume, scan.covariates());
  }
  Label predict_label(const Scan& scan) const {
    return predict_proba(scan) >= 0.5 ? Label::AD : Label::CN;
  }
};

struct EpochRecord {
  int epoch = 0;  // 1-based
  double train_loss = 0.0;
  double validation_loss = 0.0;
};

struct AgeRange {
  double min = 55.0;
  double max = 95.0;
};

class Classifier final : public Predictor {
 public:
  Classifier() = default;
  // Fresh He-initialized parameters.
  Classifier(NetworkSpec spec, AgeRange ages, std::uint64_t init_seed);
  Classifier(NetworkSpec spec, AgeRange ages, std::vector<float> params,
             double temperature, std::uint64_t seed);

  const NetworkSpec& spec() const { return spec_; }
  NetworkSpec& mutable_spec() { return spec_; }
  const AgeRange& age_range() const { return ages_; }
  std::span<const float> params() const { return params_; }
  std::span<float> mutable_params() { return params_; }
  double temperature() const { return temperature_; }
  void set_temperature(double t);
  std::uint64_t seed() const { return seed_; }
  const std::vector<EpochRecord>& history() const { return history_; }
  std::vector<EpochRecord>& mutable_history() { return history_; }

  // (normalized age, sex) as fed to the covariate concat layer.
  std::array<float, 2> covariate_vector(const Covariates& cov) const;

  // Raw logits (CN, AD), eval mode, no temperature.
  std::array<double, 2> logits(const Volume& volume, const Covariates& cov) const;
  // softmax(logits / T).
  std::array<double, 2> predict_probs(const Volume& volume, const Covariates& cov) const;
  double predict_proba(const Volume& volume, const Covariates& cov) const override;
  using Predictor::predict_proba;

 private:
  NetworkSpec spec_;
  AgeRange ages_;
  std::vector<float> params_;
  double temperature_ = 1.0;
  std::uint64_t seed_ = 0;
  std::vector<EpochRecord> history_;
};

// Predictor returning a fixed probability; handy for tests and sanity runs.
class ConstantPredictor final : public Predictor {
 public:
  explicit ConstantPredictor(double p) : p_(p) {}
  double predict_proba(const Volume&, const Covariates&) const override { return p_; }
  using Predictor::predict_proba;

 private:
  double p_;
};

// Mann-Whitney AUC with ties counted as one half. Throws StatsError when a
// class is missing.
double auc(std::span<const double> scores, std::span<const Label> labels);

std::vector<double> predict_all(const Predictor& model, std::span<const Scan> scans,
                                int threads = 1);

// ---------------------------------------------------------------------------
// Temperature scaling

inline constexpr double kTemperatureMin = 0.05;
inline constexpr double kTemperatureMax = 20.0;
inline constexpr double kTemperatureTolerance = 1e-4;

// Mean negative log-likelihood of softmax(z / T) at the true labels.
double temperature_nll(std::span<const std::array<double, 2>> logits,
                       std::span<const Label> labels, double temperature);

// Golden-section search for argmin NLL over [0.05, 20] to bracket width 1e-4.
// The result is never worse than T = 1.
double calibrate_temperature_from_logits(std::span<const std::array<double, 2>> logits,
                                         std::span<const Label> labels);

// Fits T on the validation scans with every other parameter frozen, stores it
// in the model and returns it.
double calibrate_temperature(Classifier& model, std::span<const Scan> validation,
                             int threads = 1);

}  // namespace swaptest
