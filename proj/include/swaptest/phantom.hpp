#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "swaptest/volume.hpp"

namespace swaptest {

enum class Label : int { CN = 0, AD = 1 };

const char* to_string(Label l);
Label label_from_string(const std::string& s);

inline Label opposite(Label l) { return l == Label::CN ? Label::AD : Label::CN; }

struct Covariates {
  double age = 0.0;  // years
  int sex = 0;       // 0 or 1
};

struct Scan {
  int subject_id = 0;
  int visit_index = 0;
  double age = 0.0;
  int sex = 0;
  Label label = Label::CN;
  Volume volume;
  // Ground-truth lesion voxels (0/1). Present and nonempty for AD phantoms,
  // absent for CN.
  std::optional<Volume> lesion_mask;
  // Ventricle voxels (0/1) for the subject at this visit. Present on every
  // phantom scan; AD ventricles are enlarged.
  std::optional<Volume> ventricle_mask;

  Covariates covariates() const { return {age, sex}; }
  std::string id() const;
};

struct PhantomConfig {
  Vec3i dims{32, 32, 32};
  int subjects_per_class = 80;
  int visits_min = 1;
  int visits_max = 3;

  // Geometry as fractions of dims; the layout scales with the volume size.
  std::array<double, 3> brain_radius{0.42, 0.46, 0.40};
  std::array<double, 3> ventricle_radius{0.08, 0.14, 0.08};
  std::array<double, 3> lesion_center{0.24, 0.50, 0.40};
  double lesion_radius = 0.09;

  double tissue_intensity = 0.55;
  double cortex_intensity = 0.80;
  double ventricle_intensity = 0.12;
  double lesion_intensity = 0.72;

  // AD effects. Atrophy multiplies lesion-region intensity, enlargement
  // multiplies ventricle radii. Both equal to 1 mean "no disease effect".
  double atrophy_min = 0.70;
  double atrophy_max = 0.95;
  double enlargement_min = 1.05;
  double enlargement_max = 1.35;
  double progression_per_visit = 0.03;

  double ventricle_jitter = 0.10;  // per-subject radius jitter, both classes
  double lesion_jitter = 0.10;     // per-subject lesion-region intensity jitter, both classes
  double bias_amplitude = 0.05;    // per-visit linear bias field
  double noise_sigma = 0.04;

  double age_min = 55.0;
  double age_max = 95.0;
  double cn_age_mean = 72.0;
  double ad_age_shift = 3.0;
  double age_sd = 6.0;
  double years_between_visits = 1.0;

  std::array<double, 3> split_fractions{0.6, 0.2, 0.2};
  std::uint64_t seed = 42;
  int threads = 1;

  void validate() const;
};

struct DatasetSplits {
  std::vector<Scan> train;
  std::vector<Scan> validation;
  std::vector<Scan> test;
};

// Seed for subject `index` under `master_seed`.
std::uint64_t subject_seed(std::uint64_t master_seed, int index);

// All visits of one subject, ordered by visit index. Deterministic in
// (config, subject_seed, label); subject_id only tags the scans.
std::vector<Scan> generate_subject(const PhantomConfig& config, int subject_id,
                                   std::uint64_t subject_seed, Label label);

// Subjects 0..n-1 are CN, n..2n-1 are AD; scans come out in subject order.
std::vector<Scan> generate_scans(const PhantomConfig& config);

DatasetSplits generate_dataset(const PhantomConfig& config);

// Stratified by label: each class's subject ids are shuffled with the seed and
// partitioned by rounded fractions; every scan follows its subject.
DatasetSplits split_by_subject(std::vector<Scan> scans,
                               std::array<double, 3> fractions,
                               std::uint64_t seed);

// Age scaled into [0, 1] over the configured range (clamped).
double normalize_age(double age, double age_min, double age_max);

}  // namespace swaptest
