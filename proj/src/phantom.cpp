#include "swaptest/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <set>

#include "swaptest/error.hpp"
#include "swaptest/parallel.hpp"
#include "swaptest/seeding.hpp"

namespace swaptest {

const char* to_string(Label l) { return l == Label::AD ? "AD" : "CN"; }

Label label_from_string(const std::string& s) {
  if (s == "AD") return Label::AD;
  if (s == "CN") return Label::CN;
  throw FormatError("unknown label '" + s + "'");
}

std::string Scan::id() const {
  char buf[48];
  std::snprintf(buf, sizeof buf, "sub-%04d_v%d", subject_id, visit_index);
  return buf;
}

double normalize_age(double age, double age_min, double age_max) {
  if (!(age_max > age_min)) return 0.0;
  return std::clamp((age - age_min) / (age_max - age_min), 0.0, 1.0);
}

void PhantomConfig::validate() const {
  if (dims.x <= 0 || dims.y <= 0 || dims.z <= 0)
    throw ConfigError("phantom dims must be positive");
  if (subjects_per_class < 1) throw ConfigError("subjects_per_class must be >= 1");
  if (visits_min < 1 || visits_max < visits_min)
    throw ConfigError("visit range must satisfy 1 <= visits_min <= visits_max");
  double sum = 0.0;
  for (double f : split_fractions) {
    if (!(f > 0.0)) throw ConfigError("split fractions must be positive");
    sum += f;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw ConfigError("split fractions must sum to 1");
  for (double f : {atrophy_min, atrophy_max, enlargement_min, enlargement_max,
                   lesion_radius, tissue_intensity, cortex_intensity,
                   ventricle_intensity, lesion_intensity})
    if (!(f > 0.0)) throw ConfigError("phantom factors must be positive");
  if (atrophy_max < atrophy_min || enlargement_max < enlargement_min)
    throw ConfigError("factor ranges must satisfy min <= max");
  if (noise_sigma < 0.0 || progression_per_visit < 0.0 || ventricle_jitter < 0.0 ||
      lesion_jitter < 0.0 || bias_amplitude < 0.0)
    throw ConfigError("noise, progression, jitter and bias must be non-negative");
  if (ventricle_jitter >= 1.0 || lesion_jitter >= 1.0)
    throw ConfigError("jitter must be below 1");
  if (!(age_max > age_min) || !(age_sd >= 0.0) || years_between_visits < 0.0)
    throw ConfigError("invalid age configuration");
  const int min_dim = std::min({dims.x, dims.y, dims.z});
  const double r = lesion_radius * min_dim;
  for (int a = 0; a < 3; ++a) {
    const double c = lesion_center[static_cast<std::size_t>(a)] * dims[a];
    if (c - r < 0.0 || c + r > dims[a])
      throw ConfigError("lesion cube exceeds the volume on axis " +
                        std::to_string(a));
  }
  if (threads < 1) throw ConfigError("threads must be >= 1");
}

std::uint64_t subject_seed(std::uint64_t master_seed, int index) {
  return derive_seed(master_seed, {fnv1a("subject"), static_cast<std::uint64_t>(index)});
}

namespace {

struct Geometry {
  double ventricle_scale;  // jitter * enlargement
  double atrophy;          // lesion multiplier (1 = healthy)
  double lesion_scale;     // natural per-subject variation, both classes
};

Volume render(const PhantomConfig& c, const Geometry& g, std::mt19937_64& visit_rng,
              Volume* lesion_mask, Volume* ventricle_mask) {
  const Vec3i d = c.dims;
  const double min_dim = std::min({d.x, d.y, d.z});
  const double lesion_r = c.lesion_radius * min_dim;
  std::array<double, 3> center{}, lesion_c{};
  for (int a = 0; a < 3; ++a) {
    center[static_cast<std::size_t>(a)] = 0.5 * d[a];
    lesion_c[static_cast<std::size_t>(a)] = c.lesion_center[static_cast<std::size_t>(a)] * d[a];
  }

  // Bias field: 1 + amplitude * (dir . normalized position).
  std::normal_distribution<double> unit(0.0, 1.0);
  std::array<double, 3> dir{unit(visit_rng), unit(visit_rng), unit(visit_rng)};
  const double norm = std::sqrt(dir[0] * dir[0] + dir[1] * dir[1] + dir[2] * dir[2]);
  for (auto& v : dir) v = norm > 0.0 ? v / norm : 0.0;

  std::normal_distribution<double> noise(0.0, 1.0);
  Volume raw(d, 0.0f);
  for (int z = 0; z < d.z; ++z)
    for (int y = 0; y < d.y; ++y)
      for (int x = 0; x < d.x; ++x) {
        const std::array<double, 3> p{x + 0.5, y + 0.5, z + 0.5};
        double brain = 0.0, vent = 0.0, bias = 0.0, les = 0.0;
        for (std::size_t a = 0; a < 3; ++a) {
          const int len = d[static_cast<int>(a)];
          const double off = p[a] - center[a];
          brain += std::pow(off / (c.brain_radius[a] * len), 2);
          vent += std::pow(off / (c.ventricle_radius[a] * len * g.ventricle_scale), 2);
          bias += dir[a] * off / (0.5 * len);
          les += std::pow(p[a] - lesion_c[a], 2);
        }
        double value = 0.0;
        const bool in_vent = vent <= 1.0;
        const bool in_lesion = std::sqrt(les) <= lesion_r;
        if (brain <= 1.0) {
          value = std::sqrt(brain) > 0.85 ? c.cortex_intensity : c.tissue_intensity;
          if (in_lesion) value = c.lesion_intensity * g.lesion_scale * g.atrophy;
          if (in_vent) value = c.ventricle_intensity;
          value *= 1.0 + c.bias_amplitude * bias;
        }
        value += c.noise_sigma * noise(visit_rng);
        raw.at(x, y, z) = static_cast<float>(value);
        if (lesion_mask && in_lesion && brain <= 1.0) lesion_mask->at(x, y, z) = 1.0f;
        if (ventricle_mask && in_vent && brain <= 1.0) ventricle_mask->at(x, y, z) = 1.0f;
      }
  return standardize(raw);
}

}  // namespace

std::vector<Scan> generate_subject(const PhantomConfig& config, int subject_id,
                                   std::uint64_t seed, Label label) {
  config.validate();
  std::mt19937_64 geo(derive_seed(seed, "geometry"));
  std::mt19937_64 disease(derive_seed(seed, "disease"));
  std::mt19937_64 demo(derive_seed(seed, "demographics"));

  const int visits =
      std::uniform_int_distribution<int>(config.visits_min, config.visits_max)(geo);
  const double jitter =
      1.0 + config.ventricle_jitter *
                std::uniform_real_distribution<double>(-1.0, 1.0)(geo);
  const double lesion_scale =
      1.0 + config.lesion_jitter * std::uniform_real_distribution<double>(-1.0, 1.0)(geo);

  double atrophy = 1.0, enlargement = 1.0;
  const double u_atrophy = std::uniform_real_distribution<double>(0.0, 1.0)(disease);
  const double u_enlarge = std::uniform_real_distribution<double>(0.0, 1.0)(disease);
  if (label == Label::AD) {
    atrophy = config.atrophy_min + u_atrophy * (config.atrophy_max - config.atrophy_min);
    enlargement = config.enlargement_min +
                  u_enlarge * (config.enlargement_max - config.enlargement_min);
  }

  const double z_age = std::normal_distribution<double>(0.0, 1.0)(demo);
  const int sex = std::uniform_int_distribution<int>(0, 1)(demo);
  const double age_mean =
      config.cn_age_mean + (label == Label::AD ? config.ad_age_shift : 0.0);
  const double last_offset = (visits - 1) * config.years_between_visits;
  const double age0 = std::clamp(age_mean + config.age_sd * z_age, config.age_min,
                                 std::max(config.age_min, config.age_max - last_offset));

  std::vector<Scan> scans;
  scans.reserve(static_cast<std::size_t>(visits));
  for (int v = 0; v < visits; ++v) {
    // Disease effects grow with each visit; a null effect stays null.
    const double grow = 1.0 + config.progression_per_visit * v;
    Geometry g{jitter * (1.0 + (enlargement - 1.0) * grow),
               std::max(0.0, 1.0 - (1.0 - atrophy) * grow), lesion_scale};
    std::mt19937_64 visit_rng(
        derive_seed(seed, {fnv1a("visit"), static_cast<std::uint64_t>(v)}));

    Scan s;
    s.subject_id = subject_id;
    s.visit_index = v;
    s.age = age0 + v * config.years_between_visits;
    s.sex = sex;
    s.label = label;
    Volume lesion(config.dims, 0.0f), vent(config.dims, 0.0f);
    s.volume = render(config, g, visit_rng, &lesion, &vent);
    if (label == Label::AD) s.lesion_mask = std::move(lesion);
    s.ventricle_mask = std::move(vent);
    scans.push_back(std::move(s));
  }
  return scans;
}

std::vector<Scan> generate_scans(const PhantomConfig& config) {
  config.validate();
  const int n = 2 * config.subjects_per_class;
  std::vector<std::vector<Scan>> per_subject(static_cast<std::size_t>(n));
  parallel_for(static_cast<std::size_t>(n), config.threads, [&](std::size_t i) {
    const int idx = static_cast<int>(i);
    const Label label = idx < config.subjects_per_class ? Label::CN : Label::AD;
    per_subject[i] = generate_subject(config, idx, subject_seed(config.seed, idx), label);
  });
  std::vector<Scan> all;
  for (auto& s : per_subject)
    for (auto& scan : s) all.push_back(std::move(scan));
  return all;
}

DatasetSplits generate_dataset(const PhantomConfig& config) {
  return split_by_subject(generate_scans(config), config.split_fractions,
                          derive_seed(config.seed, "split"));
}

DatasetSplits split_by_subject(std::vector<Scan> scans,
                               std::array<double, 3> fractions,
                               std::uint64_t seed) {
  double sum = 0.0;
  for (double f : fractions) {
    if (!(f > 0.0)) throw ConfigError("split fractions must be positive");
    sum += f;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw ConfigError("split fractions must sum to 1");

  std::map<int, Label> subject_label;
  for (const auto& s : scans) {
    auto [it, inserted] = subject_label.emplace(s.subject_id, s.label);
    if (!inserted && it->second != s.label)
      throw ConfigError("subject " + std::to_string(s.subject_id) +
                        " has scans with different labels");
  }

  std::map<int, int> assignment;  // subject -> split index
  for (Label label : {Label::CN, Label::AD}) {
    std::vector<int> ids;
    for (const auto& [id, l] : subject_label)
      if (l == label) ids.push_back(id);
    std::mt19937_64 rng(derive_seed(seed, {static_cast<std::uint64_t>(label)}));
    std::shuffle(ids.begin(), ids.end(), rng);
    const auto n = static_cast<double>(ids.size());
    const auto n_train = static_cast<std::size_t>(std::lround(fractions[0] * n));
    const auto n_val = std::min(ids.size() - std::min(ids.size(), n_train),
                                static_cast<std::size_t>(std::lround(fractions[1] * n)));
    for (std::size_t i = 0; i < ids.size(); ++i)
      assignment[ids[i]] = i < n_train ? 0 : i < n_train + n_val ? 1 : 2;
  }

  DatasetSplits out;
  std::array<std::vector<Scan>*, 3> dest{&out.train, &out.validation, &out.test};
  for (auto& s : scans) dest[static_cast<std::size_t>(assignment.at(s.subject_id))]->push_back(std::move(s));

  static constexpr const char* kNames[3] = {"train", "validation", "test"};
  for (std::size_t k = 0; k < 3; ++k) {
    bool has_cn = false, has_ad = false;
    for (const auto& s : *dest[k]) (s.label == Label::AD ? has_ad : has_cn) = true;
    if (!has_cn || !has_ad)
      throw ConfigError(std::string("too few subjects: split '") + kNames[k] +
                        "' lacks a class");
  }
  return out;
}

}  // namespace swaptest
