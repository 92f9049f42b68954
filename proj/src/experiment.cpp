#include "swaptest/experiment.hpp"

#include <algorithm>
#include <map>
#include <ostream>
#include <sstream>

#include "swaptest/error.hpp"
#include "swaptest/montage.hpp"
#include "swaptest/seeding.hpp"

namespace swaptest {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

template <typename T>
void read_opt(const json& j, const char* key, T& out) {
  if (j.contains(key) && !j.at(key).is_null()) out = j.at(key).get<T>();
}

template <typename T, std::size_t N>
void read_array(const json& j, const char* key, std::array<T, N>& out) {
  if (!j.contains(key)) return;
  const auto& a = j.at(key);
  if (!a.is_array() || a.size() != N)
    throw ConfigError(std::string("'") + key + "' must have " + std::to_string(N) + " entries");
  for (std::size_t i = 0; i < N; ++i) out[i] = a[i].get<T>();
}

void read_range(const json& j, const char* key, double& lo, double& hi) {
  if (!j.contains(key)) return;
  const auto& a = j.at(key);
  if (!a.is_array() || a.size() != 2) throw ConfigError(std::string("'") + key + "' must be [min, max]");
  lo = a[0].get<double>();
  hi = a[1].get<double>();
}

void log_line(std::ostream* log, const std::string& s) {
  if (log) *log << s << std::endl;
}

}  // namespace

void ExperimentConfig::set_threads(int n) {
  threads = n;
  phantom.threads = n;
  train.threads = n;
  explain.threads = n;
}

void ExperimentConfig::validate() const {
  phantom.validate();
  train.validate();
  explain.validate();
  axioms.validate();
  if (network.arch != "alexnet3d" && network.arch != "alexnet2dc")
    throw ConfigError("network.arch must be alexnet3d or alexnet2dc");
  if (!(network.scale > 0.0)) throw ConfigError("network.scale must be positive");
  if (output_dir.empty()) throw ConfigError("output_dir must be set");
  if (threads < 1) throw ConfigError("threads must be >= 1");
}

json ExperimentConfig::to_json() const {
  const auto& p = phantom;
  return {
      {"seed", seed},
      {"threads", threads},
      {"output_dir", output_dir.string()},
      {"phantom",
       {{"dims", json::array({p.dims.x, p.dims.y, p.dims.z})},
        {"subjects_per_class", p.subjects_per_class},
        {"visits_min", p.visits_min},
        {"visits_max", p.visits_max},
        {"brain_radius", p.brain_radius},
        {"ventricle_radius", p.ventricle_radius},
        {"lesion_center", p.lesion_center},
        {"lesion_radius", p.lesion_radius},
        {"tissue_intensity", p.tissue_intensity},
        {"cortex_intensity", p.cortex_intensity},
        {"ventricle_intensity", p.ventricle_intensity},
        {"lesion_intensity", p.lesion_intensity},
        {"atrophy_range", json::array({p.atrophy_min, p.atrophy_max})},
        {"enlargement_range", json::array({p.enlargement_min, p.enlargement_max})},
        {"progression_per_visit", p.progression_per_visit},
        {"ventricle_jitter", p.ventricle_jitter},
        {"lesion_jitter", p.lesion_jitter},
        {"bias_amplitude", p.bias_amplitude},
        {"noise_sigma", p.noise_sigma},
        {"age_range", json::array({p.age_min, p.age_max})},
        {"cn_age_mean", p.cn_age_mean},
        {"ad_age_shift", p.ad_age_shift},
        {"age_sd", p.age_sd},
        {"years_between_visits", p.years_between_visits},
        {"split_fractions", p.split_fractions},
        {"seed", p.seed}}},
      {"network",
       {{"arch", network.arch},
        {"scale", network.scale},
        {"plane", to_string(network.plane)},
        {"slice_step", network.slice_step}}},
      {"train",
       {{"epochs", train.epochs},
        {"learning_rate", train.learning_rate},
        {"batch_size", train.batch_size},
        {"dropout_rate", train.dropout_rate},
        {"seed", train.seed}}},
      {"explain",
       {{"patch_size", explain.patch_size},
        {"stride", explain.effective_stride()},
        {"n_references", explain.n_references},
        {"occlusion_value", explain.occlusion_value},
        {"seed", explain.seed}}},
      {"axioms",
       {{"n_images", axioms.n_images},
        {"n_perturbations", axioms.n_perturbations},
        {"sigma", axioms.sigma},
        {"norm", axioms.norm == Norm::L1 ? "L1" : "L2"},
        {"seed", axioms.seed}}}};
}

// threads and output_dir never change results, so they stay out of the hash
std::string ExperimentConfig::hash() const {
  json j = to_json();
  j.erase("threads");
  j.erase("output_dir");
  return hex64(fnv1a(j.dump()));
}

ExperimentConfig config_from_json(const json& j) {
  try {
    ExperimentConfig c;
    read_opt(j, "seed", c.seed);
    int threads = 1;
    read_opt(j, "threads", threads);
    std::string out = c.output_dir.string();
    read_opt(j, "output_dir", out);
    c.output_dir = out;

    c.phantom.seed = c.seed;
    c.train.seed = derive_seed(c.seed, "train");
    c.explain.seed = derive_seed(c.seed, "explain");
    c.axioms.seed = derive_seed(c.seed, "axioms");

    if (j.contains("phantom")) {
      const auto& p = j.at("phantom");
      auto& ph = c.phantom;
      if (p.contains("dims")) {
        std::array<int, 3> d{};
        read_array(p, "dims", d);
        ph.dims = {d[0], d[1], d[2]};
      }
      read_opt(p, "subjects_per_class", ph.subjects_per_class);
      read_opt(p, "visits_min", ph.visits_min);
      read_opt(p, "visits_max", ph.visits_max);
      read_array(p, "brain_radius", ph.brain_radius);
      read_array(p, "ventricle_radius", ph.ventricle_radius);
      read_array(p, "lesion_center", ph.lesion_center);
      read_opt(p, "lesion_radius", ph.lesion_radius);
      read_opt(p, "tissue_intensity", ph.tissue_intensity);
      read_opt(p, "cortex_intensity", ph.cortex_intensity);
      read_opt(p, "ventricle_intensity", ph.ventricle_intensity);
      read_opt(p, "lesion_intensity", ph.lesion_intensity);
      read_range(p, "atrophy_range", ph.atrophy_min, ph.atrophy_max);
      read_range(p, "enlargement_range", ph.enlargement_min, ph.enlargement_max);
      read_opt(p, "progression_per_visit", ph.progression_per_visit);
      read_opt(p, "ventricle_jitter", ph.ventricle_jitter);
      read_opt(p, "lesion_jitter", ph.lesion_jitter);
      read_opt(p, "bias_amplitude", ph.bias_amplitude);
      read_opt(p, "noise_sigma", ph.noise_sigma);
      read_range(p, "age_range", ph.age_min, ph.age_max);
      read_opt(p, "cn_age_mean", ph.cn_age_mean);
      read_opt(p, "ad_age_shift", ph.ad_age_shift);
      read_opt(p, "age_sd", ph.age_sd);
      read_opt(p, "years_between_visits", ph.years_between_visits);
      read_array(p, "split_fractions", ph.split_fractions);
      read_opt(p, "seed", ph.seed);
    }
    if (j.contains("network")) {
      const auto& n = j.at("network");
      read_opt(n, "arch", c.network.arch);
      read_opt(n, "scale", c.network.scale);
      if (n.contains("plane")) c.network.plane = plane_from_string(n.at("plane").get<std::string>());
      read_opt(n, "slice_step", c.network.slice_step);
    }
    if (j.contains("train")) {
      const auto& t = j.at("train");
      read_opt(t, "epochs", c.train.epochs);
      read_opt(t, "learning_rate", c.train.learning_rate);
      read_opt(t, "batch_size", c.train.batch_size);
      read_opt(t, "dropout_rate", c.train.dropout_rate);
      read_opt(t, "seed", c.train.seed);
    }
    c.explain.patch_size = default_patch_size(c.phantom.dims);
    if (j.contains("explain")) {
      const auto& e = j.at("explain");
      read_opt(e, "patch_size", c.explain.patch_size);
      read_opt(e, "stride", c.explain.stride);
      read_opt(e, "n_references", c.explain.n_references);
      read_opt(e, "occlusion_value", c.explain.occlusion_value);
      read_opt(e, "seed", c.explain.seed);
    }
    if (j.contains("axioms")) {
      const auto& a = j.at("axioms");
      read_opt(a, "n_images", c.axioms.n_images);
      read_opt(a, "n_perturbations", c.axioms.n_perturbations);
      read_opt(a, "sigma", c.axioms.sigma);
      if (a.contains("norm")) {
        const auto norm = a.at("norm").get<std::string>();
        if (norm == "L1") c.axioms.norm = Norm::L1;
        else if (norm == "L2") c.axioms.norm = Norm::L2;
        else throw ConfigError("axioms.norm must be L1 or L2");
      }
      read_opt(a, "seed", c.axioms.seed);
    }
    c.set_threads(threads);
    c.validate();
    return c;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("invalid config: ") + e.what());
  }
}

ExperimentConfig load_config(const fs::path& path) {
  const Bytes b = read_file(path);
  json j;
  try {
    j = json::parse(b.begin(), b.end());
  } catch (const json::exception& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return config_from_json(j);
}

NetworkSpec build_network(const ExperimentConfig& cfg) {
  if (cfg.network.arch == "alexnet2dc")
    return build_alexnet2dc(cfg.phantom.dims, cfg.network.plane, cfg.network.slice_step,
                            cfg.network.scale, cfg.train.dropout_rate);
  return build_alexnet3d(cfg.phantom.dims, cfg.network.scale, cfg.train.dropout_rate);
}

fs::path manifest_path(const ExperimentConfig& cfg) { return cfg.output_dir / "manifest.json"; }
fs::path checkpoint_path(const ExperimentConfig& cfg) { return cfg.output_dir / "model.vckpt"; }

Manifest cmd_generate(const ExperimentConfig& cfg, std::ostream* log) {
  cfg.validate();
  log_line(log, "generating phantom dataset (" + std::to_string(2 * cfg.phantom.subjects_per_class) +
                    " subjects)");
  const DatasetSplits splits = generate_dataset(cfg.phantom);
  Manifest m;
  m.config_hash = cfg.hash();
  const std::pair<const char*, const std::vector<Scan>*> groups[] = {
      {"train", &splits.train}, {"validation", &splits.validation}, {"test", &splits.test}};
  for (const auto& [split, scans] : groups)
    for (const auto& s : *scans) {
      ManifestEntry e;
      e.subject_id = s.subject_id;
      e.visit = s.visit_index;
      e.age = s.age;
      e.sex = s.sex;
      e.label = s.label;
      e.split = split;
      e.volume_path = "data/" + s.id() + ".vvol";
      write_volume(cfg.output_dir / e.volume_path, s.volume);
      if (s.lesion_mask) {
        e.lesion_mask_path = "data/" + s.id() + "_lesion.vvol";
        write_volume(cfg.output_dir / *e.lesion_mask_path, *s.lesion_mask);
      }
      if (s.ventricle_mask) {
        e.ventricle_mask_path = "data/" + s.id() + "_ventricle.vvol";
        write_volume(cfg.output_dir / *e.ventricle_mask_path, *s.ventricle_mask);
      }
      m.scans.push_back(std::move(e));
    }
  write_manifest(manifest_path(cfg), m);
  log_line(log, "wrote " + std::to_string(m.scans.size()) + " scans to " + manifest_path(cfg).string());
  return m;
}

namespace {

DatasetSplits load_splits(const ExperimentConfig& cfg) {
  return load_dataset(read_manifest(manifest_path(cfg)), cfg.output_dir);
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

TrainOutcome cmd_train(const ExperimentConfig& cfg, std::ostream* log) {
  cfg.validate();
  const DatasetSplits splits = load_splits(cfg);
  Classifier model(build_network(cfg), {cfg.phantom.age_min, cfg.phantom.age_max},
                   derive_seed(cfg.train.seed, "init"));
  log_line(log, "training " + cfg.network.arch + " (" + std::to_string(model.params().size()) +
                    " parameters) on " + std::to_string(splits.train.size()) + " scans");
  train(model, splits, cfg.train, [&](const EpochRecord& r) {
    log_line(log, "epoch " + std::to_string(r.epoch) + " train_loss " + fmt(r.train_loss) +
                      " val_loss " + fmt(r.validation_loss));
  });

  TrainOutcome out;
  {
    std::vector<std::array<double, 2>> z;
    std::vector<Label> y;
    for (const auto& s : splits.validation) {
      z.push_back(model.logits(s.volume, s.covariates()));
      y.push_back(s.label);
    }
    out.validation_nll_before = temperature_nll(z, y, 1.0);
    out.temperature = calibrate_temperature_from_logits(z, y);
    model.set_temperature(out.temperature);
    out.validation_nll_after = temperature_nll(z, y, out.temperature);
  }

  const auto scores = predict_all(model, splits.test, cfg.threads);
  std::vector<Label> labels;
  for (const auto& s : splits.test) labels.push_back(s.label);
  out.test_auc = auc(scores, labels);

  const std::string hash = cfg.hash();
  write_checkpoint(checkpoint_path(cfg), model, hash);

  std::ostringstream metrics;
  metrics << "epoch,train_loss,validation_loss\n";
  for (const auto& r : model.history())
    metrics << r.epoch << "," << fmt(r.train_loss) << "," << fmt(r.validation_loss) << "\n";
  write_text(cfg.output_dir / "train_metrics.csv", metrics.str());

  std::ostringstream sc;
  sc << "scan_id,label,score\n";
  for (std::size_t i = 0; i < scores.size(); ++i)
    sc << splits.test[i].id() << "," << to_string(splits.test[i].label) << "," << fmt(scores[i])
       << "\n";
  write_text(cfg.output_dir / "test_scores.csv", sc.str());

  json summary = {{"config_hash", hash},
                  {"test_auc", out.test_auc},
                  {"temperature", out.temperature},
                  {"validation_nll_before", out.validation_nll_before},
                  {"validation_nll_after", out.validation_nll_after},
                  {"n_test", splits.test.size()}};
  write_text(cfg.output_dir / "train_summary.json", summary.dump(2) + "\n");
  log_line(log, "test AUC " + fmt(out.test_auc) + ", temperature " + fmt(out.temperature));
  return out;
}

ExplainOutcome cmd_explain(const ExperimentConfig& cfg, const ExplainRequest& req,
                           std::ostream* log) {
  cfg.validate();
  const DatasetSplits splits = load_splits(cfg);
  const Classifier model = read_checkpoint(req.checkpoint);

  const Scan* input = nullptr;
  for (const auto* group : {&splits.train, &splits.validation, &splits.test})
    for (const auto& s : *group)
      if (s.id() == req.scan_id) input = &s;
  if (!input) throw ConfigError("scan '" + req.scan_id + "' is not in the manifest");

  ExplainConfig ecfg = cfg.explain;
  ecfg.direction = req.direction;
  Heatmap h;
  if (req.method == Method::Swap) {
    const auto preds = predict_all(model, splits.test, cfg.threads);
    const Label predicted = model.predict_label(*input);
    const auto refs = select_references(splits.test, preds, predicted, ecfg.n_references,
                                        ecfg.seed, input->subject_id);
    h = swap_heatmap(model, *input, refs, ecfg);
  } else {
    h = occlusion_heatmap(model, *input, ecfg);
  }
  h.model_hash = checkpoint_hash(model);

  const std::string stem = req.scan_id + "_" + to_string(req.method) +
                           (req.direction == Direction::Reversed ? "_reversed" : "");
  ExplainOutcome out;
  out.heatmap_path = cfg.output_dir / "heatmaps" / (stem + ".vhmp");
  out.montage_path = cfg.output_dir / "heatmaps" / (stem + "_" + to_string(req.plane) + ".ppm");
  write_heatmap(out.heatmap_path, h);
  const Volume overlay = upsample_heatmap(h, true);
  write_ppm(out.montage_path, render_montage(input->volume, &overlay, req.plane, req.slices));
  log_line(log, "wrote " + out.heatmap_path.string() + " and " + out.montage_path.string());
  out.heatmap = std::move(h);
  return out;
}

AxiomReport cmd_axioms(const ExperimentConfig& cfg, const fs::path& checkpoint, std::ostream* log) {
  cfg.validate();
  const DatasetSplits splits = load_splits(cfg);
  const Classifier model = read_checkpoint(checkpoint);
  const Method methods[] = {Method::Swap, Method::Occlusion};
  log_line(log, "evaluating continuity and selectivity on " +
                    std::to_string(cfg.axioms.n_images) + " test images");
  AxiomReport report = evaluate_axioms(model, splits.test, methods, cfg.axioms, cfg.explain);
  const std::string hash = cfg.hash();
  write_text(cfg.output_dir / "axioms.csv", report_to_csv(report));
  write_text(cfg.output_dir / "axioms_summary.json",
             report_summary_json(report, hash).dump(2) + "\n");
  log_line(log, "wrote " + (cfg.output_dir / "axioms.csv").string());
  return report;
}

}  // namespace swaptest
