#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>

#include "json.hpp"
#include "swaptest/axioms.hpp"
#include "swaptest/explain.hpp"
#include "swaptest/formats.hpp"
#include "swaptest/network_spec.hpp"
#include "swaptest/phantom.hpp"
#include "swaptest/training.hpp"

namespace swaptest {

struct NetworkChoice {
  std::string arch = "alexnet3d";  // alexnet3d | alexnet2dc
  double scale = 0.25;
  Plane plane = Plane::Sagittal;
  int slice_step = 5;
};

// One experiment = one JSON file plus one master seed. Nested seeds default to
// values derived from the master seed; `threads` is pushed into every stage.
struct ExperimentConfig {
  PhantomConfig phantom;
  NetworkChoice network;
  TrainConfig train;
  ExplainConfig explain;
  AxiomConfig axioms;
  std::filesystem::path output_dir = "out";
  std::uint64_t seed = 42;
  int threads = 1;

  void validate() const;
  // Effective configuration, all defaults filled in.
  nlohmann::json to_json() const;
  // FNV-1a of the canonical effective JSON minus threads and output_dir, hex.
  std::string hash() const;
  void set_threads(int n);
};

ExperimentConfig config_from_json(const nlohmann::json& j);
ExperimentConfig load_config(const std::filesystem::path& path);

NetworkSpec build_network(const ExperimentConfig& cfg);

// Output layout under output_dir.
std::filesystem::path manifest_path(const ExperimentConfig& cfg);
std::filesystem::path checkpoint_path(const ExperimentConfig& cfg);

Manifest cmd_generate(const ExperimentConfig& cfg, std::ostream* log = nullptr);

struct TrainOutcome {
  double test_auc = 0.0;
  double temperature = 1.0;
  double validation_nll_before = 0.0;
  double validation_nll_after = 0.0;
};
TrainOutcome cmd_train(const ExperimentConfig& cfg, std::ostream* log = nullptr);

struct ExplainRequest {
  std::filesystem::path checkpoint;
  std::string scan_id;
  Method method = Method::Swap;
  Direction direction = Direction::Standard;
  Plane plane = Plane::Sagittal;
  int slices = 10;
};
struct ExplainOutcome {
  std::filesystem::path heatmap_path;
  std::filesystem::path montage_path;
  Heatmap heatmap;
};
ExplainOutcome cmd_explain(const ExperimentConfig& cfg, const ExplainRequest& req,
                           std::ostream* log = nullptr);

AxiomReport cmd_axioms(const ExperimentConfig& cfg, const std::filesystem::path& checkpoint,
                       std::ostream* log = nullptr);

}  // namespace swaptest
