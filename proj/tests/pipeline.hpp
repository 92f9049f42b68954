#pragma once
// Reduced end-to-end configuration shared by the io tests and acceptance checks.

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "json.hpp"
#include "swaptest/experiment.hpp"

namespace pipeline {

inline nlohmann::json small_config_json(const std::filesystem::path& out, int threads = 1) {
  return {{"seed", 5},
          {"threads", threads},
          {"output_dir", out.string()},
          {"phantom", {{"subjects_per_class", 10}}},
          {"train", {{"epochs", 20}, {"learning_rate", 1e-3}, {"batch_size", 4}}},
          {"explain", {{"n_references", 1}}},
          {"axioms", {{"n_images", 3}, {"n_perturbations", 1}}}};
}

inline std::filesystem::path fresh_dir(const std::string& name) {
  const auto d = std::filesystem::temp_directory_path() / ("swaptest_" + name);
  std::filesystem::remove_all(d);
  std::filesystem::create_directories(d);
  return d;
}

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream s;
  s << f.rdbuf();
  return s.str();
}

}  // namespace pipeline
