#pragma once

// Binary artifact formats. Every file is
//   8-byte ASCII magic | u32 little-endian header length | UTF-8 JSON header |
//   little-endian f32 payload
// with magics VVOL0001 (volume), VCKPT001 (checkpoint) and VHMP0001 (heatmap).

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "swaptest/axioms.hpp"
#include "swaptest/classifier.hpp"
#include "swaptest/explain.hpp"
#include "swaptest/network_spec.hpp"
#include "swaptest/phantom.hpp"
#include "swaptest/volume.hpp"

namespace swaptest {

using Bytes = std::vector<std::uint8_t>;

inline constexpr std::string_view kVolumeMagic = "VVOL0001";
inline constexpr std::string_view kCheckpointMagic = "VCKPT001";
inline constexpr std::string_view kHeatmapMagic = "VHMP0001";

Bytes read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void write_text(const std::filesystem::path& path, std::string_view text);

std::string hex64(std::uint64_t v);
std::uint64_t fnv1a_bytes(std::span<const std::uint8_t> bytes);

// --- volumes --------------------------------------------------------------
Bytes encode_volume(const Volume& v);
Volume decode_volume(std::span<const std::uint8_t> bytes);
void write_volume(const std::filesystem::path& path, const Volume& v);
Volume read_volume(const std::filesystem::path& path);

// --- checkpoints ----------------------------------------------------------
nlohmann::json spec_to_json(const NetworkSpec& spec);
NetworkSpec spec_from_json(const nlohmann::json& j);

Bytes encode_checkpoint(const Classifier& model, const std::string& config_hash = "");
Classifier decode_checkpoint(std::span<const std::uint8_t> bytes);
void write_checkpoint(const std::filesystem::path& path, const Classifier& model,
                      const std::string& config_hash = "");
Classifier read_checkpoint(const std::filesystem::path& path);
// FNV-1a over the encoded checkpoint (without config hash), hex.
std::string checkpoint_hash(const Classifier& model);

// --- heatmaps -------------------------------------------------------------
Bytes encode_heatmap(const Heatmap& h);
Heatmap decode_heatmap(std::span<const std::uint8_t> bytes);
void write_heatmap(const std::filesystem::path& path, const Heatmap& h);
Heatmap read_heatmap(const std::filesystem::path& path);

// --- dataset manifest -----------------------------------------------------
struct ManifestEntry {
  int subject_id = 0;
  int visit = 0;
  double age = 0.0;
  int sex = 0;
  Label label = Label::CN;
  std::string split;  // train | validation | test
  std::string volume_path;  // relative to the manifest directory
  std::optional<std::string> lesion_mask_path;
  std::optional<std::string> ventricle_mask_path;
};

struct Manifest {
  std::string config_hash;
  std::vector<ManifestEntry> scans;
};

nlohmann::json manifest_to_json(const Manifest& m);
Manifest manifest_from_json(const nlohmann::json& j);
void write_manifest(const std::filesystem::path& path, const Manifest& m);
Manifest read_manifest(const std::filesystem::path& path);

// Loads every scan listed in the manifest (paths resolved against `dir`).
DatasetSplits load_dataset(const Manifest& m, const std::filesystem::path& dir);

// --- axiom reports ---------------------------------------------------------
// Columns: method,test_index,scan_id,metric,value. Metrics per image are
// continuity, perturbed_distance and selectivity ("nan" when undefined).
std::string report_to_csv(const AxiomReport& report);
nlohmann::json report_summary_json(const AxiomReport& report, const std::string& config_hash = "");

}  // namespace swaptest
