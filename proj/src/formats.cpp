#include "swaptest/formats.hpp"

#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "swaptest/error.hpp"
#include "swaptest/seeding.hpp"

namespace swaptest {

using nlohmann::json;
namespace fs = std::filesystem;

static_assert(std::endian::native == std::endian::little,
              "artifact encoders assume a little-endian host");

Bytes read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string() + " for reading");
  Bytes data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return data;
}

void write_file(const fs::path& path, std::span<const std::uint8_t> bytes) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
    if (ec) throw IoError("cannot create directory " + path.parent_path().string() + ": " + ec.message());
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

void write_text(const fs::path& path, std::string_view text) {
  write_file(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::uint64_t fnv1a_bytes(std::span<const std::uint8_t> bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (auto b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  return h;
}

namespace {

Bytes encode(std::string_view magic, const json& header, std::span<const float> payload) {
  const std::string text = header.dump();
  Bytes out;
  out.reserve(magic.size() + 4 + text.size() + payload.size() * 4);
  out.insert(out.end(), magic.begin(), magic.end());
  const auto len = static_cast<std::uint32_t>(text.size());
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(len >> (8 * i)));
  out.insert(out.end(), text.begin(), text.end());
  const auto* p = reinterpret_cast<const std::uint8_t*>(payload.data());
  out.insert(out.end(), p, p + payload.size() * sizeof(float));
  return out;
}

struct Decoded {
  json header;
  std::vector<float> payload;
};

Decoded decode(std::string_view magic, std::span<const std::uint8_t> bytes, const char* what) {
  if (bytes.size() < magic.size() + 4 ||
      std::memcmp(bytes.data(), magic.data(), magic.size()) != 0)
    throw FormatError(std::string(what) + ": bad magic (expected " + std::string(magic) + ")");
  std::uint32_t len = 0;
  for (int i = 0; i < 4; ++i)
    len |= static_cast<std::uint32_t>(bytes[magic.size() + static_cast<std::size_t>(i)]) << (8 * i);
  const std::size_t start = magic.size() + 4;
  if (bytes.size() < start + len) throw FormatError(std::string(what) + ": truncated header");
  Decoded d;
  try {
    d.header = json::parse(bytes.begin() + static_cast<std::ptrdiff_t>(start),
                           bytes.begin() + static_cast<std::ptrdiff_t>(start + len));
  } catch (const json::exception& e) {
    throw FormatError(std::string(what) + ": header is not valid JSON: " + e.what());
  }
  const std::size_t rest = bytes.size() - start - len;
  if (rest % sizeof(float) != 0) throw FormatError(std::string(what) + ": payload is not f32-aligned");
  d.payload.resize(rest / sizeof(float));
  if (rest) std::memcpy(d.payload.data(), bytes.data() + start + len, rest);
  return d;
}

template <typename Fn>
auto with_format_errors(const char* what, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const json::exception& e) {
    throw FormatError(std::string(what) + ": malformed header: " + e.what());
  }
}

json dims_json(Vec3i d) { return json::array({d.x, d.y, d.z}); }
Vec3i dims_from(const json& j) {
  if (!j.is_array() || j.size() != 3) throw FormatError("dims must be a 3-element array");
  return {j[0].get<int>(), j[1].get<int>(), j[2].get<int>()};
}

}  // namespace

// --- volumes ----------------------------------------------------------------

Bytes encode_volume(const Volume& v) {
  json h = {{"dims", dims_json(v.dims())}, {"dtype", "f32le"}, {"standardized", v.standardized()}};
  return encode(kVolumeMagic, h, v.values());
}

Volume decode_volume(std::span<const std::uint8_t> bytes) {
  auto d = decode(kVolumeMagic, bytes, "VVOL");
  return with_format_errors("VVOL", [&] {
    if (d.header.at("dtype").get<std::string>() != "f32le")
      throw FormatError("VVOL: unsupported dtype");
    const Vec3i dims = dims_from(d.header.at("dims"));
    if (d.payload.size() != dims.product())
      throw FormatError("VVOL: payload length does not match dims");
    return Volume(dims, std::move(d.payload), d.header.at("standardized").get<bool>());
  });
}

void write_volume(const fs::path& path, const Volume& v) { write_file(path, encode_volume(v)); }
Volume read_volume(const fs::path& path) { return decode_volume(read_file(path)); }

// --- checkpoints -------------------------------------------------------------

json spec_to_json(const NetworkSpec& spec) {
  json layers = json::array();
  for (const auto& l : spec.layers) {
    json j = {{"kind", to_string(l.kind)}, {"name", l.name}};
    switch (l.kind) {
      case LayerKind::Conv:
        j["spatial_dims"] = l.spatial_dims;
        j["kernel"] = l.kernel;
        j["stride"] = l.stride;
        j["filters"] = l.filters;
        j["padding"] = to_string(l.padding);
        break;
      case LayerKind::MaxPool:
        j["spatial_dims"] = l.spatial_dims;
        j["kernel"] = l.kernel;
        j["stride"] = l.stride;
        break;
      case LayerKind::Dense: j["units"] = l.units; break;
      case LayerKind::Dropout: j["rate"] = l.rate; break;
      default: break;
    }
    layers.push_back(std::move(j));
  }
  return {{"arch", spec.arch},
          {"input",
           {{"kind", to_string(spec.input.kind)},
            {"volume_dims", dims_json(spec.input.volume_dims)},
            {"plane", to_string(spec.input.plane)},
            {"slice_step", spec.input.slice_step}}},
          {"covariates", spec.covariates},
          {"layers", layers}};
}

NetworkSpec spec_from_json(const json& j) {
  return with_format_errors("network spec", [&] {
    NetworkSpec s;
    s.arch = j.at("arch").get<std::string>();
    const auto& in = j.at("input");
    s.input.kind = input_kind_from_string(in.at("kind").get<std::string>());
    s.input.volume_dims = dims_from(in.at("volume_dims"));
    s.input.plane = plane_from_string(in.at("plane").get<std::string>());
    s.input.slice_step = in.at("slice_step").get<int>();
    s.covariates = j.at("covariates").get<int>();
    for (const auto& lj : j.at("layers")) {
      LayerSpec l;
      l.kind = layer_kind_from_string(lj.at("kind").get<std::string>());
      l.name = lj.value("name", "");
      l.spatial_dims = lj.value("spatial_dims", 3);
      l.kernel = lj.value("kernel", 0);
      l.stride = lj.value("stride", 1);
      l.filters = lj.value("filters", 0);
      l.padding = padding_from_string(lj.value("padding", "valid"));
      l.units = lj.value("units", 0);
      l.rate = lj.value("rate", 0.0);
      s.layers.push_back(std::move(l));
    }
    return s;
  });
}

Bytes encode_checkpoint(const Classifier& model, const std::string& config_hash) {
  json history = json::array();
  for (const auto& e : model.history())
    history.push_back({{"epoch", e.epoch},
                       {"train_loss", e.train_loss},
                       {"validation_loss", e.validation_loss}});
  json h = {{"spec", spec_to_json(model.spec())},
            {"temperature", model.temperature()},
            {"seed", model.seed()},
            {"age_range", json::array({model.age_range().min, model.age_range().max})},
            {"history", history},
            {"param_count", model.params().size()},
            {"dtype", "f32le"}};
  if (!config_hash.empty()) h["config_hash"] = config_hash;
  return encode(kCheckpointMagic, h, model.params());
}

Classifier decode_checkpoint(std::span<const std::uint8_t> bytes) {
  auto d = decode(kCheckpointMagic, bytes, "VCKPT");
  return with_format_errors("VCKPT", [&] {
    const auto& h = d.header;
    if (h.at("param_count").get<std::size_t>() != d.payload.size())
      throw FormatError("VCKPT: parameter count does not match payload");
    AgeRange ages{h.at("age_range").at(0).get<double>(), h.at("age_range").at(1).get<double>()};
    Classifier c(spec_from_json(h.at("spec")), ages, std::move(d.payload),
                 h.at("temperature").get<double>(), h.at("seed").get<std::uint64_t>());
    for (const auto& e : h.at("history"))
      c.mutable_history().push_back({e.at("epoch").get<int>(), e.at("train_loss").get<double>(),
                                     e.at("validation_loss").get<double>()});
    return c;
  });
}

void write_checkpoint(const fs::path& path, const Classifier& model,
                      const std::string& config_hash) {
  write_file(path, encode_checkpoint(model, config_hash));
}

Classifier read_checkpoint(const fs::path& path) { return decode_checkpoint(read_file(path)); }

std::string checkpoint_hash(const Classifier& model) {
  return hex64(fnv1a_bytes(encode_checkpoint(model)));
}

// --- heatmaps -------------------------------------------------------------

Bytes encode_heatmap(const Heatmap& h) {
  json header = {
      {"method", to_string(h.method)},
      {"direction", to_string(h.direction)},
      {"config",
       {{"patch_size", h.config.patch_size},
        {"stride", h.config.effective_stride()},
        {"n_references", h.config.n_references},
        {"occlusion_value", h.config.occlusion_value},
        {"seed", h.config.seed}}},
      {"grid",
       {{"dims", dims_json(h.grid.dims)},
        {"patch_size", h.grid.patch_size},
        {"stride", h.grid.stride},
        {"count", h.grid.size()}}},
      {"baseline_prob", h.baseline_prob},
      {"model_hash", h.model_hash},
      {"input_id", h.input_id},
      {"dtype", "f32le"}};
  return encode(kHeatmapMagic, header, h.cells);
}

Heatmap decode_heatmap(std::span<const std::uint8_t> bytes) {
  auto d = decode(kHeatmapMagic, bytes, "VHMP");
  return with_format_errors("VHMP", [&] {
    const auto& j = d.header;
    Heatmap h;
    h.method = method_from_string(j.at("method").get<std::string>());
    h.direction = direction_from_string(j.at("direction").get<std::string>());
    const auto& c = j.at("config");
    h.config.patch_size = c.at("patch_size").get<int>();
    h.config.stride = c.at("stride").get<int>();
    h.config.n_references = c.at("n_references").get<int>();
    h.config.occlusion_value = c.at("occlusion_value").get<double>();
    h.config.seed = c.at("seed").get<std::uint64_t>();
    h.config.direction = h.direction;
    const auto& g = j.at("grid");
    h.grid = build_patch_grid(dims_from(g.at("dims")), g.at("patch_size").get<int>(),
                              g.at("stride").get<int>());
    if (h.grid.size() != g.at("count").get<std::size_t>() || d.payload.size() != h.grid.size())
      throw FormatError("VHMP: cell count does not match grid");
    h.cells = std::move(d.payload);
    h.baseline_prob = j.at("baseline_prob").get<double>();
    h.model_hash = j.at("model_hash").get<std::string>();
    h.input_id = j.at("input_id").get<std::string>();
    return h;
  });
}

void write_heatmap(const fs::path& path, const Heatmap& h) { write_file(path, encode_heatmap(h)); }
Heatmap read_heatmap(const fs::path& path) { return decode_heatmap(read_file(path)); }

// --- manifest ---------------------------------------------------------------

json manifest_to_json(const Manifest& m) {
  json scans = json::array();
  for (const auto& e : m.scans) {
    json j = {{"subject_id", e.subject_id}, {"visit", e.visit},       {"age", e.age},
              {"sex", e.sex},               {"label", to_string(e.label)}, {"split", e.split},
              {"volume_path", e.volume_path}};
    if (e.lesion_mask_path) j["lesion_mask_path"] = *e.lesion_mask_path;
    if (e.ventricle_mask_path) j["ventricle_mask_path"] = *e.ventricle_mask_path;
    scans.push_back(std::move(j));
  }
  return {{"format", "swaptest-manifest-v1"}, {"config_hash", m.config_hash}, {"scans", scans}};
}

Manifest manifest_from_json(const json& j) {
  return with_format_errors("manifest", [&] {
    Manifest m;
    m.config_hash = j.value("config_hash", "");
    for (const auto& s : j.at("scans")) {
      ManifestEntry e;
      e.subject_id = s.at("subject_id").get<int>();
      e.visit = s.at("visit").get<int>();
      e.age = s.at("age").get<double>();
      e.sex = s.at("sex").get<int>();
      e.label = label_from_string(s.at("label").get<std::string>());
      e.split = s.at("split").get<std::string>();
      e.volume_path = s.at("volume_path").get<std::string>();
      if (s.contains("lesion_mask_path")) e.lesion_mask_path = s["lesion_mask_path"].get<std::string>();
      if (s.contains("ventricle_mask_path"))
        e.ventricle_mask_path = s["ventricle_mask_path"].get<std::string>();
      m.scans.push_back(std::move(e));
    }
    return m;
  });
}

void write_manifest(const fs::path& path, const Manifest& m) {
  write_text(path, manifest_to_json(m).dump(2) + "\n");
}

Manifest read_manifest(const fs::path& path) {
  const Bytes b = read_file(path);
  try {
    return manifest_from_json(json::parse(b.begin(), b.end()));
  } catch (const json::exception& e) {
    throw FormatError("manifest " + path.string() + " is not valid JSON: " + e.what());
  }
}

DatasetSplits load_dataset(const Manifest& m, const fs::path& dir) {
  DatasetSplits out;
  for (const auto& e : m.scans) {
    Scan s;
    s.subject_id = e.subject_id;
    s.visit_index = e.visit;
    s.age = e.age;
    s.sex = e.sex;
    s.label = e.label;
    s.volume = read_volume(dir / e.volume_path);
    if (e.lesion_mask_path) s.lesion_mask = read_volume(dir / *e.lesion_mask_path);
    if (e.ventricle_mask_path) s.ventricle_mask = read_volume(dir / *e.ventricle_mask_path);
    if (e.split == "train") out.train.push_back(std::move(s));
    else if (e.split == "validation") out.validation.push_back(std::move(s));
    else if (e.split == "test") out.test.push_back(std::move(s));
    else throw FormatError("manifest: unknown split '" + e.split + "'");
  }
  return out;
}

// --- reports ----------------------------------------------------------------

namespace {

std::string fmt_double(double v) {
  if (std::isnan(v)) return "nan";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

json optional_number(const std::optional<double>& v) {
  return v ? json(*v) : json(nullptr);
}

}  // namespace

std::string report_to_csv(const AxiomReport& report) {
  std::ostringstream out;
  out << "method,test_index,scan_id,metric,value\n";
  for (const auto& m : report.methods)
    for (const auto& im : m.images) {
      const std::string prefix = std::string(to_string(m.method)) + "," +
                                 std::to_string(im.test_index) + "," + im.scan_id + ",";
      out << prefix << "continuity," << fmt_double(im.continuity) << "\n";
      out << prefix << "perturbed_distance," << fmt_double(im.perturbed_distance) << "\n";
      out << prefix << "selectivity,"
          << fmt_double(im.selectivity ? *im.selectivity : std::nan("")) << "\n";
    }
  return out.str();
}

json report_summary_json(const AxiomReport& report, const std::string& config_hash) {
  json methods = json::object();
  for (const auto& m : report.methods) {
    methods[to_string(m.method)] = {
        {"n_images", m.images.size()},
        {"mean_continuity", m.mean_continuity},
        {"se_continuity", m.se_continuity},
        {"mean_perturbed_distance", m.mean_perturbed_distance},
        {"se_perturbed_distance", m.se_perturbed_distance},
        {"baseline", m.baseline},
        {"perturbed_distance_over_baseline",
         m.baseline > 0.0 ? json(m.mean_perturbed_distance / m.baseline) : json(nullptr)},
        {"mean_selectivity", optional_number(m.mean_selectivity)},
        {"se_selectivity", m.se_selectivity},
        {"selectivity_excluded", m.selectivity_excluded}};
  }
  json j = {{"methods", methods},
            {"axiom_config",
             {{"n_images", report.config.n_images},
              {"n_perturbations", report.config.n_perturbations},
              {"sigma", report.config.sigma},
              {"norm", report.config.norm == Norm::L1 ? "L1" : "L2"},
              {"seed", report.config.seed}}},
            {"explain_config",
             {{"patch_size", report.explain.patch_size},
              {"stride", report.explain.effective_stride()},
              {"n_references", report.explain.n_references},
              {"occlusion_value", report.explain.occlusion_value},
              {"seed", report.explain.seed}}}};
  if (!config_hash.empty()) j["config_hash"] = config_hash;
  return j;
}

}  // namespace swaptest
