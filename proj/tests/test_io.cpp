#include <cstring>
#include <set>
#include <sstream>

#include "doctest.h"
#include "oracles.hpp"
#include "pipeline.hpp"
#include "swaptest/error.hpp"
#include "swaptest/experiment.hpp"
#include "swaptest/formats.hpp"
#include "swaptest/montage.hpp"

using namespace swaptest;
namespace fs = std::filesystem;

namespace {

std::uint32_t header_len(const Bytes& b) {
  return static_cast<std::uint32_t>(b[8]) | static_cast<std::uint32_t>(b[9]) << 8 |
         static_cast<std::uint32_t>(b[10]) << 16 | static_cast<std::uint32_t>(b[11]) << 24;
}

std::vector<std::string> csv_rows(const std::string& text) {
  std::vector<std::string> rows;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) rows.push_back(line);
  return rows;
}

}  // namespace

TEST_CASE("VVOL layout and round trip") {
  const Volume v = oracle::random_volume({3, 4, 5}, 2);
  const Bytes b = encode_volume(v);
  CHECK(std::string(b.begin(), b.begin() + 8) == "VVOL0001");
  const std::uint32_t n = header_len(b);
  const auto header = nlohmann::json::parse(b.begin() + 12, b.begin() + 12 + n);
  CHECK(header.at("dims") == nlohmann::json::array({3, 4, 5}));
  REQUIRE(b.size() == 12 + n + 4 * v.size());
  float first;
  std::memcpy(&first, b.data() + 12 + n, 4);
  CHECK(first == v.at(0, 0, 0));
  const Volume back = decode_volume(b);
  CHECK(back == v);
  CHECK(back.standardized() == v.standardized());

  Bytes bad = b;
  bad[0] = 'X';
  CHECK_THROWS_AS(decode_volume(bad), FormatError);
  Bytes truncated(b.begin(), b.end() - 4);
  CHECK_THROWS_AS(decode_volume(truncated), FormatError);
  CHECK_THROWS_AS(decode_volume(Bytes(b.begin(), b.begin() + 6)), FormatError);
  CHECK_THROWS_AS(decode_checkpoint(b), FormatError);
}

TEST_CASE("VCKPT round trip preserves predictions") {
  Classifier m = oracle::tiny_classifier({6, 6, 6}, 3);
  m.set_temperature(1.7);
  m.mutable_history().push_back({1, 0.7, 0.6});
  const Bytes b = encode_checkpoint(m, "abc");
  CHECK(std::string(b.begin(), b.begin() + 8) == "VCKPT001");
  const Classifier back = decode_checkpoint(b);
  CHECK(std::equal(m.params().begin(), m.params().end(), back.params().begin(), back.params().end()));
  CHECK(back.temperature() == 1.7);
  CHECK(back.seed() == m.seed());
  CHECK(back.spec().layers.size() == m.spec().layers.size());
  const Scan s = oracle::make_scan(0, Label::AD, oracle::random_volume({6, 6, 6}, 4), 80.0, 1);
  CHECK(back.predict_proba(s) == m.predict_proba(s));
  CHECK(checkpoint_hash(back) == checkpoint_hash(m));
  CHECK(encode_checkpoint(back, "abc") == b);
  Bytes bad = b;
  bad[3] ^= 1;
  CHECK_THROWS_AS(decode_checkpoint(bad), FormatError);
}

TEST_CASE("VHMP round trip") {
  Heatmap h;
  h.grid = build_patch_grid({8, 8, 8}, 4, 2);
  for (std::size_t i = 0; i < h.grid.size(); ++i) h.cells.push_back(0.01f * static_cast<float>(i));
  h.method = Method::Occlusion;
  h.direction = Direction::Reversed;
  h.baseline_prob = 0.42;
  h.input_id = "sub-003_v1";
  h.model_hash = "ff00";
  h.config.patch_size = 4;
  h.config.stride = 2;
  const Bytes b = encode_heatmap(h);
  CHECK(std::string(b.begin(), b.begin() + 8) == "VHMP0001");
  const Heatmap back = decode_heatmap(b);
  CHECK(back.grid == h.grid);
  CHECK(back.cells == h.cells);
  CHECK(back.method == h.method);
  CHECK(back.direction == h.direction);
  CHECK(back.baseline_prob == h.baseline_prob);
  CHECK(back.input_id == h.input_id);
  CHECK(back.model_hash == h.model_hash);
  CHECK(encode_heatmap(back) == b);
  Bytes bad = b;
  bad[7] = '2';
  CHECK_THROWS_AS(decode_heatmap(bad), FormatError);
}

TEST_CASE("manifest json round trip") {
  Manifest m;
  m.config_hash = "1234";
  ManifestEntry e;
  e.subject_id = 3;
  e.visit = 1;
  e.age = 71.25;
  e.sex = 1;
  e.label = Label::AD;
  e.split = "test";
  e.volume_path = "data/x.vvol";
  e.lesion_mask_path = "data/x_lesion.vvol";
  m.scans.push_back(e);
  e.label = Label::CN;
  e.lesion_mask_path.reset();
  m.scans.push_back(e);
  const Manifest back = manifest_from_json(manifest_to_json(m));
  REQUIRE(back.scans.size() == 2);
  CHECK(back.config_hash == "1234");
  CHECK(back.scans[0].lesion_mask_path == m.scans[0].lesion_mask_path);
  CHECK_FALSE(back.scans[1].lesion_mask_path.has_value());
  CHECK(back.scans[0].age == 71.25);
  CHECK(manifest_to_json(back) == manifest_to_json(m));
}

TEST_CASE("config parsing, defaults and hash") {
  const ExperimentConfig d = config_from_json(nlohmann::json::object());
  CHECK(d.seed == 42);
  CHECK(d.phantom.dims == Vec3i{32, 32, 32});
  CHECK(d.phantom.seed == 42);
  CHECK(d.explain.patch_size == 8);
  CHECK(d.axioms.norm == Norm::L2);
  CHECK(d.train.epochs == 50);
  CHECK(d.network.arch == "alexnet3d");
  CHECK(d.train.seed != d.explain.seed);

  const auto j = config_from_json({{"seed", 9}, {"phantom", {{"dims", {20, 20, 20}}}}});
  CHECK(j.phantom.seed == 9);
  CHECK(j.explain.patch_size == 4);
  CHECK(j.hash() != d.hash());
  CHECK(config_from_json(d.to_json()).hash() == d.hash());
  CHECK(config_from_json(j.to_json()).to_json() == j.to_json());
  CHECK(config_from_json({{"axioms", {{"norm", "L1"}}}}).axioms.norm == Norm::L1);
  CHECK(config_from_json({{"threads", 4}, {"output_dir", "/tmp/x"}}).hash() == d.hash());

  CHECK_THROWS_AS(config_from_json({{"network", {{"arch", "vgg"}}}}), ConfigError);
  CHECK_THROWS_AS(config_from_json({{"train", {{"epochs", "ten"}}}}), ConfigError);
  CHECK_THROWS_AS(config_from_json({{"axioms", {{"norm", "L3"}}}}), ConfigError);
  CHECK_THROWS_AS(load_config("/nonexistent/config.json"), Error);
}

TEST_CASE("montage") {
  const Volume v = oracle::random_volume({12, 7, 8}, 5);
  const RgbImage a = render_montage(v, nullptr, Plane::Sagittal, 10);
  CHECK(a.width == 5 * 7);
  CHECK(a.height == 2 * 8);
  CHECK(a.rgb.size() == static_cast<std::size_t>(a.width * a.height * 3));
  const Volume zero({12, 7, 8}, 0.0f, false);
  CHECK(render_montage(v, &zero, Plane::Sagittal, 10).rgb == a.rgb);
  const RgbImage ax = render_montage(v, nullptr, Plane::Axial, 3);
  CHECK(ax.width == 3 * 12);
  CHECK(ax.height == 7);
  // top-left pixel of the first axial tile is x = 0, y = max
  const int z0 = slice_positions(8, 3)[0];
  CHECK(ax.rgb[0] == static_cast<std::uint8_t>(std::lround(v.at(0, 6, z0) * 255.0)));
  CHECK(ax.rgb[0] == ax.rgb[1]);
  CHECK(slice_positions(10, 5) == std::vector<int>{1, 3, 5, 7, 9});

  Volume pos({12, 7, 8}, 0.0f, false);
  pos.at(0, 6, z0) = 1.0f;
  const RgbImage tinted = render_montage(v, &pos, Plane::Axial, 3);
  CHECK(tinted.rgb[0] >= ax.rgb[0]);
  CHECK(tinted.rgb[2] <= ax.rgb[2]);

  const auto ppm = encode_ppm(ax);
  const std::string head = "P6\n36 7\n255\n";
  CHECK(std::string(ppm.begin(), ppm.begin() + static_cast<long>(head.size())) == head);
  CHECK(ppm.size() == head.size() + ax.rgb.size());
}

TEST_CASE("end-to-end on a reduced config") {
  const fs::path out = pipeline::fresh_dir("io_pipeline");
  const ExperimentConfig cfg = config_from_json(pipeline::small_config_json(out));

  const Manifest m = cmd_generate(cfg);
  const std::string manifest_bytes = pipeline::slurp(manifest_path(cfg));
  CHECK(m.scans.size() == read_manifest(manifest_path(cfg)).scans.size());
  std::set<int> subjects;
  for (const auto& e : m.scans) {
    subjects.insert(e.subject_id);
    const Volume v = read_volume(out / e.volume_path);
    CHECK(v.dims() == cfg.phantom.dims);
    CHECK(encode_volume(v) == read_file(out / e.volume_path));
    CHECK(e.lesion_mask_path.has_value() == (e.label == Label::AD));
  }
  CHECK(subjects.size() == 20);
  cmd_generate(cfg);
  CHECK(pipeline::slurp(manifest_path(cfg)) == manifest_bytes);

  const TrainOutcome t = cmd_train(cfg);
  CHECK(t.temperature > 0.0);
  CHECK(t.validation_nll_after <= t.validation_nll_before);
  const auto rows = csv_rows(pipeline::slurp(out / "test_scores.csv"));
  REQUIRE(rows.size() > 2);
  CHECK(rows[0] == "scan_id,label,score");
  std::vector<double> scores;
  std::vector<Label> labels;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto c1 = rows[i].find(','), c2 = rows[i].rfind(',');
    labels.push_back(rows[i].substr(c1 + 1, c2 - c1 - 1) == "AD" ? Label::AD : Label::CN);
    scores.push_back(std::stod(rows[i].substr(c2 + 1)));
  }
  CHECK(oracle::auc(scores, labels) == doctest::Approx(t.test_auc).epsilon(1e-12));
  CHECK(csv_rows(pipeline::slurp(out / "train_metrics.csv")).size() == 21);

  const Classifier model = read_checkpoint(checkpoint_path(cfg));
  const DatasetSplits splits = load_dataset(read_manifest(manifest_path(cfg)), out);
  const auto again = predict_all(model, splits.test);
  for (std::size_t i = 0; i < again.size(); ++i)
    CHECK(again[i] == doctest::Approx(scores[i]).epsilon(1e-15));

  ExplainRequest req;
  req.checkpoint = checkpoint_path(cfg);
  req.scan_id = splits.test[0].id();
  req.method = Method::Occlusion;
  const ExplainOutcome occ = cmd_explain(cfg, req);
  CHECK(fs::exists(occ.montage_path));
  CHECK(read_heatmap(occ.heatmap_path).cells == occ.heatmap.cells);
  CHECK(occ.heatmap.model_hash == checkpoint_hash(model));
  CHECK(occ.heatmap.grid.size() == 64);
  req.scan_id = "sub-999_v0";
  CHECK_THROWS_AS(cmd_explain(cfg, req), ConfigError);

  const AxiomReport r = cmd_axioms(cfg, checkpoint_path(cfg));
  const std::string csv = pipeline::slurp(out / "axioms.csv");
  CHECK(csv.find("swap") != std::string::npos);
  CHECK(csv.find("occlusion") != std::string::npos);
  CHECK(r.methods.size() == 2);
  cmd_axioms(cfg, checkpoint_path(cfg));
  CHECK(pipeline::slurp(out / "axioms.csv") == csv);
  fs::remove_all(out);
}
