// swaptest: generate -> train -> explain -> axioms, one config file per experiment.
#include <cstdio>
#include <exception>
#include <iostream>
#include <map>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "swaptest/error.hpp"
#include "swaptest/experiment.hpp"

using namespace swaptest;

namespace {

int fail(const std::string& code, const std::string& message) {
  nlohmann::json j = {{"error", code}, {"message", message}};
  std::cerr << j.dump() << std::endl;
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Swap Test and Occlusion Test explanations on phantom volumes"};
  app.require_subcommand(1);

  std::string config_path;
  int threads = 0;
  std::string checkpoint, scan, method = "swap", plane = "sagittal";
  int slices = 10;
  bool reversed = false;
  bool quiet = false;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "experiment config (JSON)")->required()->check(CLI::ExistingFile);
    sub->add_option("--threads", threads, "override worker thread count")->check(CLI::PositiveNumber);
    sub->add_flag("-q,--quiet", quiet, "no progress output");
  };

  auto* gen = app.add_subcommand("generate", "write phantom volumes and manifest");
  add_common(gen);
  auto* tr = app.add_subcommand("train", "train, calibrate and write the checkpoint");
  add_common(tr);
  auto* ex = app.add_subcommand("explain", "heatmap and slice montage for one scan");
  add_common(ex);
  ex->add_option("--checkpoint", checkpoint, "model checkpoint (default <output_dir>/model.vckpt)");
  ex->add_option("--scan", scan, "scan id, e.g. sub-0003_v1")->required();
  ex->add_option("--method", method)->check(CLI::IsMember({"swap", "occlusion"}));
  ex->add_option("--plane", plane)->check(CLI::IsMember({"sagittal", "coronal", "axial"}));
  ex->add_option("--slices", slices, "montage slice count")->check(CLI::PositiveNumber);
  ex->add_flag("--reversed", reversed, "reversed variant");
  auto* ax = app.add_subcommand("axioms", "continuity and selectivity report");
  add_common(ax);
  ax->add_option("--checkpoint", checkpoint, "model checkpoint (default <output_dir>/model.vckpt)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail("usage_error", e.what());
  }

  try {
    ExperimentConfig cfg = load_config(config_path);
    if (threads > 0) cfg.set_threads(threads);
    std::ostream* log = quiet ? nullptr : &std::cerr;
    const auto ckpt = checkpoint.empty() ? checkpoint_path(cfg) : std::filesystem::path(checkpoint);

    if (gen->parsed()) {
      const Manifest m = cmd_generate(cfg, log);
      std::cout << nlohmann::json{{"manifest", manifest_path(cfg).string()},
                                  {"scans", m.scans.size()},
                                  {"config_hash", m.config_hash}}
                       .dump()
                << "\n";
    } else if (tr->parsed()) {
      const TrainOutcome o = cmd_train(cfg, log);
      std::cout << nlohmann::json{{"checkpoint", checkpoint_path(cfg).string()},
                                  {"test_auc", o.test_auc},
                                  {"temperature", o.temperature},
                                  {"validation_nll_before", o.validation_nll_before},
                                  {"validation_nll_after", o.validation_nll_after}}
                       .dump()
                << "\n";
    } else if (ex->parsed()) {
      ExplainRequest req;
      req.checkpoint = ckpt;
      req.scan_id = scan;
      req.method = method_from_string(method);
      req.direction = reversed ? Direction::Reversed : Direction::Standard;
      req.plane = plane_from_string(plane);
      req.slices = slices;
      const ExplainOutcome o = cmd_explain(cfg, req, log);
      std::cout << nlohmann::json{{"heatmap", o.heatmap_path.string()},
                                  {"montage", o.montage_path.string()},
                                  {"baseline_prob", o.heatmap.baseline_prob}}
                       .dump()
                << "\n";
    } else if (ax->parsed()) {
      const AxiomReport r = cmd_axioms(cfg, ckpt, log);
      nlohmann::json out = nlohmann::json::object();
      for (const auto& m : r.methods) {
        out[to_string(m.method)] = {{"mean_continuity", m.mean_continuity},
                                    {"mean_perturbed_distance", m.mean_perturbed_distance},
                                    {"baseline", m.baseline},
                                    {"mean_selectivity", m.mean_selectivity
                                                             ? nlohmann::json(*m.mean_selectivity)
                                                             : nlohmann::json(nullptr)}};
      }
      std::cout << out.dump() << "\n";
    }
  } catch (const ReferencePoolError& e) {
    nlohmann::json j = {{"error", e.code()}, {"message", e.what()}, {"eligible", e.eligible_count}};
    std::cerr << j.dump() << std::endl;
    return 1;
  } catch (const Error& e) {
    return fail(e.code(), e.what());
  } catch (const std::exception& e) {
    return fail("internal_error", e.what());
  }
  return 0;
}
