#include "crownflow/cli.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <chrono>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>

#include "crownflow/eval_metrics.hpp"
#include "crownflow/flow_synthesis.hpp"
#include "crownflow/io.hpp"
#include "crownflow/pipeline.hpp"
#include "crownflow/synth_forest.hpp"

namespace crownflow::cli {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct RunConfig {
  // synth
  SceneSpec scene;
  std::string out_dir;
  // flows
  std::string labels_path;
  // segment / pipeline
  std::string flows_path;
  std::string prob_path;
  std::string semantic_path;
  std::string out_path;
  std::string report_path;
  PipelineOptions options;
  TileConfig tiles;
  bool strict = false;
  // eval
  std::string gt_path;
  std::string pred_path;
};

class Stopwatch {
 public:
  double lap_ms() {
    const auto now = std::chrono::steady_clock::now();
    const double ms = std::chrono::duration<double, std::milli>(now - last_).count();
    last_ = now;
    return ms;
  }

 private:
  std::chrono::steady_clock::time_point last_ = std::chrono::steady_clock::now();
};

json settings_json(const SegmentationSettings& s) {
  return {{"niter", s.niter},           {"flow_threshold", s.flow_threshold},
          {"cellprob_threshold", s.cellprob_threshold},
          {"min_area", s.min_area},     {"h_min", s.h_min},
          {"grow_iters", s.grow_iters}, {"grow_min", s.grow_min}};
}

json scene_json(const SceneSpec& s) {
  return {{"height", s.height},
          {"width", s.width},
          {"n_crowns", s.n_crowns},
          {"r_min", s.r_min},
          {"r_max", s.r_max},
          {"lobe_amplitude", s.lobe_amplitude},
          {"max_occlusion", s.max_occlusion},
          {"clutter", s.clutter},
          {"seed", s.seed}};
}

void emit(const json& doc, const std::string& path, std::ostream& out) {
  if (path.empty()) {
    out << doc.dump(2) << '\n';
    return;
  }
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw Error("report.io", "cannot write " + path);
  f << doc.dump(2) << '\n';
}

FlowField load_flows(const std::string& path, bool strict, std::ostream& err) {
  FlowField f = io::read_flows_npy(path);
  if (!f.dy.allFinite() || !f.dx.allFinite()) {
    throw Error("flow.nonfinite", path + ": flow field contains non-finite values");
  }
  const float mag = max_magnitude(f);
  if (mag > 1.0f + 1e-3f) {
    if (strict) {
      throw Error("flow.magnitude",
                  path + ": flow magnitude " + std::to_string(mag) + " exceeds 1 + 1e-3");
    }
    err << "warning[flow.magnitude]: max magnitude " << mag << " exceeds 1 + 1e-3; renormalizing\n";
    renormalize(f);
  }
  return f;
}

ProbabilityMap load_prob(const std::string& path) {
  ProbabilityMap p = io::read_prob_npy(path);
  if (!p.allFinite()) throw Error("prob.nonfinite", path + ": probabilities contain non-finite values");
  return p;
}

int cmd_synth(const RunConfig& cfg, std::ostream& out) {
  const Scene scene = generate_scene(cfg.scene);
  const fs::path dir(cfg.out_dir);
  fs::create_directories(dir);
  io::write_rgb_png(dir / "image.png", scene.image);
  io::write_labels_png(dir / "labels.png", scene.labels);
  io::write_mask_png(dir / "semantic.png", scene.semantic);
  io::Manifest m;
  m.files = {{"image", "image.png"}, {"labels", "labels.png"}, {"semantic", "semantic.png"}};
  m.scene_spec_json = scene_json(cfg.scene).dump();
  io::write_manifest(dir / "manifest.json", m);
  out << json{{"status", "ok"},
              {"n_crowns", scene.crowns.size()},
              {"n_clutter", scene.clutter.size()},
              {"manifest", (dir / "manifest.json").string()}}
             .dump(2)
      << '\n';
  return kExitOk;
}

int cmd_flows(const RunConfig& cfg, std::ostream& out) {
  const LabelMap labels = io::read_labels_png(cfg.labels_path);
  const FlowField flow = flows_from_labels(labels, cfg.options.threads);
  const ProbabilityMap prob = (labels != 0).cast<float>();
  const fs::path dir(cfg.out_dir);
  fs::create_directories(dir);
  io::write_flows_npy(dir / "flows.npy", flow);
  io::write_prob_npy(dir / "prob.npy", prob);
  io::Manifest m;
  m.files = {{"flows", "flows.npy"},
             {"prob", "prob.npy"},
             {"labels", fs::relative(fs::absolute(cfg.labels_path), fs::absolute(dir)).string()}};
  io::write_manifest(dir / "manifest.json", m);
  out << json{{"status", "ok"},
              {"n_instances", max_label(relabel_sequential(labels))},
              {"max_magnitude", max_magnitude(flow)},
              {"manifest", (dir / "manifest.json").string()}}
             .dump(2)
      << '\n';
  return kExitOk;
}

// Shared driver for segment and pipeline. The report is written even when a
// step fails, with status "error".
int cmd_segment_like(const RunConfig& cfg, bool tiled, std::ostream& out, std::ostream& err) {
  json report = {{"status", "ok"},
                 {"command", tiled ? "pipeline" : "segment"},
                 {"settings", settings_json(cfg.options.settings)},
                 {"diameter", cfg.options.diameter}};
  if (tiled) report["tiling"] = {{"tile", cfg.tiles.tile}, {"overlap", cfg.tiles.overlap}};
  Stopwatch clock;
  json timings;
  try {
    PipelineOptions options = cfg.options;
    if (tiled) {
      cfg.tiles.validate();
      if (static_cast<double>(cfg.tiles.overlap) < options.diameter) {
        err << "warning[config.overlap]: overlap " << cfg.tiles.overlap
            << " is smaller than the crown diameter " << options.diameter << '\n';
      }
    }
    const FlowField flow = load_flows(cfg.flows_path, cfg.strict, err);
    const ProbabilityMap prob = load_prob(cfg.prob_path);
    require_same_dims(dims_of(flow), dims_of(prob), "segment inputs");
    if (!cfg.semantic_path.empty()) {
      options.semantic = io::read_mask_png(cfg.semantic_path);
      require_same_dims(dims_of(flow), dims_of(*options.semantic), "semantic mask");
    }
    timings["load_ms"] = clock.lap_ms();

    const PipelineResult result =
        tiled ? run_pipeline(flow, prob, options, cfg.tiles) : run_segment(flow, prob, options);
    timings["segment_ms"] = clock.lap_ms();

    io::write_labels_png(cfg.out_path, result.labels);
    timings["write_ms"] = clock.lap_ms();

    const SegmentStats& s = result.stats.segment;
    report["n_instances"] = s.n_instances;
    report["n_gated"] = s.n_gated;
    report["n_clusters"] = s.n_clusters;
    report["n_removed_small"] = s.n_removed_small;
    report["n_removed_flow"] = s.n_removed_flow;
    report["n_removed_canopy"] = result.stats.n_removed_canopy;
    report["semantic_gate"] = options.semantic.has_value();
    if (tiled) {
      report["n_tiles"] = result.stats.n_tiles;
      report["n_merged"] = result.stats.n_merged;
      report["n_dropped"] = result.stats.n_dropped;
    }
    report["labels"] = cfg.out_path;
    report["timings"] = timings;
  } catch (const Error& e) {
    report["status"] = "error";
    report["error_id"] = e.id();
    report["message"] = e.what();
    report["timings"] = timings;
    emit(report, cfg.report_path, out);
    throw;
  }
  emit(report, cfg.report_path, out);
  return kExitOk;
}

int cmd_eval(const RunConfig& cfg, std::ostream& out) {
  const LabelMap gt = io::read_labels_png(cfg.gt_path);
  const LabelMap pred = io::read_labels_png(cfg.pred_path);
  require_same_dims(dims_of(gt), dims_of(pred), "eval");
  std::optional<ProbabilityMap> prob;
  if (!cfg.prob_path.empty()) prob = load_prob(cfg.prob_path);
  const Summary s = summary(gt, score_by_probability(pred, prob), 0.5);
  const json doc = {{"precision", s.precision}, {"recall", s.recall},
                    {"f1", s.f1},               {"mean_iou", s.mean_iou},
                    {"ap50", s.ap50},           {"n_gt", s.n_gt},
                    {"n_pred", s.n_pred},       {"n_matched", s.n_matched}};
  emit(doc, cfg.out_path, out);
  return kExitOk;
}

void add_settings_flags(CLI::App* cmd, RunConfig& cfg) {
  auto& s = cfg.options.settings;
  cmd->add_option("--flow-threshold", s.flow_threshold, "Max flow error per instance")
      ->capture_default_str();
  cmd->add_option("--cellprob-threshold", s.cellprob_threshold,
                  "Pixels with probability above this value are advected")
      ->capture_default_str();
  cmd->add_option("--niter", s.niter, "Euler steps")->capture_default_str();
  cmd->add_option("--min-area", s.min_area, "Minimum instance area (pixels)")
      ->capture_default_str();
  cmd->add_option("--h-min", s.h_min, "Minimum sink histogram count")->capture_default_str();
  cmd->add_option("--grow-iters", s.grow_iters, "Basin growth rounds")->capture_default_str();
  cmd->add_option("--grow-min", s.grow_min, "Minimum bin count during growth")
      ->capture_default_str();
  cmd->add_option("--diameter", cfg.options.diameter, "Expected crown diameter (pixels)")
      ->capture_default_str();
  cmd->add_option("--semantic", cfg.semantic_path, "Canopy mask PNG (enables the semantic gate)");
  cmd->add_flag("--canopy-filter", cfg.options.canopy_filter,
                "Drop instances with in-canopy fraction below --rho");
  cmd->add_option("--rho", cfg.options.rho, "Minimum in-canopy fraction")->capture_default_str();
  cmd->add_flag("--strict", cfg.strict, "Reject flows whose magnitude exceeds 1 + 1e-3");
  cmd->add_option("--threads", cfg.options.threads, "Worker threads")->capture_default_str();
  cmd->add_option("--flows", cfg.flows_path, "[2,H,W] float32 flow NPY")->required();
  cmd->add_option("--prob", cfg.prob_path, "[H,W] float32 probability NPY")->required();
  cmd->add_option("--out", cfg.out_path, "Output 16-bit label PNG")->required();
  cmd->add_option("--report", cfg.report_path, "Report JSON path (default stdout)");
}

int report_error(const Error& e, std::ostream& err) {
  err << "error[" << e.id() << "]: " << e.what() << '\n';
  return dynamic_cast<const InvariantViolation*>(&e) != nullptr ? kExitInternal : kExitValidation;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  RunConfig cfg;
  std::function<int()> action;

  CLI::App app{"Flow-convergence tree crown instance segmentation"};
  app.require_subcommand(1);

  auto* synth = app.add_subcommand("synth", "Generate a synthetic crown scene");
  synth->add_option("--height", cfg.scene.height)->capture_default_str();
  synth->add_option("--width", cfg.scene.width)->capture_default_str();
  synth->add_option("-n,--n-crowns", cfg.scene.n_crowns)->capture_default_str();
  synth->add_option("--r-min", cfg.scene.r_min)->capture_default_str();
  synth->add_option("--r-max", cfg.scene.r_max)->capture_default_str();
  synth->add_option("--lobe", cfg.scene.lobe_amplitude, "Summed harmonic amplitude bound")
      ->capture_default_str();
  synth->add_option("--max-occlusion", cfg.scene.max_occlusion)->capture_default_str();
  synth->add_flag("--clutter", cfg.scene.clutter, "Add textured background patches");
  synth->add_option("--seed", cfg.scene.seed)->capture_default_str();
  synth->add_option("--out-dir", cfg.out_dir)->required();
  synth->callback([&] { action = [&] { return cmd_synth(cfg, out); }; });

  auto* flows = app.add_subcommand("flows", "Compute flows and probabilities from a label map");
  flows->add_option("--labels", cfg.labels_path, "16-bit label PNG")->required();
  flows->add_option("--out-dir", cfg.out_dir)->required();
  flows->add_option("--threads", cfg.options.threads)->capture_default_str();
  flows->callback([&] { action = [&] { return cmd_flows(cfg, out); }; });

  auto* seg = app.add_subcommand("segment", "Group pixels by flow convergence");
  add_settings_flags(seg, cfg);
  seg->callback([&] { action = [&] { return cmd_segment_like(cfg, false, out, err); }; });

  auto* pipe = app.add_subcommand("pipeline", "Tiled segmentation with seam stitching");
  add_settings_flags(pipe, cfg);
  pipe->add_option("--tile", cfg.tiles.tile)->capture_default_str();
  pipe->add_option("--overlap", cfg.tiles.overlap)->capture_default_str();
  pipe->callback([&] { action = [&] { return cmd_segment_like(cfg, true, out, err); }; });

  auto* eval = app.add_subcommand("eval", "Score predicted labels against ground truth");
  eval->add_option("--gt", cfg.gt_path)->required();
  eval->add_option("--pred", cfg.pred_path)->required();
  eval->add_option("--prob", cfg.prob_path, "Probability NPY used for confidence scores");
  eval->add_option("--out", cfg.out_path, "Report JSON path (default stdout)");
  eval->callback([&] { action = [&] { return cmd_eval(cfg, out); }; });

  std::vector<const char*> argv;
  argv.reserve(args.size());
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error[cli.usage]: " << e.what() << '\n';
    return kExitValidation;
  }

  try {
    return action();
  } catch (const Error& e) {
    return report_error(e, err);
  } catch (const nlohmann::json::exception& e) {
    err << "error[json]: " << e.what() << '\n';
    return kExitValidation;
  } catch (const fs::filesystem_error& e) {
    err << "error[fs.io]: " << e.what() << '\n';
    return kExitValidation;
  } catch (const std::exception& e) {
    err << "error[internal]: " << e.what() << '\n';
    return kExitInternal;
  }
}

}  // namespace crownflow::cli
