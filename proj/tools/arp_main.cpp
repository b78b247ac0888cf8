#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "arp/abnormality.hpp"
#include "arp/classifier.hpp"
#include "arp/features.hpp"
#include "arp/forest.hpp"
#include "arp/media_io.hpp"
#include "arp/optical_flow.hpp"
#include "arp/pipeline.hpp"
#include "arp/proposals.hpp"
#include "arp/synthetic.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace arp;

namespace {

std::string frame_name(const std::string& prefix, int t, const char* ext) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04d", t);
  return prefix + buf + ext;
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::missing_file, "cannot open " + path.string());
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::missing_file, "cannot write " + path.string());
  out << text << '\n';
}

/// Manifests (*.json) of a directory, sorted by name.
std::vector<fs::path> manifests_in(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw Error(Errc::missing_file, "not a directory: " + dir.string());
  std::vector<fs::path> out;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.is_regular_file() && entry.path().extension() == ".json") out.push_back(entry.path());
  std::sort(out.begin(), out.end());
  if (out.empty()) throw Error(Errc::missing_file, "no manifests in " + dir.string());
  return out;
}

std::vector<fs::path> images_in(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw Error(Errc::missing_file, "not a directory: " + dir.string());
  std::vector<fs::path> out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const std::string ext = entry.path().extension().string();
    if (entry.is_regular_file() && (ext == ".png" || ext == ".pgm" || ext == ".ppm")) out.push_back(entry.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<FlowField> forward_flows(const FrameSequence& seq, const flow::FlowParams& params,
                                     std::vector<FlowField>* backward = nullptr) {
  std::vector<FlowField> out;
  for (std::size_t t = 0; t + 1 < seq.size(); ++t) {
    flow::FlowPair pair = flow::estimate_flow_pair(seq.frames[t], seq.frames[t + 1], params);
    out.push_back(std::move(pair.forward));
    if (backward) backward->push_back(std::move(pair.backward));
  }
  return out;
}

std::vector<BoundaryMap> predict_maps(const FrameSequence& seq, const std::vector<FlowField>& fwd,
                                      const std::vector<FlowField>& bwd, const forest::BoundaryForest& model) {
  std::vector<BoundaryMap> maps;
  for (std::size_t t = 0; t + 1 < seq.size(); ++t)
    maps.push_back(forest::predict_boundary(
        features::assemble_feature_stack(seq.frames[t], seq.frames[t + 1], fwd[t], bwd[t]), model));
  return maps;
}

/// Patch samples of every pair t -> t+1, labelled with the truth boundary of frame t.
std::vector<forest::PatchSample> pair_samples(const FrameSequence& seq, const std::vector<Plane>& truth,
                                              const pipeline::PipelineConfig& cfg, std::uint64_t salt) {
  std::vector<forest::PatchSample> out;
  std::vector<FlowField> bwd;
  const std::vector<FlowField> fwd = forward_flows(seq, cfg.flow, &bwd);
  for (std::size_t t = 0; t + 1 < seq.size(); ++t) {
    const auto stack = features::assemble_feature_stack(seq.frames[t], seq.frames[t + 1], fwd[t], bwd[t]);
    forest::ExtractionParams ep = cfg.extraction;
    ep.rng_seed = cfg.extraction.rng_seed + salt * 1000 + t;
    auto samples = forest::extract_patch_samples(stack, truth[t], ep);
    std::move(samples.begin(), samples.end(), std::back_inserter(out));
  }
  return out;
}

enum class BoxSource { proposals, truth, full };

BoxSource parse_box_source(const std::string& s) {
  if (s == "proposals") return BoxSource::proposals;
  if (s == "truth") return BoxSource::truth;
  if (s == "full") return BoxSource::full;
  throw Error(Errc::usage, "--boxes must be proposals, truth or full");
}

struct LoadedSequence {
  io::SequenceManifest manifest;
  FrameSequence frames;
  std::vector<FlowField> forward;
  std::vector<BoxProposal> boxes;
};

LoadedSequence load_with_boxes(const fs::path& path, BoxSource source, const pipeline::PipelineConfig& cfg,
                               const std::optional<forest::BoundaryForest>& model) {
  LoadedSequence s;
  s.manifest = io::read_manifest(path);
  s.frames = io::load_sequence(s.manifest);
  const int n = static_cast<int>(s.frames.size());
  if (n < 2) throw Error(Errc::sequence_too_short, "a sequence needs at least 2 frames");
  const int w = s.frames.frames.front().width();
  const int h = s.frames.frames.front().height();
  std::vector<FlowField> bwd;
  s.forward = forward_flows(s.frames, cfg.flow, source == BoxSource::proposals ? &bwd : nullptr);
  switch (source) {
    case BoxSource::proposals: {
      if (!model) throw Error(Errc::usage, "proposal boxes need --forest.model");
      const auto maps = predict_maps(s.frames, s.forward, bwd, *model);
      s.boxes = pipeline::frame_boxes(maps, cfg.proposals, cfg.smooth_boxes);
      break;
    }
    case BoxSource::truth:
      if (static_cast<int>(s.manifest.truth_boxes.size()) != n)
        throw Error(Errc::usage, path.string() + " has no truth boxes");
      for (int t = 0; t < n; ++t) {
        const auto& b = s.manifest.truth_boxes[static_cast<std::size_t>(t)];
        s.boxes.push_back(b ? *b : BoxProposal{0, 0, w, h, 0.0, t});
        s.boxes.back().frame_index = t;
      }
      break;
    case BoxSource::full:
      for (int t = 0; t < n; ++t) s.boxes.push_back(BoxProposal{0, 0, w, h, 0.0, t});
      break;
  }
  return s;
}

std::optional<forest::BoundaryForest> maybe_forest(const pipeline::PipelineConfig& cfg, BoxSource source) {
  if (source != BoxSource::proposals) return std::nullopt;
  if (cfg.forest_model.empty()) throw Error(Errc::usage, "proposal boxes need --forest.model");
  return forest::read_forest(cfg.forest_model);
}

std::vector<std::string> unique_sorted(const std::vector<std::string>& values) {
  std::set<std::string> s(values.begin(), values.end());
  return {s.begin(), s.end()};
}

int index_of(const std::vector<std::string>& labels, const std::string& label, const std::string& what) {
  const auto it = std::find(labels.begin(), labels.end(), label);
  if (it == labels.end()) throw Error(Errc::dimension_mismatch, "unknown " + what + " label '" + label + "'");
  return static_cast<int>(it - labels.begin());
}

std::string distribution_text(const std::vector<std::string>& labels, const std::vector<double>& p) {
  return json{{"labels", labels}, {"probabilities", p}}.dump();
}

abnormal::SceneDistribution read_scene_distribution(const fs::path& path, const std::vector<std::string>& labels) {
  abnormal::SceneDistribution d{action::parse_distribution_json(read_text(path), labels).probabilities};
  d.validate();
  return d;
}

// Option groups. Every flag mirrors a config key.

void add_flow(CLI::App* app, flow::FlowParams& p) {
  app->add_option("--flow.pyramid_levels", p.pyramid_levels, "Pyramid levels")->capture_default_str();
  app->add_option("--flow.scale_factor", p.scale_factor, "Downsampling factor per level")->capture_default_str();
  app->add_option("--flow.regularization_weight", p.regularization_weight, "Smoothness weight alpha")
      ->capture_default_str();
  app->add_option("--flow.warp_iterations", p.warp_iterations, "Warps per level")->capture_default_str();
  app->add_option("--flow.fixed_point_iterations", p.fixed_point_iterations, "Lagged-diffusivity iterations")
      ->capture_default_str();
  app->add_option("--flow.median_filter_radius", p.median_filter_radius, "Median filter radius after each warp")
      ->capture_default_str();
  app->add_option("--flow.solver_iterations", p.solver_iterations, "Linear solver sweeps")->capture_default_str();
  app->add_option("--flow.use_color", p.use_color, "Colour data term")->capture_default_str();
}

void add_forest(CLI::App* app, pipeline::PipelineConfig& c) {
  app->add_option("--forest.tree_count", c.forest.tree_count, "Trees")->capture_default_str();
  app->add_option("--forest.max_depth", c.forest.max_depth, "Maximum depth")->capture_default_str();
  app->add_option("--forest.min_samples_leaf", c.forest.min_samples_leaf, "Minimum samples per leaf")
      ->capture_default_str();
  app->add_option("--forest.features_per_split", c.forest.features_per_split, "Features tried per split (0 = sqrt)")
      ->capture_default_str();
  app->add_option("--forest.pixel_pairs_for_projection", c.forest.pixel_pairs_for_projection,
                  "Mask pixel pairs used to discretize labels")
      ->capture_default_str();
  app->add_option("--forest.stride", c.forest.stride, "Prediction grid step")->capture_default_str();
  app->add_option("--forest.rng_seed", c.forest.rng_seed, "Training seed")->capture_default_str();
}

void add_forest_model(CLI::App* app, pipeline::PipelineConfig& c) {
  app->add_option("--forest.model", c.forest_model, "Boundary forest file")->capture_default_str();
}

void add_extraction(CLI::App* app, forest::ExtractionParams& p) {
  app->add_option("--extraction.stride", p.stride, "Sampling grid step")->capture_default_str();
  app->add_option("--extraction.min_positive_fraction", p.min_positive_fraction, "Target share of boundary patches")
      ->capture_default_str();
  app->add_option("--extraction.max_samples", p.max_samples, "Samples kept per pair (0 = all)")->capture_default_str();
  app->add_option("--extraction.rng_seed", p.rng_seed, "Sampling seed")->capture_default_str();
}

void add_proposals(CLI::App* app, pipeline::PipelineConfig& c) {
  auto& p = c.proposals;
  app->add_option("--proposals.scales", p.scales, "Box sides")->capture_default_str();
  app->add_option("--proposals.aspect_ratios", p.aspect_ratios, "Width/height ratios")->capture_default_str();
  app->add_option("--proposals.step_fraction", p.step_fraction, "Slide step as a fraction of the box side")
      ->capture_default_str();
  app->add_option("--proposals.border_strip", p.border_strip, "Border strip width")->capture_default_str();
  app->add_option("--proposals.kappa", p.kappa, "Perimeter normalization exponent")->capture_default_str();
  app->add_option("--proposals.border_penalty", p.border_penalty, "Weight of the strip mass")->capture_default_str();
  app->add_option("--proposals.nms_iou", p.nms_iou, "NMS IoU threshold")->capture_default_str();
  app->add_option("--proposals.top_k", p.top_k, "Boxes kept per frame")->capture_default_str();
  app->add_option("--proposals.min_score", p.min_score, "Scores at or below this mean no motion")
      ->capture_default_str();
  app->add_option("--proposals.min_side", p.min_side, "Smallest box side")->capture_default_str();
  app->add_option("--proposals.thin", p.thin, "Thin boundary ridges before scoring")->capture_default_str();
  app->add_option("--proposals.smooth", c.smooth_boxes, "5-frame median smoothing of the action box")
      ->capture_default_str();
}

void add_descriptor(CLI::App* app, action::DescriptorParams& p) {
  app->add_option("--descriptor.crop_side", p.crop_side, "Crop side")->capture_default_str();
  app->add_option("--descriptor.stack_depth", p.stack_depth, "Flows stacked per frame (L)")->capture_default_str();
}

void add_classifier(CLI::App* app, action::TrainParams& p) {
  app->add_option("--classifier.learning_rate", p.learning_rate, "Initial step size")->capture_default_str();
  app->add_option("--classifier.epochs", p.epochs, "Full-batch epochs")->capture_default_str();
  app->add_option("--classifier.l2", p.l2, "Weight decay")->capture_default_str();
  app->add_option("--classifier.seed", p.seed, "Initialization seed")->capture_default_str();
}

void add_threshold(CLI::App* app, pipeline::PipelineConfig& c) {
  app->add_option("--threshold", c.threshold, "ABD index threshold (abnormal when strictly above)")
      ->capture_default_str();
}

void add_scene_probability(CLI::App* app, std::string& mode) {
  app->add_option("--scene-probability", mode, "P(S): max_entry or marginal")
      ->check(CLI::IsMember({"max_entry", "marginal"}))
      ->capture_default_str();
}

std::string config_flag_sink;

void add_config_flag(CLI::App* app) {
  app->add_option("--config", config_flag_sink, "JSON config; flags given on the command line override it");
}

pipeline::ProviderKind kind_from(const std::string& s) {
  if (s == "builtin") return pipeline::ProviderKind::builtin;
  if (s == "file") return pipeline::ProviderKind::file;
  return pipeline::ProviderKind::none;
}

std::string kind_string(pipeline::ProviderKind k) {
  return k == pipeline::ProviderKind::builtin ? "builtin" : k == pipeline::ProviderKind::file ? "file" : "none";
}

/// Finds --config before CLI11 parses so file values become flag defaults.
std::optional<fs::path> prescan_config(int argc, char** argv) {
  std::optional<fs::path> out;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--config" && i + 1 < argc) out = argv[i + 1];
    if (a.rfind("--config=", 0) == 0) out = a.substr(9);
  }
  return out;
}

void report_error(const Error& e) { std::cerr << "error: " << e.what() << '\n'; }

}  // namespace

int main(int argc, char** argv) {
  pipeline::PipelineConfig cfg;
  try {
    if (const auto path = prescan_config(argc, argv)) cfg = pipeline::load_config(*path);
  } catch (const Error& e) {
    report_error(e);
    return exit_code_for(e.code());
  }
  std::string scene_mode =
      cfg.scene_probability == abnormal::SceneProbabilityMode::marginal ? "marginal" : "max_entry";
  std::string prior_mode = cfg.prior_mode == abnormal::PriorMode::literal ? "literal" : "frequency";
  std::string action_kind = kind_string(cfg.action_provider.kind);
  std::string scene_kind = kind_string(cfg.scene_provider.kind);

  CLI::App app{"Action-region proposals, action classification and abnormality detection"};
  app.require_subcommand(1);

  // run
  auto* run = app.add_subcommand("run", "Run every stage on one or more sequence manifests");
  std::vector<fs::path> run_manifests;
  fs::path run_out;
  bool force = false;
  add_config_flag(run);
  run->add_option("manifests", run_manifests, "Sequence manifests")->required();
  run->add_option("--out", run_out, "Output directory")->required();
  run->add_flag("--force", force, "Recompute stages whose outputs exist");
  add_flow(run, cfg.flow);
  add_forest_model(run, cfg);
  run->add_option("--boundary.external_dir", cfg.external_boundaries, "Read boundary maps from <dir>/<id>/NNNN.pgm");
  add_proposals(run, cfg);
  run->add_option("--proposals.write_crops", cfg.write_crops, "Write crop images")->capture_default_str();
  add_descriptor(run, cfg.descriptor);
  run->add_option("--action.kind", action_kind, "Action provider: none, builtin or file")
      ->check(CLI::IsMember({"none", "builtin", "file"}))
      ->capture_default_str();
  run->add_option("--action.model", cfg.action_provider.model, "Linear action model");
  run->add_option("--action.directory", cfg.action_provider.directory, "Directory of <id>.json distributions");
  run->add_option("--action.labels", cfg.action_provider.labels, "Labels of the file provider");
  run->add_option("--scene.kind", scene_kind, "Scene provider: none, builtin or file")
      ->check(CLI::IsMember({"none", "builtin", "file"}))
      ->capture_default_str();
  run->add_option("--scene.model", cfg.scene_provider.model, "Histogram scene model");
  run->add_option("--scene.directory", cfg.scene_provider.directory, "Directory of <id>.json distributions");
  run->add_option("--scene.labels", cfg.scene_provider.labels, "Labels of the file provider");
  run->add_option("--prior", cfg.prior, "Scene prior table (JSON)");
  add_threshold(run, cfg);
  add_scene_probability(run, scene_mode);

  // extract-flow
  auto* xflow = app.add_subcommand("extract-flow", "Estimate optical flow between consecutive frames");
  fs::path xf_manifest, xf_images, xf_out;
  bool xf_backward = false;
  add_config_flag(xflow);
  auto* xf_m = xflow->add_option("--manifest", xf_manifest, "Sequence manifest");
  xflow->add_option("--images", xf_images, "Directory of frames, ordered by file name")
      ->excludes(xf_m);
  xflow->add_option("--out", xf_out, "Output directory for forward_NNNN.flo")->required();
  xflow->add_flag("--backward", xf_backward, "Also write backward_NNNN.flo");
  add_flow(xflow, cfg.flow);

  // features
  auto* feat = app.add_subcommand("features", "Dump feature-stack channels of one frame pair as 16-bit PGM");
  fs::path ft_manifest, ft_out;
  int ft_frame = 0;
  std::vector<std::string> ft_channels;
  bool ft_list = false;
  add_config_flag(feat);
  feat->add_option("--manifest", ft_manifest, "Sequence manifest")->required();
  feat->add_option("--frame", ft_frame, "Pair index t (frames t and t+1)")->capture_default_str();
  feat->add_option("--channel", ft_channels, "Channel names to dump (default: all)");
  feat->add_option("--out", ft_out, "Output directory");
  feat->add_flag("--list", ft_list, "Print channel names and exit");
  add_flow(feat, cfg.flow);

  // train-boundary
  auto* tb = app.add_subcommand("train-boundary", "Train the structured boundary forest");
  fs::path tb_data, tb_out;
  int tb_synthetic = 20;
  std::uint64_t tb_seed = 1;
  double tb_camera = 0.0;
  add_config_flag(tb);
  tb->add_option("--data", tb_data, "Directory of manifests with truth boundaries");
  tb->add_option("--synthetic", tb_synthetic, "Generated moving-square sequences when --data is absent")
      ->capture_default_str();
  tb->add_option("--seed", tb_seed, "Generator seed")->capture_default_str();
  tb->add_option("--camera-speed", tb_camera, "Maximum synthetic camera speed")->capture_default_str();
  tb->add_option("--out", tb_out, "Forest file")->required();
  add_flow(tb, cfg.flow);
  add_forest(tb, cfg);
  add_extraction(tb, cfg.extraction);

  // predict-boundary
  auto* pb = app.add_subcommand("predict-boundary", "Predict soft motion-boundary maps");
  fs::path pb_manifest, pb_out;
  add_config_flag(pb);
  pb->add_option("--manifest", pb_manifest, "Sequence manifest")->required();
  pb->add_option("--out", pb_out, "Output directory for NNNN.pgm")->required();
  add_forest_model(pb, cfg);
  add_flow(pb, cfg.flow);

  // propose
  auto* pr = app.add_subcommand("propose", "Score action-region proposals from boundary maps");
  fs::path pr_dir, pr_manifest, pr_out;
  bool pr_crops = false;
  add_config_flag(pr);
  auto* pr_d = pr->add_option("--boundary-dir", pr_dir, "Directory of NNNN.pgm boundary maps");
  pr->add_option("--manifest", pr_manifest, "Sequence manifest (maps computed when no --boundary-dir)");
  pr->add_option("--out", pr_out, "Output directory")->required();
  pr->add_flag("--crops", pr_crops, "Write crops/NNNN.png (needs --manifest)");
  (void)pr_d;
  add_forest_model(pr, cfg);
  add_flow(pr, cfg.flow);
  add_proposals(pr, cfg);
  add_descriptor(pr, cfg.descriptor);

  // train-action
  auto* ta = app.add_subcommand("train-action", "Train the linear action classifier");
  fs::path ta_data, ta_out;
  std::vector<std::string> ta_labels;
  std::string ta_boxes = "proposals";
  add_config_flag(ta);
  ta->add_option("--data", ta_data, "Directory of manifests with action labels")->required();
  ta->add_option("--labels", ta_labels, "Label order (default: sorted unique labels)");
  ta->add_option("--boxes", ta_boxes, "Crop source: proposals, truth or full")
      ->check(CLI::IsMember({"proposals", "truth", "full"}))
      ->capture_default_str();
  ta->add_option("--out", ta_out, "Model file")->required();
  add_forest_model(ta, cfg);
  add_flow(ta, cfg.flow);
  add_proposals(ta, cfg);
  add_descriptor(ta, cfg.descriptor);
  add_classifier(ta, cfg.classifier);

  // classify
  auto* cl = app.add_subcommand("classify", "Action distribution of one sequence");
  fs::path cl_model, cl_manifest, cl_out;
  std::string cl_boxes = "proposals";
  add_config_flag(cl);
  cl->add_option("--model", cl_model, "Model file")->required();
  cl->add_option("--manifest", cl_manifest, "Sequence manifest")->required();
  cl->add_option("--boxes", cl_boxes, "Crop source: proposals, truth or full")
      ->check(CLI::IsMember({"proposals", "truth", "full"}))
      ->capture_default_str();
  cl->add_option("--out", cl_out, "Write the distribution here instead of stdout");
  add_forest_model(cl, cfg);
  add_flow(cl, cfg.flow);
  add_proposals(cl, cfg);
  add_descriptor(cl, cfg.descriptor);

  // learn-prior
  auto* lp = app.add_subcommand("learn-prior", "Learn P(scene | action) from labelled sequences");
  fs::path lp_data, lp_scene_model, lp_fit_scene, lp_out;
  std::vector<std::string> lp_actions, lp_scenes;
  add_config_flag(lp);
  lp->add_option("--data", lp_data, "Directory of manifests with action and scene labels")
      ->required();
  auto* lp_sm = lp->add_option("--scene-model", lp_scene_model, "Existing histogram scene model");
  lp->add_option("--fit-scene-model", lp_fit_scene, "Fit a scene model on the data and write it here")
      ->excludes(lp_sm);
  lp->add_option("--actions", lp_actions, "Action label order (default: sorted unique)");
  lp->add_option("--scenes", lp_scenes, "Scene label order when fitting (default: sorted unique)");
  lp->add_option("--mode", prior_mode, "frequency or literal")
      ->check(CLI::IsMember({"frequency", "literal"}))
      ->capture_default_str();
  lp->add_option("--temperature", cfg.scene_temperature, "Scene softmax temperature when fitting")
      ->capture_default_str();
  lp->add_option("--out", lp_out, "Prior table (JSON)")->required();

  // detect-abnormal
  auto* da = app.add_subcommand("detect-abnormal", "Abnormality decision from stored distributions");
  fs::path da_actions, da_scene, da_out;
  add_config_flag(da);
  da->add_option("--actions", da_actions, "Action distribution JSON")->required();
  da->add_option("--scene", da_scene, "Scene distribution JSON")->required();
  da->add_option("--prior", cfg.prior, "Scene prior table (JSON)")->capture_default_str();
  da->add_option("--out", da_out, "Write the decision here as well as to stdout");
  add_threshold(da, cfg);
  add_scene_probability(da, scene_mode);

  // evaluate-abnormal
  auto* ea = app.add_subcommand("evaluate-abnormal", "Success rate of decisions over labelled sequences");
  fs::path ea_run, ea_data, ea_out;
  add_config_flag(ea);
  ea->add_option("--run-dir", ea_run, "Output directory of 'run' holding <id>/action.json and scene.json")
      ->required();
  ea->add_option("--data", ea_data, "Directory of manifests with an 'abnormal' flag")
      ->required();
  ea->add_option("--prior", cfg.prior, "Scene prior table (JSON)")->capture_default_str();
  ea->add_option("--out", ea_out, "Decision records (JSON lines)");
  add_threshold(ea, cfg);
  add_scene_probability(ea, scene_mode);

  // synth-data
  auto* sd = app.add_subcommand("synth-data", "Write a seeded synthetic dataset");
  std::string sd_kind = "squares";
  fs::path sd_out;
  std::uint64_t sd_seed = 1;
  synth::SyntheticConfig sq;
  synth::ActionSuiteConfig ac;
  bool sd_novel = false;
  sd->add_option("--kind", sd_kind, "squares or actions")
      ->check(CLI::IsMember({"squares", "actions"}))
      ->capture_default_str();
  sd->add_option("--out", sd_out, "Output directory")->required();
  sd->add_option("--seed", sd_seed, "Generator seed")->capture_default_str();
  sd->add_option("--count", sq.count, "Sequences (squares)")->capture_default_str();
  sd->add_option("--frames", sq.frames, "Frames per sequence (squares)")->capture_default_str();
  sd->add_option("--camera-speed", sq.max_camera_speed, "Maximum camera speed (squares)")->capture_default_str();
  sd->add_option("--distractors", sq.distractors, "Static distractor patches (squares)")->capture_default_str();
  sd->add_option("--actions", ac.actions, "Action classes (actions)")->capture_default_str();
  sd->add_option("--scenes", ac.scenes, "Scenes (actions)")->capture_default_str();
  sd->add_option("--per-action", ac.per_action, "Sequences per action (actions)")->capture_default_str();
  sd->add_flag("--novel", sd_novel, "Shoot every action sequence in a novel background (actions)");

  for (CLI::App* sub : app.get_subcommands({})) sub->footer("Exit codes: 0 ok, 2 usage, 3 data, 4 numerical.");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    cfg.action_provider.kind = kind_from(action_kind);
    cfg.scene_provider.kind = kind_from(scene_kind);
    cfg.scene_probability =
        scene_mode == "marginal" ? abnormal::SceneProbabilityMode::marginal : abnormal::SceneProbabilityMode::max_entry;
    cfg.prior_mode = prior_mode == "literal" ? abnormal::PriorMode::literal : abnormal::PriorMode::frequency;
    cfg.validate();

    if (*run) {
      const auto report = pipeline::run_pipeline(cfg, run_manifests, run_out, force, &std::cerr);
      for (const auto& s : report.sequences) {
        std::cout << s.id << ": " << s.frames << " frames, " << s.no_motion_frames << " without motion";
        if (s.decision) std::cout << ", " << (s.decision->abnormal ? "abnormal" : "normal");
        std::cout << '\n';
      }
      return 0;
    }

    if (*xflow) {
      FrameSequence seq;
      if (!xf_manifest.empty()) {
        seq = io::load_sequence(io::read_manifest(xf_manifest));
      } else if (!xf_images.empty()) {
        for (const fs::path& p : images_in(xf_images)) seq.frames.push_back(io::read_image(p).to_rgb());
        seq.validate();
      } else {
        throw Error(Errc::usage, "give --manifest or --images");
      }
      if (seq.size() < 2) throw Error(Errc::sequence_too_short, "need at least 2 frames");
      fs::create_directories(xf_out);
      for (std::size_t t = 0; t + 1 < seq.size(); ++t) {
        const int i = static_cast<int>(t);
        if (xf_backward) {
          const auto pair = flow::estimate_flow_pair(seq.frames[t], seq.frames[t + 1], cfg.flow);
          io::write_flow(pair.forward, xf_out / frame_name("forward_", i, ".flo"));
          io::write_flow(pair.backward, xf_out / frame_name("backward_", i, ".flo"));
        } else {
          io::write_flow(flow::estimate_flow(seq.frames[t], seq.frames[t + 1], cfg.flow),
                         xf_out / frame_name("forward_", i, ".flo"));
        }
      }
      return 0;
    }

    if (*feat) {
      if (ft_list) {
        for (const auto& n : features::spatial_channel_names()) std::cout << n << '\n';
        for (const auto& n : features::temporal_channel_names()) std::cout << n << '\n';
        return 0;
      }
      if (ft_out.empty()) throw Error(Errc::usage, "--out is required unless --list");
      const FrameSequence seq = io::load_sequence(io::read_manifest(ft_manifest));
      if (ft_frame < 0 || ft_frame + 1 >= static_cast<int>(seq.size()))
        throw Error(Errc::usage, "--frame must index a pair of consecutive frames");
      const auto& f0 = seq.frames[static_cast<std::size_t>(ft_frame)];
      const auto& f1 = seq.frames[static_cast<std::size_t>(ft_frame) + 1];
      const auto pair = flow::estimate_flow_pair(f0, f1, cfg.flow);
      const auto stack = features::assemble_feature_stack(f0, f1, pair.forward, pair.backward);
      const std::vector<std::string> names = ft_channels.empty() ? stack.combined.names() : ft_channels;
      fs::create_directories(ft_out);
      for (const std::string& name : names)
        io::write_boundary_map(BoundaryMap(features::normalized_for_display(stack.combined.channel(name))),
                               ft_out / (name + ".pgm"));
      return 0;
    }

    if (*tb) {
      std::vector<forest::PatchSample> samples;
      if (!tb_data.empty()) {
        std::uint64_t salt = 0;
        for (const fs::path& m : manifests_in(tb_data)) {
          const io::SequenceManifest man = io::read_manifest(m);
          if (man.boundaries.empty()) throw Error(Errc::usage, m.string() + " has no truth boundaries");
          const FrameSequence seq = io::load_sequence(man);
          std::vector<Plane> truth;
          for (const std::string& b : man.boundaries) truth.push_back(io::read_image(man.root / b).luma());
          auto s = pair_samples(seq, truth, cfg, salt++);
          std::move(s.begin(), s.end(), std::back_inserter(samples));
        }
      } else {
        synth::SyntheticConfig sc;
        sc.count = tb_synthetic;
        sc.max_camera_speed = tb_camera;
        std::uint64_t salt = 0;
        for (const auto& s : synth::generate_synthetic_training_set(sc, tb_seed)) {
          auto part = pair_samples(s.frames, s.boundaries, cfg, salt++);
          std::move(part.begin(), part.end(), std::back_inserter(samples));
        }
      }
      const auto start = std::chrono::steady_clock::now();
      const forest::BoundaryForest model = forest::train_forest(samples, cfg.forest);
      const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      forest::write_forest(model, tb_out);
      std::cout << samples.size() << " samples, " << model.trees.size() << " trees, trained in " << secs << " s\n";
      return 0;
    }

    if (*pb) {
      if (cfg.forest_model.empty()) throw Error(Errc::usage, "--forest.model is required");
      const auto model = forest::read_forest(cfg.forest_model);
      const FrameSequence seq = io::load_sequence(io::read_manifest(pb_manifest));
      std::vector<FlowField> bwd;
      const auto fwd = forward_flows(seq, cfg.flow, &bwd);
      const auto maps = predict_maps(seq, fwd, bwd, model);
      fs::create_directories(pb_out);
      for (std::size_t t = 0; t < maps.size(); ++t)
        io::write_boundary_map(maps[t], pb_out / frame_name("", static_cast<int>(t), ".pgm"));
      return 0;
    }

    if (*pr) {
      std::vector<BoundaryMap> maps;
      std::optional<FrameSequence> seq;
      if (!pr_manifest.empty()) seq = io::load_sequence(io::read_manifest(pr_manifest));
      if (!pr_dir.empty()) {
        for (const fs::path& p : images_in(pr_dir))
          if (p.extension() == ".pgm") maps.push_back(io::read_boundary_map(p));
      } else if (seq) {
        if (cfg.forest_model.empty()) throw Error(Errc::usage, "computing maps needs --forest.model");
        std::vector<FlowField> bwd;
        const auto fwd = forward_flows(*seq, cfg.flow, &bwd);
        maps = predict_maps(*seq, fwd, bwd, forest::read_forest(cfg.forest_model));
      } else {
        throw Error(Errc::usage, "give --boundary-dir or --manifest");
      }
      if (maps.empty()) throw Error(Errc::missing_file, "no boundary maps found");
      if (pr_crops && !seq) throw Error(Errc::usage, "--crops needs --manifest");
      fs::create_directories(pr_out);
      std::vector<std::vector<BoxProposal>> ranked;
      for (std::size_t t = 0; t < maps.size(); ++t) {
        ranked.push_back(pipeline::ranked_proposals(maps[t], cfg.proposals, static_cast<int>(t)));
        io::write_proposals(ranked.back(), pr_out / frame_name("", static_cast<int>(t), ".jsonl"));
      }
      int no_motion = 0;
      const auto boxes = pipeline::action_boxes(ranked, cfg.proposals.top_k, maps.front().width(),
                                                maps.front().height(), cfg.smooth_boxes, &no_motion);
      pipeline::write_action_boxes(boxes, pr_out / "action_boxes.jsonl");
      if (pr_crops) {
        if (seq->size() != boxes.size()) throw Error(Errc::dimension_mismatch, "map count does not match the frames");
        fs::create_directories(pr_out / "crops");
        for (std::size_t t = 0; t < boxes.size(); ++t)
          io::write_image(proposals::crop_and_resize(seq->frames[t], boxes[t], cfg.descriptor.crop_side),
                          pr_out / "crops" / frame_name("", static_cast<int>(t), ".png"));
      }
      std::cout << maps.size() << " maps, " << no_motion << " without motion\n";
      return 0;
    }

    if (*ta) {
      const BoxSource source = parse_box_source(ta_boxes);
      const auto model = maybe_forest(cfg, source);
      const auto paths = manifests_in(ta_data);
      std::vector<io::SequenceManifest> manifests;
      std::vector<std::string> names;
      for (const fs::path& p : paths) {
        manifests.push_back(io::read_manifest(p));
        if (!manifests.back().action) throw Error(Errc::usage, p.string() + " has no action label");
        names.push_back(*manifests.back().action);
      }
      const std::vector<std::string> labels = ta_labels.empty() ? unique_sorted(names) : ta_labels;
      action::DescriptorParams dp = cfg.descriptor;
      dp.flow = cfg.flow;
      std::vector<action::Descriptor> descs;
      std::vector<int> ys;
      for (std::size_t i = 0; i < paths.size(); ++i) {
        const int y = index_of(labels, names[i], "action");
        const LoadedSequence s = load_with_boxes(paths[i], source, cfg, model);
        for (auto& d : action::describe_sequence(s.frames, s.boxes, s.forward, dp)) {
          descs.push_back(std::move(d));
          ys.push_back(y);
        }
      }
      const auto result = action::train_classifier(descs, ys, labels, cfg.classifier);
      action::write_model(result.model, ta_out);
      int correct = 0;
      for (std::size_t i = 0; i < descs.size(); ++i)
        correct += action::classify(descs[i], result.model).argmax() == ys[i];
      std::cout << descs.size() << " descriptors, final loss " << result.loss_history.back() << ", training accuracy "
                << static_cast<double>(correct) / static_cast<double>(descs.size()) << '\n';
      return 0;
    }

    if (*cl) {
      const BoxSource source = parse_box_source(cl_boxes);
      const auto model = maybe_forest(cfg, source);
      action::DescriptorParams dp = cfg.descriptor;
      dp.flow = cfg.flow;
      const action::LinearModelProvider provider(action::read_model(cl_model), dp);
      const LoadedSequence s = load_with_boxes(cl_manifest, source, cfg, model);
      const action::SequenceInput input{pipeline::sequence_id(cl_manifest), &s.frames, s.boxes, s.forward};
      const auto dist = provider.action_probabilities(input);
      const std::string text = distribution_text(provider.labels(), dist.probabilities);
      if (cl_out.empty())
        std::cout << text << '\n';
      else
        write_text(cl_out, text);
      return 0;
    }

    if (*lp) {
      const auto paths = manifests_in(lp_data);
      std::vector<io::SequenceManifest> manifests;
      std::vector<std::string> action_names, scene_names;
      for (const fs::path& p : paths) {
        manifests.push_back(io::read_manifest(p));
        if (!manifests.back().action) throw Error(Errc::usage, p.string() + " has no action label");
        action_names.push_back(*manifests.back().action);
        scene_names.push_back(manifests.back().scene.value_or(""));
      }
      std::vector<Frame> first_frames;
      for (const auto& m : manifests) {
        io::SequenceManifest one = m;
        one.frames.resize(1);
        one.boundaries.clear();
        one.truth_boxes.clear();
        first_frames.push_back(io::load_sequence(one).frames.front());
      }
      std::optional<abnormal::HistogramSceneProvider> scenes;
      if (!lp_scene_model.empty()) {
        scenes = abnormal::HistogramSceneProvider::read(lp_scene_model);
      } else if (!lp_fit_scene.empty()) {
        for (std::size_t i = 0; i < paths.size(); ++i)
          if (scene_names[i].empty()) throw Error(Errc::usage, paths[i].string() + " has no scene label");
        const std::vector<std::string> labels = lp_scenes.empty() ? unique_sorted(scene_names) : lp_scenes;
        std::vector<int> ids;
        for (const std::string& s : scene_names) ids.push_back(index_of(labels, s, "scene"));
        scenes = abnormal::HistogramSceneProvider::fit(first_frames, ids, labels, cfg.scene_temperature);
        scenes->write(lp_fit_scene);
      } else {
        throw Error(Errc::usage, "give --scene-model or --fit-scene-model");
      }
      const std::vector<std::string> actions = lp_actions.empty() ? unique_sorted(action_names) : lp_actions;
      std::vector<abnormal::PriorSample> samples;
      for (std::size_t i = 0; i < paths.size(); ++i)
        samples.push_back({index_of(actions, action_names[i], "action"),
                           scenes->scene_probabilities(pipeline::sequence_id(paths[i]), first_frames[i])});
      const auto table = abnormal::learn_scene_prior(samples, actions, scenes->labels(), cfg.prior_mode);
      abnormal::write_prior(table, lp_out);
      std::cout << abnormal::prior_to_json(table) << '\n';
      return 0;
    }

    if (*da) {
      if (cfg.prior.empty()) throw Error(Errc::usage, "--prior is required");
      const auto prior = abnormal::read_prior(cfg.prior);
      const auto actions = action::parse_distribution_json(read_text(da_actions), prior.actions);
      const auto scene = read_scene_distribution(da_scene, prior.scenes);
      const auto decision = abnormal::decide(actions, scene, prior, cfg.threshold, cfg.scene_probability);
      const std::string text = abnormal::decision_to_json(decision, prior);
      std::cout << text << '\n';
      if (!da_out.empty()) write_text(da_out, text);
      return 0;
    }

    if (*ea) {
      if (cfg.prior.empty()) throw Error(Errc::usage, "--prior is required");
      const auto prior = abnormal::read_prior(cfg.prior);
      std::vector<abnormal::EvaluationCase> cases;
      for (const fs::path& p : manifests_in(ea_data)) {
        const auto m = io::read_manifest(p);
        if (!m.abnormal) continue;
        const std::string id = pipeline::sequence_id(p);
        cases.push_back({id, action::parse_distribution_json(read_text(ea_run / id / "action.json"), prior.actions),
                         read_scene_distribution(ea_run / id / "scene.json", prior.scenes), *m.abnormal});
      }
      if (cases.empty()) throw Error(Errc::usage, "no manifest carries an 'abnormal' flag");
      const auto result = abnormal::evaluate_abnormality(cases, prior, cfg.threshold, cfg.scene_probability);
      std::ostringstream lines;
      for (const auto& r : result.records) lines << abnormal::record_to_json(r, prior) << '\n';
      if (!ea_out.empty()) {
        if (ea_out.has_parent_path()) fs::create_directories(ea_out.parent_path());
        std::ofstream out(ea_out, std::ios::binary);
        if (!out) throw Error(Errc::missing_file, "cannot write " + ea_out.string());
        out << lines.str();
      }
      std::cout << "success rate " << result.success_rate << " over " << result.records.size() << " sequences\n";
      return 0;
    }

    if (*sd) {
      fs::create_directories(sd_out);
      std::vector<synth::SyntheticSequence> seqs;
      std::vector<std::string> ids;
      if (sd_kind == "squares") {
        seqs = synth::generate_synthetic_training_set(sq, sd_seed);
        for (std::size_t i = 0; i < seqs.size(); ++i) ids.push_back(frame_name("square_", static_cast<int>(i), ""));
      } else {
        ac.scene_linked = !sd_novel;
        seqs = synth::generate_action_suite(ac, sd_seed);
        for (std::size_t i = 0; i < seqs.size(); ++i) ids.push_back(frame_name("action_", static_cast<int>(i), ""));
      }
      const auto& place_names = abnormal::default_scene_labels();
      for (std::size_t i = 0; i < seqs.size(); ++i) {
        const auto& s = seqs[i];
        const fs::path dir = sd_out / ids[i];
        fs::create_directories(dir / "frames");
        fs::create_directories(dir / "boundaries");
        io::SequenceManifest m;
        m.root = ids[i];
        for (std::size_t t = 0; t < s.frames.size(); ++t) {
          const int ti = static_cast<int>(t);
          m.frames.push_back(frame_name("frames/", ti, ".png"));
          io::write_image(s.frames.frames[t], dir / m.frames.back());
          const Plane& b = s.boundaries[t];
          m.boundaries.push_back(frame_name("boundaries/", ti, ".pgm"));
          io::write_image(Frame(b.width(), b.height(), 1, {b.data().begin(), b.data().end()}),
                          dir / m.boundaries.back());
          BoxProposal box = s.boxes[t];
          box.frame_index = ti;
          m.truth_boxes.push_back(box);
        }
        if (sd_kind == "actions") {
          m.action = "action" + std::to_string(s.label);
          m.scene = s.background_id < 0 ? std::string("novel")
                    : s.background_id < static_cast<int>(place_names.size())
                        ? place_names[static_cast<std::size_t>(s.background_id)]
                        : "scene" + std::to_string(s.background_id);
        }
        io::write_manifest(m, sd_out / (ids[i] + ".json"));
      }
      std::cout << seqs.size() << " sequences written to " << sd_out.string() << '\n';
      return 0;
    }
  } catch (const Error& e) {
    report_error(e);
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  }
  return 0;
}
