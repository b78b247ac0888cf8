#include "arp/pipeline.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <initializer_list>
#include <optional>
#include <ostream>
#include <sstream>
#include <string_view>
#include <type_traits>

#include "arp/features.hpp"
#include "arp/media_io.hpp"

namespace arp::pipeline {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

void check_keys(const json& obj, const std::string& where, std::initializer_list<std::string_view> allowed) {
  if (!obj.is_object()) throw Error(Errc::usage, "config '" + where + "' must be an object");
  for (const auto& [key, value] : obj.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
      throw Error(Errc::usage, "unknown config key '" + where + (where.empty() ? "" : ".") + key + "'");
  }
}

template <typename T>
bool type_matches(const json& v) {
  if constexpr (std::is_same_v<T, bool>) {
    return v.is_boolean();
  } else if constexpr (std::is_unsigned_v<T>) {
    return v.is_number_unsigned();
  } else if constexpr (std::is_integral_v<T>) {
    return v.is_number_integer();
  } else if constexpr (std::is_floating_point_v<T>) {
    return v.is_number();
  } else if constexpr (std::is_same_v<T, std::string>) {
    return v.is_string();
  } else {
    if (!v.is_array()) return false;
    for (const json& e : v)
      if (!type_matches<typename T::value_type>(e)) return false;
    return true;
  }
}

template <typename T>
void take(const json& obj, const std::string& where, const char* key, T& out) {
  const auto it = obj.find(key);
  if (it == obj.end()) return;
  if (!type_matches<T>(*it)) throw Error(Errc::usage, "config key '" + where + "." + key + "' has the wrong type");
  out = it->template get<T>();
}

void take_path(const json& obj, const std::string& where, const char* key, fs::path& out) {
  std::string s;
  bool present = obj.contains(key);
  take(obj, where, key, s);
  if (present) out = s;
}

ProviderKind parse_kind(const std::string& s) {
  if (s == "none") return ProviderKind::none;
  if (s == "builtin") return ProviderKind::builtin;
  if (s == "file") return ProviderKind::file;
  throw Error(Errc::usage, "provider kind must be none, builtin or file, got '" + s + "'");
}

std::string kind_name(ProviderKind k) {
  switch (k) {
    case ProviderKind::builtin: return "builtin";
    case ProviderKind::file: return "file";
    case ProviderKind::none: break;
  }
  return "none";
}

void read_provider(const json& obj, const std::string& where, ProviderConfig& p, double* temperature) {
  if (temperature)
    check_keys(obj, where, {"kind", "model", "directory", "labels", "temperature"});
  else
    check_keys(obj, where, {"kind", "model", "directory", "labels"});
  if (obj.contains("kind")) {
    std::string kind;
    take(obj, where, "kind", kind);
    p.kind = parse_kind(kind);
  }
  take_path(obj, where, "model", p.model);
  take_path(obj, where, "directory", p.directory);
  take(obj, where, "labels", p.labels);
  if (temperature) take(obj, where, "temperature", *temperature);
}

json provider_json(const ProviderConfig& p) {
  return {{"kind", kind_name(p.kind)},
          {"model", p.model.string()},
          {"directory", p.directory.string()},
          {"labels", p.labels}};
}

std::string frame_name(int t, const char* ext) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04d%s", t, ext);
  return buf;
}

std::string strip_code(const Error& e) {
  const std::string what = e.what();
  const std::string prefix = std::string(errc_name(e.code())) + ": ";
  return what.rfind(prefix, 0) == 0 ? what.substr(prefix.size()) : what;
}

template <typename Fn>
void run_stage(const std::string& stage, const std::string& id, Fn&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    throw Error(e.code(), "stage '" + stage + "' of '" + id + "': " + strip_code(e));
  }
}

bool all_exist(const std::vector<fs::path>& paths) {
  return std::all_of(paths.begin(), paths.end(), [](const fs::path& p) { return fs::exists(p); });
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::missing_file, "cannot write " + path.string());
  out << text << '\n';
  if (!out) throw Error(Errc::missing_file, "write failed for " + path.string());
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::missing_file, "cannot open " + path.string());
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

std::string distribution_json(const std::vector<std::string>& labels, const std::vector<double>& p) {
  return json{{"labels", labels}, {"probabilities", p}}.dump();
}

struct Resources {
  std::optional<forest::BoundaryForest> forest;
  std::unique_ptr<action::ActionProvider> actions;
  std::unique_ptr<abnormal::SceneProvider> scenes;
  std::optional<abnormal::ScenePriorTable> prior;
};

}  // namespace

void PipelineConfig::validate() const {
  flow.validate();
  forest.validate();
  proposals.validate();
  if (extraction.stride < 1) throw Error(Errc::usage, "extraction stride must be >= 1");
  if (!(extraction.min_positive_fraction >= 0.0 && extraction.min_positive_fraction < 1.0))
    throw Error(Errc::usage, "min_positive_fraction must be in [0,1)");
  if (extraction.max_samples < 0) throw Error(Errc::usage, "max_samples must be >= 0");
  if (descriptor.crop_side < action::kDescriptorGrid || descriptor.stack_depth < 1)
    throw Error(Errc::usage, "descriptor crop_side must be >= 4 and stack_depth >= 1");
  if (!(classifier.learning_rate > 0.0) || classifier.epochs < 0 || classifier.l2 < 0.0)
    throw Error(Errc::usage, "classifier needs learning_rate > 0, epochs >= 0, l2 >= 0");
  if (!(threshold >= -1.0 && threshold <= 1.0)) throw Error(Errc::usage, "threshold must be in [-1,1]");
  if (!(scene_temperature > 0.0)) throw Error(Errc::usage, "scene temperature must be > 0");
  for (const ProviderConfig* p : {&action_provider, &scene_provider}) {
    if (p->kind == ProviderKind::builtin && p->model.empty())
      throw Error(Errc::usage, "builtin provider needs a model path");
    if (p->kind == ProviderKind::file && (p->directory.empty() || p->labels.empty()))
      throw Error(Errc::usage, "file provider needs a directory and labels");
  }
}

PipelineConfig config_from_json(const json& doc, PipelineConfig c) {
  check_keys(doc, "", {"flow", "forest", "extraction", "boundary", "proposals", "descriptor", "classifier",
                       "action_provider", "scene_provider", "abnormality"});
  if (doc.contains("flow")) {
    const json& j = doc["flow"];
    check_keys(j, "flow",
               {"pyramid_levels", "scale_factor", "regularization_weight", "warp_iterations",
                "fixed_point_iterations", "median_filter_radius", "solver_iterations", "use_color"});
    take(j, "flow", "pyramid_levels", c.flow.pyramid_levels);
    take(j, "flow", "scale_factor", c.flow.scale_factor);
    take(j, "flow", "regularization_weight", c.flow.regularization_weight);
    take(j, "flow", "warp_iterations", c.flow.warp_iterations);
    take(j, "flow", "fixed_point_iterations", c.flow.fixed_point_iterations);
    take(j, "flow", "median_filter_radius", c.flow.median_filter_radius);
    take(j, "flow", "solver_iterations", c.flow.solver_iterations);
    take(j, "flow", "use_color", c.flow.use_color);
  }
  if (doc.contains("forest")) {
    const json& j = doc["forest"];
    check_keys(j, "forest",
               {"tree_count", "max_depth", "min_samples_leaf", "features_per_split", "pixel_pairs_for_projection",
                "stride", "rng_seed", "model"});
    take(j, "forest", "tree_count", c.forest.tree_count);
    take(j, "forest", "max_depth", c.forest.max_depth);
    take(j, "forest", "min_samples_leaf", c.forest.min_samples_leaf);
    take(j, "forest", "features_per_split", c.forest.features_per_split);
    take(j, "forest", "pixel_pairs_for_projection", c.forest.pixel_pairs_for_projection);
    take(j, "forest", "stride", c.forest.stride);
    take(j, "forest", "rng_seed", c.forest.rng_seed);
    take_path(j, "forest", "model", c.forest_model);
  }
  if (doc.contains("extraction")) {
    const json& j = doc["extraction"];
    check_keys(j, "extraction", {"stride", "min_positive_fraction", "max_samples", "rng_seed"});
    take(j, "extraction", "stride", c.extraction.stride);
    take(j, "extraction", "min_positive_fraction", c.extraction.min_positive_fraction);
    take(j, "extraction", "max_samples", c.extraction.max_samples);
    take(j, "extraction", "rng_seed", c.extraction.rng_seed);
  }
  if (doc.contains("boundary")) {
    const json& j = doc["boundary"];
    check_keys(j, "boundary", {"external_dir"});
    take_path(j, "boundary", "external_dir", c.external_boundaries);
  }
  if (doc.contains("proposals")) {
    const json& j = doc["proposals"];
    check_keys(j, "proposals",
               {"scales", "aspect_ratios", "step_fraction", "border_strip", "kappa", "border_penalty", "nms_iou",
                "top_k", "min_score", "min_side", "thin", "smooth", "write_crops"});
    take(j, "proposals", "scales", c.proposals.scales);
    take(j, "proposals", "aspect_ratios", c.proposals.aspect_ratios);
    take(j, "proposals", "step_fraction", c.proposals.step_fraction);
    take(j, "proposals", "border_strip", c.proposals.border_strip);
    take(j, "proposals", "kappa", c.proposals.kappa);
    take(j, "proposals", "border_penalty", c.proposals.border_penalty);
    take(j, "proposals", "nms_iou", c.proposals.nms_iou);
    take(j, "proposals", "top_k", c.proposals.top_k);
    take(j, "proposals", "min_score", c.proposals.min_score);
    take(j, "proposals", "min_side", c.proposals.min_side);
    take(j, "proposals", "thin", c.proposals.thin);
    take(j, "proposals", "smooth", c.smooth_boxes);
    take(j, "proposals", "write_crops", c.write_crops);
  }
  if (doc.contains("descriptor")) {
    const json& j = doc["descriptor"];
    check_keys(j, "descriptor", {"crop_side", "stack_depth"});
    take(j, "descriptor", "crop_side", c.descriptor.crop_side);
    take(j, "descriptor", "stack_depth", c.descriptor.stack_depth);
  }
  if (doc.contains("classifier")) {
    const json& j = doc["classifier"];
    check_keys(j, "classifier", {"learning_rate", "epochs", "l2", "seed"});
    take(j, "classifier", "learning_rate", c.classifier.learning_rate);
    take(j, "classifier", "epochs", c.classifier.epochs);
    take(j, "classifier", "l2", c.classifier.l2);
    take(j, "classifier", "seed", c.classifier.seed);
  }
  if (doc.contains("action_provider")) read_provider(doc["action_provider"], "action_provider", c.action_provider, nullptr);
  if (doc.contains("scene_provider"))
    read_provider(doc["scene_provider"], "scene_provider", c.scene_provider, &c.scene_temperature);
  if (doc.contains("abnormality")) {
    const json& j = doc["abnormality"];
    check_keys(j, "abnormality", {"threshold", "prior", "prior_mode", "scene_probability"});
    take(j, "abnormality", "threshold", c.threshold);
    take_path(j, "abnormality", "prior", c.prior);
    if (j.contains("prior_mode")) {
      std::string s;
      take(j, "abnormality", "prior_mode", s);
      if (s == "frequency")
        c.prior_mode = abnormal::PriorMode::frequency;
      else if (s == "literal")
        c.prior_mode = abnormal::PriorMode::literal;
      else
        throw Error(Errc::usage, "prior_mode must be frequency or literal");
    }
    if (j.contains("scene_probability")) {
      std::string s;
      take(j, "abnormality", "scene_probability", s);
      if (s == "max_entry")
        c.scene_probability = abnormal::SceneProbabilityMode::max_entry;
      else if (s == "marginal")
        c.scene_probability = abnormal::SceneProbabilityMode::marginal;
      else
        throw Error(Errc::usage, "scene_probability must be max_entry or marginal");
    }
  }
  return c;
}

json config_to_json(const PipelineConfig& c) {
  json scene = provider_json(c.scene_provider);
  scene["temperature"] = c.scene_temperature;
  return {
      {"flow",
       {{"pyramid_levels", c.flow.pyramid_levels},
        {"scale_factor", c.flow.scale_factor},
        {"regularization_weight", c.flow.regularization_weight},
        {"warp_iterations", c.flow.warp_iterations},
        {"fixed_point_iterations", c.flow.fixed_point_iterations},
        {"median_filter_radius", c.flow.median_filter_radius},
        {"solver_iterations", c.flow.solver_iterations},
        {"use_color", c.flow.use_color}}},
      {"forest",
       {{"tree_count", c.forest.tree_count},
        {"max_depth", c.forest.max_depth},
        {"min_samples_leaf", c.forest.min_samples_leaf},
        {"features_per_split", c.forest.features_per_split},
        {"pixel_pairs_for_projection", c.forest.pixel_pairs_for_projection},
        {"stride", c.forest.stride},
        {"rng_seed", c.forest.rng_seed},
        {"model", c.forest_model.string()}}},
      {"extraction",
       {{"stride", c.extraction.stride},
        {"min_positive_fraction", c.extraction.min_positive_fraction},
        {"max_samples", c.extraction.max_samples},
        {"rng_seed", c.extraction.rng_seed}}},
      {"boundary", {{"external_dir", c.external_boundaries.string()}}},
      {"proposals",
       {{"scales", c.proposals.scales},
        {"aspect_ratios", c.proposals.aspect_ratios},
        {"step_fraction", c.proposals.step_fraction},
        {"border_strip", c.proposals.border_strip},
        {"kappa", c.proposals.kappa},
        {"border_penalty", c.proposals.border_penalty},
        {"nms_iou", c.proposals.nms_iou},
        {"top_k", c.proposals.top_k},
        {"min_score", c.proposals.min_score},
        {"min_side", c.proposals.min_side},
        {"thin", c.proposals.thin},
        {"smooth", c.smooth_boxes},
        {"write_crops", c.write_crops}}},
      {"descriptor", {{"crop_side", c.descriptor.crop_side}, {"stack_depth", c.descriptor.stack_depth}}},
      {"classifier",
       {{"learning_rate", c.classifier.learning_rate},
        {"epochs", c.classifier.epochs},
        {"l2", c.classifier.l2},
        {"seed", c.classifier.seed}}},
      {"action_provider", provider_json(c.action_provider)},
      {"scene_provider", scene},
      {"abnormality",
       {{"threshold", c.threshold},
        {"prior", c.prior.string()},
        {"prior_mode", c.prior_mode == abnormal::PriorMode::literal ? "literal" : "frequency"},
        {"scene_probability",
         c.scene_probability == abnormal::SceneProbabilityMode::marginal ? "marginal" : "max_entry"}}},
  };
}

PipelineConfig load_config(const fs::path& path, PipelineConfig base) {
  json doc;
  try {
    doc = json::parse(read_text(path));
  } catch (const json::exception& e) {
    throw Error(Errc::usage, "config " + path.string() + ": " + e.what());
  }
  // Paths in the file are relative to the file.
  const PipelineConfig before = base;
  PipelineConfig c = config_from_json(doc, std::move(base));
  const fs::path dir = path.parent_path();
  auto resolve = [&](fs::path& p, const fs::path& old) {
    if (p != old && !p.empty() && p.is_relative()) p = dir / p;
  };
  resolve(c.forest_model, before.forest_model);
  resolve(c.external_boundaries, before.external_boundaries);
  resolve(c.action_provider.model, before.action_provider.model);
  resolve(c.action_provider.directory, before.action_provider.directory);
  resolve(c.scene_provider.model, before.scene_provider.model);
  resolve(c.scene_provider.directory, before.scene_provider.directory);
  resolve(c.prior, before.prior);
  return c;
}

std::string sequence_id(const fs::path& manifest_path) {
  const std::string stem = manifest_path.stem().string();
  if (stem == "manifest") {
    const fs::path parent = fs::absolute(manifest_path).parent_path();
    if (!parent.filename().empty()) return parent.filename().string();
  }
  return stem;
}

std::vector<BoxProposal> ranked_proposals(const BoundaryMap& map, const proposals::ProposalParams& params,
                                          int frame_index) {
  const BoundaryMap scored = params.thin ? proposals::thin_boundaries(map) : map;
  std::vector<BoxProposal> boxes = proposals::score_boxes(scored, params, frame_index);
  std::erase_if(boxes, [&](const BoxProposal& b) { return b.score <= params.min_score; });
  return proposals::nms(boxes, params.nms_iou);
}

std::vector<BoxProposal> action_boxes(std::span<const std::vector<BoxProposal>> ranked, int top_k, int width,
                                      int height, bool smooth, int* no_motion_frames) {
  std::vector<BoxProposal> out;
  int no_motion = 0;
  for (std::size_t t = 0; t < ranked.size(); ++t) {
    const int index = static_cast<int>(t);
    const proposals::Selection sel = proposals::select_action_region(ranked[t], top_k);
    if (!sel.boxes.empty()) {
      out.push_back(sel.boxes.front());
      out.back().frame_index = index;
      continue;
    }
    ++no_motion;
    BoxProposal box = out.empty() ? BoxProposal{0, 0, width, height, 0.0, index} : out.back();
    box.frame_index = index;
    box.score = 0.0;
    out.push_back(box);
  }
  if (smooth && !out.empty()) out = proposals::smooth_boxes(out, width, height);
  if (!out.empty()) {
    BoxProposal last = out.back();
    last.frame_index = static_cast<int>(out.size());
    out.push_back(last);
  }
  if (no_motion_frames) *no_motion_frames = no_motion;
  return out;
}

void write_action_boxes(const std::vector<BoxProposal>& boxes, const fs::path& path) {
  std::ostringstream s;
  for (const BoxProposal& b : boxes)
    s << json{{"frame_index", b.frame_index}, {"x", b.x}, {"y", b.y}, {"w", b.w}, {"h", b.h}, {"score", b.score}}
             .dump()
      << '\n';
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::missing_file, "cannot write " + path.string());
  out << s.str();
}

std::vector<BoxProposal> read_action_boxes(const fs::path& path) {
  std::vector<BoxProposal> boxes = io::read_proposals(path);
  std::stable_sort(boxes.begin(), boxes.end(),
                   [](const BoxProposal& a, const BoxProposal& b) { return a.frame_index < b.frame_index; });
  for (std::size_t t = 0; t < boxes.size(); ++t)
    if (boxes[t].frame_index != static_cast<int>(t))
      throw Error(Errc::malformed_header, "action boxes must cover frames 0..n-1 once each");
  return boxes;
}

std::vector<BoxProposal> frame_boxes(std::span<const BoundaryMap> maps, const proposals::ProposalParams& params,
                                     bool smooth, int* no_motion_frames) {
  if (maps.empty()) throw Error(Errc::sequence_too_short, "no boundary maps");
  std::vector<std::vector<BoxProposal>> ranked;
  for (std::size_t t = 0; t < maps.size(); ++t) ranked.push_back(ranked_proposals(maps[t], params, static_cast<int>(t)));
  return action_boxes(ranked, params.top_k, maps.front().width(), maps.front().height(), smooth, no_motion_frames);
}

PipelineReport run_pipeline(const PipelineConfig& config, std::span<const fs::path> manifests,
                            const fs::path& output_dir, bool force, std::ostream* log) {
  config.validate();
  if (manifests.empty()) throw Error(Errc::usage, "no manifests given");
  std::vector<std::string> ids;
  for (const fs::path& m : manifests) {
    const std::string id = sequence_id(m);
    if (std::find(ids.begin(), ids.end(), id) != ids.end())
      throw Error(Errc::usage, "duplicate sequence id '" + id + "'");
    ids.push_back(id);
  }
  fs::create_directories(output_dir);
  write_text(output_dir / "config.json", config_to_json(config).dump(2));

  PipelineReport report;
  Resources res;
  action::DescriptorParams descriptor = config.descriptor;
  descriptor.flow = config.flow;

  auto note = [&](const std::string& id, const std::string& stage, bool cached) {
    if (cached)
      ++report.stages_cached;
    else
      ++report.stages_run;
    if (log) *log << id << ": " << stage << (cached ? " (cached)" : " (computed)") << '\n';
  };

  std::ostringstream summary;
  for (std::size_t s = 0; s < manifests.size(); ++s) {
    const std::string& id = ids[s];
    const fs::path dir = output_dir / id;
    SequenceReport rep;
    rep.id = id;

    FrameSequence seq;
    run_stage("load", id, [&] {
      seq = io::load_sequence(io::read_manifest(manifests[s]));
      if (seq.size() < 2) throw Error(Errc::sequence_too_short, "a sequence needs at least 2 frames");
    });
    const int n = static_cast<int>(seq.size());
    rep.frames = n;
    const int width = seq.frames.front().width();
    const int height = seq.frames.front().height();

    std::vector<FlowField> forward(static_cast<std::size_t>(n - 1));
    std::vector<FlowField> backward(static_cast<std::size_t>(n - 1));
    run_stage("flow", id, [&] {
      fs::create_directories(dir / "flow");
      std::vector<fs::path> paths;
      for (int t = 0; t + 1 < n; ++t) {
        paths.push_back(dir / "flow" / ("forward_" + frame_name(t, ".flo")));
        paths.push_back(dir / "flow" / ("backward_" + frame_name(t, ".flo")));
      }
      const bool cached = !force && all_exist(paths);
      for (int t = 0; t + 1 < n; ++t) {
        const auto i = static_cast<std::size_t>(t);
        if (cached) {
          forward[i] = io::read_flow(paths[2 * i]);
          backward[i] = io::read_flow(paths[2 * i + 1]);
          if (forward[i].width() != width || forward[i].height() != height ||
              backward[i].width() != width || backward[i].height() != height)
            throw Error(Errc::dimension_mismatch, "cached flow does not match the frames");
        } else {
          flow::FlowPair pair = flow::estimate_flow_pair(seq.frames[i], seq.frames[i + 1], config.flow);
          io::write_flow(pair.forward, paths[2 * i]);
          io::write_flow(pair.backward, paths[2 * i + 1]);
          forward[i] = std::move(pair.forward);
          backward[i] = std::move(pair.backward);
        }
      }
      note(id, "flow", cached);
    });

    std::vector<BoundaryMap> maps(static_cast<std::size_t>(n - 1));
    run_stage("boundary", id, [&] {
      fs::create_directories(dir / "boundary");
      std::vector<fs::path> paths;
      for (int t = 0; t + 1 < n; ++t) paths.push_back(dir / "boundary" / frame_name(t, ".pgm"));
      const bool external = !config.external_boundaries.empty();
      const bool cached = !force && all_exist(paths);
      if (!external && !cached && !res.forest) {
        if (config.forest_model.empty())
          throw Error(Errc::usage, "no boundary forest model or external boundary directory configured");
        res.forest = forest::read_forest(config.forest_model);
      }
      for (int t = 0; t + 1 < n; ++t) {
        const auto i = static_cast<std::size_t>(t);
        if (external) {
          maps[i] = io::read_boundary_map(config.external_boundaries / id / frame_name(t, ".pgm"));
          io::write_boundary_map(maps[i], paths[i]);
        } else if (!cached) {
          const auto stack = features::assemble_feature_stack(seq.frames[i], seq.frames[i + 1], forward[i], backward[i]);
          io::write_boundary_map(forest::predict_boundary(stack, *res.forest), paths[i]);
        }
        // Downstream stages always see the quantized map so reruns agree.
        maps[i] = io::read_boundary_map(paths[i]);
        if (maps[i].width() != width || maps[i].height() != height)
          throw Error(Errc::dimension_mismatch, "boundary map does not match the frames");
      }
      note(id, external ? "boundary (external)" : "boundary", cached && !external);
    });

    std::vector<BoxProposal> boxes;
    run_stage("proposals", id, [&] {
      fs::create_directories(dir / "proposals");
      std::vector<fs::path> paths;
      for (int t = 0; t + 1 < n; ++t) paths.push_back(dir / "proposals" / frame_name(t, ".jsonl"));
      const fs::path boxes_path = dir / "action_boxes.jsonl";
      std::vector<fs::path> all = paths;
      all.push_back(boxes_path);
      const bool cached = !force && all_exist(all);
      if (cached) {
        boxes = read_action_boxes(boxes_path);
        if (static_cast<int>(boxes.size()) != n) throw Error(Errc::dimension_mismatch, "cached box count differs");
        for (const BoxProposal& b : boxes)
          if (!b.valid_in(width, height)) throw Error(Errc::invalid_box, "bad cached box");
        rep.no_motion_frames = static_cast<int>(
            std::count_if(boxes.begin(), boxes.end() - 1, [](const BoxProposal& b) { return b.score <= 0.0; }));
      } else {
        std::vector<std::vector<BoxProposal>> ranked;
        for (int t = 0; t + 1 < n; ++t) {
          const auto i = static_cast<std::size_t>(t);
          ranked.push_back(ranked_proposals(maps[i], config.proposals, t));
          io::write_proposals(ranked.back(), paths[i]);
        }
        boxes = action_boxes(ranked, config.proposals.top_k, width, height, config.smooth_boxes,
                             &rep.no_motion_frames);
        write_action_boxes(boxes, boxes_path);
      }
      note(id, "proposals", cached);
    });

    if (config.write_crops) {
      run_stage("crops", id, [&] {
        fs::create_directories(dir / "crops");
        std::vector<fs::path> paths;
        for (int t = 0; t < n; ++t) paths.push_back(dir / "crops" / frame_name(t, ".png"));
        const bool cached = !force && all_exist(paths);
        if (!cached) {
          for (int t = 0; t < n; ++t) {
            const auto i = static_cast<std::size_t>(t);
            io::write_image(proposals::crop_and_resize(seq.frames[i], boxes[i], config.descriptor.crop_side),
                            paths[i]);
          }
        }
        note(id, "crops", cached);
      });
    }

    if (config.action_provider.kind != ProviderKind::none) {
      run_stage("action", id, [&] {
        if (!res.actions) {
          if (config.action_provider.kind == ProviderKind::builtin)
            res.actions = std::make_unique<action::LinearModelProvider>(
                action::read_model(config.action_provider.model), descriptor);
          else
            res.actions = std::make_unique<action::FileActionProvider>(config.action_provider.directory,
                                                                       config.action_provider.labels);
        }
        const fs::path path = dir / "action.json";
        const bool cached = !force && fs::exists(path);
        if (cached) {
          rep.actions = action::parse_distribution_json(read_text(path), res.actions->labels());
        } else {
          action::SequenceInput input{id, &seq, boxes, forward};
          rep.actions = res.actions->action_probabilities(input);
          write_text(path, distribution_json(res.actions->labels(), rep.actions->probabilities));
        }
        note(id, "action", cached);
      });
    }

    if (config.scene_provider.kind != ProviderKind::none) {
      run_stage("scene", id, [&] {
        if (!res.scenes) {
          if (config.scene_provider.kind == ProviderKind::builtin)
            res.scenes = std::make_unique<abnormal::HistogramSceneProvider>(
                abnormal::HistogramSceneProvider::read(config.scene_provider.model));
          else
            res.scenes = std::make_unique<abnormal::FileSceneProvider>(config.scene_provider.directory,
                                                                       config.scene_provider.labels);
        }
        const fs::path path = dir / "scene.json";
        const bool cached = !force && fs::exists(path);
        if (cached) {
          rep.scene = abnormal::SceneDistribution{
              action::parse_distribution_json(read_text(path), res.scenes->labels()).probabilities};
        } else {
          rep.scene = res.scenes->scene_probabilities(id, seq.frames.front());
          write_text(path, distribution_json(res.scenes->labels(), rep.scene->probabilities));
        }
        rep.scene->validate();
        note(id, "scene", cached);
      });
    }

    if (rep.actions && rep.scene && !config.prior.empty()) {
      run_stage("decision", id, [&] {
        if (!res.prior) res.prior = abnormal::read_prior(config.prior);
        if (res.prior->actions != res.actions->labels())
          throw Error(Errc::dimension_mismatch, "prior action labels differ from the action provider's");
        if (res.prior->scenes != res.scenes->labels())
          throw Error(Errc::dimension_mismatch, "prior scene labels differ from the scene provider's");
        rep.decision = abnormal::decide(*rep.actions, *rep.scene, *res.prior, config.threshold,
                                        config.scene_probability);
        const std::string text = abnormal::decision_to_json(*rep.decision, *res.prior);
        write_text(dir / "decision.json", text);
        json line = json::parse(text);
        line["id"] = id;
        summary << line.dump() << '\n';
        note(id, "decision", false);
      });
    }
    report.sequences.push_back(std::move(rep));
  }
  const std::string lines = summary.str();
  if (!lines.empty()) {
    std::ofstream out(output_dir / "decisions.jsonl", std::ios::binary);
    if (!out) throw Error(Errc::missing_file, "cannot write decisions.jsonl");
    out << lines;
  }
  return report;
}

}  // namespace arp::pipeline
