#pragma once

#include <filesystem>
#include <iosfwd>
#include <json.hpp>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "arp/abnormality.hpp"
#include "arp/classifier.hpp"
#include "arp/forest.hpp"
#include "arp/optical_flow.hpp"
#include "arp/proposals.hpp"

namespace arp::pipeline {

enum class ProviderKind { none, builtin, file };

struct ProviderConfig {
  ProviderKind kind = ProviderKind::none;
  /// Model file for the built-in provider.
  std::filesystem::path model;
  /// Directory of <id>.json distributions for the file provider.
  std::filesystem::path directory;
  /// Label vocabulary for the file provider.
  std::vector<std::string> labels;
};

struct PipelineConfig {
  flow::FlowParams flow;
  forest::ForestParams forest;
  forest::ExtractionParams extraction;
  std::filesystem::path forest_model;
  /// When set, boundary maps are read from <dir>/<id>/<t>.pgm instead of predicted.
  std::filesystem::path external_boundaries;
  proposals::ProposalParams proposals;
  bool smooth_boxes = false;
  bool write_crops = false;
  action::DescriptorParams descriptor;
  action::TrainParams classifier;
  ProviderConfig action_provider;
  ProviderConfig scene_provider;
  std::filesystem::path prior;
  abnormal::PriorMode prior_mode = abnormal::PriorMode::frequency;
  abnormal::SceneProbabilityMode scene_probability = abnormal::SceneProbabilityMode::max_entry;
  double threshold = 0.5;
  double scene_temperature = 0.1;

  void validate() const;
};

/// Overlays a JSON document on `base`; unknown keys and wrong types are usage errors.
PipelineConfig config_from_json(const nlohmann::json& doc, PipelineConfig base = {});
nlohmann::json config_to_json(const PipelineConfig& config);
PipelineConfig load_config(const std::filesystem::path& path, PipelineConfig base = {});

/// Sequence id: the manifest file stem, or its directory name for files called manifest.json.
std::string sequence_id(const std::filesystem::path& manifest_path);

struct SequenceReport {
  std::string id;
  int frames = 0;
  int no_motion_frames = 0;
  std::optional<action::ActionDistribution> actions;
  std::optional<abnormal::SceneDistribution> scene;
  std::optional<abnormal::AbnormalityDecision> decision;
};

struct PipelineReport {
  std::vector<SequenceReport> sequences;
  int stages_run = 0;
  int stages_cached = 0;
};

/// Runs flow -> boundary -> proposals -> crops -> action -> scene -> decision
/// for each manifest, writing under output_dir/<id>/. Existing stage outputs
/// are loaded instead of recomputed unless `force`.
PipelineReport run_pipeline(const PipelineConfig& config, std::span<const std::filesystem::path> manifests,
                            const std::filesystem::path& output_dir, bool force = false, std::ostream* log = nullptr);

/// Proposals of one boundary map after thinning, the score floor and NMS, best first.
std::vector<BoxProposal> ranked_proposals(const BoundaryMap& map, const proposals::ProposalParams& params,
                                          int frame_index);

/// One box per frame from per-map ranked proposals (frame t uses list t). Empty
/// lists fall back to the previous box or the full frame; the final frame
/// repeats the last box. Counts the empty lists.
std::vector<BoxProposal> action_boxes(std::span<const std::vector<BoxProposal>> ranked, int top_k, int width,
                                      int height, bool smooth, int* no_motion_frames = nullptr);

/// JSON lines in frame order (unlike io::write_proposals, which orders by score).
void write_action_boxes(const std::vector<BoxProposal>& boxes, const std::filesystem::path& path);
std::vector<BoxProposal> read_action_boxes(const std::filesystem::path& path);

/// Per-frame action boxes from boundary maps: frame t < n-1 uses map t, the
/// last frame repeats the previous box. Counts frames that had no motion.
std::vector<BoxProposal> frame_boxes(std::span<const BoundaryMap> maps, const proposals::ProposalParams& params,
                                     bool smooth, int* no_motion_frames = nullptr);

}  // namespace arp::pipeline
