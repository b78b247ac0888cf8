#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "arp/classifier.hpp"
#include "arp/image.hpp"

namespace arp::abnormal {

/// The four places of the robot experiments.
const std::vector<std::string>& default_scene_labels();

struct SceneDistribution {
  std::vector<double> probabilities;

  void validate() const;
  int argmax() const;
  /// P(S_i): the largest entry.
  double max_probability() const;
};

class SceneProvider {
 public:
  virtual ~SceneProvider() = default;
  virtual const std::vector<std::string>& labels() const = 0;
  /// `id` names the sequence the frame comes from (used by file providers).
  virtual SceneDistribution scene_probabilities(const std::string& id, const Frame& frame) const = 0;
};

inline constexpr int kHistogramBinsPerChannel = 4;
inline constexpr int kHistogramLength =
    kHistogramBinsPerChannel * kHistogramBinsPerChannel * kHistogramBinsPerChannel;

/// Joint RGB histogram with 4 bins per channel, normalized to sum 1.
std::vector<double> colour_histogram(const Frame& frame);

/// Nearest-centroid scene classifier on colour histograms. Probabilities are
/// a softmax of negative L1 distances divided by the temperature.
class HistogramSceneProvider final : public SceneProvider {
 public:
  HistogramSceneProvider(std::vector<std::string> labels, std::vector<std::vector<double>> centroids,
                         double temperature = 0.1);
  /// Centroid of each scene = mean histogram of its frames; every scene needs one frame.
  static HistogramSceneProvider fit(std::span<const Frame> frames, std::span<const int> scene_ids,
                                    std::vector<std::string> labels, double temperature = 0.1);

  const std::vector<std::string>& labels() const override { return labels_; }
  SceneDistribution scene_probabilities(const std::string& id, const Frame& frame) const override;
  const std::vector<std::vector<double>>& centroids() const noexcept { return centroids_; }
  double temperature() const noexcept { return temperature_; }

  void write(const std::filesystem::path& path) const;
  static HistogramSceneProvider read(const std::filesystem::path& path);

 private:
  std::vector<std::string> labels_;
  std::vector<std::vector<double>> centroids_;
  double temperature_;
};

/// Reads <directory>/<id>.json holding {"labels": [...], "probabilities": [...]}.
class FileSceneProvider final : public SceneProvider {
 public:
  FileSceneProvider(std::filesystem::path directory, std::vector<std::string> labels);
  const std::vector<std::string>& labels() const override { return labels_; }
  SceneDistribution scene_probabilities(const std::string& id, const Frame& frame) const override;

 private:
  std::filesystem::path directory_;
  std::vector<std::string> labels_;
};

/// P(S_j | A_i) for K actions x M scenes, with the sample counts behind it.
struct ScenePriorTable {
  std::vector<std::string> actions;
  std::vector<std::string> scenes;
  /// Row-major K x M.
  std::vector<double> probabilities;
  std::vector<int> counts;

  double at(int action, int scene) const;
  void validate() const;
  friend bool operator==(const ScenePriorTable&, const ScenePriorTable&) = default;
};

enum class PriorMode {
  /// Share of an action's samples whose most probable scene is j.
  frequency,
  /// All mass on each action's most frequent scene (lowest id on ties).
  literal,
};

struct PriorSample {
  int action = 0;
  SceneDistribution scene;
};

ScenePriorTable learn_scene_prior(std::span<const PriorSample> samples, std::vector<std::string> actions,
                                  std::vector<std::string> scenes, PriorMode mode = PriorMode::frequency);

void write_prior(const ScenePriorTable& table, const std::filesystem::path& path);
ScenePriorTable read_prior(const std::filesystem::path& path);
std::string prior_to_json(const ScenePriorTable& table);
ScenePriorTable prior_from_json(const std::string& text);

struct Posterior {
  double raw = 0.0;
  double clamped = 0.0;
};

/// P(A|S) = P(S|A) P(A) / P(S); the clamped copy is limited to [0,1].
Posterior posterior_action_given_scene(double p_action, double p_scene, double p_scene_given_action);

struct AbnormalityDecision {
  int action = -1;
  int scene = -1;
  double p_action = 0.0;
  double p_scene = 0.0;
  double p_scene_given_action = 0.0;
  double p_action_given_scene_raw = 0.0;
  double p_action_given_scene = 0.0;
  double abd_index = 0.0;
  double threshold = 0.5;
  bool abnormal = false;
};

/// ABD index = P(A) - P(A|S); abnormal iff the index is strictly above the threshold.
AbnormalityDecision abd_decision(double p_action, double p_action_given_scene, double threshold = 0.5);

enum class SceneProbabilityMode {
  /// Largest entry of the scene distribution.
  max_entry,
  /// sum_k P(S|A_k) P(A_k) over the prior table.
  marginal,
};

/// Recognized action = argmax of the action distribution, given scene = argmax
/// of the scene distribution; then the posterior and the ABD decision.
AbnormalityDecision decide(const action::ActionDistribution& actions, const SceneDistribution& scene,
                           const ScenePriorTable& prior, double threshold = 0.5,
                           SceneProbabilityMode mode = SceneProbabilityMode::max_entry);

struct EvaluationCase {
  std::string id;
  action::ActionDistribution actions;
  SceneDistribution scene;
  bool truth_abnormal = false;
};

struct EvaluationRecord {
  std::string id;
  AbnormalityDecision decision;
  bool truth_abnormal = false;
  bool correct = false;
};

struct EvaluationResult {
  std::vector<EvaluationRecord> records;
  double success_rate = 0.0;
};

EvaluationResult evaluate_abnormality(std::span<const EvaluationCase> cases, const ScenePriorTable& prior,
                                      double threshold = 0.5,
                                      SceneProbabilityMode mode = SceneProbabilityMode::max_entry);

/// Fraction of records whose decision matches the truth flag.
double success_rate(std::span<const EvaluationRecord> records);

std::string decision_to_json(const AbnormalityDecision& decision, const ScenePriorTable& prior);
std::string record_to_json(const EvaluationRecord& record, const ScenePriorTable& prior);

}  // namespace arp::abnormal
