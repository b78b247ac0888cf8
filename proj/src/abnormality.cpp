#include "arp/abnormality.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <json.hpp>
#include <sstream>

namespace arp::abnormal {

namespace {

using nlohmann::json;

void check_probability(double p, const char* name) {
  if (!std::isfinite(p) || p < 0.0 || p > 1.0)
    throw Error(Errc::out_of_range, std::string(name) + " must lie in [0,1], got " + std::to_string(p));
}

std::string read_text(const std::filesystem::path& path, Errc missing) {
  std::ifstream in(path);
  if (!in) throw Error(missing, "cannot open " + path.string());
  std::stringstream text;
  text << in.rdbuf();
  return text.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(Errc::missing_file, "cannot write " + path.string());
  out << text;
  if (!out) throw Error(Errc::missing_file, "write failed for " + path.string());
}

json parse_json(const std::string& text, const char* what) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw Error(Errc::malformed_header, std::string(what) + ": " + e.what());
  }
}

json decision_json(const AbnormalityDecision& d, const ScenePriorTable& prior) {
  json j;
  j["action"] = d.action >= 0 && d.action < static_cast<int>(prior.actions.size())
                    ? json(prior.actions[static_cast<std::size_t>(d.action)])
                    : json(d.action);
  j["scene"] = d.scene >= 0 && d.scene < static_cast<int>(prior.scenes.size())
                   ? json(prior.scenes[static_cast<std::size_t>(d.scene)])
                   : json(d.scene);
  j["p_action"] = d.p_action;
  j["p_scene"] = d.p_scene;
  j["p_scene_given_action"] = d.p_scene_given_action;
  j["p_action_given_scene_raw"] = d.p_action_given_scene_raw;
  j["p_action_given_scene"] = d.p_action_given_scene;
  j["abd_index"] = d.abd_index;
  j["threshold"] = d.threshold;
  j["abnormal"] = d.abnormal;
  return j;
}

}  // namespace

const std::vector<std::string>& default_scene_labels() {
  static const std::vector<std::string> labels = {"office", "corridor", "kitchen", "classroom"};
  return labels;
}

void SceneDistribution::validate() const { action::ActionDistribution{probabilities}.validate(); }

int SceneDistribution::argmax() const { return action::ActionDistribution{probabilities}.argmax(); }

double SceneDistribution::max_probability() const {
  return probabilities.at(static_cast<std::size_t>(argmax()));
}

std::vector<double> colour_histogram(const Frame& frame) {
  const Frame rgb = frame.to_rgb();
  std::vector<double> hist(kHistogramLength, 0.0);
  const auto bin = [](float v) { return std::min(kHistogramBinsPerChannel - 1, static_cast<int>(v * kHistogramBinsPerChannel)); };
  for (int y = 0; y < rgb.height(); ++y)
    for (int x = 0; x < rgb.width(); ++x) {
      const int index = (bin(rgb.at(x, y, 0)) * kHistogramBinsPerChannel + bin(rgb.at(x, y, 1))) * kHistogramBinsPerChannel +
                        bin(rgb.at(x, y, 2));
      hist[static_cast<std::size_t>(index)] += 1.0;
    }
  const double n = static_cast<double>(rgb.width()) * rgb.height();
  for (double& h : hist) h /= n;
  return hist;
}

HistogramSceneProvider::HistogramSceneProvider(std::vector<std::string> labels,
                                               std::vector<std::vector<double>> centroids, double temperature)
    : labels_(std::move(labels)), centroids_(std::move(centroids)), temperature_(temperature) {
  if (labels_.empty() || labels_.size() != centroids_.size())
    throw Error(Errc::dimension_mismatch, "one centroid per scene label is required");
  for (const auto& c : centroids_)
    if (c.size() != static_cast<std::size_t>(kHistogramLength))
      throw Error(Errc::dimension_mismatch, "centroid length does not match the colour histogram");
  if (!(temperature_ > 0.0) || !std::isfinite(temperature_)) throw Error(Errc::usage, "temperature must be > 0");
}

HistogramSceneProvider HistogramSceneProvider::fit(std::span<const Frame> frames, std::span<const int> scene_ids,
                                                   std::vector<std::string> labels, double temperature) {
  if (frames.size() != scene_ids.size()) throw Error(Errc::dimension_mismatch, "frame and scene id counts differ");
  const std::size_t m = labels.size();
  std::vector<std::vector<double>> centroids(m, std::vector<double>(kHistogramLength, 0.0));
  std::vector<int> counts(m, 0);
  for (std::size_t i = 0; i < frames.size(); ++i) {
    const int s = scene_ids[i];
    if (s < 0 || static_cast<std::size_t>(s) >= m) throw Error(Errc::out_of_range, "scene id outside the vocabulary");
    const std::vector<double> h = colour_histogram(frames[i]);
    for (int b = 0; b < kHistogramLength; ++b) centroids[static_cast<std::size_t>(s)][static_cast<std::size_t>(b)] += h[static_cast<std::size_t>(b)];
    ++counts[static_cast<std::size_t>(s)];
  }
  for (std::size_t s = 0; s < m; ++s) {
    if (counts[s] == 0) throw Error(Errc::degenerate_input, "scene '" + labels[s] + "' has no training frames");
    for (double& v : centroids[s]) v /= counts[s];
  }
  return HistogramSceneProvider(std::move(labels), std::move(centroids), temperature);
}

SceneDistribution HistogramSceneProvider::scene_probabilities(const std::string&, const Frame& frame) const {
  const std::vector<double> h = colour_histogram(frame);
  std::vector<double> z;
  for (const auto& c : centroids_) {
    double d = 0.0;
    for (int b = 0; b < kHistogramLength; ++b) d += std::abs(h[static_cast<std::size_t>(b)] - c[static_cast<std::size_t>(b)]);
    z.push_back(-d / temperature_);
  }
  SceneDistribution out{action::softmax(z).probabilities};
  out.validate();
  return out;
}

void HistogramSceneProvider::write(const std::filesystem::path& path) const {
  json j;
  j["labels"] = labels_;
  j["centroids"] = centroids_;
  j["temperature"] = temperature_;
  write_text(path, j.dump(2) + "\n");
}

HistogramSceneProvider HistogramSceneProvider::read(const std::filesystem::path& path) {
  const json j = parse_json(read_text(path, Errc::missing_file), "scene model JSON");
  try {
    return HistogramSceneProvider(j.at("labels").get<std::vector<std::string>>(),
                                  j.at("centroids").get<std::vector<std::vector<double>>>(),
                                  j.at("temperature").get<double>());
  } catch (const json::exception& e) {
    throw Error(Errc::malformed_header, std::string("scene model JSON: ") + e.what());
  }
}

FileSceneProvider::FileSceneProvider(std::filesystem::path directory, std::vector<std::string> labels)
    : directory_(std::move(directory)), labels_(std::move(labels)) {
  if (labels_.empty()) throw Error(Errc::usage, "file provider needs a scene label list");
}

SceneDistribution FileSceneProvider::scene_probabilities(const std::string& id, const Frame&) const {
  const std::filesystem::path path = directory_ / (id + ".json");
  std::ifstream in(path);
  if (!in) throw Error(Errc::provider_failure, "no stored scene distribution at " + path.string());
  std::stringstream text;
  text << in.rdbuf();
  return SceneDistribution{action::parse_distribution_json(text.str(), labels_).probabilities};
}

double ScenePriorTable::at(int action, int scene) const {
  if (action < 0 || action >= static_cast<int>(actions.size()) || scene < 0 || scene >= static_cast<int>(scenes.size()))
    throw Error(Errc::out_of_range, "prior table index out of range");
  return probabilities[static_cast<std::size_t>(action) * scenes.size() + static_cast<std::size_t>(scene)];
}

void ScenePriorTable::validate() const {
  const std::size_t cells = actions.size() * scenes.size();
  if (actions.empty() || scenes.empty() || probabilities.size() != cells || counts.size() != cells)
    throw Error(Errc::dimension_mismatch, "prior table shape does not match its labels");
  for (std::size_t a = 0; a < actions.size(); ++a) {
    double sum = 0.0;
    for (std::size_t s = 0; s < scenes.size(); ++s) {
      const double p = probabilities[a * scenes.size() + s];
      if (!std::isfinite(p) || p < 0.0) throw Error(Errc::invalid_distribution, "negative prior entry");
      if (counts[a * scenes.size() + s] < 0) throw Error(Errc::invalid_distribution, "negative prior count");
      sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-6)
      throw Error(Errc::invalid_distribution, "prior row for '" + actions[a] + "' sums to " + std::to_string(sum));
  }
}

ScenePriorTable learn_scene_prior(std::span<const PriorSample> samples, std::vector<std::string> actions,
                                  std::vector<std::string> scenes, PriorMode mode) {
  ScenePriorTable table;
  table.actions = std::move(actions);
  table.scenes = std::move(scenes);
  const std::size_t k = table.actions.size();
  const std::size_t m = table.scenes.size();
  if (k == 0 || m == 0) throw Error(Errc::usage, "action and scene vocabularies must be non-empty");
  table.counts.assign(k * m, 0);
  for (const PriorSample& s : samples) {
    if (s.action < 0 || static_cast<std::size_t>(s.action) >= k) throw Error(Errc::out_of_range, "action id out of range");
    if (s.scene.probabilities.size() != m) throw Error(Errc::dimension_mismatch, "scene distribution length mismatch");
    s.scene.validate();
    ++table.counts[static_cast<std::size_t>(s.action) * m + static_cast<std::size_t>(s.scene.argmax())];
  }
  table.probabilities.assign(k * m, 0.0);
  for (std::size_t a = 0; a < k; ++a) {
    const auto row = table.counts.begin() + static_cast<std::ptrdiff_t>(a * m);
    const int total = std::accumulate(row, row + static_cast<std::ptrdiff_t>(m), 0);
    if (total == 0) throw Error(Errc::degenerate_input, "action '" + table.actions[a] + "' has no samples");
    if (mode == PriorMode::literal) {
      const auto best = static_cast<std::size_t>(std::max_element(row, row + static_cast<std::ptrdiff_t>(m)) - row);
      table.probabilities[a * m + best] = 1.0;
    } else {
      for (std::size_t s = 0; s < m; ++s)
        table.probabilities[a * m + s] = static_cast<double>(table.counts[a * m + s]) / total;
    }
  }
  table.validate();
  return table;
}

std::string prior_to_json(const ScenePriorTable& table) {
  table.validate();
  json j;
  j["actions"] = table.actions;
  j["scenes"] = table.scenes;
  j["probabilities"] = table.probabilities;
  j["counts"] = table.counts;
  return j.dump(2) + "\n";
}

ScenePriorTable prior_from_json(const std::string& text) {
  const json j = parse_json(text, "prior table JSON");
  ScenePriorTable table;
  try {
    table.actions = j.at("actions").get<std::vector<std::string>>();
    table.scenes = j.at("scenes").get<std::vector<std::string>>();
    table.probabilities = j.at("probabilities").get<std::vector<double>>();
    table.counts = j.at("counts").get<std::vector<int>>();
  } catch (const json::exception& e) {
    throw Error(Errc::malformed_header, std::string("prior table JSON: ") + e.what());
  }
  table.validate();
  return table;
}

void write_prior(const ScenePriorTable& table, const std::filesystem::path& path) {
  write_text(path, prior_to_json(table));
}

ScenePriorTable read_prior(const std::filesystem::path& path) {
  return prior_from_json(read_text(path, Errc::missing_file));
}

Posterior posterior_action_given_scene(double p_action, double p_scene, double p_scene_given_action) {
  check_probability(p_action, "P(A)");
  check_probability(p_scene, "P(S)");
  check_probability(p_scene_given_action, "P(S|A)");
  if (p_scene == 0.0) throw Error(Errc::numerical_failure, "P(S) = 0: the posterior is undefined");
  Posterior out;
  out.raw = p_scene_given_action * p_action / p_scene;
  out.clamped = std::clamp(out.raw, 0.0, 1.0);
  return out;
}

AbnormalityDecision abd_decision(double p_action, double p_action_given_scene, double threshold) {
  check_probability(p_action, "P(A)");
  check_probability(p_action_given_scene, "P(A|S)");
  if (!std::isfinite(threshold)) throw Error(Errc::usage, "threshold must be finite");
  AbnormalityDecision d;
  d.p_action = p_action;
  d.p_action_given_scene = p_action_given_scene;
  d.p_action_given_scene_raw = p_action_given_scene;
  d.abd_index = p_action - p_action_given_scene;
  d.threshold = threshold;
  d.abnormal = d.abd_index > threshold;
  return d;
}

AbnormalityDecision decide(const action::ActionDistribution& actions, const SceneDistribution& scene,
                           const ScenePriorTable& prior, double threshold, SceneProbabilityMode mode) {
  actions.validate();
  scene.validate();
  if (actions.probabilities.size() != prior.actions.size())
    throw Error(Errc::dimension_mismatch, "action distribution does not match the prior's actions");
  if (scene.probabilities.size() != prior.scenes.size())
    throw Error(Errc::dimension_mismatch, "scene distribution does not match the prior's scenes");
  const int a = actions.argmax();
  const int s = scene.argmax();
  const double p_action = actions.probabilities[static_cast<std::size_t>(a)];
  double p_scene = scene.max_probability();
  if (mode == SceneProbabilityMode::marginal) {
    p_scene = 0.0;
    for (std::size_t k = 0; k < prior.actions.size(); ++k)
      p_scene += prior.at(static_cast<int>(k), s) * actions.probabilities[k];
    p_scene = std::min(p_scene, 1.0);
  }
  const double p_s_given_a = prior.at(a, s);
  const Posterior post = posterior_action_given_scene(p_action, p_scene, p_s_given_a);
  AbnormalityDecision d = abd_decision(p_action, post.clamped, threshold);
  d.action = a;
  d.scene = s;
  d.p_scene = p_scene;
  d.p_scene_given_action = p_s_given_a;
  d.p_action_given_scene_raw = post.raw;
  return d;
}

double success_rate(std::span<const EvaluationRecord> records) {
  if (records.empty()) throw Error(Errc::degenerate_input, "empty evaluation suite");
  const auto correct = std::count_if(records.begin(), records.end(), [](const EvaluationRecord& r) { return r.correct; });
  return static_cast<double>(correct) / static_cast<double>(records.size());
}

EvaluationResult evaluate_abnormality(std::span<const EvaluationCase> cases, const ScenePriorTable& prior,
                                      double threshold, SceneProbabilityMode mode) {
  if (cases.empty()) throw Error(Errc::degenerate_input, "empty evaluation suite");
  EvaluationResult result;
  for (const EvaluationCase& c : cases) {
    EvaluationRecord r;
    r.id = c.id;
    r.decision = decide(c.actions, c.scene, prior, threshold, mode);
    r.truth_abnormal = c.truth_abnormal;
    r.correct = r.decision.abnormal == c.truth_abnormal;
    result.records.push_back(std::move(r));
  }
  result.success_rate = success_rate(result.records);
  return result;
}

std::string decision_to_json(const AbnormalityDecision& decision, const ScenePriorTable& prior) {
  return decision_json(decision, prior).dump();
}

std::string record_to_json(const EvaluationRecord& record, const ScenePriorTable& prior) {
  json j = decision_json(record.decision, prior);
  j["id"] = record.id;
  j["truth_abnormal"] = record.truth_abnormal;
  j["correct"] = record.correct;
  return j.dump();
}

}  // namespace arp::abnormal
