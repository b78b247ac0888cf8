#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "arp/image.hpp"
#include "arp/optical_flow.hpp"
#include "arp/proposals.hpp"

namespace arp::action {

inline constexpr int kDescriptorGrid = 4;
inline constexpr int kHogBlock = 8;
/// 4 orientation bins for each of u and v.
inline constexpr int kMbhBlock = 8;
inline constexpr int kDescriptorLength =
    kDescriptorGrid * kDescriptorGrid * kHogBlock + kDescriptorGrid * kDescriptorGrid * kMbhBlock;

/// Probability vector over action labels.
struct ActionDistribution {
  std::vector<double> probabilities;

  /// Throws invalid_distribution unless entries are in [0,1] and sum to 1 within 1e-6.
  void validate() const;
  /// Index of the largest entry; lowest index on ties.
  int argmax() const;
};

using Descriptor = std::vector<float>;

/// HOG of the crop's luma over a 4x4 grid followed by MBH of the flow stack
/// over the same grid (histograms summed over the stacked flows). Every
/// 8-value cell is scaled to unit L2 norm, or left zero.
Descriptor describe_crop(const Frame& spatial_crop, const proposals::FlowStack& flow_stack);

struct TrainParams {
  double learning_rate = 0.1;
  int epochs = 200;
  double l2 = 1e-4;
  std::uint64_t seed = 1;
};

/// Multinomial logistic regression: logits = W x + b.
struct LinearActionModel {
  std::vector<std::string> labels;
  int dims = 0;
  /// labels.size() x dims, row-major.
  std::vector<double> weights;
  std::vector<double> bias;

  int classes() const noexcept { return static_cast<int>(labels.size()); }
  void validate() const;
  friend bool operator==(const LinearActionModel&, const LinearActionModel&) = default;
};

struct LossGradient {
  double loss = 0.0;
  std::vector<double> weights;
  std::vector<double> bias;
};

/// Mean cross-entropy plus 0.5 * l2 * ||W||^2, with its analytic gradient.
LossGradient loss_and_gradient(const LinearActionModel& model, std::span<const Descriptor> descriptors,
                               std::span<const int> labels, double l2);

struct TrainingResult {
  LinearActionModel model;
  /// Loss before the first epoch followed by the loss after each epoch.
  std::vector<double> loss_history;
};

/// Full-batch gradient descent; a step that would raise the loss is retried
/// with half the step size, so the recorded loss never increases.
TrainingResult train_classifier(std::span<const Descriptor> descriptors, std::span<const int> labels,
                                std::vector<std::string> label_names, const TrainParams& params = {});

ActionDistribution softmax(std::span<const double> logits);
ActionDistribution classify(const Descriptor& descriptor, const LinearActionModel& model);

/// Per-sequence prediction: elementwise mean of per-frame distributions.
ActionDistribution mean_distribution(std::span<const ActionDistribution> frames);

void write_model(const LinearActionModel& model, std::ostream& out);
LinearActionModel read_model(std::istream& in);
void write_model(const LinearActionModel& model, const std::filesystem::path& path);
LinearActionModel read_model(const std::filesystem::path& path);

/// Sequence handed to a provider: frames plus one action box per frame.
struct SequenceInput {
  std::string id;
  const FrameSequence* frames = nullptr;
  std::span<const BoxProposal> boxes;
  /// Optional forward flows between consecutive frames; computed when empty.
  std::span<const FlowField> flows;
};

class ActionProvider {
 public:
  virtual ~ActionProvider() = default;
  virtual const std::vector<std::string>& labels() const = 0;
  /// Throws provider_failure or invalid_distribution; never fabricates a result.
  virtual ActionDistribution action_probabilities(const SequenceInput& input) const = 0;
};

struct DescriptorParams {
  /// Side of the square crop handed to the descriptor.
  int crop_side = 224;
  /// Flows stacked per frame.
  int stack_depth = 1;
  flow::FlowParams flow;
};

/// Descriptors of frames 0..n-2 of a sequence: frame t cropped at boxes[t],
/// flows t..t+L-1 cropped at the same box.
std::vector<Descriptor> describe_sequence(const FrameSequence& frames, std::span<const BoxProposal> boxes,
                                          std::span<const FlowField> flows, const DescriptorParams& params);

class LinearModelProvider final : public ActionProvider {
 public:
  LinearModelProvider(LinearActionModel model, DescriptorParams params);
  const std::vector<std::string>& labels() const override { return model_.labels; }
  ActionDistribution action_probabilities(const SequenceInput& input) const override;

 private:
  LinearActionModel model_;
  DescriptorParams params_;
};

/// Reads <directory>/<id>.json holding {"labels": [...], "probabilities": [...]}.
class FileActionProvider final : public ActionProvider {
 public:
  FileActionProvider(std::filesystem::path directory, std::vector<std::string> labels);
  const std::vector<std::string>& labels() const override { return labels_; }
  ActionDistribution action_probabilities(const SequenceInput& input) const override;

 private:
  std::filesystem::path directory_;
  std::vector<std::string> labels_;
};

/// Parses one stored distribution and checks it against the expected labels.
ActionDistribution parse_distribution_json(const std::string& text, const std::vector<std::string>& labels);

}  // namespace arp::action
