#include "arp/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <json.hpp>
#include <random>
#include <sstream>

#include "arp/features.hpp"

namespace arp::action {

namespace {

constexpr char kMagic[4] = {'A', 'R', 'P', 'A'};
constexpr std::uint32_t kVersion = 1;
constexpr int kMaxHalvings = 40;

template <typename T>
void put(std::ostream& out, T value) {
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  out.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <typename T>
T get(std::istream& in) {
  unsigned char bytes[sizeof(T)];
  if (!in.read(reinterpret_cast<char*>(bytes), sizeof(T))) throw Error(Errc::truncated, "model file ended early");
  T value;
  std::memcpy(&value, bytes, sizeof(T));
  return value;
}

void normalize_blocks(std::span<float> values, int block) {
  for (std::size_t start = 0; start < values.size(); start += static_cast<std::size_t>(block)) {
    double norm2 = 0.0;
    for (int i = 0; i < block; ++i) norm2 += static_cast<double>(values[start + i]) * values[start + i];
    // blocks whose energy is float noise stay zero
    if (norm2 <= 1e-12) {
      std::fill_n(values.begin() + static_cast<std::ptrdiff_t>(start), block, 0.0f);
      continue;
    }
    const double inv = 1.0 / std::sqrt(norm2);
    for (int i = 0; i < block; ++i) values[start + i] = static_cast<float>(values[start + i] * inv);
  }
}

void check_training_inputs(std::span<const Descriptor> descriptors, std::span<const int> labels, int classes) {
  if (descriptors.empty()) throw Error(Errc::degenerate_input, "no training descriptors");
  if (descriptors.size() != labels.size()) throw Error(Errc::dimension_mismatch, "descriptor and label counts differ");
  const std::size_t dims = descriptors.front().size();
  if (dims == 0) throw Error(Errc::degenerate_input, "empty descriptors");
  for (const Descriptor& d : descriptors) {
    if (d.size() != dims) throw Error(Errc::dimension_mismatch, "descriptors differ in length");
    for (float v : d)
      if (!std::isfinite(v)) throw Error(Errc::numerical_failure, "non-finite descriptor value");
  }
  for (int l : labels)
    if (l < 0 || l >= classes) throw Error(Errc::out_of_range, "label id " + std::to_string(l) + " out of range");
}

std::vector<double> logits(const LinearActionModel& model, const Descriptor& x) {
  std::vector<double> z(model.bias);
  for (int k = 0; k < model.classes(); ++k) {
    const double* row = &model.weights[static_cast<std::size_t>(k) * model.dims];
    double acc = 0.0;
    for (int d = 0; d < model.dims; ++d) acc += row[d] * x[static_cast<std::size_t>(d)];
    z[static_cast<std::size_t>(k)] += acc;
  }
  return z;
}

}  // namespace

void ActionDistribution::validate() const {
  if (probabilities.empty()) throw Error(Errc::invalid_distribution, "empty distribution");
  double sum = 0.0;
  for (double p : probabilities) {
    if (!std::isfinite(p) || p < 0.0 || p > 1.0) throw Error(Errc::invalid_distribution, "probability outside [0,1]");
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-6)
    throw Error(Errc::invalid_distribution, "probabilities sum to " + std::to_string(sum) + ", not 1");
}

int ActionDistribution::argmax() const {
  if (probabilities.empty()) throw Error(Errc::invalid_distribution, "empty distribution");
  return static_cast<int>(std::max_element(probabilities.begin(), probabilities.end()) - probabilities.begin());
}

Descriptor describe_crop(const Frame& spatial_crop, const proposals::FlowStack& flow_stack) {
  if (flow_stack.depth < 1 || static_cast<int>(flow_stack.channels.size()) != 2 * flow_stack.depth)
    throw Error(Errc::dimension_mismatch, "flow stack must hold 2L channels with L >= 1");
  for (const Plane& p : flow_stack.channels)
    if (!p.same_size(flow_stack.channels.front())) throw Error(Errc::dimension_mismatch, "flow stack channels differ in size");

  constexpr int cells = kDescriptorGrid * kDescriptorGrid;
  Descriptor out(kDescriptorLength, 0.0f);
  const auto [gx, gy] = central_gradient(spatial_crop.luma());
  const std::vector<float> hog = features::grid_orientation_histograms(gx, gy, kHogBlock, kDescriptorGrid);
  std::copy(hog.begin(), hog.end(), out.begin());

  constexpr int half = kMbhBlock / 2;
  std::span<float> mbh(out.data() + cells * kHogBlock, static_cast<std::size_t>(cells) * kMbhBlock);
  for (int l = 0; l < flow_stack.depth; ++l) {
    for (int field = 0; field < 2; ++field) {
      const auto [dx, dy] = central_gradient(flow_stack.channels[static_cast<std::size_t>(2 * l + field)]);
      const std::vector<float> h = features::grid_orientation_histograms(dx, dy, half, kDescriptorGrid);
      for (int c = 0; c < cells; ++c)
        for (int b = 0; b < half; ++b)
          mbh[static_cast<std::size_t>(c * kMbhBlock + field * half + b)] += h[static_cast<std::size_t>(c * half + b)];
    }
  }
  normalize_blocks(std::span<float>(out.data(), static_cast<std::size_t>(cells) * kHogBlock), kHogBlock);
  normalize_blocks(mbh, kMbhBlock);
  return out;
}

void LinearActionModel::validate() const {
  if (labels.size() < 2) throw Error(Errc::degenerate_input, "a model needs at least two labels");
  for (std::size_t i = 0; i < labels.size(); ++i)
    for (std::size_t j = i + 1; j < labels.size(); ++j)
      if (labels[i] == labels[j]) throw Error(Errc::usage, "duplicate label '" + labels[i] + "'");
  if (dims < 1 || weights.size() != labels.size() * static_cast<std::size_t>(dims) || bias.size() != labels.size())
    throw Error(Errc::dimension_mismatch, "model parameter shapes do not match its labels and dims");
  for (double v : weights)
    if (!std::isfinite(v)) throw Error(Errc::numerical_failure, "non-finite model weight");
  for (double v : bias)
    if (!std::isfinite(v)) throw Error(Errc::numerical_failure, "non-finite model bias");
}

ActionDistribution softmax(std::span<const double> z) {
  if (z.empty()) throw Error(Errc::invalid_distribution, "softmax of an empty vector");
  const double m = *std::max_element(z.begin(), z.end());
  if (!std::isfinite(m)) throw Error(Errc::numerical_failure, "non-finite logit");
  ActionDistribution out;
  out.probabilities.resize(z.size());
  double sum = 0.0;
  for (std::size_t k = 0; k < z.size(); ++k) sum += out.probabilities[k] = std::exp(z[k] - m);
  for (double& p : out.probabilities) p /= sum;
  return out;
}

LossGradient loss_and_gradient(const LinearActionModel& model, std::span<const Descriptor> descriptors,
                               std::span<const int> labels, double l2) {
  check_training_inputs(descriptors, labels, model.classes());
  if (static_cast<int>(descriptors.front().size()) != model.dims)
    throw Error(Errc::dimension_mismatch, "descriptor length does not match the model");
  const int K = model.classes();
  const int D = model.dims;
  LossGradient g;
  g.weights.assign(model.weights.size(), 0.0);
  g.bias.assign(model.bias.size(), 0.0);
  const double inv_n = 1.0 / static_cast<double>(descriptors.size());
  for (std::size_t n = 0; n < descriptors.size(); ++n) {
    const Descriptor& x = descriptors[n];
    const std::vector<double> z = logits(model, x);
    const double m = *std::max_element(z.begin(), z.end());
    double sum = 0.0;
    for (double v : z) sum += std::exp(v - m);
    const double log_sum = m + std::log(sum);
    const int y = labels[n];
    g.loss += (log_sum - z[static_cast<std::size_t>(y)]) * inv_n;
    for (int k = 0; k < K; ++k) {
      const double residual = (std::exp(z[static_cast<std::size_t>(k)] - log_sum) - (k == y ? 1.0 : 0.0)) * inv_n;
      g.bias[static_cast<std::size_t>(k)] += residual;
      double* row = &g.weights[static_cast<std::size_t>(k) * D];
      for (int d = 0; d < D; ++d) row[d] += residual * x[static_cast<std::size_t>(d)];
    }
  }
  for (std::size_t i = 0; i < model.weights.size(); ++i) {
    g.loss += 0.5 * l2 * model.weights[i] * model.weights[i];
    g.weights[i] += l2 * model.weights[i];
  }
  return g;
}

TrainingResult train_classifier(std::span<const Descriptor> descriptors, std::span<const int> labels,
                                std::vector<std::string> label_names, const TrainParams& params) {
  if (!(params.learning_rate > 0.0) || params.epochs < 0 || !(params.l2 >= 0.0))
    throw Error(Errc::usage, "learning rate must be > 0, epochs >= 0, l2 >= 0");
  const int K = static_cast<int>(label_names.size());
  check_training_inputs(descriptors, labels, K);
  if (std::all_of(labels.begin(), labels.end(), [&](int l) { return l == labels.front(); }))
    throw Error(Errc::degenerate_input, "training data holds a single class");

  TrainingResult result;
  LinearActionModel& model = result.model;
  model.labels = std::move(label_names);
  model.dims = static_cast<int>(descriptors.front().size());
  model.weights.resize(static_cast<std::size_t>(K) * model.dims);
  model.bias.assign(static_cast<std::size_t>(K), 0.0);
  std::mt19937_64 rng(params.seed);
  std::uniform_real_distribution<double> init(-1e-3, 1e-3);
  for (double& w : model.weights) w = init(rng);
  model.validate();

  double step = params.learning_rate;
  LossGradient current = loss_and_gradient(model, descriptors, labels, params.l2);
  result.loss_history.push_back(current.loss);
  for (int epoch = 0; epoch < params.epochs; ++epoch) {
    bool accepted = false;
    for (int attempt = 0; attempt < kMaxHalvings && !accepted; ++attempt) {
      LinearActionModel trial = model;
      for (std::size_t i = 0; i < trial.weights.size(); ++i) trial.weights[i] -= step * current.weights[i];
      for (std::size_t k = 0; k < trial.bias.size(); ++k) trial.bias[k] -= step * current.bias[k];
      LossGradient next = loss_and_gradient(trial, descriptors, labels, params.l2);
      if (next.loss <= current.loss) {
        model = std::move(trial);
        current = std::move(next);
        accepted = true;
      } else {
        step *= 0.5;
      }
    }
    result.loss_history.push_back(current.loss);
    if (!accepted) break;
  }
  // parameters are stored as float32, so round now to make save/load exact
  for (double& w : model.weights) w = static_cast<float>(w);
  for (double& b : model.bias) b = static_cast<float>(b);
  return result;
}

ActionDistribution classify(const Descriptor& descriptor, const LinearActionModel& model) {
  if (static_cast<int>(descriptor.size()) != model.dims)
    throw Error(Errc::dimension_mismatch, "descriptor length " + std::to_string(descriptor.size()) +
                                              " does not match model dims " + std::to_string(model.dims));
  const std::vector<double> z = logits(model, descriptor);
  return softmax(z);
}

ActionDistribution mean_distribution(std::span<const ActionDistribution> frames) {
  if (frames.empty()) throw Error(Errc::degenerate_input, "no per-frame distributions to aggregate");
  ActionDistribution out;
  out.probabilities.assign(frames.front().probabilities.size(), 0.0);
  for (const ActionDistribution& d : frames) {
    if (d.probabilities.size() != out.probabilities.size())
      throw Error(Errc::dimension_mismatch, "per-frame distributions differ in length");
    for (std::size_t k = 0; k < d.probabilities.size(); ++k) out.probabilities[k] += d.probabilities[k];
  }
  for (double& p : out.probabilities) p /= static_cast<double>(frames.size());
  return out;
}

void write_model(const LinearActionModel& model, std::ostream& out) {
  model.validate();
  out.write(kMagic, 4);
  put<std::uint32_t>(out, kVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(model.classes()));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(model.dims));
  for (const std::string& label : model.labels) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(label.size()));
    out.write(label.data(), static_cast<std::streamsize>(label.size()));
  }
  for (double w : model.weights) put<float>(out, static_cast<float>(w));
  for (double b : model.bias) put<float>(out, static_cast<float>(b));
  if (!out) throw Error(Errc::missing_file, "model write failed");
}

LinearActionModel read_model(std::istream& in) {
  char magic[4];
  if (!in.read(magic, 4)) throw Error(Errc::truncated, "model file ended early");
  if (std::memcmp(magic, kMagic, 4) != 0) throw Error(Errc::bad_magic, "not an action model file");
  if (get<std::uint32_t>(in) != kVersion) throw Error(Errc::unsupported_format, "unsupported action model version");
  const auto classes = get<std::uint32_t>(in);
  const auto dims = get<std::uint32_t>(in);
  if (classes < 2 || classes > 100000 || dims < 1 || dims > (1u << 24))
    throw Error(Errc::malformed_header, "implausible model dimensions");
  LinearActionModel model;
  model.dims = static_cast<int>(dims);
  for (std::uint32_t k = 0; k < classes; ++k) {
    const auto len = get<std::uint32_t>(in);
    if (len > 4096) throw Error(Errc::malformed_header, "implausible label length");
    std::string label(len, '\0');
    if (!in.read(label.data(), len)) throw Error(Errc::truncated, "model file ended early");
    model.labels.push_back(std::move(label));
  }
  model.weights.resize(static_cast<std::size_t>(classes) * dims);
  for (double& w : model.weights) w = get<float>(in);
  model.bias.resize(classes);
  for (double& b : model.bias) b = get<float>(in);
  model.validate();
  return model;
}

void write_model(const LinearActionModel& model, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::missing_file, "cannot write " + path.string());
  write_model(model, out);
}

LinearActionModel read_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::missing_file, "cannot open " + path.string());
  return read_model(in);
}

std::vector<Descriptor> describe_sequence(const FrameSequence& frames, std::span<const BoxProposal> boxes,
                                          std::span<const FlowField> flows, const DescriptorParams& params) {
  if (params.stack_depth < 1 || params.crop_side < kDescriptorGrid)
    throw Error(Errc::usage, "stack depth must be >= 1 and crop side >= the descriptor grid");
  const int n = static_cast<int>(frames.size());
  if (n < params.stack_depth + 1)
    throw Error(Errc::sequence_too_short, "need at least " + std::to_string(params.stack_depth + 1) + " frames");
  if (static_cast<int>(boxes.size()) < n - params.stack_depth)
    throw Error(Errc::dimension_mismatch, "one action box per described frame is required");
  std::vector<FlowField> computed;
  if (flows.empty()) {
    for (int t = 0; t + 1 < n; ++t)
      computed.push_back(flow::estimate_flow(frames.frames[static_cast<std::size_t>(t)],
                                             frames.frames[static_cast<std::size_t>(t + 1)], params.flow));
    flows = computed;
  }
  if (static_cast<int>(flows.size()) < n - 1) throw Error(Errc::sequence_too_short, "fewer flows than frame pairs");
  std::vector<Descriptor> out;
  for (int t = 0; t + params.stack_depth < n; ++t) {
    const BoxProposal& box = boxes[static_cast<std::size_t>(t)];
    const Frame crop = proposals::crop_and_resize(frames.frames[static_cast<std::size_t>(t)], box, params.crop_side);
    const auto stack = proposals::stack_flow_crops(flows.subspan(static_cast<std::size_t>(t)), box,
                                                   params.stack_depth, params.crop_side);
    out.push_back(describe_crop(crop, stack));
  }
  return out;
}

LinearModelProvider::LinearModelProvider(LinearActionModel model, DescriptorParams params)
    : model_(std::move(model)), params_(params) {
  model_.validate();
  if (model_.dims != kDescriptorLength)
    throw Error(Errc::dimension_mismatch, "model dims do not match the crop descriptor length");
}

ActionDistribution LinearModelProvider::action_probabilities(const SequenceInput& input) const {
  if (input.frames == nullptr) throw Error(Errc::provider_failure, "no frames given to the linear provider");
  const std::vector<Descriptor> descriptors = describe_sequence(*input.frames, input.boxes, input.flows, params_);
  std::vector<ActionDistribution> per_frame;
  for (const Descriptor& d : descriptors) per_frame.push_back(classify(d, model_));
  ActionDistribution out = mean_distribution(per_frame);
  out.validate();
  return out;
}

FileActionProvider::FileActionProvider(std::filesystem::path directory, std::vector<std::string> labels)
    : directory_(std::move(directory)), labels_(std::move(labels)) {
  if (labels_.empty()) throw Error(Errc::usage, "file provider needs a label list");
}

ActionDistribution FileActionProvider::action_probabilities(const SequenceInput& input) const {
  const std::filesystem::path path = directory_ / (input.id + ".json");
  std::ifstream in(path);
  if (!in) throw Error(Errc::provider_failure, "no stored action distribution at " + path.string());
  std::stringstream text;
  text << in.rdbuf();
  return parse_distribution_json(text.str(), labels_);
}

ActionDistribution parse_distribution_json(const std::string& text, const std::vector<std::string>& labels) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::malformed_header, std::string("distribution JSON: ") + e.what());
  }
  if (!doc.is_object() || !doc.contains("probabilities") || !doc["probabilities"].is_array())
    throw Error(Errc::malformed_header, "distribution JSON needs a 'probabilities' array");
  ActionDistribution out;
  for (const auto& v : doc["probabilities"]) {
    if (!v.is_number()) throw Error(Errc::invalid_distribution, "probabilities must be numbers");
    out.probabilities.push_back(v.get<double>());
  }
  if (doc.contains("labels")) {
    const auto& stored = doc["labels"];
    const bool strings = stored.is_array() && std::all_of(stored.begin(), stored.end(), [](const auto& v) { return v.is_string(); });
    if (!strings || stored.get<std::vector<std::string>>() != labels)
      throw Error(Errc::invalid_distribution, "stored labels do not match the configured vocabulary");
  }
  if (out.probabilities.size() != labels.size())
    throw Error(Errc::invalid_distribution, "stored distribution has " + std::to_string(out.probabilities.size()) +
                                                " entries for " + std::to_string(labels.size()) + " labels");
  out.validate();
  return out;
}

}  // namespace arp::action
