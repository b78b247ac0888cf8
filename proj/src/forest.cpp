#include "arp/forest.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <random>

namespace arp::forest {

namespace {

constexpr int kPad = 24;
constexpr char kMagic[4] = {'A', 'R', 'P', 'F'};
constexpr std::uint32_t kVersion = 1;
constexpr int kDiscretizeSubset = 256;
constexpr int kPowerIterations = 12;

struct CellPair {
  int a;
  int b;
};

const std::array<CellPair, kDiffPairs>& cell_pairs() {
  static const auto pairs = [] {
    std::array<CellPair, kDiffPairs> out{};
    int k = 0;
    for (int a = 0; a < kDiffCells; ++a)
      for (int b = a + 1; b < kDiffCells; ++b) out[static_cast<std::size_t>(k++)] = {a, b};
    return out;
  }();
  return pairs;
}

// ---- binary stream helpers (little endian) ----

template <typename T>
void put(std::ostream& out, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  out.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <typename T>
T get(std::istream& in) {
  T value{};
  unsigned char bytes[sizeof(T)];
  if (!in.read(reinterpret_cast<char*>(bytes), sizeof(T))) throw Error(Errc::truncated, "forest file ended early");
  std::memcpy(&value, bytes, sizeof(T));
  return value;
}

// ---- training ----

class TreeTrainer {
 public:
  TreeTrainer(std::span<const PatchSample> samples, const ForestParams& params, int feature_length,
              std::uint64_t seed)
      : samples_(samples), params_(params), feature_length_(feature_length), rng_(seed) {
    features_per_split_ = params.features_per_split > 0
                              ? std::min(params.features_per_split, feature_length)
                              : std::max(1, static_cast<int>(std::lround(std::sqrt(feature_length))));
  }

  Tree train() {
    std::vector<int> bootstrap(samples_.size());
    std::uniform_int_distribution<int> pick(0, static_cast<int>(samples_.size()) - 1);
    for (int& i : bootstrap) i = pick(rng_);
    tree_.nodes.emplace_back();
    build(0, std::move(bootstrap), 0);
    return std::move(tree_);
  }

 private:
  void make_leaf(std::size_t node, const std::vector<int>& members) {
    SoftMask mean{};
    for (int i : members)
      for (int p = 0; p < kMaskPixels; ++p) mean[static_cast<std::size_t>(p)] += samples_[static_cast<std::size_t>(i)].label_mask[static_cast<std::size_t>(p)];
    const float inv = members.empty() ? 0.0f : 1.0f / static_cast<float>(members.size());
    for (float& v : mean) v *= inv;
    tree_.nodes[node].leaf = static_cast<std::int32_t>(tree_.leaves.size());
    tree_.leaves.push_back(mean);
  }

  bool all_masks_equal(const std::vector<int>& members) const {
    const LabelMask& first = samples_[static_cast<std::size_t>(members.front())].label_mask;
    return std::all_of(members.begin(), members.end(),
                       [&](int i) { return samples_[static_cast<std::size_t>(i)].label_mask == first; });
  }

  // Maps structured labels to two pseudo-classes: pixel-pair codes projected
  // on their principal direction and split at the median. Empty on failure.
  std::vector<std::uint8_t> discretize(const std::vector<int>& members) {
    const int m = params_.pixel_pairs_for_projection;
    std::vector<std::pair<int, int>> pairs(static_cast<std::size_t>(m));
    std::uniform_int_distribution<int> pixel(0, kMaskPixels - 1);
    for (auto& [a, b] : pairs) {
      a = pixel(rng_);
      do b = pixel(rng_);
      while (b == a);
    }
    const std::size_t dim = 2 * static_cast<std::size_t>(m);
    auto code = [&](int sample, std::vector<float>& z) {
      const LabelMask& mask = samples_[static_cast<std::size_t>(sample)].label_mask;
      for (int k = 0; k < m; ++k) {
        const auto [a, b] = pairs[static_cast<std::size_t>(k)];
        z[static_cast<std::size_t>(k)] = mask[static_cast<std::size_t>(a)] != mask[static_cast<std::size_t>(b)] ? 1.0f : 0.0f;
        z[static_cast<std::size_t>(m + k)] = mask[static_cast<std::size_t>(a)];
      }
    };

    std::vector<int> subset = members;
    if (subset.size() > kDiscretizeSubset) {
      for (std::size_t i = 0; i < kDiscretizeSubset; ++i) {
        std::uniform_int_distribution<std::size_t> j(i, subset.size() - 1);
        std::swap(subset[i], subset[j(rng_)]);
      }
      subset.resize(kDiscretizeSubset);
    }
    std::vector<std::vector<float>> codes(subset.size(), std::vector<float>(dim));
    std::vector<double> mean(dim, 0.0);
    for (std::size_t i = 0; i < subset.size(); ++i) {
      code(subset[i], codes[i]);
      for (std::size_t d = 0; d < dim; ++d) mean[d] += codes[i][d];
    }
    for (double& v : mean) v /= static_cast<double>(subset.size());

    std::vector<double> dir(dim, 1.0 / std::sqrt(static_cast<double>(dim)));
    for (std::size_t d = 0; d < dim; ++d) dir[d] += 1e-3 * static_cast<double>(d % 7);
    std::vector<double> next(dim);
    for (int it = 0; it < kPowerIterations; ++it) {
      std::fill(next.begin(), next.end(), 0.0);
      for (const auto& z : codes) {
        double dot = 0.0;
        for (std::size_t d = 0; d < dim; ++d) dot += (z[d] - mean[d]) * dir[d];
        for (std::size_t d = 0; d < dim; ++d) next[d] += dot * (z[d] - mean[d]);
      }
      const double norm = std::sqrt(std::inner_product(next.begin(), next.end(), next.begin(), 0.0));
      if (norm < 1e-12) return {};
      for (std::size_t d = 0; d < dim; ++d) dir[d] = next[d] / norm;
    }

    std::vector<double> proj(members.size());
    std::vector<float> z(dim);
    for (std::size_t i = 0; i < members.size(); ++i) {
      code(members[i], z);
      double dot = 0.0;
      for (std::size_t d = 0; d < dim; ++d) dot += (z[d] - mean[d]) * dir[d];
      proj[i] = dot;
    }
    std::vector<double> sorted = proj;
    auto mid = sorted.begin() + static_cast<std::ptrdiff_t>(sorted.size() / 2);
    std::nth_element(sorted.begin(), mid, sorted.end());
    const double median = *mid;
    std::vector<std::uint8_t> labels(members.size());
    std::size_t ones = 0;
    for (std::size_t i = 0; i < proj.size(); ++i) ones += labels[i] = proj[i] > median ? 1 : 0;
    if (ones == 0) {
      ones = 0;
      for (std::size_t i = 0; i < proj.size(); ++i) ones += labels[i] = proj[i] >= median ? 1 : 0;
    }
    if (ones == 0 || ones == labels.size()) return {};
    return labels;
  }

  struct Split {
    double impurity = std::numeric_limits<double>::infinity();
    int feature = -1;
    float threshold = 0.0f;
  };

  static double gini(double ones, double total) {
    if (total <= 0.0) return 0.0;
    const double p = ones / total;
    return 2.0 * p * (1.0 - p);
  }

  Split best_split(const std::vector<int>& members, const std::vector<std::uint8_t>& labels) {
    std::uniform_int_distribution<int> feature(0, feature_length_ - 1);
    std::vector<int> candidates(static_cast<std::size_t>(features_per_split_));
    for (int& f : candidates) f = feature(rng_);

    const double n = static_cast<double>(members.size());
    const double total_ones = std::accumulate(labels.begin(), labels.end(), 0.0);
    const int min_leaf = params_.min_samples_leaf;
    Split best;
    std::vector<std::pair<float, std::uint8_t>> values(members.size());
    for (int f : candidates) {
      for (std::size_t i = 0; i < members.size(); ++i)
        values[i] = {samples_[static_cast<std::size_t>(members[i])].features[static_cast<std::size_t>(f)], labels[i]};
      std::sort(values.begin(), values.end());
      double left_ones = 0.0;
      for (std::size_t i = 0; i + 1 < values.size(); ++i) {
        left_ones += values[i].second;
        const int left_n = static_cast<int>(i + 1);
        const int right_n = static_cast<int>(values.size()) - left_n;
        if (left_n < min_leaf || right_n < min_leaf) continue;
        if (!(values[i].first < values[i + 1].first)) continue;
        const double impurity = left_n * gini(left_ones, left_n) + right_n * gini(total_ones - left_ones, right_n);
        float threshold = values[i].first + 0.5f * (values[i + 1].first - values[i].first);
        if (!(threshold > values[i].first)) threshold = values[i + 1].first;
        const bool better =
            impurity < best.impurity - 1e-12 ||
            (std::abs(impurity - best.impurity) <= 1e-12 &&
             (f < best.feature || (f == best.feature && threshold < best.threshold)));
        if (better) best = Split{impurity, f, threshold};
      }
    }
    if (best.feature >= 0 && !(best.impurity < n * gini(total_ones, n) - 1e-12)) best.feature = -1;
    return best;
  }

  void build(std::size_t node, std::vector<int> members, int depth) {
    if (depth >= params_.max_depth || static_cast<int>(members.size()) < 2 * params_.min_samples_leaf ||
        all_masks_equal(members)) {
      make_leaf(node, members);
      return;
    }
    const std::vector<std::uint8_t> labels = discretize(members);
    if (labels.empty()) {
      make_leaf(node, members);
      return;
    }
    const Split split = best_split(members, labels);
    if (split.feature < 0) {
      make_leaf(node, members);
      return;
    }
    std::vector<int> left;
    std::vector<int> right;
    for (int i : members) {
      const float v = samples_[static_cast<std::size_t>(i)].features[static_cast<std::size_t>(split.feature)];
      (v < split.threshold ? left : right).push_back(i);
    }
    const auto left_id = static_cast<std::int32_t>(tree_.nodes.size());
    tree_.nodes.emplace_back();
    const auto right_id = static_cast<std::int32_t>(tree_.nodes.size());
    tree_.nodes.emplace_back();
    tree_.nodes[node].feature = split.feature;
    tree_.nodes[node].threshold = split.threshold;
    tree_.nodes[node].left = left_id;
    tree_.nodes[node].right = right_id;
    members.clear();
    members.shrink_to_fit();
    build(static_cast<std::size_t>(left_id), std::move(left), depth + 1);
    build(static_cast<std::size_t>(right_id), std::move(right), depth + 1);
  }

  std::span<const PatchSample> samples_;
  const ForestParams& params_;
  int feature_length_;
  int features_per_split_ = 1;
  std::mt19937_64 rng_;
  Tree tree_;
};

void validate_tree(const Tree& tree, int feature_length) {
  if (tree.nodes.empty()) throw Error(Errc::malformed_header, "forest tree without nodes");
  const auto n = static_cast<std::int32_t>(tree.nodes.size());
  for (const Node& node : tree.nodes) {
    if (node.is_leaf()) {
      if (node.leaf >= static_cast<std::int32_t>(tree.leaves.size()))
        throw Error(Errc::malformed_header, "forest leaf index out of range");
    } else if (node.feature < 0 || node.feature >= feature_length || node.left <= 0 || node.left >= n ||
               node.right <= 0 || node.right >= n) {
      throw Error(Errc::malformed_header, "forest node references out of range");
    }
  }
  for (const SoftMask& leaf : tree.leaves)
    for (float v : leaf)
      if (!(v >= 0.0f && v <= 1.0f)) throw Error(Errc::out_of_range, "forest leaf mask outside [0,1]");
}

}  // namespace

bool PatchSample::has_boundary() const noexcept {
  return std::any_of(label_mask.begin(), label_mask.end(), [](std::uint8_t v) { return v != 0; });
}

void ForestParams::validate() const {
  if (tree_count < 1 || max_depth < 1 || min_samples_leaf < 1 || features_per_split < 0 ||
      pixel_pairs_for_projection < 1 || stride < 1)
    throw Error(Errc::usage, "forest parameters must be positive");
}

int Tree::depth() const {
  // nodes are appended parent-before-children, so one forward pass suffices
  std::vector<int> level(nodes.size(), 0);
  int deepest = 0;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    deepest = std::max(deepest, level[i]);
    if (!nodes[i].is_leaf()) {
      level[static_cast<std::size_t>(nodes[i].left)] = level[i] + 1;
      level[static_cast<std::size_t>(nodes[i].right)] = level[i] + 1;
    }
  }
  return deepest;
}

bool operator==(const BoundaryForest& a, const BoundaryForest& b) {
  if (a.feature_length != b.feature_length || a.trees.size() != b.trees.size()) return false;
  for (std::size_t t = 0; t < a.trees.size(); ++t) {
    const Tree& x = a.trees[t];
    const Tree& y = b.trees[t];
    if (x.nodes.size() != y.nodes.size() || x.leaves != y.leaves) return false;
    for (std::size_t i = 0; i < x.nodes.size(); ++i) {
      const Node& p = x.nodes[i];
      const Node& q = y.nodes[i];
      if (p.feature != q.feature || std::memcmp(&p.threshold, &q.threshold, sizeof(float)) != 0 ||
          p.left != q.left || p.right != q.right || p.leaf != q.leaf)
        return false;
    }
  }
  return true;
}

PatchFeatureSource::PatchFeatureSource(const ChannelMap& channels)
    : width_(channels.width()), height_(channels.height()), channels_(channels.channel_count()),
      padded_width_(channels.width() + 2 * kPad) {
  const int pw = padded_width_;
  const int ph = height_ + 2 * kPad;
  integrals_.reserve(static_cast<std::size_t>(channels_));
  for (int c = 0; c < channels_; ++c) {
    const Plane& plane = channels.channel(c);
    std::vector<double> integral(static_cast<std::size_t>(pw + 1) * (ph + 1), 0.0);
    for (int y = 0; y < ph; ++y) {
      double row = 0.0;
      for (int x = 0; x < pw; ++x) {
        row += plane.clamped(x - kPad, y - kPad);
        integral[static_cast<std::size_t>(y + 1) * (pw + 1) + (x + 1)] =
            integral[static_cast<std::size_t>(y) * (pw + 1) + (x + 1)] + row;
      }
    }
    integrals_.push_back(std::move(integral));
  }
}

double PatchFeatureSource::block_sum(int channel, int x0, int y0, int size) const {
  const int stride = padded_width_ + 1;
  const int ax = std::clamp(x0 + kPad, 0, padded_width_ - size);
  const int ay = std::clamp(y0 + kPad, 0, height_ + 2 * kPad - size);
  const auto& I = integrals_[static_cast<std::size_t>(channel)];
  const auto at = [&](int x, int y) { return I[static_cast<std::size_t>(y) * stride + x]; };
  return at(ax + size, ay + size) - at(ax, ay + size) - at(ax + size, ay) + at(ax, ay);
}

float PatchFeatureSource::feature(int x, int y, int index) const {
  const int channel = index / kFeaturesPerChannel;
  const int local = index % kFeaturesPerChannel;
  // patch top-left relative to the label-mask top-left
  const int px = x - (kPatchSize - kMaskSize) / 2;
  const int py = y - (kPatchSize - kMaskSize) / 2;
  if (local < kShrunkSide * kShrunkSide) {
    const int i = local % kShrunkSide;
    const int j = local / kShrunkSide;
    return static_cast<float>(block_sum(channel, px + kShrink * i, py + kShrink * j, kShrink) /
                              (kShrink * kShrink));
  }
  constexpr int cell = kPatchSize / kDiffGrid;
  const CellPair pair = cell_pairs()[static_cast<std::size_t>(local - kShrunkSide * kShrunkSide)];
  const auto mean = [&](int c) {
    return block_sum(channel, px + cell * (c % kDiffGrid), py + cell * (c / kDiffGrid), cell) / (cell * cell);
  };
  return static_cast<float>(mean(pair.a) - mean(pair.b));
}

void PatchFeatureSource::features(int x, int y, std::span<float> out) const {
  if (static_cast<int>(out.size()) != feature_length())
    throw Error(Errc::dimension_mismatch, "feature buffer has the wrong length");
  for (int i = 0; i < feature_length(); ++i) out[static_cast<std::size_t>(i)] = feature(x, y, i);
}

std::vector<PatchSample> extract_patch_samples(const features::FeatureStack& stack, const Plane& truth_boundary,
                                               const ExtractionParams& params) {
  if (truth_boundary.width() != stack.width() || truth_boundary.height() != stack.height())
    throw Error(Errc::dimension_mismatch, "truth mask and feature stack differ in size");
  if (params.stride < 1) throw Error(Errc::usage, "extraction stride must be >= 1");

  struct Site {
    int x;
    int y;
    LabelMask mask;
    bool positive;
  };
  std::vector<Site> positives;
  std::vector<Site> negatives;
  for (int y = 0; y < stack.height(); y += params.stride) {
    for (int x = 0; x < stack.width(); x += params.stride) {
      Site site{x, y, {}, false};
      for (int j = 0; j < kMaskSize; ++j)
        for (int i = 0; i < kMaskSize; ++i) {
          const bool on = truth_boundary.clamped(x + i, y + j) > 0.5f;
          site.mask[static_cast<std::size_t>(j * kMaskSize + i)] = on ? 1 : 0;
          site.positive = site.positive || on;
        }
      (site.positive ? positives : negatives).push_back(site);
    }
  }

  std::mt19937_64 rng(params.rng_seed);
  auto subsample = [&rng](std::vector<Site>& sites, std::size_t keep) {
    if (sites.size() <= keep) return;
    std::vector<std::size_t> order(sites.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    order.resize(keep);
    std::sort(order.begin(), order.end());
    std::vector<Site> kept;
    for (std::size_t i : order) kept.push_back(sites[i]);
    sites = std::move(kept);
  };

  if (!positives.empty() && params.min_positive_fraction > 0.0) {
    const double f = std::min(params.min_positive_fraction, 1.0);
    const auto max_negatives =
        static_cast<std::size_t>(std::floor(static_cast<double>(positives.size()) * (1.0 - f) / f));
    subsample(negatives, max_negatives);
  }
  if (params.max_samples > 0) {
    const auto cap = static_cast<std::size_t>(params.max_samples);
    if (positives.size() + negatives.size() > cap) {
      const std::size_t keep_pos = std::min(positives.size(), std::max<std::size_t>(cap / 2, cap - negatives.size()));
      subsample(positives, keep_pos);
      subsample(negatives, cap - positives.size());
    }
  }

  const PatchFeatureSource source(stack.combined);
  std::vector<PatchSample> samples;
  samples.reserve(positives.size() + negatives.size());
  for (const auto* group : {&positives, &negatives}) {
    for (const Site& site : *group) {
      PatchSample s;
      s.features.resize(static_cast<std::size_t>(source.feature_length()));
      source.features(site.x, site.y, s.features);
      s.label_mask = site.mask;
      s.x = site.x;
      s.y = site.y;
      samples.push_back(std::move(s));
    }
  }
  return samples;
}

BoundaryForest train_forest(std::span<const PatchSample> samples, const ForestParams& params) {
  params.validate();
  if (samples.empty()) throw Error(Errc::degenerate_input, "no training samples");
  const std::size_t length = samples.front().features.size();
  if (length == 0) throw Error(Errc::degenerate_input, "training samples have no features");
  for (const PatchSample& s : samples) {
    if (s.features.size() != length) throw Error(Errc::dimension_mismatch, "training samples differ in feature length");
    for (std::uint8_t v : s.label_mask)
      if (v > 1) throw Error(Errc::out_of_range, "label masks must be binary");
  }
  BoundaryForest forest;
  forest.params = params;
  forest.feature_length = static_cast<int>(length);
  for (int t = 0; t < params.tree_count; ++t) {
    std::seed_seq seq{static_cast<std::uint32_t>(params.rng_seed), static_cast<std::uint32_t>(params.rng_seed >> 32),
                      static_cast<std::uint32_t>(t)};
    std::mt19937_64 seeder(seq);
    TreeTrainer trainer(samples, params, forest.feature_length, seeder());
    forest.trees.push_back(trainer.train());
  }
  return forest;
}

BoundaryMap predict_boundary(const PatchFeatureSource& source, const BoundaryForest& forest) {
  if (source.feature_length() != forest.feature_length)
    throw Error(Errc::dimension_mismatch, "feature stack does not match the forest's feature layout");
  if (forest.trees.empty()) throw Error(Errc::degenerate_input, "forest has no trees");
  const int w = source.width();
  const int h = source.height();
  const int stride = std::max(1, forest.params.stride);
  std::vector<double> sum(static_cast<std::size_t>(w) * h, 0.0);
  std::vector<int> count(static_cast<std::size_t>(w) * h, 0);
  for (int y = 0; y < h; y += stride) {
    for (int x = 0; x < w; x += stride) {
      for (const Tree& tree : forest.trees) {
        const SoftMask& leaf = tree.evaluate([&](int f) { return source.feature(x, y, f); });
        for (int j = 0; j < kMaskSize && y + j < h; ++j)
          for (int i = 0; i < kMaskSize && x + i < w; ++i) {
            const std::size_t p = static_cast<std::size_t>(y + j) * w + (x + i);
            sum[p] += leaf[static_cast<std::size_t>(j * kMaskSize + i)];
            ++count[p];
          }
      }
    }
  }
  Plane out(w, h);
  for (std::size_t p = 0; p < sum.size(); ++p)
    out.data()[p] = count[p] > 0 ? std::clamp(static_cast<float>(sum[p] / count[p]), 0.0f, 1.0f) : 0.0f;
  return BoundaryMap(std::move(out));
}

BoundaryMap predict_boundary(const features::FeatureStack& stack, const BoundaryForest& forest) {
  return predict_boundary(PatchFeatureSource(stack.combined), forest);
}

void write_forest(const BoundaryForest& forest, std::ostream& out) {
  out.write(kMagic, 4);
  put<std::uint32_t>(out, kVersion);
  const ForestParams& p = forest.params;
  put<std::int32_t>(out, p.tree_count);
  put<std::int32_t>(out, p.max_depth);
  put<std::int32_t>(out, p.min_samples_leaf);
  put<std::int32_t>(out, p.features_per_split);
  put<std::int32_t>(out, p.pixel_pairs_for_projection);
  put<std::int32_t>(out, p.stride);
  put<std::uint64_t>(out, p.rng_seed);
  put<std::int32_t>(out, forest.feature_length);
  put<std::int32_t>(out, kMaskSize);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(forest.trees.size()));
  for (const Tree& tree : forest.trees) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(tree.nodes.size()));
    for (const Node& n : tree.nodes) {
      put<std::int32_t>(out, n.feature);
      put<float>(out, n.threshold);
      put<std::int32_t>(out, n.left);
      put<std::int32_t>(out, n.right);
      put<std::int32_t>(out, n.leaf);
    }
    put<std::uint32_t>(out, static_cast<std::uint32_t>(tree.leaves.size()));
    for (const SoftMask& leaf : tree.leaves)
      for (float v : leaf) put<float>(out, v);
  }
  if (!out) throw Error(Errc::missing_file, "forest write failed");
}

BoundaryForest read_forest(std::istream& in) {
  char magic[4];
  if (!in.read(magic, 4)) throw Error(Errc::truncated, "forest file ended early");
  if (std::memcmp(magic, kMagic, 4) != 0) throw Error(Errc::bad_magic, "not a boundary forest file");
  const auto version = get<std::uint32_t>(in);
  if (version != kVersion) throw Error(Errc::unsupported_format, "unsupported forest version " + std::to_string(version));
  BoundaryForest forest;
  ForestParams& p = forest.params;
  p.tree_count = get<std::int32_t>(in);
  p.max_depth = get<std::int32_t>(in);
  p.min_samples_leaf = get<std::int32_t>(in);
  p.features_per_split = get<std::int32_t>(in);
  p.pixel_pairs_for_projection = get<std::int32_t>(in);
  p.stride = get<std::int32_t>(in);
  p.rng_seed = get<std::uint64_t>(in);
  forest.feature_length = get<std::int32_t>(in);
  if (get<std::int32_t>(in) != kMaskSize) throw Error(Errc::unsupported_format, "forest mask size mismatch");
  if (forest.feature_length <= 0) throw Error(Errc::malformed_header, "forest feature length must be positive");
  const auto trees = get<std::uint32_t>(in);
  if (trees > 4096) throw Error(Errc::malformed_header, "implausible tree count");
  for (std::uint32_t t = 0; t < trees; ++t) {
    Tree tree;
    const auto nodes = get<std::uint32_t>(in);
    if (nodes == 0 || nodes > (1u << 24)) throw Error(Errc::malformed_header, "implausible node count");
    tree.nodes.resize(nodes);
    for (Node& n : tree.nodes) {
      n.feature = get<std::int32_t>(in);
      n.threshold = get<float>(in);
      n.left = get<std::int32_t>(in);
      n.right = get<std::int32_t>(in);
      n.leaf = get<std::int32_t>(in);
    }
    const auto leaves = get<std::uint32_t>(in);
    if (leaves > nodes) throw Error(Errc::malformed_header, "more leaves than nodes");
    tree.leaves.resize(leaves);
    for (SoftMask& leaf : tree.leaves)
      for (float& v : leaf) v = get<float>(in);
    validate_tree(tree, forest.feature_length);
    forest.trees.push_back(std::move(tree));
  }
  return forest;
}

void write_forest(const BoundaryForest& forest, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::missing_file, "cannot write " + path.string());
  write_forest(forest, out);
}

BoundaryForest read_forest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::missing_file, "cannot open " + path.string());
  return read_forest(in);
}

FMeasure boundary_f_measure(std::span<const BoundaryMap> predicted, std::span<const Plane> truth, double tolerance) {
  if (predicted.size() != truth.size()) throw Error(Errc::dimension_mismatch, "prediction and truth counts differ");
  const int r = static_cast<int>(std::floor(tolerance));
  const double r2 = tolerance * tolerance;
  struct Prepared {
    std::vector<float> values;      // prediction
    std::vector<std::uint8_t> near_truth;
    std::vector<float> near_max;    // max prediction within tolerance
    std::vector<std::uint8_t> truth;
  };
  std::vector<Prepared> prepared;
  for (std::size_t k = 0; k < predicted.size(); ++k) {
    const Plane& pv = predicted[k].values();
    const Plane& tv = truth[k];
    if (!pv.same_size(tv)) throw Error(Errc::dimension_mismatch, "prediction and truth differ in size");
    const int w = pv.width();
    const int h = pv.height();
    Prepared p;
    p.values.assign(pv.data().begin(), pv.data().end());
    p.near_truth.assign(pv.size(), 0);
    p.near_max.assign(pv.size(), 0.0f);
    p.truth.assign(pv.size(), 0);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const std::size_t i = static_cast<std::size_t>(y) * w + x;
        p.truth[i] = tv.at(x, y) > 0.5f;
        for (int dy = -r; dy <= r; ++dy)
          for (int dx = -r; dx <= r; ++dx) {
            if (dx * dx + dy * dy > r2) continue;
            const int xx = x + dx;
            const int yy = y + dy;
            if (xx < 0 || yy < 0 || xx >= w || yy >= h) continue;
            if (tv.at(xx, yy) > 0.5f) p.near_truth[i] = 1;
            p.near_max[i] = std::max(p.near_max[i], pv.at(xx, yy));
          }
      }
    prepared.push_back(std::move(p));
  }

  FMeasure best;
  for (int step = 1; step < 100; ++step) {
    const float t = static_cast<float>(step) / 100.0f;
    double pred = 0.0;
    double pred_ok = 0.0;
    double truth_total = 0.0;
    double truth_ok = 0.0;
    for (const Prepared& p : prepared) {
      for (std::size_t i = 0; i < p.values.size(); ++i) {
        if (p.values[i] >= t) {
          ++pred;
          pred_ok += p.near_truth[i];
        }
        if (p.truth[i]) {
          ++truth_total;
          truth_ok += p.near_max[i] >= t ? 1.0 : 0.0;
        }
      }
    }
    const double precision = pred > 0.0 ? pred_ok / pred : 0.0;
    const double recall = truth_total > 0.0 ? truth_ok / truth_total : 0.0;
    const double f = precision + recall > 0.0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
    if (f > best.f) best = FMeasure{f, precision, recall, t};
  }
  return best;
}

}  // namespace arp::forest
