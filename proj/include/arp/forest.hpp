#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

#include "arp/features.hpp"
#include "arp/image.hpp"

namespace arp::forest {

/// Input patch side in pixels, sampled at half resolution.
inline constexpr int kPatchSize = 32;
inline constexpr int kShrink = 2;
inline constexpr int kShrunkSide = kPatchSize / kShrink;
/// Predicted label mask side; the mask is centred on the patch.
inline constexpr int kMaskSize = 16;
inline constexpr int kMaskPixels = kMaskSize * kMaskSize;
/// Cells per side of the grid whose pairwise mean differences are features.
inline constexpr int kDiffGrid = 4;
inline constexpr int kDiffCells = kDiffGrid * kDiffGrid;
inline constexpr int kDiffPairs = kDiffCells * (kDiffCells - 1) / 2;
inline constexpr int kFeaturesPerChannel = kShrunkSide * kShrunkSide + kDiffPairs;

inline constexpr int feature_length(int channels) { return channels * kFeaturesPerChannel; }

using LabelMask = std::array<std::uint8_t, kMaskPixels>;
using SoftMask = std::array<float, kMaskPixels>;

struct PatchSample {
  std::vector<float> features;
  LabelMask label_mask{};
  /// Top-left of the label mask in the source stack.
  int x = 0;
  int y = 0;

  bool has_boundary() const noexcept;
};

struct ForestParams {
  int tree_count = 8;
  int max_depth = 16;
  int min_samples_leaf = 8;
  /// 0 selects sqrt(feature length).
  int features_per_split = 0;
  int pixel_pairs_for_projection = 256;
  /// Grid step between predicted patches.
  int stride = 2;
  std::uint64_t rng_seed = 1;

  void validate() const;
};

struct ExtractionParams {
  int stride = 8;
  /// Minimum share of retained samples whose label mask contains boundary.
  double min_positive_fraction = 0.25;
  /// Cap on retained samples per stack after balancing (0 = unlimited).
  int max_samples = 0;
  std::uint64_t rng_seed = 1;
};

/// Lazily evaluated patch features over one feature stack: clamp-to-edge
/// box sums come from integral images of border-padded channels.
class PatchFeatureSource {
 public:
  explicit PatchFeatureSource(const ChannelMap& channels);

  int channel_count() const noexcept { return channels_; }
  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  int feature_length() const noexcept { return forest::feature_length(channels_); }

  /// Feature `index` of the patch whose label mask has top-left (x, y).
  float feature(int x, int y, int index) const;
  void features(int x, int y, std::span<float> out) const;

 private:
  double block_sum(int channel, int x0, int y0, int size) const;

  int width_;
  int height_;
  int channels_;
  int padded_width_;
  std::vector<std::vector<double>> integrals_;
};

/// Regular-grid samples with label masks cut from the truth mask, negatives
/// subsampled so the positive share reaches min_positive_fraction when possible.
std::vector<PatchSample> extract_patch_samples(const features::FeatureStack& stack, const Plane& truth_boundary,
                                               const ExtractionParams& params = {});

struct Node {
  std::int32_t feature = -1;
  float threshold = 0.0f;
  std::int32_t left = -1;
  std::int32_t right = -1;
  std::int32_t leaf = -1;

  bool is_leaf() const noexcept { return leaf >= 0; }
};

struct Tree {
  std::vector<Node> nodes;
  std::vector<SoftMask> leaves;

  /// Leaf reached by a sample; `value(i)` returns feature i.
  template <typename FeatureFn>
  const SoftMask& evaluate(FeatureFn&& value) const {
    std::size_t n = 0;
    while (!nodes[n].is_leaf())
      n = static_cast<std::size_t>(value(nodes[n].feature) < nodes[n].threshold ? nodes[n].left : nodes[n].right);
    return leaves[static_cast<std::size_t>(nodes[n].leaf)];
  }
  int depth() const;
};

struct BoundaryForest {
  std::vector<Tree> trees;
  ForestParams params;
  int feature_length = 0;

  friend bool operator==(const BoundaryForest&, const BoundaryForest&);
};

BoundaryForest train_forest(std::span<const PatchSample> samples, const ForestParams& params);

/// Averages leaf masks over all trees and all overlapping grid patches.
BoundaryMap predict_boundary(const features::FeatureStack& stack, const BoundaryForest& forest);
BoundaryMap predict_boundary(const PatchFeatureSource& source, const BoundaryForest& forest);

void write_forest(const BoundaryForest& forest, std::ostream& out);
BoundaryForest read_forest(std::istream& in);
void write_forest(const BoundaryForest& forest, const std::filesystem::path& path);
BoundaryForest read_forest(const std::filesystem::path& path);

struct FMeasure {
  double f = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double threshold = 0.0;
};

/// Dataset-scale F-measure: the best single threshold over the whole set,
/// matching predicted and truth pixels within `tolerance` pixels.
FMeasure boundary_f_measure(std::span<const BoundaryMap> predicted, std::span<const Plane> truth,
                            double tolerance = 2.0);

}  // namespace arp::forest
