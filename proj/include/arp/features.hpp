#pragma once

#include <array>
#include <string>
#include <vector>

#include "arp/image.hpp"

namespace arp::features {

/// Orientations of every four-direction cue, in degrees.
inline constexpr std::array<int, 4> kOrientations = {0, 45, 90, 135};
inline constexpr int kHogBins = 8;
inline constexpr int kMbhBins = 4;
/// Half-width of the square window used for HOG and MBH accumulation (5x5).
inline constexpr int kHistogramRadius = 2;

inline constexpr int kSpatialChannels = 13;
inline constexpr int kTemporalChannels = 20;
inline constexpr int kStackChannels = kSpatialChannels + kTemporalChannels;

/// Per-pixel 8-bin orientation histograms, each unit length or zero.
class HogDescriptorMap {
 public:
  HogDescriptorMap(int width, int height);

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  float& at(int x, int y, int bin) { return data_[index(x, y) + bin]; }
  float at(int x, int y, int bin) const { return data_[index(x, y) + bin]; }
  /// Bilinear sample of every bin at a real-valued position, clamped to the border.
  std::array<float, kHogBins> sample(float x, float y) const;

 private:
  std::size_t index(int x, int y) const {
    return (static_cast<std::size_t>(y) * width_ + x) * kHogBins;
  }
  int width_;
  int height_;
  std::vector<float> data_;
};

struct FeatureStack {
  ChannelMap spatial;
  ChannelMap temporal;
  ChannelMap combined;

  int width() const noexcept { return combined.width(); }
  int height() const noexcept { return combined.height(); }
};

/// Names of the 13 spatial and 20 temporal channels in stack order.
const std::vector<std::string>& spatial_channel_names();
const std::vector<std::string>& temporal_channel_names();

/// RGB, gradient norm (fine, coarse), and oriented gradients at four
/// directions (fine, coarse). The coarse scale is a 2x box downsample whose
/// result is bilinearly upsampled back.
ChannelMap spatial_cues(const Frame& frame);

/// Unoriented flow-gradient magnitude sqrt(|grad u|^2 + |grad v|^2) plus four
/// coarse oriented maps, each the magnitude-weighted average of the u and v
/// gradient projections onto the orientation.
ChannelMap flow_gradient_cues(const FlowField& flow);

HogDescriptorMap hog_map(const Frame& frame);

/// ||D_t(p) - D_t1(p + W(p))||_2 per pixel, bins sampled bilinearly.
Plane warp_error(const HogDescriptorMap& d_t, const HogDescriptorMap& d_t1, const FlowField& flow);

/// Motion boundary histograms: 4 unsigned orientation bins of the u and v
/// derivative fields, magnitude weighted over the 5x5 window, each pixel's
/// 8-vector contrast-normalized as h / (||h|| + 1).
ChannelMap mbh(const FlowField& flow);

FeatureStack assemble_feature_stack(const Frame& frame_t, const Frame& frame_t1, const FlowField& forward,
                                    const FlowField& backward);

/// Magnitude-weighted orientation histograms of a gradient field over a
/// grid x grid partition: pixel (x, y) falls in cell (x*grid/W, y*grid/H), integer division.
/// Output is row-major cells, `bins` values per cell, unnormalized.
std::vector<float> grid_orientation_histograms(const Plane& gx, const Plane& gy, int bins, int grid);

/// Rescales a channel by its maximum so it can be written as a boundary-map PGM.
Plane normalized_for_display(const Plane& channel);

}  // namespace arp::features
