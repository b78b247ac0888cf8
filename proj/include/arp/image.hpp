#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "arp/error.hpp"

namespace arp {

/// Single-channel float raster, row-major.
class Plane {
 public:
  Plane() = default;
  Plane(int width, int height, float fill = 0.0f);
  Plane(int width, int height, std::vector<float> data);

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  float& at(int x, int y) { return data_[static_cast<std::size_t>(y) * width_ + x]; }
  float at(int x, int y) const { return data_[static_cast<std::size_t>(y) * width_ + x]; }

  /// Value at (x, y) with coordinates clamped to the raster.
  float clamped(int x, int y) const;

  /// Bilinear sample at a real-valued position, clamp-to-edge outside.
  float sample(float x, float y) const;

  std::span<float> data() noexcept { return data_; }
  std::span<const float> data() const noexcept { return data_; }

  bool same_size(const Plane& other) const noexcept {
    return width_ == other.width_ && height_ == other.height_;
  }

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<float> data_;
};

/// Interleaved raster with 1 or 3 channels, values in [0,1].
class Frame {
 public:
  Frame() = default;
  /// Validates shape and value range; throws Error otherwise.
  Frame(int width, int height, int channels, std::vector<float> data);

  static Frame from_planes(std::span<const Plane> planes);
  static Frame constant(int width, int height, int channels, float value);

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  int channels() const noexcept { return channels_; }

  float at(int x, int y, int c) const {
    return data_[(static_cast<std::size_t>(y) * width_ + x) * channels_ + c];
  }
  std::span<const float> data() const noexcept { return data_; }

  Plane channel(int c) const;
  /// Rec.601 luma for RGB; the single channel for gray.
  Plane luma() const;
  /// Gray frames replicated to three channels; RGB returned unchanged.
  Frame to_rgb() const;

  bool same_shape(const Frame& other) const noexcept {
    return width_ == other.width_ && height_ == other.height_ && channels_ == other.channels_;
  }

 private:
  int width_ = 0;
  int height_ = 0;
  int channels_ = 0;
  std::vector<float> data_;
};

struct FrameSequence {
  std::vector<Frame> frames;
  double frame_rate_hint = 0.0;

  std::size_t size() const noexcept { return frames.size(); }
  /// Throws dimension_mismatch if frames differ in shape.
  void validate() const;
};

/// Dense per-pixel displacement: frame_t(p) corresponds to frame_t1(p + (u, v)).
struct FlowField {
  Plane u;
  Plane v;

  FlowField() = default;
  FlowField(int width, int height) : u(width, height), v(width, height) {}
  FlowField(Plane u_, Plane v_);

  int width() const noexcept { return u.width(); }
  int height() const noexcept { return u.height(); }
  static FlowField constant(int width, int height, float du, float dv);
};

/// Soft motion-boundary response in [0,1].
class BoundaryMap {
 public:
  BoundaryMap() = default;
  /// Throws out_of_range if any value is outside [0,1] or not finite.
  explicit BoundaryMap(Plane values);

  int width() const noexcept { return values_.width(); }
  int height() const noexcept { return values_.height(); }
  const Plane& values() const noexcept { return values_; }
  float at(int x, int y) const { return values_.at(x, y); }

 private:
  Plane values_;
};

/// Named stack of equally sized planes.
class ChannelMap {
 public:
  ChannelMap() = default;
  ChannelMap(int width, int height) : width_(width), height_(height) {}

  void add(std::string name, Plane plane);
  void append(const ChannelMap& other);

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  int channel_count() const noexcept { return static_cast<int>(planes_.size()); }
  const std::vector<std::string>& names() const noexcept { return names_; }
  const Plane& channel(int index) const { return planes_.at(static_cast<std::size_t>(index)); }
  /// Throws out_of_range when the name is unknown.
  const Plane& channel(const std::string& name) const;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<std::string> names_;
  std::vector<Plane> planes_;
};

/// Axis-aligned box in pixel units with a score.
struct BoxProposal {
  int x = 0;
  int y = 0;
  int w = 0;
  int h = 0;
  double score = 0.0;
  int frame_index = 0;

  int area() const noexcept { return w * h; }
  /// True when the box lies inside a width x height raster and has at least min_side pixels per side.
  bool valid_in(int width, int height, int min_side = 1) const noexcept;
  friend bool operator==(const BoxProposal&, const BoxProposal&) = default;
};

double iou(const BoxProposal& a, const BoxProposal& b) noexcept;

// Raster helpers shared by the cue and proposal code.

/// 2x box-filter downsample; odd trailing rows/columns average with the clamped edge.
Plane downsample2(const Plane& src);
/// Bilinear resize with pixel-center alignment, clamp-to-edge.
Plane resize_bilinear(const Plane& src, int width, int height);
/// Bilinear resize of a sub-rectangle [x, x+w) x [y, y+h) to width x height.
Plane resize_region(const Plane& src, double x, double y, double w, double h, int width, int height);
/// Central differences with clamp-to-edge borders: returns (d/dx, d/dy).
std::pair<Plane, Plane> central_gradient(const Plane& src);
/// Square-window box sum of radius r, clamp-to-edge.
Plane box_sum(const Plane& src, int radius);

}  // namespace arp
