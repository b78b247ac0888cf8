#include "arp/image.hpp"

#include <algorithm>
#include <cmath>

namespace arp {

std::string_view errc_name(Errc code) noexcept {
  switch (code) {
    case Errc::usage: return "usage";
    case Errc::missing_file: return "missing file";
    case Errc::unsupported_format: return "unsupported format";
    case Errc::malformed_header: return "malformed header";
    case Errc::bad_magic: return "bad magic";
    case Errc::truncated: return "truncated payload";
    case Errc::dimension_mismatch: return "dimension mismatch";
    case Errc::too_small: return "too small";
    case Errc::out_of_range: return "out of range";
    case Errc::invalid_box: return "invalid box";
    case Errc::invalid_distribution: return "invalid distribution";
    case Errc::degenerate_input: return "degenerate input";
    case Errc::sequence_too_short: return "sequence too short";
    case Errc::provider_failure: return "provider failure";
    case Errc::numerical_failure: return "numerical failure";
  }
  return "unknown";
}

int exit_code_for(Errc code) noexcept {
  switch (code) {
    case Errc::usage: return 2;
    case Errc::numerical_failure: return 4;
    default: return 3;
  }
}

Plane::Plane(int width, int height, float fill) : width_(width), height_(height) {
  if (width <= 0 || height <= 0) throw Error(Errc::too_small, "plane must have positive size");
  data_.assign(static_cast<std::size_t>(width) * height, fill);
}

Plane::Plane(int width, int height, std::vector<float> data)
    : width_(width), height_(height), data_(std::move(data)) {
  if (width <= 0 || height <= 0) throw Error(Errc::too_small, "plane must have positive size");
  if (data_.size() != static_cast<std::size_t>(width) * height)
    throw Error(Errc::dimension_mismatch, "plane data length does not match size");
}

float Plane::clamped(int x, int y) const {
  x = std::clamp(x, 0, width_ - 1);
  y = std::clamp(y, 0, height_ - 1);
  return at(x, y);
}

float Plane::sample(float x, float y) const {
  x = std::clamp(x, 0.0f, static_cast<float>(width_ - 1));
  y = std::clamp(y, 0.0f, static_cast<float>(height_ - 1));
  const int x0 = static_cast<int>(std::floor(x));
  const int y0 = static_cast<int>(std::floor(y));
  const int x1 = std::min(x0 + 1, width_ - 1);
  const int y1 = std::min(y0 + 1, height_ - 1);
  const float ax = x - static_cast<float>(x0);
  const float ay = y - static_cast<float>(y0);
  const float top = at(x0, y0) + ax * (at(x1, y0) - at(x0, y0));
  const float bottom = at(x0, y1) + ax * (at(x1, y1) - at(x0, y1));
  return top + ay * (bottom - top);
}

Frame::Frame(int width, int height, int channels, std::vector<float> data)
    : width_(width), height_(height), channels_(channels), data_(std::move(data)) {
  if (width <= 0 || height <= 0) throw Error(Errc::too_small, "frame must have positive size");
  if (channels != 1 && channels != 3)
    throw Error(Errc::unsupported_format, "frame must have 1 or 3 channels");
  if (data_.size() != static_cast<std::size_t>(width) * height * channels)
    throw Error(Errc::dimension_mismatch, "frame data length does not match shape");
  for (float value : data_) {
    if (!std::isfinite(value) || value < 0.0f || value > 1.0f)
      throw Error(Errc::out_of_range, "frame values must lie in [0,1]");
  }
}

Frame Frame::from_planes(std::span<const Plane> planes) {
  if (planes.size() != 1 && planes.size() != 3)
    throw Error(Errc::unsupported_format, "frame must have 1 or 3 channels");
  const int w = planes[0].width();
  const int h = planes[0].height();
  const int c = static_cast<int>(planes.size());
  std::vector<float> data(static_cast<std::size_t>(w) * h * c);
  for (int k = 0; k < c; ++k) {
    if (!planes[k].same_size(planes[0]))
      throw Error(Errc::dimension_mismatch, "frame planes differ in size");
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        data[(static_cast<std::size_t>(y) * w + x) * c + k] = std::clamp(planes[k].at(x, y), 0.0f, 1.0f);
  }
  return Frame(w, h, c, std::move(data));
}

Frame Frame::constant(int width, int height, int channels, float value) {
  return Frame(width, height, channels,
               std::vector<float>(static_cast<std::size_t>(width) * height * channels, value));
}

Plane Frame::channel(int c) const {
  Plane out(width_, height_);
  for (int y = 0; y < height_; ++y)
    for (int x = 0; x < width_; ++x) out.at(x, y) = at(x, y, c);
  return out;
}

Plane Frame::luma() const {
  if (channels_ == 1) return channel(0);
  Plane out(width_, height_);
  for (int y = 0; y < height_; ++y)
    for (int x = 0; x < width_; ++x)
      out.at(x, y) = 0.299f * at(x, y, 0) + 0.587f * at(x, y, 1) + 0.114f * at(x, y, 2);
  return out;
}

Frame Frame::to_rgb() const {
  if (channels_ == 3) return *this;
  std::vector<float> data(data_.size() * 3);
  for (std::size_t i = 0; i < data_.size(); ++i) data[3 * i] = data[3 * i + 1] = data[3 * i + 2] = data_[i];
  return Frame(width_, height_, 3, std::move(data));
}

void FrameSequence::validate() const {
  for (const Frame& f : frames) {
    if (!f.same_shape(frames.front()))
      throw Error(Errc::dimension_mismatch, "frames in a sequence must share width, height and channels");
  }
}

FlowField::FlowField(Plane u_, Plane v_) : u(std::move(u_)), v(std::move(v_)) {
  if (!u.same_size(v)) throw Error(Errc::dimension_mismatch, "flow components differ in size");
  for (float value : u.data())
    if (!std::isfinite(value)) throw Error(Errc::numerical_failure, "flow contains non-finite values");
  for (float value : v.data())
    if (!std::isfinite(value)) throw Error(Errc::numerical_failure, "flow contains non-finite values");
}

FlowField FlowField::constant(int width, int height, float du, float dv) {
  return FlowField(Plane(width, height, du), Plane(width, height, dv));
}

BoundaryMap::BoundaryMap(Plane values) : values_(std::move(values)) {
  for (float value : values_.data()) {
    if (!std::isfinite(value) || value < 0.0f || value > 1.0f)
      throw Error(Errc::out_of_range, "boundary map values must lie in [0,1]");
  }
}

void ChannelMap::add(std::string name, Plane plane) {
  if (planes_.empty() && width_ == 0) {
    width_ = plane.width();
    height_ = plane.height();
  }
  if (plane.width() != width_ || plane.height() != height_)
    throw Error(Errc::dimension_mismatch, "channel '" + name + "' differs in size");
  if (std::find(names_.begin(), names_.end(), name) != names_.end())
    throw Error(Errc::usage, "duplicate channel name '" + name + "'");
  names_.push_back(std::move(name));
  planes_.push_back(std::move(plane));
}

void ChannelMap::append(const ChannelMap& other) {
  for (int i = 0; i < other.channel_count(); ++i) add(other.names_[i], other.planes_[i]);
}

const Plane& ChannelMap::channel(const std::string& name) const {
  auto it = std::find(names_.begin(), names_.end(), name);
  if (it == names_.end()) throw Error(Errc::out_of_range, "no channel named '" + name + "'");
  return planes_[static_cast<std::size_t>(it - names_.begin())];
}

bool BoxProposal::valid_in(int width, int height, int min_side) const noexcept {
  return x >= 0 && y >= 0 && w >= min_side && h >= min_side && x + w <= width && y + h <= height &&
         std::isfinite(score);
}

double iou(const BoxProposal& a, const BoxProposal& b) noexcept {
  const int ix = std::max(0, std::min(a.x + a.w, b.x + b.w) - std::max(a.x, b.x));
  const int iy = std::max(0, std::min(a.y + a.h, b.y + b.h) - std::max(a.y, b.y));
  const double inter = static_cast<double>(ix) * iy;
  const double uni = static_cast<double>(a.area()) + b.area() - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

Plane downsample2(const Plane& src) {
  const int w = (src.width() + 1) / 2;
  const int h = (src.height() + 1) / 2;
  Plane out(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      out.at(x, y) = 0.25f * (src.clamped(2 * x, 2 * y) + src.clamped(2 * x + 1, 2 * y) +
                              src.clamped(2 * x, 2 * y + 1) + src.clamped(2 * x + 1, 2 * y + 1));
  return out;
}

Plane resize_region(const Plane& src, double x, double y, double w, double h, int width, int height) {
  Plane out(width, height);
  const double sx = w / width;
  const double sy = h / height;
  for (int j = 0; j < height; ++j) {
    const double fy = std::clamp(y + (j + 0.5) * sy - 0.5, y, y + h - 1.0);
    for (int i = 0; i < width; ++i) {
      const double fx = std::clamp(x + (i + 0.5) * sx - 0.5, x, x + w - 1.0);
      out.at(i, j) = src.sample(static_cast<float>(fx), static_cast<float>(fy));
    }
  }
  return out;
}

Plane resize_bilinear(const Plane& src, int width, int height) {
  return resize_region(src, 0.0, 0.0, src.width(), src.height(), width, height);
}

std::pair<Plane, Plane> central_gradient(const Plane& src) {
  Plane gx(src.width(), src.height());
  Plane gy(src.width(), src.height());
  for (int y = 0; y < src.height(); ++y) {
    for (int x = 0; x < src.width(); ++x) {
      gx.at(x, y) = 0.5f * (src.clamped(x + 1, y) - src.clamped(x - 1, y));
      gy.at(x, y) = 0.5f * (src.clamped(x, y + 1) - src.clamped(x, y - 1));
    }
  }
  return {std::move(gx), std::move(gy)};
}

Plane box_sum(const Plane& src, int radius) {
  const int w = src.width();
  const int h = src.height();
  Plane rows(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      float acc = 0.0f;
      for (int d = -radius; d <= radius; ++d) acc += src.clamped(x + d, y);
      rows.at(x, y) = acc;
    }
  Plane out(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      float acc = 0.0f;
      for (int d = -radius; d <= radius; ++d) acc += rows.clamped(x, y + d);
      out.at(x, y) = acc;
    }
  return out;
}

}  // namespace arp
