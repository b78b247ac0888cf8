#include "arp/features.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "arp/optical_flow.hpp"

namespace arp::features {

namespace {

constexpr double kPi = std::numbers::pi;

double radians(int degrees) { return degrees * kPi / 180.0; }

// Linear vote of an unsigned orientation into `bins` bins centred at k*pi/bins.
void vote(double gx, double gy, int bins, double weight, float* hist) {
  if (weight <= 0.0) return;
  double angle = std::atan2(gy, gx);
  if (angle < 0.0) angle += kPi;
  if (angle >= kPi) angle -= kPi;
  const double pos = angle / (kPi / bins);
  const double base = std::floor(pos);
  const double frac = pos - base;
  const int k0 = static_cast<int>(base) % bins;
  const int k1 = (k0 + 1) % bins;
  hist[k0] += static_cast<float>(weight * (1.0 - frac));
  hist[k1] += static_cast<float>(weight * frac);
}

// |g . e_theta| for each orientation.
std::array<Plane, 4> oriented(const Plane& gx, const Plane& gy) {
  std::array<Plane, 4> out;
  for (std::size_t k = 0; k < kOrientations.size(); ++k) {
    const double c = std::cos(radians(kOrientations[k]));
    const double s = std::sin(radians(kOrientations[k]));
    Plane p(gx.width(), gx.height());
    for (std::size_t i = 0; i < p.size(); ++i)
      p.data()[i] = static_cast<float>(std::abs(c * gx.data()[i] + s * gy.data()[i]));
    out[k] = std::move(p);
  }
  return out;
}

Plane magnitude(const Plane& gx, const Plane& gy) {
  Plane out(gx.width(), gx.height());
  for (std::size_t i = 0; i < out.size(); ++i)
    out.data()[i] = std::sqrt(gx.data()[i] * gx.data()[i] + gy.data()[i] * gy.data()[i]);
  return out;
}

// Orientation histograms of a gradient field accumulated over the local window.
std::vector<Plane> windowed_histograms(const Plane& gx, const Plane& gy, int bins) {
  const int w = gx.width();
  const int h = gx.height();
  std::vector<float> votes(static_cast<std::size_t>(w) * h * bins, 0.0f);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double dx = gx.at(x, y);
      const double dy = gy.at(x, y);
      vote(dx, dy, bins, std::sqrt(dx * dx + dy * dy), &votes[(static_cast<std::size_t>(y) * w + x) * bins]);
    }
  std::vector<Plane> out;
  for (int b = 0; b < bins; ++b) {
    Plane p(w, h);
    for (std::size_t i = 0; i < p.size(); ++i) p.data()[i] = votes[i * bins + b];
    out.push_back(box_sum(p, kHistogramRadius));
  }
  return out;
}

void require_same_size(const FlowField& flow, int width, int height, const char* what) {
  if (flow.width() != width || flow.height() != height) throw Error(Errc::dimension_mismatch, what);
}

}  // namespace

HogDescriptorMap::HogDescriptorMap(int width, int height)
    : width_(width), height_(height), data_(static_cast<std::size_t>(width) * height * kHogBins, 0.0f) {
  if (width <= 0 || height <= 0) throw Error(Errc::too_small, "descriptor map must have positive size");
}

std::array<float, kHogBins> HogDescriptorMap::sample(float x, float y) const {
  x = std::clamp(x, 0.0f, static_cast<float>(width_ - 1));
  y = std::clamp(y, 0.0f, static_cast<float>(height_ - 1));
  const int x0 = static_cast<int>(std::floor(x));
  const int y0 = static_cast<int>(std::floor(y));
  const int x1 = std::min(x0 + 1, width_ - 1);
  const int y1 = std::min(y0 + 1, height_ - 1);
  const float ax = x - static_cast<float>(x0);
  const float ay = y - static_cast<float>(y0);
  std::array<float, kHogBins> out{};
  for (int b = 0; b < kHogBins; ++b) {
    const float top = at(x0, y0, b) + ax * (at(x1, y0, b) - at(x0, y0, b));
    const float bottom = at(x0, y1, b) + ax * (at(x1, y1, b) - at(x0, y1, b));
    out[static_cast<std::size_t>(b)] = top + ay * (bottom - top);
  }
  return out;
}

const std::vector<std::string>& spatial_channel_names() {
  static const std::vector<std::string> names = {
      "R",           "G",           "B",           "grad_norm_fine", "grad_norm_coarse", "grad_fine_0",
      "grad_fine_45", "grad_fine_90", "grad_fine_135", "grad_coarse_0", "grad_coarse_45", "grad_coarse_90",
      "grad_coarse_135"};
  return names;
}

const std::vector<std::string>& temporal_channel_names() {
  static const std::vector<std::string> names = {
      "fwd_u",          "fwd_v",          "bwd_u",           "bwd_v",
      "fwd_flow_grad",  "bwd_flow_grad",  "fwd_flow_grad_0", "fwd_flow_grad_45",
      "fwd_flow_grad_90", "fwd_flow_grad_135", "warp_error_fwd", "warp_error_bwd",
      "mbh_u_0",        "mbh_u_45",       "mbh_u_90",        "mbh_u_135",
      "mbh_v_0",        "mbh_v_45",       "mbh_v_90",        "mbh_v_135"};
  return names;
}

ChannelMap spatial_cues(const Frame& frame) {
  if (frame.channels() != 3) throw Error(Errc::unsupported_format, "spatial cues need a 3-channel frame");
  const auto& names = spatial_channel_names();
  ChannelMap out(frame.width(), frame.height());
  for (int c = 0; c < 3; ++c) out.add(names[static_cast<std::size_t>(c)], frame.channel(c));

  const Plane luma = frame.luma();
  const auto [fx, fy] = central_gradient(luma);
  const Plane coarse_luma = downsample2(luma);
  const auto [cx, cy] = central_gradient(coarse_luma);
  const auto up = [&](const Plane& p) { return resize_bilinear(p, frame.width(), frame.height()); };

  out.add(names[3], magnitude(fx, fy));
  out.add(names[4], up(magnitude(cx, cy)));
  auto fine = oriented(fx, fy);
  auto coarse = oriented(cx, cy);
  for (std::size_t k = 0; k < 4; ++k) out.add(names[5 + k], std::move(fine[k]));
  for (std::size_t k = 0; k < 4; ++k) out.add(names[9 + k], up(coarse[k]));
  return out;
}

ChannelMap flow_gradient_cues(const FlowField& flow) {
  const auto [ux, uy] = central_gradient(flow.u);
  const auto [vx, vy] = central_gradient(flow.v);
  ChannelMap out(flow.width(), flow.height());
  Plane mag(flow.width(), flow.height());
  for (std::size_t i = 0; i < mag.size(); ++i) {
    const double a = ux.data()[i];
    const double b = uy.data()[i];
    const double c = vx.data()[i];
    const double d = vy.data()[i];
    mag.data()[i] = static_cast<float>(std::sqrt(a * a + b * b + c * c + d * d));
  }
  out.add("flow_grad", std::move(mag));

  const auto [cux, cuy] = central_gradient(downsample2(flow.u));
  const auto [cvx, cvy] = central_gradient(downsample2(flow.v));
  for (int deg : kOrientations) {
    const double cs = std::cos(radians(deg));
    const double sn = std::sin(radians(deg));
    Plane p(cux.width(), cux.height());
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double mu = std::hypot(cux.data()[i], cuy.data()[i]);
      const double mv = std::hypot(cvx.data()[i], cvy.data()[i]);
      if (mu + mv <= 0.0) continue;
      const double pu = std::abs(cs * cux.data()[i] + sn * cuy.data()[i]);
      const double pv = std::abs(cs * cvx.data()[i] + sn * cvy.data()[i]);
      p.data()[i] = static_cast<float>((mu * pu + mv * pv) / (mu + mv));
    }
    out.add("flow_grad_" + std::to_string(deg), resize_bilinear(p, flow.width(), flow.height()));
  }
  return out;
}

HogDescriptorMap hog_map(const Frame& frame) {
  if (frame.width() < 3 || frame.height() < 3) throw Error(Errc::too_small, "HOG needs at least 3x3 pixels");
  const auto [gx, gy] = central_gradient(frame.luma());
  const std::vector<Plane> hist = windowed_histograms(gx, gy, kHogBins);
  HogDescriptorMap out(frame.width(), frame.height());
  for (int y = 0; y < frame.height(); ++y)
    for (int x = 0; x < frame.width(); ++x) {
      double norm2 = 0.0;
      for (int b = 0; b < kHogBins; ++b) norm2 += static_cast<double>(hist[b].at(x, y)) * hist[b].at(x, y);
      if (norm2 <= 1e-20) continue;
      const double inv = 1.0 / std::sqrt(norm2);
      for (int b = 0; b < kHogBins; ++b) out.at(x, y, b) = static_cast<float>(hist[b].at(x, y) * inv);
    }
  return out;
}

Plane warp_error(const HogDescriptorMap& d_t, const HogDescriptorMap& d_t1, const FlowField& flow) {
  if (d_t.width() != d_t1.width() || d_t.height() != d_t1.height())
    throw Error(Errc::dimension_mismatch, "descriptor maps differ in size");
  require_same_size(flow, d_t.width(), d_t.height(), "flow and descriptor maps differ in size");
  Plane out(d_t.width(), d_t.height());
  for (int y = 0; y < d_t.height(); ++y)
    for (int x = 0; x < d_t.width(); ++x) {
      const auto warped = d_t1.sample(static_cast<float>(x) + flow.u.at(x, y), static_cast<float>(y) + flow.v.at(x, y));
      double sum = 0.0;
      for (int b = 0; b < kHogBins; ++b) {
        const double d = static_cast<double>(d_t.at(x, y, b)) - warped[static_cast<std::size_t>(b)];
        sum += d * d;
      }
      out.at(x, y) = static_cast<float>(std::sqrt(sum));
    }
  return out;
}

ChannelMap mbh(const FlowField& flow) {
  const auto [ux, uy] = central_gradient(flow.u);
  const auto [vx, vy] = central_gradient(flow.v);
  std::vector<Plane> hist = windowed_histograms(ux, uy, kMbhBins);
  std::vector<Plane> hist_v = windowed_histograms(vx, vy, kMbhBins);
  hist.insert(hist.end(), hist_v.begin(), hist_v.end());
  for (std::size_t i = 0; i < hist[0].size(); ++i) {
    double norm2 = 0.0;
    for (const Plane& p : hist) norm2 += static_cast<double>(p.data()[i]) * p.data()[i];
    const double scale = 1.0 / (std::sqrt(norm2) + 1.0);
    for (Plane& p : hist) p.data()[i] = static_cast<float>(p.data()[i] * scale);
  }
  ChannelMap out(flow.width(), flow.height());
  for (int f = 0; f < 2; ++f)
    for (int b = 0; b < kMbhBins; ++b)
      out.add(std::string(f == 0 ? "mbh_u_" : "mbh_v_") + std::to_string(kOrientations[static_cast<std::size_t>(b)]),
              std::move(hist[static_cast<std::size_t>(f * kMbhBins + b)]));
  return out;
}

FeatureStack assemble_feature_stack(const Frame& frame_t, const Frame& frame_t1, const FlowField& forward,
                                    const FlowField& backward) {
  const int w = frame_t.width();
  const int h = frame_t.height();
  if (frame_t1.width() != w || frame_t1.height() != h)
    throw Error(Errc::dimension_mismatch, "feature stack frames differ in size");
  require_same_size(forward, w, h, "forward flow differs in size from the frames");
  require_same_size(backward, w, h, "backward flow differs in size from the frames");

  FeatureStack stack;
  stack.spatial = spatial_cues(frame_t.to_rgb());

  const auto& names = temporal_channel_names();
  ChannelMap temporal(w, h);
  temporal.add(names[0], forward.u);
  temporal.add(names[1], forward.v);
  temporal.add(names[2], backward.u);
  temporal.add(names[3], backward.v);
  const ChannelMap fwd_grad = flow_gradient_cues(forward);
  const ChannelMap bwd_grad = flow_gradient_cues(backward);
  temporal.add(names[4], fwd_grad.channel(0));
  temporal.add(names[5], bwd_grad.channel(0));
  for (int k = 0; k < 4; ++k) temporal.add(names[static_cast<std::size_t>(6 + k)], fwd_grad.channel(1 + k));
  const HogDescriptorMap hog_t = hog_map(frame_t);
  const HogDescriptorMap hog_t1 = hog_map(frame_t1);
  temporal.add(names[10], warp_error(hog_t, hog_t1, forward));
  temporal.add(names[11], warp_error(hog_t1, hog_t, backward));
  const ChannelMap motion = mbh(forward);
  for (int k = 0; k < 8; ++k) temporal.add(names[static_cast<std::size_t>(12 + k)], motion.channel(k));
  stack.temporal = std::move(temporal);

  stack.combined = stack.spatial;
  stack.combined.append(stack.temporal);
  return stack;
}

std::vector<float> grid_orientation_histograms(const Plane& gx, const Plane& gy, int bins, int grid) {
  if (!gx.same_size(gy)) throw Error(Errc::dimension_mismatch, "gradient planes differ in size");
  if (bins < 1 || grid < 1) throw Error(Errc::usage, "histogram bins and grid must be positive");
  const int w = gx.width();
  const int h = gx.height();
  if (w < grid || h < grid) throw Error(Errc::too_small, "raster smaller than the histogram grid");
  std::vector<float> out(static_cast<std::size_t>(grid) * grid * bins, 0.0f);
  for (int y = 0; y < h; ++y) {
    const int cy = y * grid / h;
    for (int x = 0; x < w; ++x) {
      const int cx = x * grid / w;
      const double dx = gx.at(x, y);
      const double dy = gy.at(x, y);
      vote(dx, dy, bins, std::sqrt(dx * dx + dy * dy), &out[(static_cast<std::size_t>(cy) * grid + cx) * bins]);
    }
  }
  return out;
}

Plane normalized_for_display(const Plane& channel) {
  float hi = 0.0f;
  for (float v : channel.data()) hi = std::max(hi, std::abs(v));
  Plane out(channel.width(), channel.height());
  if (hi <= 0.0f) return out;
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] = std::abs(channel.data()[i]) / hi;
  return out;
}

}  // namespace arp::features
