#include "arp/optical_flow.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace arp::flow {

namespace {

constexpr float kDataEps = 1e-3f * 255.0f;
constexpr float kSmoothEps = 1e-3f;
constexpr float kSorOmega = 1.8f;

Plane scaled(const Plane& p, float factor) {
  Plane out = p;
  for (float& v : out.data()) v *= factor;
  return out;
}

Plane gaussian_blur(const Plane& src, double sigma) {
  if (sigma <= 0.0) return src;
  const int radius = std::max(1, static_cast<int>(std::ceil(2.5 * sigma)));
  std::vector<float> kernel(2 * radius + 1);
  double total = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    kernel[i + radius] = static_cast<float>(std::exp(-0.5 * i * i / (sigma * sigma)));
    total += kernel[i + radius];
  }
  for (float& k : kernel) k = static_cast<float>(k / total);
  Plane tmp(src.width(), src.height());
  for (int y = 0; y < src.height(); ++y)
    for (int x = 0; x < src.width(); ++x) {
      float acc = 0.0f;
      for (int i = -radius; i <= radius; ++i) acc += kernel[i + radius] * src.clamped(x + i, y);
      tmp.at(x, y) = acc;
    }
  Plane out(src.width(), src.height());
  for (int y = 0; y < src.height(); ++y)
    for (int x = 0; x < src.width(); ++x) {
      float acc = 0.0f;
      for (int i = -radius; i <= radius; ++i) acc += kernel[i + radius] * tmp.clamped(x, y + i);
      out.at(x, y) = acc;
    }
  return out;
}

// Anti-aliased rescale of one pyramid step.
Plane rescale(const Plane& src, int width, int height, double factor) {
  return resize_bilinear(gaussian_blur(src, 1.0 / std::sqrt(2.0 * factor)), width, height);
}

Plane median_filter(const Plane& src, int radius) {
  if (radius <= 0) return src;
  Plane out(src.width(), src.height());
  std::vector<float> window;
  window.reserve(static_cast<std::size_t>((2 * radius + 1) * (2 * radius + 1)));
  for (int y = 0; y < src.height(); ++y)
    for (int x = 0; x < src.width(); ++x) {
      window.clear();
      for (int dy = -radius; dy <= radius; ++dy)
        for (int dx = -radius; dx <= radius; ++dx) window.push_back(src.clamped(x + dx, y + dy));
      auto mid = window.begin() + static_cast<std::ptrdiff_t>(window.size() / 2);
      std::nth_element(window.begin(), mid, window.end());
      out.at(x, y) = *mid;
    }
  return out;
}

struct Level {
  std::vector<Plane> first;   // per data channel
  std::vector<Plane> second;
};

// One level of incremental warping with lagged-nonlinearity fixed point and SOR.
void refine_level(const Level& level, Plane& u, Plane& v, const FlowParams& params) {
  const int w = u.width();
  const int h = u.height();
  const std::size_t n = static_cast<std::size_t>(w) * h;
  const float alpha = static_cast<float>(params.regularization_weight);
  const std::size_t channels = level.first.size();

  std::vector<std::pair<Plane, Plane>> grad_first;
  std::vector<std::pair<Plane, Plane>> grad_second;
  for (std::size_t c = 0; c < channels; ++c) {
    grad_first.push_back(central_gradient(level.first[c]));
    grad_second.push_back(central_gradient(level.second[c]));
  }

  std::vector<Plane> ix(channels, Plane(w, h)), iy(channels, Plane(w, h)), it(channels, Plane(w, h));
  Plane du(w, h), dv(w, h), psi_smooth(w, h);
  std::vector<float> a11(n), a12(n), a22(n), b1(n), b2(n);

  for (int warp = 0; warp < params.warp_iterations; ++warp) {
    const FlowField current(u, v);
    for (std::size_t c = 0; c < channels; ++c) {
      const Plane warped = warp_plane(level.second[c], current);
      const Plane warped_x = warp_plane(grad_second[c].first, current);
      const Plane warped_y = warp_plane(grad_second[c].second, current);
      for (std::size_t i = 0; i < n; ++i) {
        ix[c].data()[i] = 0.5f * (warped_x.data()[i] + grad_first[c].first.data()[i]);
        iy[c].data()[i] = 0.5f * (warped_y.data()[i] + grad_first[c].second.data()[i]);
        it[c].data()[i] = warped.data()[i] - level.first[c].data()[i];
      }
    }
    std::fill(du.data().begin(), du.data().end(), 0.0f);
    std::fill(dv.data().begin(), dv.data().end(), 0.0f);

    for (int fp = 0; fp < params.fixed_point_iterations; ++fp) {
      // robust data weights folded into the per-pixel normal equations
      std::fill(a11.begin(), a11.end(), 0.0f);
      std::fill(a12.begin(), a12.end(), 0.0f);
      std::fill(a22.begin(), a22.end(), 0.0f);
      std::fill(b1.begin(), b1.end(), 0.0f);
      std::fill(b2.begin(), b2.end(), 0.0f);
      for (std::size_t c = 0; c < channels; ++c) {
        for (std::size_t i = 0; i < n; ++i) {
          const float gx = ix[c].data()[i];
          const float gy = iy[c].data()[i];
          const float gt = it[c].data()[i];
          const float r = gt + gx * du.data()[i] + gy * dv.data()[i];
          const float psi = 1.0f / std::sqrt(r * r + kDataEps * kDataEps);
          a11[i] += psi * gx * gx;
          a12[i] += psi * gx * gy;
          a22[i] += psi * gy * gy;
          b1[i] += psi * gx * gt;
          b2[i] += psi * gy * gt;
        }
      }
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
          auto fu = [&](int xx, int yy) { return u.clamped(xx, yy) + du.clamped(xx, yy); };
          auto fv = [&](int xx, int yy) { return v.clamped(xx, yy) + dv.clamped(xx, yy); };
          const float ux = 0.5f * (fu(x + 1, y) - fu(x - 1, y));
          const float uy = 0.5f * (fu(x, y + 1) - fu(x, y - 1));
          const float vx = 0.5f * (fv(x + 1, y) - fv(x - 1, y));
          const float vy = 0.5f * (fv(x, y + 1) - fv(x, y - 1));
          psi_smooth.at(x, y) =
              1.0f / std::sqrt(ux * ux + uy * uy + vx * vx + vy * vy + kSmoothEps * kSmoothEps);
        }

      for (int sweep = 0; sweep < params.solver_iterations; ++sweep) {
        for (int y = 0; y < h; ++y) {
          for (int x = 0; x < w; ++x) {
            const std::size_t i = static_cast<std::size_t>(y) * w + x;
            const float up = u.data()[i];
            const float vp = v.data()[i];
            float weight_sum = 0.0f;
            float su = 0.0f;
            float sv = 0.0f;
            const int nx[4] = {x - 1, x + 1, x, x};
            const int ny[4] = {y, y, y - 1, y + 1};
            for (int k = 0; k < 4; ++k) {
              if (nx[k] < 0 || nx[k] >= w || ny[k] < 0 || ny[k] >= h) continue;
              const std::size_t j = static_cast<std::size_t>(ny[k]) * w + nx[k];
              const float wq = alpha * 0.5f * (psi_smooth.data()[i] + psi_smooth.data()[j]);
              weight_sum += wq;
              su += wq * (u.data()[j] + du.data()[j] - up);
              sv += wq * (v.data()[j] + dv.data()[j] - vp);
            }
            const float new_du = (su - b1[i] - a12[i] * dv.data()[i]) / (a11[i] + weight_sum + 1e-9f);
            du.data()[i] = (1.0f - kSorOmega) * du.data()[i] + kSorOmega * new_du;
            const float new_dv = (sv - b2[i] - a12[i] * du.data()[i]) / (a22[i] + weight_sum + 1e-9f);
            dv.data()[i] = (1.0f - kSorOmega) * dv.data()[i] + kSorOmega * new_dv;
          }
        }
      }
    }

    for (std::size_t i = 0; i < n; ++i) {
      u.data()[i] += du.data()[i];
      v.data()[i] += dv.data()[i];
    }
    u = median_filter(u, params.median_filter_radius);
    v = median_filter(v, params.median_filter_radius);
  }
}

std::vector<Plane> data_channels(const Frame& frame, bool use_color) {
  std::vector<Plane> planes;
  if (use_color && frame.channels() == 3) {
    for (int c = 0; c < 3; ++c) planes.push_back(scaled(frame.channel(c), 255.0f));
  } else {
    planes.push_back(scaled(frame.luma(), 255.0f));
  }
  return planes;
}

}  // namespace

void FlowParams::validate() const {
  if (pyramid_levels < 1 || warp_iterations < 1 || fixed_point_iterations < 1 || solver_iterations < 1 ||
      median_filter_radius < 0)
    throw Error(Errc::usage, "flow iteration counts must be >= 1");
  if (!(scale_factor > 0.0 && scale_factor < 1.0)) throw Error(Errc::usage, "flow scale factor must lie in (0,1)");
  if (!(regularization_weight >= 0.0)) throw Error(Errc::usage, "flow regularization weight must be >= 0");
}

FlowField estimate_flow(const Frame& frame_t, const Frame& frame_t1, const FlowParams& params) {
  params.validate();
  if (frame_t.width() != frame_t1.width() || frame_t.height() != frame_t1.height())
    throw Error(Errc::dimension_mismatch, "flow frames differ in size");
  if (frame_t.width() < 8 || frame_t.height() < 8) throw Error(Errc::too_small, "flow frames must be at least 8x8");

  std::vector<std::pair<int, int>> sizes;
  for (int l = 0; l < params.pyramid_levels; ++l) {
    const double f = std::pow(params.scale_factor, l);
    const int w = static_cast<int>(std::lround(frame_t.width() * f));
    const int h = static_cast<int>(std::lround(frame_t.height() * f));
    if (w < kMinLevelSide || h < kMinLevelSide)
      throw Error(Errc::too_small, "frame too small for " + std::to_string(params.pyramid_levels) + " pyramid levels");
    sizes.emplace_back(w, h);
  }

  std::vector<Level> pyramid(static_cast<std::size_t>(params.pyramid_levels));
  pyramid[0].first = data_channels(frame_t, params.use_color);
  pyramid[0].second = data_channels(frame_t1, params.use_color);
  for (std::size_t l = 1; l < pyramid.size(); ++l) {
    const auto [w, h] = sizes[l];
    for (std::size_t c = 0; c < pyramid[0].first.size(); ++c) {
      pyramid[l].first.push_back(rescale(pyramid[l - 1].first[c], w, h, params.scale_factor));
      pyramid[l].second.push_back(rescale(pyramid[l - 1].second[c], w, h, params.scale_factor));
    }
  }

  Plane u;
  Plane v;
  for (int l = params.pyramid_levels - 1; l >= 0; --l) {
    const auto [w, h] = sizes[static_cast<std::size_t>(l)];
    if (u.empty()) {
      u = Plane(w, h);
      v = Plane(w, h);
    } else {
      const float sx = static_cast<float>(w) / static_cast<float>(u.width());
      const float sy = static_cast<float>(h) / static_cast<float>(u.height());
      u = scaled(resize_bilinear(u, w, h), sx);
      v = scaled(resize_bilinear(v, w, h), sy);
    }
    refine_level(pyramid[static_cast<std::size_t>(l)], u, v, params);
  }
  return FlowField(std::move(u), std::move(v));
}

FlowPair estimate_flow_pair(const Frame& frame_t, const Frame& frame_t1, const FlowParams& params) {
  return {estimate_flow(frame_t, frame_t1, params), estimate_flow(frame_t1, frame_t, params)};
}

Plane warp_plane(const Plane& plane, const FlowField& flow) {
  if (plane.width() != flow.width() || plane.height() != flow.height())
    throw Error(Errc::dimension_mismatch, "warp input and flow differ in size");
  Plane out(plane.width(), plane.height());
  for (int y = 0; y < plane.height(); ++y)
    for (int x = 0; x < plane.width(); ++x)
      out.at(x, y) = plane.sample(static_cast<float>(x) + flow.u.at(x, y), static_cast<float>(y) + flow.v.at(x, y));
  return out;
}

Frame warp_image(const Frame& frame, const FlowField& flow) {
  if (frame.width() != flow.width() || frame.height() != flow.height())
    throw Error(Errc::dimension_mismatch, "warp input and flow differ in size");
  std::vector<Plane> planes;
  for (int c = 0; c < frame.channels(); ++c) planes.push_back(warp_plane(frame.channel(c), flow));
  return Frame::from_planes(planes);
}

double mean_endpoint_error(const FlowField& a, const FlowField& b) {
  if (a.width() != b.width() || a.height() != b.height())
    throw Error(Errc::dimension_mismatch, "flow fields differ in size");
  double total = 0.0;
  for (std::size_t i = 0; i < a.u.size(); ++i) {
    const double du = a.u.data()[i] - b.u.data()[i];
    const double dv = a.v.data()[i] - b.v.data()[i];
    total += std::sqrt(du * du + dv * dv);
  }
  return total / static_cast<double>(a.u.size());
}

}  // namespace arp::flow
