#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <set>

#include "arp/features.hpp"
#include "arp/synthetic.hpp"

using namespace arp;
using namespace arp::features;

namespace {

Frame step_frame(int w, int h, int edge_x) {
  std::vector<float> data;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) data.push_back(x < edge_x ? 0.2f : 0.8f);
  return Frame(w, h, 3, data);
}

Frame random_frame(int w, int h, std::uint32_t seed) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<float> d(0.0f, 1.0f);
  std::vector<float> data(static_cast<std::size_t>(w) * h * 3);
  for (float& v : data) v = d(rng);
  return Frame(w, h, 3, data);
}

FlowField random_flow(int w, int h, std::mt19937& rng) {
  std::uniform_real_distribution<float> d(-4.0f, 4.0f);
  FlowField f(w, h);
  for (float& v : f.u.data()) v = d(rng);
  for (float& v : f.v.data()) v = d(rng);
  return f;
}

/// Independent central difference with clamped borders.
float cdx(const Plane& p, int x, int y) {
  const int xl = std::max(x - 1, 0);
  const int xr = std::min(x + 1, p.width() - 1);
  return 0.5f * (p.at(xr, y) - p.at(xl, y));
}
float cdy(const Plane& p, int x, int y) {
  const int yu = std::max(y - 1, 0);
  const int yd = std::min(y + 1, p.height() - 1);
  return 0.5f * (p.at(x, yd) - p.at(x, yu));
}

/// Moving square over a static textured background with its analytic flows.
struct SquareMotion {
  Frame f0;
  Frame f1;
  FlowField forward;
  FlowField backward;
  Plane perimeter_band;  // 1 within 2 px of the square's outline at t
};

SquareMotion square_motion() {
  synth::SceneSpec s;
  s.width = 64;
  s.height = 64;
  s.frames = 2;
  s.background = synth::Texture(synth::TextureSpec{}, 21);
  s.actor = synth::Texture(synth::TextureSpec{}, 22);
  s.side = 20;
  s.start_x = 20;
  s.start_y = 22;
  s.velocity_x = 3;
  const auto seq = synth::render_scene(s);
  SquareMotion m{seq.frames.frames[0], seq.frames.frames[1], FlowField(64, 64), FlowField(64, 64), Plane(64, 64)};
  for (int y = 0; y < 64; ++y) {
    for (int x = 0; x < 64; ++x) {
      if (x >= 20 && x < 40 && y >= 22 && y < 42) m.forward.u.at(x, y) = 3.0f;
      if (x >= 23 && x < 43 && y >= 22 && y < 42) m.backward.u.at(x, y) = -3.0f;
      const bool near_outer = x >= 18 && x < 42 && y >= 20 && y < 44;
      const bool deep_inside = x >= 22 && x < 38 && y >= 24 && y < 40;
      if (near_outer && !deep_inside) m.perimeter_band.at(x, y) = 1.0f;
    }
  }
  return m;
}

/// Share of a channel's total energy inside the band.
double band_share(const Plane& channel, const Plane& band) {
  double in = 0.0, total = 0.0;
  for (std::size_t i = 0; i < channel.size(); ++i) {
    const double e = std::abs(channel.data()[i]);
    total += e;
    if (band.data()[i] > 0.0f) in += e;
  }
  return total > 0.0 ? in / total : 0.0;
}

}  // namespace

TEST(SpatialCues, ConstantFrame) {
  const ChannelMap m = spatial_cues(Frame::constant(16, 12, 3, 0.4f));
  ASSERT_EQ(m.channel_count(), kSpatialChannels);
  for (int c = 0; c < m.channel_count(); ++c)
    for (float v : m.channel(c).data()) EXPECT_EQ(v, c < 3 ? 0.4f : 0.0f) << m.names()[static_cast<std::size_t>(c)];
}

TEST(SpatialCues, VerticalStepEdgeOrientation) {
  const ChannelMap m = spatial_cues(step_frame(32, 16, 16));
  const Plane& g0 = m.channel("grad_fine_0");
  const Plane& g90 = m.channel("grad_fine_90");
  const int y = 8;
  float best = -1.0f;
  int best_x = -1;
  for (int x = 0; x < 32; ++x) {
    if (g0.at(x, y) > best) {
      best = g0.at(x, y);
      best_x = x;
    }
    EXPECT_NEAR(g90.at(x, y), 0.0f, 1e-7);
  }
  EXPECT_TRUE(best_x == 15 || best_x == 16);
  EXPECT_GT(best, 0.0f);
}

TEST(SpatialCues, GradientNormMatchesCentralDifferences) {
  const Frame f = random_frame(19, 13, 4);
  const Plane luma = f.luma();
  const ChannelMap m = spatial_cues(f);
  const Plane& norm = m.channel("grad_norm_fine");
  for (int y = 0; y < 13; ++y)
    for (int x = 0; x < 19; ++x)
      EXPECT_NEAR(norm.at(x, y), std::hypot(cdx(luma, x, y), cdy(luma, x, y)), 1e-6);
}

TEST(SpatialCues, OrientedChannelsAreProjections) {
  const Frame f = random_frame(11, 9, 5);
  const Plane luma = f.luma();
  const ChannelMap m = spatial_cues(f);
  const double s = std::numbers::sqrt2 / 2.0;
  for (int y = 0; y < 9; ++y) {
    for (int x = 0; x < 11; ++x) {
      const double gx = cdx(luma, x, y);
      const double gy = cdy(luma, x, y);
      EXPECT_NEAR(m.channel("grad_fine_0").at(x, y), std::abs(gx), 1e-6);
      EXPECT_NEAR(m.channel("grad_fine_45").at(x, y), std::abs(s * gx + s * gy), 1e-6);
      EXPECT_NEAR(m.channel("grad_fine_90").at(x, y), std::abs(gy), 1e-6);
      EXPECT_NEAR(m.channel("grad_fine_135").at(x, y), std::abs(-s * gx + s * gy), 1e-6);
    }
  }
}

TEST(FlowGradientCues, ConstantFlowIsZero) {
  const ChannelMap m = flow_gradient_cues(FlowField::constant(16, 16, 3.0f, -1.0f));
  ASSERT_EQ(m.channel_count(), 5);
  for (int c = 0; c < 5; ++c)
    for (float v : m.channel(c).data()) EXPECT_EQ(v, 0.0f);
}

TEST(FlowGradientCues, LinearRampHasUnitMagnitude) {
  FlowField f(20, 20);
  for (int y = 0; y < 20; ++y)
    for (int x = 0; x < 20; ++x) f.u.at(x, y) = static_cast<float>(x);
  const ChannelMap m = flow_gradient_cues(f);
  const Plane& mag = m.channel(0);
  for (int y = 1; y < 19; ++y)
    for (int x = 1; x < 19; ++x) EXPECT_NEAR(mag.at(x, y), 1.0f, 1e-6);
}

TEST(FlowGradientCues, VerticalSeamPeaksOnSeam) {
  FlowField f(32, 16);
  for (int y = 0; y < 16; ++y)
    for (int x = 16; x < 32; ++x) f.u.at(x, y) = 2.0f;
  const ChannelMap m = flow_gradient_cues(f);
  const Plane& o0 = m.channel("flow_grad_0");
  const Plane& o90 = m.channel("flow_grad_90");
  for (int y = 4; y < 12; ++y) {
    int best_x = 0;
    for (int x = 0; x < 32; ++x)
      if (o0.at(x, y) > o0.at(best_x, y)) best_x = x;
    EXPECT_GE(best_x, 14);
    EXPECT_LE(best_x, 17);
    EXPECT_GT(o0.at(best_x, y), 10.0f * o90.at(best_x, y) + 1e-6f);
  }
}

TEST(Hog, ConstantFrameIsZero) {
  const HogDescriptorMap h = hog_map(Frame::constant(10, 10, 3, 0.3f));
  for (int y = 0; y < 10; ++y)
    for (int x = 0; x < 10; ++x)
      for (int b = 0; b < kHogBins; ++b) EXPECT_EQ(h.at(x, y, b), 0.0f);
}

TEST(Hog, EveryDescriptorUnitOrZero) {
  const Frame f = random_frame(24, 24, 7);
  const HogDescriptorMap h = hog_map(f);
  for (int y = 0; y < 24; ++y) {
    for (int x = 0; x < 24; ++x) {
      double n2 = 0.0;
      for (int b = 0; b < kHogBins; ++b) n2 += static_cast<double>(h.at(x, y, b)) * h.at(x, y, b);
      const double n = std::sqrt(n2);
      EXPECT_TRUE(n == 0.0 || std::abs(n - 1.0) < 1e-6) << n;
    }
  }
}

TEST(Hog, StepEdgeVotesForHorizontalGradientBin) {
  const HogDescriptorMap h = hog_map(step_frame(32, 16, 16));
  for (int x = 14; x <= 17; ++x) {
    for (int b = 1; b < kHogBins; ++b) EXPECT_GT(h.at(x, 8, 0), h.at(x, 8, b));
    EXPECT_NEAR(h.at(x, 8, 0), 1.0f, 1e-6);
  }
}

TEST(WarpError, IdenticalDescriptorsZeroFlowIsZero) {
  const Frame f = random_frame(128, 128, 9);
  const HogDescriptorMap d = hog_map(f);
  const Plane e = warp_error(d, d, FlowField(128, 128));
  for (float v : e.data()) EXPECT_LE(std::abs(v), 1e-6f);
}

TEST(WarpError, CorrectShiftBeatsWrongFlow) {
  // frame_t1 is frame_t shifted right by 2; the flow t -> t+1 is (2, 0).
  const Frame f0 = random_frame(48, 32, 10);
  std::vector<float> data(f0.data().begin(), f0.data().end());
  for (int y = 0; y < 32; ++y)
    for (int x = 0; x < 48; ++x)
      for (int c = 0; c < 3; ++c)
        data[(static_cast<std::size_t>(y) * 48 + x) * 3 + c] = f0.at(std::max(x - 2, 0), y, c);
  const Frame f1(48, 32, 3, data);
  const HogDescriptorMap d0 = hog_map(f0);
  const HogDescriptorMap d1 = hog_map(f1);
  const Plane good = warp_error(d0, d1, FlowField::constant(48, 32, 2.0f, 0.0f));
  const Plane bad = warp_error(d0, d1, FlowField(48, 32));
  double mean_good = 0.0, mean_bad = 0.0;
  int n = 0;
  for (int y = 3; y < 29; ++y) {
    for (int x = 6; x < 42; ++x) {
      EXPECT_LE(good.at(x, y), 1e-5f);
      mean_good += good.at(x, y);
      mean_bad += bad.at(x, y);
      ++n;
    }
  }
  EXPECT_GT(mean_bad / n, mean_good / n);
}

TEST(Mbh, ConstantFlowIsZero) {
  const ChannelMap m = mbh(FlowField::constant(16, 16, -2.0f, 5.0f));
  ASSERT_EQ(m.channel_count(), 8);
  for (int c = 0; c < 8; ++c)
    for (float v : m.channel(c).data()) EXPECT_EQ(v, 0.0f);
}

TEST(Mbh, InvariantToConstantOffset) {
  std::mt19937 rng(12);
  std::uniform_real_distribution<float> offset(-10.0f, 10.0f);
  for (int trial = 0; trial < 5; ++trial) {
    const FlowField f = random_flow(32, 24, rng);
    FlowField g = f;
    const float c1 = offset(rng);
    const float c2 = offset(rng);
    for (float& v : g.u.data()) v += c1;
    for (float& v : g.v.data()) v += c2;
    const ChannelMap a = mbh(f);
    const ChannelMap b = mbh(g);
    for (int c = 0; c < 8; ++c)
      for (std::size_t i = 0; i < a.channel(c).size(); ++i)
        EXPECT_LT(std::abs(a.channel(c).data()[i] - b.channel(c).data()[i]), 1e-6f);
  }
}

TEST(Mbh, EnergyOnMovingSquarePerimeter) {
  const SquareMotion m = square_motion();
  const ChannelMap h = mbh(m.forward);
  Plane energy(64, 64);
  for (int c = 0; c < 8; ++c)
    for (std::size_t i = 0; i < energy.size(); ++i) energy.data()[i] += h.channel(c).data()[i];
  // The 5x5 window spreads energy up to 3 px off the outline.
  Plane band(64, 64);
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 64; ++x) {
      const bool outer = x >= 16 && x < 44 && y >= 18 && y < 46;
      const bool inner = x >= 24 && x < 36 && y >= 26 && y < 38;
      band.at(x, y) = outer && !inner ? 1.0f : 0.0f;
    }
  EXPECT_GT(band_share(energy, band), 0.999);
}

TEST(FeatureStack, ChannelCountsAndUniqueNames) {
  const SquareMotion m = square_motion();
  const FeatureStack s = assemble_feature_stack(m.f0, m.f1, m.forward, m.backward);
  EXPECT_EQ(s.spatial.channel_count(), kSpatialChannels);
  EXPECT_EQ(s.temporal.channel_count(), kTemporalChannels);
  EXPECT_EQ(s.combined.channel_count(), s.spatial.channel_count() + s.temporal.channel_count());
  EXPECT_EQ(s.combined.channel_count(), 33);
  const std::set<std::string> names(s.combined.names().begin(), s.combined.names().end());
  EXPECT_EQ(names.size(), 33u);
  for (int c = 0; c < s.combined.channel_count(); ++c)
    for (float v : s.combined.channel(c).data()) ASSERT_TRUE(std::isfinite(v));
}

TEST(FeatureStack, StaticSceneHasZeroTemporalChannels) {
  const Frame f = random_frame(32, 32, 13);
  const FeatureStack s = assemble_feature_stack(f, f, FlowField(32, 32), FlowField(32, 32));
  for (int c = 0; c < s.temporal.channel_count(); ++c)
    for (float v : s.temporal.channel(c).data()) EXPECT_LE(std::abs(v), 1e-6f) << s.temporal.names()[c];
}

TEST(FeatureStack, WarpErrorAndMbhConcentrateOnPerimeter) {
  const SquareMotion m = square_motion();
  const FeatureStack s = assemble_feature_stack(m.f0, m.f1, m.forward, m.backward);
  // Widen the band to the 5x5 accumulation window and the 3 px motion.
  Plane band(64, 64);
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 64; ++x) {
      const bool outer = x >= 15 && x < 48 && y >= 17 && y < 47;
      const bool inner = x >= 25 && x < 35 && y >= 27 && y < 37;
      band.at(x, y) = outer && !inner ? 1.0f : 0.0f;
    }
  EXPECT_GT(band_share(s.combined.channel("warp_error_fwd"), band), 0.95);
  EXPECT_GT(band_share(s.combined.channel("mbh_u_0"), band), 0.95);
}

TEST(FeatureStack, SizeMismatchIsRejected) {
  const Frame f = Frame::constant(16, 16, 3, 0.5f);
  EXPECT_THROW(assemble_feature_stack(f, f, FlowField(8, 16), FlowField(16, 16)), Error);
}

TEST(GridHistograms, MatchIndependentCellAccumulation) {
  std::mt19937 rng(14);
  std::uniform_real_distribution<float> d(-1.0f, 1.0f);
  Plane gx(13, 10), gy(13, 10);
  for (float& v : gx.data()) v = d(rng);
  for (float& v : gy.data()) v = d(rng);
  const int bins = 8, grid = 4;
  const auto h = grid_orientation_histograms(gx, gy, bins, grid);
  std::vector<double> oracle(static_cast<std::size_t>(grid * grid * bins), 0.0);
  for (int y = 0; y < 10; ++y) {
    for (int x = 0; x < 13; ++x) {
      const double a = gx.at(x, y), b = gy.at(x, y);
      double theta = std::atan2(b, a);
      if (theta < 0) theta += std::numbers::pi;
      if (theta >= std::numbers::pi) theta -= std::numbers::pi;
      const double pos = theta / (std::numbers::pi / bins);
      const int lo = static_cast<int>(std::floor(pos));
      const double frac = pos - lo;
      const int cell = (y * grid / 10) * grid + (x * grid / 13);
      const double mag = std::hypot(a, b);
      oracle[static_cast<std::size_t>(cell * bins + lo % bins)] += mag * (1.0 - frac);
      oracle[static_cast<std::size_t>(cell * bins + (lo + 1) % bins)] += mag * frac;
    }
  }
  for (std::size_t i = 0; i < h.size(); ++i) EXPECT_NEAR(h[i], oracle[i], 1e-5);
}
