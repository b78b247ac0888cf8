#include "arp/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

namespace arp::synth {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

int uniform_int(std::mt19937_64& rng, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }

double uniform_real(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

TextureSpec random_tint(std::mt19937_64& rng, TextureSpec spec) {
  for (double& t : spec.tint) t = uniform_real(rng, 0.3, 0.7);
  return spec;
}

}  // namespace

Texture::Texture(const TextureSpec& spec, std::uint64_t seed) : contrast_(spec.contrast) {
  std::copy(std::begin(spec.tint), std::end(spec.tint), tint_);
  std::mt19937_64 rng(seed);
  double amplitude_sum = 0.0;
  for (int i = 0; i < spec.components; ++i) {
    int kx = 0;
    int ky = 0;
    do {
      if (spec.orientation) {
        // frequency vector perpendicular to the stripe direction
        const double angle = *spec.orientation + std::numbers::pi / 2 +
                             uniform_real(rng, -spec.orientation_jitter, spec.orientation_jitter);
        const double radius = uniform_real(rng, spec.min_frequency, spec.max_frequency);
        kx = static_cast<int>(std::lround(radius * std::cos(angle)));
        ky = static_cast<int>(std::lround(radius * std::sin(angle)));
      } else {
        kx = uniform_int(rng, -spec.max_frequency, spec.max_frequency);
        ky = uniform_int(rng, -spec.max_frequency, spec.max_frequency);
      }
    } while (std::max(std::abs(kx), std::abs(ky)) < spec.min_frequency);
    const double amplitude = uniform_real(rng, 0.5, 1.0);
    waves_.push_back(Wave{static_cast<double>(kx) / spec.period, static_cast<double>(ky) / spec.period,
                          uniform_real(rng, 0.0, kTwoPi), amplitude});
    amplitude_sum += amplitude * amplitude;
  }
  norm_ = waves_.empty() ? 1.0 : 1.0 / std::sqrt(2.0 * amplitude_sum);
}

float Texture::value(double x, double y, int channel) const {
  double s = 0.0;
  for (const Wave& w : waves_) s += w.amplitude * std::cos(kTwoPi * (w.fx * x + w.fy * y) + w.phase);
  // s * norm_ has unit variance-ish scale; soft-clip keeps the value range bounded
  const double t = std::tanh(s * norm_);
  const double channel_gain = 1.0 - 0.15 * channel;
  const double value = tint_[channel] + contrast_ * channel_gain * t;
  return static_cast<float>(std::clamp(value, 0.0, 1.0));
}

std::pair<int, int> actor_position(const SceneSpec& spec, int t) {
  return {spec.start_x + t * spec.velocity_x - static_cast<int>(std::lround(t * spec.camera_x)),
          spec.start_y + t * spec.velocity_y - static_cast<int>(std::lround(t * spec.camera_y))};
}

SyntheticSequence render_scene(const SceneSpec& spec) {
  if (spec.side <= 2 || spec.side > spec.width || spec.side > spec.height)
    throw Error(Errc::invalid_box, "actor square larger than the frame");
  std::mt19937_64 noise_rng(spec.noise_seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  // the actor moves against the background iff its velocity differs from the camera's
  const bool has_boundary = spec.velocity_x != spec.camera_x || spec.velocity_y != spec.camera_y;

  SyntheticSequence out;
  for (int t = 0; t < spec.frames; ++t) {
    const auto [ax, ay] = actor_position(spec, t);
    if (ax < 0 || ay < 0 || ax + spec.side > spec.width || ay + spec.side > spec.height)
      throw Error(Errc::invalid_box, "actor leaves the frame at t=" + std::to_string(t));
    const double cam_x = t * spec.camera_x;
    const double cam_y = t * spec.camera_y;
    std::vector<float> data(static_cast<std::size_t>(spec.width) * spec.height * 3);
    Plane boundary(spec.width, spec.height);
    for (int y = 0; y < spec.height; ++y) {
      for (int x = 0; x < spec.width; ++x) {
        // scene coordinates of this pixel: the camera moving by +c shifts content by -c
        const double sx = x + cam_x;
        const double sy = y + cam_y;
        const bool in_actor = x >= ax && x < ax + spec.side && y >= ay && y < ay + spec.side;
        const Texture* tex = &spec.background;
        double tx = sx;
        double ty = sy;
        if (in_actor) {
          tex = &spec.actor;
          tx = x - ax;
          ty = y - ay;
        } else {
          for (const Distractor& d : spec.distractors) {
            if (sx >= d.x && sx < d.x + d.w && sy >= d.y && sy < d.y + d.h) {
              tex = &d.texture;
              break;
            }
          }
        }
        for (int c = 0; c < 3; ++c) {
          double value = tex->value(tx, ty, c);
          if (spec.noise > 0.0) value += spec.noise * noise(noise_rng);
          data[(static_cast<std::size_t>(y) * spec.width + x) * 3 + c] =
              static_cast<float>(std::clamp(value, 0.0, 1.0));
        }
        if (has_boundary && in_actor &&
            (x == ax || y == ay || x == ax + spec.side - 1 || y == ay + spec.side - 1))
          boundary.at(x, y) = 1.0f;
      }
    }
    out.frames.frames.emplace_back(spec.width, spec.height, 3, std::move(data));
    out.boundaries.push_back(std::move(boundary));
    out.boxes.push_back(BoxProposal{ax, ay, spec.side, spec.side, 1.0, t});
  }
  return out;
}

std::vector<SyntheticSequence> generate_synthetic_training_set(const SyntheticConfig& config, std::uint64_t seed) {
  if (config.min_side > config.max_side || config.max_side > std::min(config.width, config.height))
    throw Error(Errc::invalid_box, "square larger than frame");
  if (config.min_speed > config.max_speed || config.min_speed < 0)
    throw Error(Errc::usage, "invalid square speed range");
  std::mt19937_64 rng(seed);
  std::vector<SyntheticSequence> suite;
  for (int i = 0; i < config.count; ++i) {
    SceneSpec spec;
    spec.width = config.width;
    spec.height = config.height;
    spec.frames = config.frames;
    spec.side = uniform_int(rng, config.min_side, config.max_side);
    spec.background = Texture(random_tint(rng, TextureSpec{}), rng());
    TextureSpec actor_spec;
    actor_spec.period = 64;
    actor_spec.min_frequency = 3;
    actor_spec.max_frequency = 10;
    spec.actor = Texture(random_tint(rng, actor_spec), rng());
    // chebyshev speed in [min_speed, max_speed] per axis pair
    do {
      spec.velocity_x = uniform_int(rng, -config.max_speed, config.max_speed);
      spec.velocity_y = uniform_int(rng, -config.max_speed, config.max_speed);
    } while (std::max(std::abs(spec.velocity_x), std::abs(spec.velocity_y)) < config.min_speed);
    if (config.max_camera_speed > 0.0) {
      spec.camera_x = uniform_real(rng, -config.max_camera_speed, config.max_camera_speed);
      spec.camera_y = uniform_real(rng, -config.max_camera_speed, config.max_camera_speed);
    }
    // choose the start so the actor stays inside for every frame
    const int last = config.frames - 1;
    const int travel_x = last * spec.velocity_x - static_cast<int>(std::lround(last * spec.camera_x));
    const int travel_y = last * spec.velocity_y - static_cast<int>(std::lround(last * spec.camera_y));
    const int lo_x = std::max(0, -travel_x);
    const int hi_x = std::min(config.width - spec.side, config.width - spec.side - travel_x);
    const int lo_y = std::max(0, -travel_y);
    const int hi_y = std::min(config.height - spec.side, config.height - spec.side - travel_y);
    if (lo_x > hi_x || lo_y > hi_y) throw Error(Errc::invalid_box, "square cannot stay inside the frame");
    spec.start_x = uniform_int(rng, lo_x, hi_x);
    spec.start_y = uniform_int(rng, lo_y, hi_y);
    for (int d = 0; d < config.distractors; ++d) {
      TextureSpec dspec;
      dspec.period = 64;
      Distractor patch;
      patch.w = uniform_int(rng, 12, 28);
      patch.h = uniform_int(rng, 12, 28);
      patch.x = uniform_int(rng, 0, config.width - patch.w);
      patch.y = uniform_int(rng, 0, config.height - patch.h);
      patch.texture = Texture(random_tint(rng, dspec), rng());
      spec.distractors.push_back(std::move(patch));
    }
    spec.noise = config.noise;
    spec.noise_seed = rng();
    SyntheticSequence seq = render_scene(spec);
    seq.background_id = i;
    suite.push_back(std::move(seq));
  }
  return suite;
}

Texture scene_texture(int scene, int scenes, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  TextureSpec spec;
  spec.components = 16;
  spec.contrast = 0.25;
  if (scene >= 0) {
    if (scenes < 1 || scene >= scenes) throw Error(Errc::out_of_range, "scene id outside the vocabulary");
    const double hue = static_cast<double>(scene) / scenes;
    for (int c = 0; c < 3; ++c) spec.tint[c] = 0.5 + 0.18 * std::cos(kTwoPi * (hue - c / 3.0));
    spec.orientation = std::numbers::pi * (scene + 0.5) / scenes;
  } else {
    for (double& t : spec.tint) t = uniform_real(rng, 0.3, 0.7);
    spec.orientation = uniform_real(rng, 0.0, std::numbers::pi);
  }
  return Texture(spec, rng());
}

SyntheticSequence render_action_sequence(const ActionSuiteConfig& config, int action, int scene, std::uint64_t seed) {
  if (config.actions < 2 || action < 0 || action >= config.actions)
    throw Error(Errc::out_of_range, "action id outside the action set");
  if (config.min_side > config.max_side || config.max_side > std::min(config.width, config.height))
    throw Error(Errc::invalid_box, "square larger than frame");
  if (config.min_speed > config.max_speed || config.min_speed < 0) throw Error(Errc::usage, "invalid square speed range");
  std::mt19937_64 rng(seed);
  SceneSpec spec;
  spec.width = config.width;
  spec.height = config.height;
  spec.frames = config.frames;
  spec.side = uniform_int(rng, config.min_side, config.max_side);
  spec.background = scene_texture(scene, config.scenes, rng());
  TextureSpec actor_spec;
  actor_spec.period = 64;
  actor_spec.min_frequency = 4;
  actor_spec.max_frequency = 8;
  actor_spec.contrast = 0.4;
  actor_spec.orientation = std::numbers::pi * action / config.actions;
  spec.actor = Texture(random_tint(rng, actor_spec), rng());
  do {
    spec.velocity_x = uniform_int(rng, -config.max_speed, config.max_speed);
    spec.velocity_y = uniform_int(rng, -config.max_speed, config.max_speed);
  } while (std::max(std::abs(spec.velocity_x), std::abs(spec.velocity_y)) < config.min_speed);
  const int last = config.frames - 1;
  const int lo_x = std::max(0, -last * spec.velocity_x);
  const int hi_x = std::min(config.width - spec.side, config.width - spec.side - last * spec.velocity_x);
  const int lo_y = std::max(0, -last * spec.velocity_y);
  const int hi_y = std::min(config.height - spec.side, config.height - spec.side - last * spec.velocity_y);
  if (lo_x > hi_x || lo_y > hi_y) throw Error(Errc::invalid_box, "square cannot stay inside the frame");
  spec.start_x = uniform_int(rng, lo_x, hi_x);
  spec.start_y = uniform_int(rng, lo_y, hi_y);
  spec.noise = config.noise;
  spec.noise_seed = rng();
  SyntheticSequence seq = render_scene(spec);
  seq.label = action;
  seq.background_id = scene;
  return seq;
}

std::vector<SyntheticSequence> generate_action_suite(const ActionSuiteConfig& config, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<SyntheticSequence> suite;
  for (int a = 0; a < config.actions; ++a)
    for (int i = 0; i < config.per_action; ++i) {
      const int scene = config.scene_linked ? a % std::max(1, config.scenes) : -1;
      suite.push_back(render_action_sequence(config, a, scene, rng()));
    }
  return suite;
}

std::pair<Frame, Frame> translated_texture_pair(int width, int height, double dx, double dy, std::uint64_t seed) {
  TextureSpec spec;
  spec.period = width;
  spec.min_frequency = 2;
  spec.max_frequency = std::max(3, width / 12);
  const Texture tex(spec, seed);
  // a pattern period equal to the width wraps horizontally; vertical wrap needs height == width
  auto render = [&](double ox, double oy) {
    std::vector<float> data(static_cast<std::size_t>(width) * height * 3);
    for (int y = 0; y < height; ++y)
      for (int x = 0; x < width; ++x)
        for (int c = 0; c < 3; ++c)
          data[(static_cast<std::size_t>(y) * width + x) * 3 + c] = tex.value(x - ox, y - oy, c);
    return Frame(width, height, 3, std::move(data));
  };
  return {render(0.0, 0.0), render(dx, dy)};
}

}  // namespace arp::synth
