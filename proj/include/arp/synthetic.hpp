#pragma once

#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "arp/image.hpp"

namespace arp::synth {

/// Band-limited periodic texture: a sum of sinusoids whose frequencies are
/// integer multiples of 1/period, so any real-valued shift is exact under wrap.
struct TextureSpec {
  int components = 24;
  int period = 128;
  int min_frequency = 2;
  int max_frequency = 14;
  /// When set, frequency vectors cluster around this direction (radians) to form stripes.
  std::optional<double> orientation;
  double orientation_jitter = 0.15;
  double tint[3] = {0.5, 0.5, 0.5};
  double contrast = 0.35;
};

class Texture {
 public:
  Texture() = default;
  Texture(const TextureSpec& spec, std::uint64_t seed);

  /// Channel value in [0,1] at a real-valued position.
  float value(double x, double y, int channel) const;

 private:
  struct Wave {
    double fx;
    double fy;
    double phase;
    double amplitude;
  };
  std::vector<Wave> waves_;
  double tint_[3] = {0.5, 0.5, 0.5};
  double contrast_ = 0.0;
  double norm_ = 1.0;
};

struct Distractor {
  int x = 0;
  int y = 0;
  int w = 0;
  int h = 0;
  Texture texture;
};

/// One textured square (the actor) over a textured background, both viewed
/// by a camera translating at constant velocity.
struct SceneSpec {
  int width = 128;
  int height = 128;
  int frames = 4;
  Texture background;
  Texture actor;
  int side = 32;
  /// Actor top-left in frame 0 (image coordinates).
  int start_x = 0;
  int start_y = 0;
  /// Actor and camera velocities in pixels per frame; the actor's image
  /// velocity is their difference.
  int velocity_x = 0;
  int velocity_y = 0;
  double camera_x = 0.0;
  double camera_y = 0.0;
  /// Static background patches (move with the scene, never with the actor).
  std::vector<Distractor> distractors;
  double noise = 0.0;
  std::uint64_t noise_seed = 0;
};

struct SyntheticSequence {
  FrameSequence frames;
  /// Binary (0/1) actor perimeter per frame; all zero without relative motion.
  std::vector<Plane> boundaries;
  std::vector<BoxProposal> boxes;
  int label = 0;
  int background_id = 0;
};

/// Renders a scene; throws invalid_box when the actor does not fit the frame.
SyntheticSequence render_scene(const SceneSpec& spec);

/// Actor top-left at frame t.
std::pair<int, int> actor_position(const SceneSpec& spec, int t);

struct SyntheticConfig {
  int count = 20;
  int width = 128;
  int height = 128;
  int frames = 4;
  int min_side = 28;
  int max_side = 40;
  /// Integer actor speed per axis, chebyshev magnitude in [min_speed, max_speed].
  int min_speed = 1;
  int max_speed = 3;
  /// Camera speed per axis drawn uniformly in [-max_camera_speed, max_camera_speed].
  double max_camera_speed = 0.0;
  int distractors = 2;
  double noise = 0.01;
};

/// Seeded moving-square suite with analytic boundary masks and boxes.
std::vector<SyntheticSequence> generate_synthetic_training_set(const SyntheticConfig& config, std::uint64_t seed);

/// Actions differ by the stripe orientation of the actor texture (action k at
/// k*pi/actions). Scene s has a fixed hue and a stripe orientation between the
/// actor orientations; scene -1 draws a novel background independent of the action.
struct ActionSuiteConfig {
  int actions = 4;
  int scenes = 4;
  int per_action = 10;
  int width = 128;
  int height = 128;
  int frames = 2;
  int min_side = 30;
  int max_side = 40;
  int min_speed = 1;
  int max_speed = 3;
  double noise = 0.01;
  /// When true every sequence of action k is shot in scene k % scenes; otherwise in a novel scene.
  bool scene_linked = true;
};

/// Background texture of scene `scene` (>= 0) or a novel random one (scene < 0).
Texture scene_texture(int scene, int scenes, std::uint64_t seed);

/// One actor performing `action` in `scene`; label = action, background_id = scene.
SyntheticSequence render_action_sequence(const ActionSuiteConfig& config, int action, int scene, std::uint64_t seed);

/// per_action sequences of every action, ordered by action then index.
std::vector<SyntheticSequence> generate_action_suite(const ActionSuiteConfig& config, std::uint64_t seed);

/// Two frames of a periodic texture where the second is the first translated
/// by (dx, dy) with wrap-around; ground-truth flow is (dx, dy) everywhere.
std::pair<Frame, Frame> translated_texture_pair(int width, int height, double dx, double dy, std::uint64_t seed);

}  // namespace arp::synth
