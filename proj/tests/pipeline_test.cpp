#include <gtest/gtest.h>

#include <fstream>
#include <random>
#include <sstream>

#include "arp/media_io.hpp"
#include "arp/pipeline.hpp"
#include "arp/synthetic.hpp"
#include "test_support.hpp"

using namespace arp;
using namespace arp::pipeline;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

std::string frame_file(int t, const char* ext) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d%s", t, ext);
  return buf;
}

/// Writes frames as PNGs plus a manifest; boundary maps go to <ext>/<id>/NNNN.pgm.
fs::path write_sequence(const fs::path& root, const std::string& id, const std::vector<Frame>& frames,
                        const std::vector<Plane>& boundaries) {
  io::SequenceManifest m;
  m.root = id;
  fs::create_directories(root / id);
  for (std::size_t t = 0; t < frames.size(); ++t) {
    m.frames.push_back(frame_file(static_cast<int>(t), ".png"));
    io::write_image(frames[t], root / id / m.frames.back());
  }
  for (std::size_t t = 0; t < boundaries.size(); ++t)
    io::write_boundary_map(BoundaryMap(boundaries[t]), root / "ext" / id / frame_file(static_cast<int>(t), ".pgm"));
  io::write_manifest(m, root / (id + ".json"));
  return root / (id + ".json");
}

Frame textured(int w, int h, std::uint64_t seed) {
  const synth::Texture tex(synth::TextureSpec{}, seed);
  std::vector<float> data;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) data.push_back(tex.value(x, y, c));
  return Frame(w, h, 3, data);
}

std::vector<fs::path> files_under(const fs::path& dir) {
  std::vector<fs::path> out;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file()) out.push_back(fs::relative(e.path(), dir));
  std::sort(out.begin(), out.end());
  return out;
}

PipelineConfig fast_config(const fs::path& ext) {
  PipelineConfig c;
  c.flow.pyramid_levels = 2;
  c.external_boundaries = ext;
  return c;
}

}  // namespace

TEST(Config, RejectsUnknownKeysAndWrongTypes) {
  for (const char* text : {R"({"flow": {"alpha": 1}})", R"({"nonsense": {}})", R"({"flow": {"pyramid_levels": "3"}})",
                           R"({"abnormality": {"threshold": true}})", R"({"forest": {"rng_seed": -1}})"}) {
    try {
      config_from_json(nlohmann::json::parse(text));
      FAIL() << text;
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), Errc::usage) << text;
    }
  }
}

TEST(Config, JsonRoundTripAndOverlay) {
  PipelineConfig c;
  c.flow.pyramid_levels = 3;
  c.proposals.scales = {16, 24};
  c.threshold = 0.25;
  c.prior_mode = abnormal::PriorMode::literal;
  const nlohmann::json j = config_to_json(c);
  EXPECT_EQ(config_to_json(config_from_json(j)), j);
  const PipelineConfig o = config_from_json(nlohmann::json::parse(R"({"proposals": {"top_k": 3}})"), c);
  EXPECT_EQ(o.proposals.top_k, 3);
  EXPECT_EQ(o.flow.pyramid_levels, 3);
  EXPECT_EQ(o.threshold, 0.25);
}

TEST(Config, RelativePathsResolveAgainstConfigFile) {
  arp::testing::TempDir dir;
  fs::create_directories(dir / "cfg");
  std::ofstream(dir / "cfg" / "c.json") << R"({"forest": {"model": "forest.bin"}, "abnormality": {"prior": "/abs/p.json"}})";
  const PipelineConfig c = load_config(dir / "cfg" / "c.json");
  EXPECT_EQ(c.forest_model, dir / "cfg" / "forest.bin");
  EXPECT_EQ(c.prior, fs::path("/abs/p.json"));
}

TEST(SequenceId, StemOrDirectory) {
  EXPECT_EQ(sequence_id("a/b/walk_01.json"), "walk_01");
  EXPECT_EQ(sequence_id("a/walk_02/manifest.json"), "walk_02");
}

TEST(ActionBoxes, FallbacksAndFinalFrame) {
  std::vector<std::vector<BoxProposal>> ranked(3);
  ranked[1] = {BoxProposal{4, 4, 10, 10, 0.5, 1}};
  int quiet = 0;
  const auto boxes = action_boxes(ranked, 1, 40, 30, false, &quiet);
  ASSERT_EQ(boxes.size(), 4u);
  EXPECT_EQ(quiet, 2);
  EXPECT_EQ(boxes[0], (BoxProposal{0, 0, 40, 30, 0.0, 0}));
  EXPECT_EQ(boxes[1], (BoxProposal{4, 4, 10, 10, 0.5, 1}));
  EXPECT_EQ(boxes[2], (BoxProposal{4, 4, 10, 10, 0.0, 2}));
  EXPECT_EQ((std::tie(boxes[3].x, boxes[3].y, boxes[3].w, boxes[3].h, boxes[3].frame_index)),
            std::make_tuple(4, 4, 10, 10, 3));
}

TEST(ActionBoxes, FileRoundTripKeepsFrameOrder) {
  arp::testing::TempDir dir;
  const std::vector<BoxProposal> boxes{{0, 0, 8, 8, 0.1, 0}, {1, 2, 8, 9, 0.9, 1}, {3, 3, 5, 5, 0.0, 2}};
  write_action_boxes(boxes, dir / "b.jsonl");
  EXPECT_EQ(read_action_boxes(dir / "b.jsonl"), boxes);
  std::ofstream(dir / "bad.jsonl") << R"({"frame_index": 1, "x": 0, "y": 0, "w": 2, "h": 2, "score": 0})" << '\n';
  EXPECT_THROW(read_action_boxes(dir / "bad.jsonl"), Error);
}

TEST(RunPipeline, StaticSequenceFallsBackToFullFrame) {
  arp::testing::TempDir dir;
  const Frame f = textured(64, 48, 3);
  const fs::path manifest = write_sequence(dir.path(), "still", {f, f, f}, {Plane(64, 48), Plane(64, 48)});
  const std::vector<fs::path> manifests{manifest};
  const PipelineReport r = run_pipeline(fast_config(dir / "ext"), manifests, dir / "out");
  ASSERT_EQ(r.sequences.size(), 1u);
  EXPECT_EQ(r.sequences[0].frames, 3);
  EXPECT_EQ(r.sequences[0].no_motion_frames, 2);
  const auto boxes = read_action_boxes(dir / "out" / "still" / "action_boxes.jsonl");
  ASSERT_EQ(boxes.size(), 3u);
  for (const BoxProposal& b : boxes) EXPECT_EQ(std::tie(b.x, b.y, b.w, b.h), std::make_tuple(0, 0, 64, 48));
  EXPECT_TRUE(slurp(dir / "out" / "still" / "proposals" / "0000.jsonl").empty());
  EXPECT_TRUE(fs::exists(dir / "out" / "still" / "flow" / "backward_0001.flo"));
  EXPECT_TRUE(fs::exists(dir / "out" / "config.json"));
}

TEST(RunPipeline, CachedRerunAndByteIdenticalOutputs) {
  arp::testing::TempDir dir;
  synth::SceneSpec spec;
  spec.width = 96;
  spec.height = 96;
  spec.frames = 3;
  spec.background = synth::Texture(synth::TextureSpec{}, 4);
  spec.actor = synth::Texture(synth::TextureSpec{}, 5);
  spec.side = 32;
  spec.start_x = 20;
  spec.start_y = 30;
  spec.velocity_x = 2;
  const auto seq = synth::render_scene(spec);
  const fs::path manifest = write_sequence(dir.path(), "mover", seq.frames.frames,
                                           {seq.boundaries[0], seq.boundaries[1]});
  fs::create_directories(dir / "act");
  fs::create_directories(dir / "scn");
  std::ofstream(dir / "act" / "mover.json") << R"({"probabilities": [0.9, 0.1]})";
  std::ofstream(dir / "scn" / "mover.json") << R"({"probabilities": [0.8, 0.2]})";
  std::vector<abnormal::PriorSample> samples{{0, {{0.1, 0.9}}}, {1, {{0.9, 0.1}}}};
  abnormal::write_prior(abnormal::learn_scene_prior(samples, {"cook", "work"}, {"office", "kitchen"}),
                        dir / "prior.json");

  PipelineConfig c = fast_config(dir / "ext");
  c.write_crops = true;
  c.descriptor.crop_side = 32;
  c.action_provider = {ProviderKind::file, {}, dir / "act", {"cook", "work"}};
  c.scene_provider = {ProviderKind::file, {}, dir / "scn", {"office", "kitchen"}};
  c.prior = dir / "prior.json";
  const std::vector<fs::path> manifests{manifest};

  const PipelineReport first = run_pipeline(c, manifests, dir / "a");
  ASSERT_TRUE(first.sequences[0].decision.has_value());
  // Cooking in the office: P(A)=0.9, P(S|A)=0, so the index is 0.9.
  EXPECT_TRUE(first.sequences[0].decision->abnormal);
  EXPECT_EQ(first.sequences[0].no_motion_frames, 0);
  const auto boxes = read_action_boxes(dir / "a" / "mover" / "action_boxes.jsonl");
  const BoxProposal& truth = seq.boxes[0];
  EXPECT_LE(boxes[0].x, truth.x);
  EXPECT_LE(boxes[0].y, truth.y);
  EXPECT_GE(boxes[0].x + boxes[0].w, truth.x + truth.w);
  EXPECT_GE(boxes[0].y + boxes[0].h, truth.y + truth.h);
  EXPECT_TRUE(fs::exists(dir / "a" / "mover" / "crops" / "0002.png"));
  EXPECT_FALSE(slurp(dir / "a" / "decisions.jsonl").empty());

  const PipelineReport again = run_pipeline(c, manifests, dir / "a");
  EXPECT_GT(again.stages_cached, 0);
  EXPECT_LT(again.stages_run, first.stages_run);
  EXPECT_EQ(again.sequences[0].no_motion_frames, first.sequences[0].no_motion_frames);

  run_pipeline(c, manifests, dir / "b");
  const auto fa = files_under(dir / "a");
  ASSERT_EQ(fa, files_under(dir / "b"));
  for (const fs::path& p : fa) EXPECT_EQ(slurp(dir / "a" / p), slurp(dir / "b" / p)) << p;
}

TEST(RunPipeline, MismatchedPriorLabelsAreReported) {
  arp::testing::TempDir dir;
  const Frame f = textured(48, 48, 8);
  const fs::path manifest = write_sequence(dir.path(), "s", {f, f}, {Plane(48, 48)});
  fs::create_directories(dir / "act");
  fs::create_directories(dir / "scn");
  std::ofstream(dir / "act" / "s.json") << R"({"probabilities": [0.5, 0.5]})";
  std::ofstream(dir / "scn" / "s.json") << R"({"probabilities": [1.0, 0.0]})";
  std::vector<abnormal::PriorSample> samples{{0, {{1.0, 0.0}}}, {1, {{0.0, 1.0}}}};
  abnormal::write_prior(abnormal::learn_scene_prior(samples, {"x", "y"}, {"office", "kitchen"}), dir / "prior.json");
  PipelineConfig c = fast_config(dir / "ext");
  c.action_provider = {ProviderKind::file, {}, dir / "act", {"cook", "work"}};
  c.scene_provider = {ProviderKind::file, {}, dir / "scn", {"office", "kitchen"}};
  c.prior = dir / "prior.json";
  const std::vector<fs::path> manifests{manifest};
  try {
    run_pipeline(c, manifests, dir / "out");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::dimension_mismatch);
    EXPECT_NE(std::string(e.what()).find("decision"), std::string::npos);
  }
}

TEST(RunPipeline, DuplicateIdsAreRejected) {
  arp::testing::TempDir dir;
  const Frame f = textured(32, 32, 9);
  const fs::path m = write_sequence(dir.path(), "dup", {f, f}, {Plane(32, 32)});
  const std::vector<fs::path> manifests{m, m};
  EXPECT_THROW(run_pipeline(fast_config(dir / "ext"), manifests, dir / "out"), Error);
}
