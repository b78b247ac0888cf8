#include <gtest/gtest.h>

#include <fstream>
#include <random>

#include "arp/abnormality.hpp"
#include "arp/synthetic.hpp"
#include "test_support.hpp"

using namespace arp;
using namespace arp::abnormal;

namespace {

SceneDistribution peaked(int m, int at, double p) {
  SceneDistribution d;
  d.probabilities.assign(static_cast<std::size_t>(m), (1.0 - p) / (m - 1));
  d.probabilities[static_cast<std::size_t>(at)] = p;
  return d;
}

ScenePriorTable office_kitchen_prior() {
  // "work" happens in the office, "cook" in the kitchen.
  std::vector<PriorSample> samples;
  for (int i = 0; i < 5; ++i) samples.push_back({0, peaked(2, 0, 0.9)});
  for (int i = 0; i < 5; ++i) samples.push_back({1, peaked(2, 1, 0.9)});
  return learn_scene_prior(samples, {"work", "cook"}, {"office", "kitchen"});
}

}  // namespace

TEST(Posterior, WorkedExamples) {
  const Posterior a = posterior_action_given_scene(0.6, 1.0, 1.0);
  EXPECT_DOUBLE_EQ(a.raw, 0.6);
  EXPECT_DOUBLE_EQ(a.clamped, 0.6);
  const Posterior b = posterior_action_given_scene(0.3, 0.5, 0.0);
  EXPECT_DOUBLE_EQ(b.raw, 0.0);
  EXPECT_DOUBLE_EQ(b.clamped, 0.0);
  const Posterior c = posterior_action_given_scene(0.9, 0.3, 0.9);
  EXPECT_NEAR(c.raw, 2.7, 1e-12);
  EXPECT_DOUBLE_EQ(c.clamped, 1.0);
}

TEST(Posterior, ZeroSceneProbabilityIsUndefined) {
  EXPECT_THROW(posterior_action_given_scene(0.5, 0.0, 0.5), Error);
  EXPECT_THROW(posterior_action_given_scene(1.5, 0.5, 0.5), Error);
}

TEST(AbdDecision, WorkedExamplesAndStrictBoundary) {
  const auto a = abd_decision(0.9, 0.2);
  EXPECT_NEAR(a.abd_index, 0.7, 1e-12);
  EXPECT_TRUE(a.abnormal);
  const auto b = abd_decision(0.6, 0.6);
  EXPECT_DOUBLE_EQ(b.abd_index, 0.0);
  EXPECT_FALSE(b.abnormal);
  const auto c = abd_decision(1.0, 0.5);
  EXPECT_DOUBLE_EQ(c.abd_index, 0.5);
  EXPECT_FALSE(c.abnormal);
  EXPECT_DOUBLE_EQ(c.threshold, 0.5);
}

TEST(AbdDecision, MonotoneInPosterior) {
  for (double pa = 0.0; pa <= 1.0; pa += 0.05) {
    bool was_normal = false;
    for (double post = 0.0; post <= 1.0; post += 0.01) {
      const auto d = abd_decision(pa, post);
      EXPECT_GE(d.abd_index, -1.0);
      EXPECT_LE(d.abd_index, 1.0);
      if (d.abnormal) EXPECT_GT(d.abd_index, 0.0);
      if (was_normal) EXPECT_FALSE(d.abnormal);
      was_normal = was_normal || !d.abnormal;
    }
  }
}

TEST(LearnScenePrior, SingleSceneAction) {
  std::vector<PriorSample> samples(10, PriorSample{0, peaked(4, 2, 0.7)});
  const auto t = learn_scene_prior(samples, {"eat"}, default_scene_labels());
  ASSERT_EQ(t.scenes[2], "kitchen");
  EXPECT_DOUBLE_EQ(t.at(0, 2), 1.0);
  for (int s : {0, 1, 3}) EXPECT_DOUBLE_EQ(t.at(0, s), 0.0);
  EXPECT_EQ(t.counts[2], 10);
}

TEST(LearnScenePrior, ThreeToOneSplit) {
  std::vector<PriorSample> samples{{0, peaked(4, 0, 0.6)}, {0, peaked(4, 0, 0.5)}, {0, peaked(4, 0, 0.9)},
                                   {0, peaked(4, 1, 0.4)}};
  const auto t = learn_scene_prior(samples, {"type"}, default_scene_labels());
  EXPECT_DOUBLE_EQ(t.at(0, 0), 0.75);
  EXPECT_DOUBLE_EQ(t.at(0, 1), 0.25);
  const auto literal = learn_scene_prior(samples, {"type"}, default_scene_labels(), PriorMode::literal);
  EXPECT_DOUBLE_EQ(literal.at(0, 0), 1.0);
  EXPECT_DOUBLE_EQ(literal.at(0, 1), 0.0);
}

TEST(LearnScenePrior, MatchesBruteForceTally) {
  std::mt19937 rng(4);
  std::uniform_int_distribution<int> action(0, 2), scene(0, 3);
  std::uniform_real_distribution<double> p(0.3, 0.9);
  std::vector<PriorSample> samples;
  for (int i = 0; i < 200; ++i) samples.push_back({action(rng), peaked(4, scene(rng), p(rng))});
  const auto t = learn_scene_prior(samples, {"a", "b", "c"}, default_scene_labels());
  EXPECT_NO_THROW(t.validate());
  for (int a = 0; a < 3; ++a) {
    int total = 0;
    std::vector<int> hits(4, 0);
    for (const auto& s : samples) {
      if (s.action != a) continue;
      ++total;
      int best = 0;
      for (int j = 1; j < 4; ++j)
        if (s.scene.probabilities[static_cast<std::size_t>(j)] > s.scene.probabilities[static_cast<std::size_t>(best)])
          best = j;
      ++hits[static_cast<std::size_t>(best)];
    }
    double row = 0.0;
    for (int j = 0; j < 4; ++j) {
      EXPECT_DOUBLE_EQ(t.at(a, j), static_cast<double>(hits[static_cast<std::size_t>(j)]) / total);
      EXPECT_EQ(t.counts[static_cast<std::size_t>(a * 4 + j)], hits[static_cast<std::size_t>(j)]);
      row += t.at(a, j);
    }
    EXPECT_NEAR(row, 1.0, 1e-6);
  }
}

TEST(LearnScenePrior, ActionWithoutSamplesIsAnError) {
  std::vector<PriorSample> samples{{0, peaked(2, 0, 0.9)}};
  EXPECT_THROW(learn_scene_prior(samples, {"a", "b"}, {"x", "y"}), Error);
}

TEST(PriorTable, JsonRoundTrip) {
  const auto t = office_kitchen_prior();
  EXPECT_EQ(prior_from_json(prior_to_json(t)), t);
  arp::testing::TempDir dir;
  write_prior(t, dir / "prior.json");
  EXPECT_EQ(read_prior(dir / "prior.json"), t);
}

TEST(ColourHistogram, SumsToOneAndBinsConstant) {
  const auto h = colour_histogram(Frame::constant(8, 8, 3, 0.1f));
  ASSERT_EQ(h.size(), static_cast<std::size_t>(kHistogramLength));
  EXPECT_DOUBLE_EQ(h[0], 1.0);
  std::mt19937 rng(2);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  std::vector<float> data(32 * 32 * 3);
  for (float& v : data) v = u(rng);
  const auto g = colour_histogram(Frame(32, 32, 3, data));
  double sum = 0.0;
  for (double v : g) sum += v;
  EXPECT_NEAR(sum, 1.0, 1e-12);
}

TEST(HistogramSceneProvider, CentroidImageIsItsOwnScene) {
  synth::ActionSuiteConfig cfg;
  cfg.per_action = 2;
  const auto suite = synth::generate_action_suite(cfg, 6);
  std::vector<Frame> frames;
  std::vector<int> ids;
  for (const auto& s : suite) {
    frames.push_back(s.frames.frames[0]);
    ids.push_back(s.background_id);
  }
  const auto p = HistogramSceneProvider::fit(frames, ids, default_scene_labels());
  for (std::size_t i = 0; i < frames.size(); ++i) {
    const SceneDistribution d = p.scene_probabilities("x", frames[i]);
    EXPECT_NO_THROW(d.validate());
    EXPECT_EQ(d.argmax(), ids[i]);
  }
  arp::testing::TempDir dir;
  p.write(dir / "scene.json");
  const auto back = HistogramSceneProvider::read(dir / "scene.json");
  EXPECT_EQ(back.centroids(), p.centroids());
  EXPECT_EQ(back.labels(), p.labels());
}

TEST(FileSceneProvider, PassthroughAndValidation) {
  arp::testing::TempDir dir;
  const std::vector<std::string> labels{"office", "corridor", "kitchen"};
  std::ofstream(dir / "good.json") << R"({"probabilities": [0.8, 0.15, 0.05]})";
  std::ofstream(dir / "negative.json") << R"({"probabilities": [1.1, -0.15, 0.05]})";
  const FileSceneProvider p(dir.path(), labels);
  const Frame f = Frame::constant(4, 4, 3, 0.0f);
  const auto d = p.scene_probabilities("good", f);
  EXPECT_EQ(d.probabilities, (std::vector<double>{0.8, 0.15, 0.05}));
  try {
    p.scene_probabilities("negative", f);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::invalid_distribution);
  }
  EXPECT_THROW(p.scene_probabilities("absent", f), Error);
}

TEST(Decide, UsualAndUnusualPlaces) {
  const auto prior = office_kitchen_prior();
  const action::ActionDistribution cooking{{0.1, 0.9}};
  const auto normal = decide(cooking, peaked(2, 1, 0.8), prior);
  EXPECT_EQ(normal.action, 1);
  EXPECT_EQ(normal.scene, 1);
  EXPECT_FALSE(normal.abnormal);
  const auto odd = decide(cooking, peaked(2, 0, 0.8), prior);
  EXPECT_EQ(odd.scene, 0);
  EXPECT_DOUBLE_EQ(odd.p_scene_given_action, 0.0);
  EXPECT_NEAR(odd.abd_index, 0.9, 1e-12);
  EXPECT_TRUE(odd.abnormal);
}

TEST(Decide, MarginalSceneProbability) {
  const auto prior = office_kitchen_prior();
  const action::ActionDistribution actions{{0.3, 0.7}};
  const auto d = decide(actions, peaked(2, 1, 0.6), prior, 0.5, SceneProbabilityMode::marginal);
  EXPECT_NEAR(d.p_scene, 0.7, 1e-12);
  EXPECT_NEAR(d.p_action_given_scene_raw, 1.0, 1e-12);
}

TEST(Evaluate, FourteenOfSixteen) {
  const auto prior = office_kitchen_prior();
  std::vector<EvaluationCase> cases;
  for (int i = 0; i < 16; ++i) {
    const bool unusual = i % 2 == 0;
    EvaluationCase c;
    c.id = "s" + std::to_string(i);
    c.actions = action::ActionDistribution{{0.05, 0.95}};
    c.scene = peaked(2, unusual ? 0 : 1, 0.8);
    // Two truth flags are flipped so exactly two decisions are wrong.
    c.truth_abnormal = i < 2 ? !unusual : unusual;
    cases.push_back(c);
  }
  const EvaluationResult r = evaluate_abnormality(cases, prior);
  EXPECT_DOUBLE_EQ(r.success_rate, 0.875);
  int correct = 0;
  for (const auto& rec : r.records) correct += rec.decision.abnormal == rec.truth_abnormal;
  EXPECT_EQ(correct, 14);
  EXPECT_DOUBLE_EQ(success_rate(r.records), 14.0 / 16.0);
  EXPECT_THROW(evaluate_abnormality({}, prior), Error);
}
