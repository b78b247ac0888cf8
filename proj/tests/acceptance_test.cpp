// Acceptance run: prints one PASS/FAIL line per criterion and exits non-zero
// when any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <json.hpp>
#include <random>
#include <sstream>
#include <string>

#include "arp/abnormality.hpp"
#include "arp/classifier.hpp"
#include "arp/features.hpp"
#include "arp/forest.hpp"
#include "arp/media_io.hpp"
#include "arp/optical_flow.hpp"
#include "arp/pipeline.hpp"
#include "arp/proposals.hpp"
#include "arp/synthetic.hpp"

using namespace arp;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

int failures = 0;

void report(int id, bool ok, const std::string& detail) {
  std::printf("%s criterion %d: %s\n", ok ? "PASS" : "FAIL", id, detail.c_str());
  std::fflush(stdout);
  if (!ok) ++failures;
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

Frame textured_frame(int w, int h, std::uint64_t seed) {
  const synth::Texture tex(synth::TextureSpec{}, seed);
  std::vector<float> data;
  data.reserve(static_cast<std::size_t>(w) * h * 3);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) data.push_back(tex.value(x, y, c));
  return Frame(w, h, 3, data);
}

proposals::ProposalParams proposal_params() {
  proposals::ProposalParams p;
  p.scales = {24, 28, 32, 36, 40, 44, 48, 56, 64, 80, 96, 128};
  p.step_fraction = 0.1;
  p.border_strip = 1;
  return p;
}

// ---------------------------------------------------------------------------

void criterion_1() {
  const Frame f = textured_frame(128, 128, 11);
  const auto t0 = Clock::now();
  const auto d = features::hog_map(f);
  const Plane e = features::warp_error(d, d, FlowField(128, 128));
  const double elapsed = seconds_since(t0);
  float worst = 0.0f;
  for (float v : e.data()) worst = std::max(worst, std::abs(v));
  report(1, worst <= 1e-6f && elapsed < 1.0,
         fmt("identical frames, zero flow: max |E_D| = %.3g (limit 1e-6), %.3f s at 128x128 (limit 1 s)", worst,
             elapsed));
}

void criterion_2() {
  std::mt19937 rng(2);
  std::uniform_real_distribution<float> flow_value(-5.0f, 5.0f);
  std::uniform_real_distribution<float> offset(-10.0f, 10.0f);
  double worst = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    FlowField f(48, 40);
    for (float& v : f.u.data()) v = flow_value(rng);
    for (float& v : f.v.data()) v = flow_value(rng);
    FlowField g = f;
    const float cu = offset(rng);
    const float cv = offset(rng);
    for (float& v : g.u.data()) v += cu;
    for (float& v : g.v.data()) v += cv;
    const ChannelMap a = features::mbh(f);
    const ChannelMap b = features::mbh(g);
    for (int c = 0; c < a.channel_count(); ++c)
      for (std::size_t i = 0; i < a.channel(c).size(); ++i)
        worst = std::max(worst, static_cast<double>(std::abs(a.channel(c).data()[i] - b.channel(c).data()[i])));
  }
  report(2, worst < 1e-6, fmt("50 random flows plus constants: max |mbh(f+c) - mbh(f)| = %.3g (limit 1e-6)", worst));
}

void criterion_3() {
  std::mt19937 rng(3);
  std::uniform_real_distribution<double> shift(-4.0, 4.0);
  const auto t0 = Clock::now();
  double worst = 0.0;
  bool all_ok = true;
  for (int s = 0; s < 20; ++s) {
    double dx = shift(rng);
    double dy = shift(rng);
    if (s % 2 == 0) {
      dx = std::round(dx);
      dy = std::round(dy);
    }
    const auto [a, b] = synth::translated_texture_pair(128, 128, dx, dy, 100 + static_cast<std::uint64_t>(s));
    const FlowField est = flow::estimate_flow(a, b);
    const double epe = flow::mean_endpoint_error(est, FlowField::constant(128, 128, static_cast<float>(dx),
                                                                         static_cast<float>(dy)));
    worst = std::max(worst, epe);
    all_ok = all_ok && epe < 0.5;
  }
  const double elapsed = seconds_since(t0);
  report(3, all_ok && elapsed < 60.0,
         fmt("20 translated 128x128 pairs (10 integer, 10 sub-pixel, |d| <= 4): worst mean EPE %.3f px (limit 0.5), "
             "%.1f s (limit 60 s)",
             worst, elapsed));
}

// ---------------------------------------------------------------------------

struct ForestRun {
  forest::BoundaryForest forest;
  std::vector<BoundaryMap> predicted;
  std::vector<Plane> truth;
  std::vector<BoxProposal> truth_boxes;
  double f = 0.0;
  double train_seconds = 0.0;
};

features::FeatureStack stack_of(const FrameSequence& frames, std::size_t t) {
  const auto pair = flow::estimate_flow_pair(frames.frames[t], frames.frames[t + 1]);
  return features::assemble_feature_stack(frames.frames[t], frames.frames[t + 1], pair.forward, pair.backward);
}

ForestRun boundary_experiment(double camera_speed) {
  ForestRun run;
  synth::SyntheticConfig cfg;
  cfg.count = 30;
  cfg.frames = 4;
  cfg.max_camera_speed = camera_speed;
  const auto suite = synth::generate_synthetic_training_set(cfg, 2024);
  const auto t0 = Clock::now();
  std::vector<forest::PatchSample> samples;
  for (int i = 0; i < 20; ++i) {
    const auto& s = suite[static_cast<std::size_t>(i)];
    forest::ExtractionParams ep;
    ep.stride = 4;
    ep.rng_seed = static_cast<std::uint64_t>(i);
    for (auto& x : forest::extract_patch_samples(stack_of(s.frames, 0), s.boundaries[0], ep))
      samples.push_back(std::move(x));
  }
  run.forest = forest::train_forest(samples, forest::ForestParams{});
  run.train_seconds = seconds_since(t0);
  for (int i = 20; i < 30; ++i) {
    const auto& s = suite[static_cast<std::size_t>(i)];
    for (std::size_t t = 0; t + 1 < s.frames.size(); ++t) {
      run.predicted.push_back(forest::predict_boundary(stack_of(s.frames, t), run.forest));
      run.truth.push_back(s.boundaries[t]);
      run.truth_boxes.push_back(s.boxes[t]);
    }
  }
  run.f = forest::boundary_f_measure(run.predicted, run.truth, 2.0).f;
  return run;
}

void criterion_4(const ForestRun& still, const ForestRun& moving) {
  const double degradation = still.f - moving.f;
  report(4, still.f >= 0.7 && degradation < 0.1,
         fmt("held-out F-measure at 2 px: %.3f static camera (limit >= 0.7), %.3f with camera motion up to 1.5 px/frame, "
             "degradation %.3f (limit < 0.1)",
             still.f, moving.f, degradation));
}

double brute_score(const Plane& m, const BoxProposal& b, const proposals::ProposalParams& p) {
  double inner = 0.0, strip = 0.0;
  for (int y = b.y; y < b.y + b.h; ++y)
    for (int x = b.x; x < b.x + b.w; ++x) {
      const bool in = x >= b.x + p.border_strip && x < b.x + b.w - p.border_strip && y >= b.y + p.border_strip &&
                      y < b.y + b.h - p.border_strip;
      (in ? inner : strip) += m.at(x, y);
    }
  return (inner - p.border_penalty * strip) / std::pow(2.0 * (b.w + b.h), p.kappa);
}

double brute_iou(const BoxProposal& a, const BoxProposal& b) {
  const int ix = std::max(0, std::min(a.x + a.w, b.x + b.w) - std::max(a.x, b.x));
  const int iy = std::max(0, std::min(a.y + a.h, b.y + b.h) - std::max(a.y, b.y));
  const double inter = static_cast<double>(ix) * iy;
  return inter / (static_cast<double>(a.w) * a.h + static_cast<double>(b.w) * b.h - inter);
}

std::vector<BoxProposal> brute_nms(std::vector<BoxProposal> boxes, double thr) {
  // Selection sort by (score desc, x, y, w, h), then O(n^2) suppression.
  for (std::size_t i = 0; i < boxes.size(); ++i)
    for (std::size_t j = i + 1; j < boxes.size(); ++j) {
      const auto& a = boxes[i];
      const auto& b = boxes[j];
      const bool swap = b.score > a.score ||
                        (b.score == a.score && std::tie(b.x, b.y, b.w, b.h) < std::tie(a.x, a.y, a.w, a.h));
      if (swap) std::swap(boxes[i], boxes[j]);
    }
  std::vector<bool> removed(boxes.size(), false);
  std::vector<BoxProposal> kept;
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    if (removed[i]) continue;
    kept.push_back(boxes[i]);
    for (std::size_t j = i + 1; j < boxes.size(); ++j)
      if (brute_iou(boxes[i], boxes[j]) > thr) removed[j] = true;
  }
  return kept;
}

void criterion_5(const ForestRun& still) {
  const auto params = proposal_params();
  int good = 0;
  for (std::size_t k = 0; k < still.predicted.size(); ++k) {
    const auto sel = proposals::propose(still.predicted[k], params);
    if (!sel.boxes.empty() && iou(sel.boxes.front(), still.truth_boxes[k]) >= 0.5) ++good;
  }
  const double share = static_cast<double>(good) / static_cast<double>(still.predicted.size());

  std::mt19937 rng(5);
  std::uniform_real_distribution<float> value(0.0f, 1.0f);
  proposals::ProposalParams small;
  small.scales = {8, 12, 16};
  small.aspect_ratios = {0.5, 1.0, 2.0};
  double worst_score = 0.0;
  std::size_t compared = 0;
  for (int m = 0; m < 100; ++m) {
    Plane map(32, 32);
    for (float& v : map.data()) v = value(rng);
    for (const BoxProposal& b : proposals::score_boxes(BoundaryMap(map), small)) {
      ++compared;
      worst_score = std::max(worst_score, std::abs(b.score - brute_score(map, b, small)));
    }
  }

  std::uniform_int_distribution<int> pos(0, 60), side(4, 40);
  std::uniform_int_distribution<int> coarse_score(0, 9);
  int nms_match = 0;
  for (int s = 0; s < 100; ++s) {
    std::vector<BoxProposal> boxes;
    for (int i = 0; i < 40; ++i) {
      // Every other set uses a coarse score grid so ties are exercised.
      const double sc = s % 2 ? coarse_score(rng) / 10.0 : value(rng);
      boxes.push_back(BoxProposal{pos(rng), pos(rng), side(rng), side(rng), sc, 0});
    }
    if (proposals::nms(boxes, 0.5) == brute_nms(boxes, 0.5)) ++nms_match;
  }
  report(5, share >= 0.8 && compared > 0 && worst_score <= 1e-6 && nms_match == 100,
         fmt("top-1 IoU >= 0.5 on %d/%zu held-out frames = %.1f%% (limit 80%%); integral vs brute-force score max diff "
             "%.3g over %zu boxes on 100 maps (limit 1e-6); NMS equals O(n^2) oracle on %d/100 sets",
             good, still.predicted.size(), 100.0 * share, worst_score, compared, nms_match));
}

// ---------------------------------------------------------------------------

struct Described {
  std::vector<action::Descriptor> proposal;
  std::vector<action::Descriptor> full;
  std::vector<int> labels;
};

constexpr int kCropSide = 64;

Described describe_suite(const std::vector<synth::SyntheticSequence>& suite, const forest::BoundaryForest& forest) {
  Described d;
  action::DescriptorParams dp;
  dp.crop_side = kCropSide;
  for (const auto& s : suite) {
    const auto pair = flow::estimate_flow_pair(s.frames.frames[0], s.frames.frames[1]);
    const auto stack = features::assemble_feature_stack(s.frames.frames[0], s.frames.frames[1], pair.forward,
                                                        pair.backward);
    const BoundaryMap map = forest::predict_boundary(stack, forest);
    const BoxProposal box = proposals::action_regions(std::span(&map, 1), proposal_params())[0];
    const BoxProposal full{0, 0, s.frames.frames[0].width(), s.frames.frames[0].height(), 0.0, 0};
    const std::vector<FlowField> flows{pair.forward};
    d.proposal.push_back(action::describe_sequence(s.frames, std::span(&box, 1), flows, dp)[0]);
    d.full.push_back(action::describe_sequence(s.frames, std::span(&full, 1), flows, dp)[0]);
    d.labels.push_back(s.label);
  }
  return d;
}

double accuracy(const action::LinearActionModel& m, const std::vector<action::Descriptor>& x,
                const std::vector<int>& y) {
  int correct = 0;
  for (std::size_t i = 0; i < x.size(); ++i) correct += action::classify(x[i], m).argmax() == y[i];
  return static_cast<double>(correct) / static_cast<double>(x.size());
}

const std::vector<std::string>& action_names() {
  static const std::vector<std::string> names{"action0", "action1", "action2", "action3"};
  return names;
}

struct ActionModels {
  action::LinearActionModel proposal;
  std::vector<synth::SyntheticSequence> training;
};

ActionModels criterion_6(const ForestRun& still) {
  const auto t0 = Clock::now();
  synth::ActionSuiteConfig ac;
  ac.per_action = 10;
  ActionModels out;
  out.training = synth::generate_action_suite(ac, 1);
  const auto seen = synth::generate_action_suite(ac, 2);
  ac.scene_linked = false;
  const auto novel = synth::generate_action_suite(ac, 3);

  const Described tr = describe_suite(out.training, still.forest);
  const Described se = describe_suite(seen, still.forest);
  const Described no = describe_suite(novel, still.forest);
  out.proposal = action::train_classifier(tr.proposal, tr.labels, action_names()).model;
  const auto full = action::train_classifier(tr.full, tr.labels, action_names()).model;

  const double p_seen = accuracy(out.proposal, se.proposal, se.labels);
  const double p_novel = accuracy(out.proposal, no.proposal, no.labels);
  const double f_seen = accuracy(full, se.full, se.labels);
  const double f_novel = accuracy(full, no.full, no.labels);
  const double p_drop = p_seen - p_novel;
  const double f_drop = f_seen - f_novel;
  // The forest used here is trained once for criteria 4-5; its time is charged here too.
  const double elapsed = seconds_since(t0) + still.train_seconds;
  report(6, p_drop < f_drop && elapsed < 300.0,
         fmt("novel-background drop: proposal-trained %.3f (%.3f -> %.3f), full-frame-trained %.3f (%.3f -> %.3f); "
             "%.1f s including forest training (limit 300 s)",
             p_drop, p_seen, p_novel, f_drop, f_seen, f_novel, elapsed));
  return out;
}

void criterion_7() {
  bool ok = true;
  std::string detail;
  const auto a = abnormal::posterior_action_given_scene(0.6, 1.0, 1.0);
  ok = ok && a.raw == 0.6 && a.clamped == 0.6;
  const auto b = abnormal::posterior_action_given_scene(0.7, 0.5, 0.0);
  ok = ok && b.raw == 0.0 && b.clamped == 0.0;
  const auto c = abnormal::posterior_action_given_scene(0.9, 0.3, 0.9);
  ok = ok && std::abs(c.raw - 2.7) < 1e-12 && c.clamped == 1.0;
  const auto d1 = abnormal::abd_decision(0.9, 0.2);
  const auto d2 = abnormal::abd_decision(0.6, 0.6);
  const auto d3 = abnormal::abd_decision(1.0, 0.5);
  ok = ok && std::abs(d1.abd_index - 0.7) < 1e-12 && d1.abnormal;
  ok = ok && d2.abd_index == 0.0 && !d2.abnormal;
  ok = ok && d3.abd_index == 0.5 && !d3.abnormal;
  report(7, ok,
         fmt("posterior 0.6 -> %.17g/%.17g, 0 -> %g/%g, 2.7 -> raw %.17g clamped %g; ABD %.17g -> %s, %g -> %s, "
             "%g -> %s (threshold 0.5, strict)",
             a.raw, a.clamped, b.raw, b.clamped, c.raw, c.clamped, d1.abd_index, d1.abnormal ? "abnormal" : "normal",
             d2.abd_index, d2.abnormal ? "abnormal" : "normal", d3.abd_index, d3.abnormal ? "abnormal" : "normal"));
}

// ---------------------------------------------------------------------------

std::string frame_file(const char* prefix, int t, const char* ext) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s%04d%s", prefix, t, ext);
  return buf;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

std::vector<fs::path> tree_files(const fs::path& root) {
  std::vector<fs::path> out;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file()) out.push_back(fs::relative(e.path(), root));
  std::sort(out.begin(), out.end());
  return out;
}

struct Suite16 {
  std::vector<fs::path> manifests;
  std::vector<bool> truth;
};

Suite16 write_abnormality_suite(const fs::path& root) {
  // Action k is normally seen in scene k; every other pairing is planted as abnormal.
  synth::ActionSuiteConfig ac;
  Suite16 suite;
  for (int a = 0; a < 4; ++a) {
    for (int s = 0; s < 4; ++s) {
      const auto seq = synth::render_action_sequence(ac, a, s, 500 + static_cast<std::uint64_t>(4 * a + s));
      const std::string id = "a" + std::to_string(a) + "_s" + std::to_string(s);
      io::SequenceManifest m;
      m.root = id;
      for (std::size_t t = 0; t < seq.frames.size(); ++t) {
        m.frames.push_back(frame_file("frames/", static_cast<int>(t), ".png"));
        io::write_image(seq.frames.frames[t], root / id / m.frames.back());
      }
      m.action = action_names()[static_cast<std::size_t>(a)];
      m.scene = abnormal::default_scene_labels()[static_cast<std::size_t>(s)];
      m.abnormal = a != s;
      io::write_manifest(m, root / (id + ".json"));
      suite.manifests.push_back(root / (id + ".json"));
      suite.truth.push_back(a != s);
    }
  }
  return suite;
}

void criteria_8_and_9(const ForestRun& still, const ActionModels& models, const fs::path& work) {
  fs::remove_all(work);
  fs::create_directories(work);
  const fs::path forest_path = work / "forest.bin";
  const fs::path model_path = work / "action.bin";
  const fs::path scene_path = work / "scene.json";
  const fs::path prior_path = work / "prior.json";
  forest::write_forest(still.forest, forest_path);
  action::write_model(models.proposal, model_path);

  std::vector<Frame> first_frames;
  std::vector<int> scene_ids;
  for (const auto& s : models.training) {
    first_frames.push_back(s.frames.frames[0]);
    scene_ids.push_back(s.background_id);
  }
  const auto scenes = abnormal::HistogramSceneProvider::fit(first_frames, scene_ids, abnormal::default_scene_labels());
  scenes.write(scene_path);
  std::vector<abnormal::PriorSample> samples;
  for (const auto& s : models.training)
    samples.push_back({s.label, scenes.scene_probabilities("", s.frames.frames[0])});
  const auto prior = abnormal::learn_scene_prior(samples, action_names(), abnormal::default_scene_labels());
  abnormal::write_prior(prior, prior_path);

  const Suite16 suite = write_abnormality_suite(work / "data");
  pipeline::PipelineConfig cfg;
  cfg.forest_model = forest_path;
  cfg.proposals = proposal_params();
  cfg.descriptor.crop_side = kCropSide;
  cfg.action_provider = {pipeline::ProviderKind::builtin, model_path, {}, {}};
  cfg.scene_provider = {pipeline::ProviderKind::builtin, scene_path, {}, {}};
  cfg.prior = prior_path;

  const auto t0 = Clock::now();
  const auto rep = pipeline::run_pipeline(cfg, suite.manifests, work / "run_a");
  const double first_run = seconds_since(t0);

  std::vector<abnormal::EvaluationCase> cases;
  for (std::size_t i = 0; i < rep.sequences.size(); ++i)
    cases.push_back({rep.sequences[i].id, *rep.sequences[i].actions, *rep.sequences[i].scene, suite.truth[i]});
  const auto eval = abnormal::evaluate_abnormality(cases, prior);

  // Recount from the decision records the pipeline wrote.
  std::istringstream lines(slurp(work / "run_a" / "decisions.jsonl"));
  std::string line;
  int records = 0, correct = 0, planted = 0, planted_flagged = 0;
  while (std::getline(lines, line)) {
    const auto j = nlohmann::json::parse(line);
    const std::string id = j.at("id");
    const std::size_t i = static_cast<std::size_t>(std::find_if(rep.sequences.begin(), rep.sequences.end(),
                                                                [&](const auto& r) { return r.id == id; }) -
                                                   rep.sequences.begin());
    const bool flagged = j.at("abnormal").get<bool>();
    ++records;
    correct += flagged == suite.truth[i];
    if (suite.truth[i] && j.at("p_action").get<double>() >= 0.8 && j.at("p_scene_given_action").get<double>() == 0.0) {
      ++planted;
      planted_flagged += flagged;
    }
  }
  const double recount = records > 0 ? static_cast<double>(correct) / records : -1.0;
  report(8, records == 16 && recount == eval.success_rate && planted_flagged == planted && planted > 0,
         fmt("16 sequences (4 actions x 4 scenes, 12 planted abnormal): success rate %.4f, recount from decision "
             "records %.4f (%d/%d); planted cases with P(A) >= 0.8 and zero prior mass flagged %d/%d; pipeline %.1f s",
             eval.success_rate, recount, correct, records, planted_flagged, planted, first_run));

  pipeline::run_pipeline(cfg, suite.manifests, work / "run_b");
  const auto fa = tree_files(work / "run_a");
  const auto fb = tree_files(work / "run_b");
  int identical = 0;
  if (fa == fb)
    for (const fs::path& p : fa) identical += slurp(work / "run_a" / p) == slurp(work / "run_b" / p);
  report(9, fa == fb && identical == static_cast<int>(fa.size()),
         fmt("two full pipeline runs: %d/%zu artifacts byte-identical (%zu files in the second tree)", identical,
             fa.size(), fb.size()));
}

// ---------------------------------------------------------------------------

void criterion_10() {
  std::mt19937 rng(10);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_int_distribution<int> pick(2, 5);
  double worst = 0.0;
  for (int inst = 0; inst < 10; ++inst) {
    const int k = pick(rng);
    const int dims = pick(rng) + 1;
    const int n = pick(rng) + 3;
    action::LinearActionModel m;
    for (int c = 0; c < k; ++c) m.labels.push_back("c" + std::to_string(c));
    m.dims = dims;
    for (int i = 0; i < k * dims; ++i) m.weights.push_back(0.5 * normal(rng));
    for (int c = 0; c < k; ++c) m.bias.push_back(0.5 * normal(rng));
    std::vector<action::Descriptor> xs;
    std::vector<int> ys;
    std::uniform_int_distribution<int> label(0, k - 1);
    for (int i = 0; i < n; ++i) {
      action::Descriptor x;
      for (int d = 0; d < dims; ++d) x.push_back(static_cast<float>(normal(rng)));
      xs.push_back(x);
      ys.push_back(label(rng));
    }
    const double l2 = 1e-3;
    const auto g = action::loss_and_gradient(m, xs, ys, l2);
    const double h = 1e-5;
    const auto rel = [](double analytic, double numeric) {
      return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-8});
    };
    for (std::size_t i = 0; i < m.weights.size(); ++i) {
      auto p = m, q = m;
      p.weights[i] += h;
      q.weights[i] -= h;
      const double num = (action::loss_and_gradient(p, xs, ys, l2).loss - action::loss_and_gradient(q, xs, ys, l2).loss) /
                         (2.0 * h);
      worst = std::max(worst, rel(g.weights[i], num));
    }
    for (std::size_t i = 0; i < m.bias.size(); ++i) {
      auto p = m, q = m;
      p.bias[i] += h;
      q.bias[i] -= h;
      const double num = (action::loss_and_gradient(p, xs, ys, l2).loss - action::loss_and_gradient(q, xs, ys, l2).loss) /
                         (2.0 * h);
      worst = std::max(worst, rel(g.bias[i], num));
    }
  }
  report(10, worst < 1e-4, fmt("10 random instances: worst relative gradient error %.3g (limit 1e-4)", worst));
}

void guarded(int id, const std::function<void()>& body) {
  try {
    body();
  } catch (const std::exception& e) {
    report(id, false, std::string("threw: ") + e.what());
  }
}

}  // namespace

int main(int argc, char** argv) {
  const fs::path work = argc > 1 ? fs::path(argv[1]) : fs::temp_directory_path() / "arp_acceptance";
  const auto t0 = Clock::now();
  guarded(1, criterion_1);
  guarded(2, criterion_2);
  guarded(3, criterion_3);
  guarded(7, criterion_7);

  ForestRun still;
  ForestRun moving;
  bool forests = true;
  try {
    still = boundary_experiment(0.0);
    moving = boundary_experiment(1.5);
  } catch (const std::exception& e) {
    forests = false;
    for (int id : {4, 5, 6, 8, 9}) report(id, false, std::string("boundary experiment threw: ") + e.what());
  }
  if (forests) {
    guarded(4, [&] { criterion_4(still, moving); });
    guarded(5, [&] { criterion_5(still); });
    ActionModels models;
    bool trained = true;
    try {
      models = criterion_6(still);
    } catch (const std::exception& e) {
      trained = false;
      report(6, false, std::string("threw: ") + e.what());
      for (int id : {8, 9}) report(id, false, "skipped: no action model");
    }
    if (trained) {
      try {
        criteria_8_and_9(still, models, work);
      } catch (const std::exception& e) {
        report(8, false, std::string("threw: ") + e.what());
        report(9, false, "skipped after criterion 8 failure");
      }
    }
  }
  guarded(10, criterion_10);
  std::printf("%d failing criteria, %.1f s total\n", failures, seconds_since(t0));
  return failures == 0 ? 0 : 1;
}
