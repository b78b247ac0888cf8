#pragma once

#include <span>
#include <vector>

#include "arp/image.hpp"

namespace arp::proposals {

struct ProposalParams {
  /// Square box sides in pixels before applying the aspect ratios.
  std::vector<int> scales = {32, 48, 64, 96, 128};
  /// Width over height; a ratio r turns side s into (s*sqrt(r), s/sqrt(r)).
  std::vector<double> aspect_ratios = {0.5, 2.0 / 3.0, 1.0, 1.5, 2.0};
  double step_fraction = 0.25;
  int border_strip = 2;
  /// Exponent of the perimeter normalization.
  double kappa = 1.5;
  double border_penalty = 1.0;
  double nms_iou = 0.5;
  int top_k = 1;
  /// Boxes scoring at or below this are treated as no motion.
  double min_score = 1e-3;
  int min_side = 4;
  /// Suppress non-ridge pixels of the map before scoring in propose().
  bool thin = true;

  void validate() const;
};

/// Inclusive-exclusive rectangle sums in O(1), accumulated in double.
class IntegralImage {
 public:
  explicit IntegralImage(const Plane& plane);
  double sum(int x, int y, int w, int h) const;

 private:
  int width_;
  std::vector<double> table_;
};

/// Non-maximum suppression across boundary ridges: a pixel survives when it is
/// no smaller than both neighbours along the ridge normal, taken from the
/// Hessian of a lightly smoothed copy of the map.
BoundaryMap thin_boundaries(const BoundaryMap& map);

/// Candidate (w, h) pairs that fit inside a width x height map, deduplicated.
std::vector<std::pair<int, int>> candidate_sizes(const ProposalParams& params, int width, int height);

/// Border-contrast score of one box: interior mass (box shrunk by the strip)
/// minus the penalized strip mass, over (2(w+h))^kappa.
double score_box(const IntegralImage& integral, const BoxProposal& box, const ProposalParams& params);

/// Every sliding-window box, sorted by descending score then (x, y, w, h).
std::vector<BoxProposal> score_boxes(const BoundaryMap& map, const ProposalParams& params, int frame_index = 0);

/// Greedy suppression of boxes whose IoU with a kept box exceeds the threshold.
std::vector<BoxProposal> nms(std::span<const BoxProposal> boxes, double iou_threshold);

struct Selection {
  std::vector<BoxProposal> boxes;
  bool no_motion = false;
};

Selection select_action_region(std::span<const BoxProposal> boxes, int top_k = 1);

/// Optionally thin, score, drop boxes at or below min_score, suppress, select.
Selection propose(const BoundaryMap& map, const ProposalParams& params, int frame_index = 0);

/// One action box per frame. Frames without motion reuse the previous box, or
/// the full frame when none exists. Optional 5-frame median smoothing.
std::vector<BoxProposal> action_regions(std::span<const BoundaryMap> maps, const ProposalParams& params,
                                        bool smooth = false);

/// Median of box coordinates over a centred window of 5 frames, clipped to the frame.
std::vector<BoxProposal> smooth_boxes(std::span<const BoxProposal> boxes, int width, int height);

Frame crop_and_resize(const Frame& frame, const BoxProposal& box, int side = 224);

struct FlowStack {
  /// u1, v1, ..., uL, vL.
  std::vector<Plane> channels;
  int depth = 0;
};

FlowStack stack_flow_crops(std::span<const FlowField> flows, const BoxProposal& box, int depth, int side = 224);

inline constexpr int kClipFrames = 16;
inline constexpr int kClipSide = 112;

struct ClipTensor {
  std::vector<Frame> frames;
};

ClipTensor prepare_clip(const FrameSequence& frames, const BoxProposal& box, int start);

}  // namespace arp::proposals
