#include "arp/proposals.hpp"

#include <algorithm>
#include <cmath>

namespace arp::proposals {

namespace {

bool box_order(const BoxProposal& a, const BoxProposal& b) {
  if (a.score != b.score) return a.score > b.score;
  if (a.x != b.x) return a.x < b.x;
  if (a.y != b.y) return a.y < b.y;
  if (a.w != b.w) return a.w < b.w;
  return a.h < b.h;
}

std::vector<int> positions(int extent, int size, int step) {
  std::vector<int> out;
  for (int p = 0; p + size <= extent; p += step) out.push_back(p);
  // include the flush position so boxes can touch the far border
  if (out.empty() || out.back() != extent - size) out.push_back(extent - size);
  return out;
}

void check_box(const BoxProposal& box, int width, int height) {
  if (!box.valid_in(width, height))
    throw Error(Errc::invalid_box, "box (" + std::to_string(box.x) + "," + std::to_string(box.y) + "," +
                                       std::to_string(box.w) + "," + std::to_string(box.h) +
                                       ") outside " + std::to_string(width) + "x" + std::to_string(height));
}

// Separable [1 2 1] / 4 smoothing with clamped borders.
Plane smooth121(const Plane& src) {
  const int w = src.width();
  const int h = src.height();
  Plane rows(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      rows.at(x, y) = 0.25f * src.clamped(x - 1, y) + 0.5f * src.at(x, y) + 0.25f * src.clamped(x + 1, y);
  Plane out(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      out.at(x, y) = 0.25f * rows.clamped(x, y - 1) + 0.5f * rows.at(x, y) + 0.25f * rows.clamped(x, y + 1);
  return out;
}

int median_of(std::vector<int> values) {
  std::sort(values.begin(), values.end());
  return values[values.size() / 2];
}

}  // namespace

void ProposalParams::validate() const {
  if (scales.empty() || aspect_ratios.empty()) throw Error(Errc::usage, "proposal scales and ratios must be non-empty");
  for (int s : scales)
    if (s < 1) throw Error(Errc::usage, "proposal scales must be positive");
  for (double r : aspect_ratios)
    if (!(r > 0.0) || !std::isfinite(r)) throw Error(Errc::usage, "aspect ratios must be positive");
  if (!(step_fraction > 0.0 && step_fraction <= 1.0)) throw Error(Errc::usage, "step fraction must be in (0,1]");
  if (border_strip < 0) throw Error(Errc::usage, "border strip must be >= 0");
  if (!std::isfinite(kappa)) throw Error(Errc::usage, "kappa must be finite");
  if (!(border_penalty >= 0.0)) throw Error(Errc::usage, "border penalty must be >= 0");
  if (!(nms_iou > 0.0 && nms_iou < 1.0)) throw Error(Errc::usage, "NMS IoU threshold must be in (0,1)");
  if (top_k < 1) throw Error(Errc::usage, "top_k must be >= 1");
  if (min_side < 1) throw Error(Errc::usage, "minimum box side must be >= 1");
}

IntegralImage::IntegralImage(const Plane& plane)
    : width_(plane.width()), table_(static_cast<std::size_t>(plane.width() + 1) * (plane.height() + 1), 0.0) {
  const std::size_t stride = static_cast<std::size_t>(width_) + 1;
  for (int y = 0; y < plane.height(); ++y) {
    double row = 0.0;
    for (int x = 0; x < width_; ++x) {
      row += plane.at(x, y);
      table_[(y + 1) * stride + x + 1] = table_[y * stride + x + 1] + row;
    }
  }
}

double IntegralImage::sum(int x, int y, int w, int h) const {
  if (w <= 0 || h <= 0) return 0.0;
  const std::size_t stride = static_cast<std::size_t>(width_) + 1;
  const auto at = [&](int xx, int yy) { return table_[static_cast<std::size_t>(yy) * stride + xx]; };
  return at(x + w, y + h) - at(x, y + h) - at(x + w, y) + at(x, y);
}

BoundaryMap thin_boundaries(const BoundaryMap& map) {
  const Plane& v = map.values();
  const Plane s = smooth121(smooth121(v));
  Plane out(v.width(), v.height());
  for (int y = 0; y < v.height(); ++y) {
    for (int x = 0; x < v.width(); ++x) {
      const double xx = s.clamped(x + 1, y) - 2.0 * s.at(x, y) + s.clamped(x - 1, y);
      const double yy = s.clamped(x, y + 1) - 2.0 * s.at(x, y) + s.clamped(x, y - 1);
      const double xy =
          0.25 * (s.clamped(x + 1, y + 1) - s.clamped(x - 1, y + 1) - s.clamped(x + 1, y - 1) + s.clamped(x - 1, y - 1));
      // eigenvector with the most negative curvature is normal to the ridge
      const double theta = 0.5 * std::atan2(2.0 * xy, xx - yy);
      double nx = std::cos(theta);
      double ny = std::sin(theta);
      const double along = xx * nx * nx + 2.0 * xy * nx * ny + yy * ny * ny;
      const double across = xx * ny * ny - 2.0 * xy * nx * ny + yy * nx * nx;
      if (across < along) {
        const double t = nx;
        nx = -ny;
        ny = t;
      }
      const float c = v.at(x, y);
      const float a = v.sample(static_cast<float>(x + nx), static_cast<float>(y + ny));
      const float b = v.sample(static_cast<float>(x - nx), static_cast<float>(y - ny));
      out.at(x, y) = c >= a && c >= b ? c : 0.0f;
    }
  }
  return BoundaryMap(std::move(out));
}

std::vector<std::pair<int, int>> candidate_sizes(const ProposalParams& params, int width, int height) {
  std::vector<std::pair<int, int>> sizes;
  for (int s : params.scales) {
    for (double r : params.aspect_ratios) {
      const int w = static_cast<int>(std::lround(s * std::sqrt(r)));
      const int h = static_cast<int>(std::lround(s / std::sqrt(r)));
      if (w < params.min_side || h < params.min_side || w > width || h > height) continue;
      if (std::find(sizes.begin(), sizes.end(), std::pair{w, h}) == sizes.end()) sizes.emplace_back(w, h);
    }
  }
  return sizes;
}

double score_box(const IntegralImage& integral, const BoxProposal& box, const ProposalParams& params) {
  const int b = params.border_strip;
  const double total = integral.sum(box.x, box.y, box.w, box.h);
  const double inner = integral.sum(box.x + b, box.y + b, box.w - 2 * b, box.h - 2 * b);
  const double strip = total - inner;
  const double norm = std::pow(2.0 * (box.w + box.h), params.kappa);
  return (inner - params.border_penalty * strip) / norm;
}

std::vector<BoxProposal> score_boxes(const BoundaryMap& map, const ProposalParams& params, int frame_index) {
  params.validate();
  const auto sizes = candidate_sizes(params, map.width(), map.height());
  if (sizes.empty())
    throw Error(Errc::invalid_box, "no proposal size fits a " + std::to_string(map.width()) + "x" +
                                       std::to_string(map.height()) + " map");
  const IntegralImage integral(map.values());
  std::vector<BoxProposal> boxes;
  for (const auto& [w, h] : sizes) {
    const int step_x = std::max(1, static_cast<int>(std::lround(params.step_fraction * w)));
    const int step_y = std::max(1, static_cast<int>(std::lround(params.step_fraction * h)));
    for (int y : positions(map.height(), h, step_y)) {
      for (int x : positions(map.width(), w, step_x)) {
        BoxProposal box{x, y, w, h, 0.0, frame_index};
        box.score = score_box(integral, box, params);
        boxes.push_back(box);
      }
    }
  }
  std::sort(boxes.begin(), boxes.end(), box_order);
  return boxes;
}

std::vector<BoxProposal> nms(std::span<const BoxProposal> boxes, double iou_threshold) {
  std::vector<BoxProposal> sorted(boxes.begin(), boxes.end());
  std::sort(sorted.begin(), sorted.end(), box_order);
  std::vector<BoxProposal> kept;
  for (const BoxProposal& box : sorted) {
    const bool suppressed =
        std::any_of(kept.begin(), kept.end(), [&](const BoxProposal& k) { return iou(k, box) > iou_threshold; });
    if (!suppressed) kept.push_back(box);
  }
  return kept;
}

Selection select_action_region(std::span<const BoxProposal> boxes, int top_k) {
  Selection out;
  const auto n = std::min(boxes.size(), static_cast<std::size_t>(std::max(top_k, 0)));
  out.boxes.assign(boxes.begin(), boxes.begin() + static_cast<std::ptrdiff_t>(n));
  out.no_motion = boxes.empty();
  return out;
}

Selection propose(const BoundaryMap& map, const ProposalParams& params, int frame_index) {
  std::vector<BoxProposal> scored =
      params.thin ? score_boxes(thin_boundaries(map), params, frame_index) : score_boxes(map, params, frame_index);
  std::erase_if(scored, [&](const BoxProposal& b) { return !(b.score > params.min_score); });
  return select_action_region(nms(scored, params.nms_iou), params.top_k);
}

std::vector<BoxProposal> action_regions(std::span<const BoundaryMap> maps, const ProposalParams& params,
                                        bool smooth) {
  std::vector<BoxProposal> out;
  for (std::size_t t = 0; t < maps.size(); ++t) {
    const int index = static_cast<int>(t);
    const Selection sel = propose(maps[t], params, index);
    if (!sel.boxes.empty()) {
      out.push_back(sel.boxes.front());
    } else if (!out.empty()) {
      BoxProposal prev = out.back();
      prev.frame_index = index;
      prev.score = 0.0;
      out.push_back(prev);
    } else {
      out.push_back(BoxProposal{0, 0, maps[t].width(), maps[t].height(), 0.0, index});
    }
  }
  if (smooth && !maps.empty()) return smooth_boxes(out, maps.front().width(), maps.front().height());
  return out;
}

std::vector<BoxProposal> smooth_boxes(std::span<const BoxProposal> boxes, int width, int height) {
  constexpr int kRadius = 2;
  std::vector<BoxProposal> out;
  const int n = static_cast<int>(boxes.size());
  for (int t = 0; t < n; ++t) {
    std::vector<int> xs;
    std::vector<int> ys;
    std::vector<int> ws;
    std::vector<int> hs;
    for (int k = std::max(0, t - kRadius); k <= std::min(n - 1, t + kRadius); ++k) {
      xs.push_back(boxes[static_cast<std::size_t>(k)].x);
      ys.push_back(boxes[static_cast<std::size_t>(k)].y);
      ws.push_back(boxes[static_cast<std::size_t>(k)].w);
      hs.push_back(boxes[static_cast<std::size_t>(k)].h);
    }
    BoxProposal box = boxes[static_cast<std::size_t>(t)];
    box.w = std::min(median_of(ws), width);
    box.h = std::min(median_of(hs), height);
    box.x = std::clamp(median_of(xs), 0, width - box.w);
    box.y = std::clamp(median_of(ys), 0, height - box.h);
    out.push_back(box);
  }
  return out;
}

Frame crop_and_resize(const Frame& frame, const BoxProposal& box, int side) {
  check_box(box, frame.width(), frame.height());
  if (side < 1) throw Error(Errc::usage, "crop side must be positive");
  std::vector<Plane> planes;
  for (int c = 0; c < frame.channels(); ++c)
    planes.push_back(resize_region(frame.channel(c), box.x, box.y, box.w, box.h, side, side));
  return Frame::from_planes(planes);
}

FlowStack stack_flow_crops(std::span<const FlowField> flows, const BoxProposal& box, int depth, int side) {
  if (depth < 1) throw Error(Errc::usage, "stacking depth must be >= 1");
  if (static_cast<int>(flows.size()) < depth)
    throw Error(Errc::sequence_too_short, "need " + std::to_string(depth) + " flow fields, got " +
                                              std::to_string(flows.size()));
  FlowStack stack;
  stack.depth = depth;
  for (int l = 0; l < depth; ++l) {
    const FlowField& f = flows[static_cast<std::size_t>(l)];
    check_box(box, f.width(), f.height());
    stack.channels.push_back(resize_region(f.u, box.x, box.y, box.w, box.h, side, side));
    stack.channels.push_back(resize_region(f.v, box.x, box.y, box.w, box.h, side, side));
  }
  return stack;
}

ClipTensor prepare_clip(const FrameSequence& frames, const BoxProposal& box, int start) {
  if (start < 0 || static_cast<std::size_t>(start) + kClipFrames > frames.size())
    throw Error(Errc::sequence_too_short, "a clip needs " + std::to_string(kClipFrames) + " frames from index " +
                                              std::to_string(start) + ", sequence has " +
                                              std::to_string(frames.size()));
  ClipTensor clip;
  for (int t = 0; t < kClipFrames; ++t)
    clip.frames.push_back(crop_and_resize(frames.frames[static_cast<std::size_t>(start + t)], box, kClipSide));
  return clip;
}

}  // namespace arp::proposals
