#pragma once

#include <utility>

#include "arp/image.hpp"

namespace arp::flow {

/// Coarse-to-fine variational estimator settings.
///
/// The energy is a Charbonnier-penalized brightness-constancy term plus a
/// Charbonnier-penalized first-order smoothness term. Intensities are scaled
/// to [0,255] internally, so `regularization_weight` is expressed against
/// 8-bit contrast.
struct FlowParams {
  int pyramid_levels = 5;
  double scale_factor = 0.5;
  double regularization_weight = 10.0;
  int warp_iterations = 5;
  int fixed_point_iterations = 10;
  int median_filter_radius = 2;
  /// Linear solver sweeps per fixed-point iteration.
  int solver_iterations = 3;
  /// Data term on all three colour channels instead of luma.
  bool use_color = false;

  /// Throws usage if a count is < 1 or the scale factor is outside (0,1).
  void validate() const;
};

/// Smallest side the coarsest pyramid level may have.
inline constexpr int kMinLevelSide = 4;

FlowField estimate_flow(const Frame& frame_t, const Frame& frame_t1, const FlowParams& params = {});

struct FlowPair {
  FlowField forward;
  FlowField backward;
};

/// forward = t -> t+1, backward = t+1 -> t.
FlowPair estimate_flow_pair(const Frame& frame_t, const Frame& frame_t1, const FlowParams& params = {});

/// Samples `frame` at p + flow(p) bilinearly, clamping to the border.
Frame warp_image(const Frame& frame, const FlowField& flow);
Plane warp_plane(const Plane& plane, const FlowField& flow);

/// Mean Euclidean distance between two flow fields.
double mean_endpoint_error(const FlowField& a, const FlowField& b);

}  // namespace arp::flow
