#pragma once

#include <vector>

#include "crownflow/raster.hpp"

namespace crownflow {

/// Grouping parameters. flow_threshold = 1 and cellprob_threshold = 0 are the
/// reference defaults for tree crowns.
struct SegmentationSettings {
  int niter = 200;
  double flow_threshold = 1.0;
  double cellprob_threshold = 0.0;
  Index min_area = 15;
  int h_min = 10;       // minimum histogram count for a sink seed
  int grow_iters = 5;   // basin growth rounds
  int grow_min = 3;     // minimum bin count absorbed during growth

  /// Throws Error("settings.invalid") if any field is out of range.
  void validate() const;
};

struct PixelIndex {
  Index y = 0;
  Index x = 0;
  friend bool operator==(const PixelIndex&, const PixelIndex&) = default;
};

struct TrajectoryEnd {
  PixelIndex origin;
  Point final;
};

/// Euler-integrates every pixel with probability strictly above
/// cellprob_threshold for niter steps. Output is in row-major origin order.
std::vector<TrajectoryEnd> advect(const FlowField& flow, const ProbabilityMap& prob,
                                  const SegmentationSettings& settings, int threads = 1);

/// Basin assignment of trajectory end points; seeds plus grown bins.
struct Sink {
  PixelIndex seed;
  Index mass = 0;
  std::vector<PixelIndex> basin;  // seed first, then in claim order
};

std::vector<Sink> find_sinks(const std::vector<TrajectoryEnd>& ends, Dims dims,
                             const SegmentationSettings& settings);

/// Groups trajectory end points into instances via the end-point histogram.
LabelMap cluster_sinks(const std::vector<TrajectoryEnd>& ends, Dims dims,
                       const SegmentationSettings& settings);

/// Keeps the largest 4-connected component of every instance and fills
/// background holes it encloses.
LabelMap clean_instances(const LabelMap& labels);

/// Removes instances smaller than min_area (no relabel).
LabelMap remove_small(const LabelMap& labels, Index min_area);

struct SegmentStats {
  Index n_gated = 0;
  Index n_clusters = 0;
  Index n_removed_small = 0;
  Index n_removed_flow = 0;
  Index n_instances = 0;
};

struct SegmentResult {
  LabelMap labels;
  SegmentStats stats;
};

SegmentResult segment_with_stats(const FlowField& flow, const ProbabilityMap& prob,
                                 const SegmentationSettings& settings, int threads = 1);

/// Full grouping: advect, cluster, clean, size filter, flow-consistency
/// filter, relabel.
LabelMap segment(const FlowField& flow, const ProbabilityMap& prob,
                 const SegmentationSettings& settings, int threads = 1);

}  // namespace crownflow
