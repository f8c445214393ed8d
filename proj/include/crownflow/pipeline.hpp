#pragma once

#include <optional>

#include "crownflow/advection.hpp"
#include "crownflow/semantic_gate.hpp"

namespace crownflow {

/// Native object diameter of the flow model, in pixels.
inline constexpr double kReferenceDiameter = 30.0;

struct PipelineOptions {
  SegmentationSettings settings;
  double diameter = kReferenceDiameter;
  double reference_diameter = kReferenceDiameter;
  std::optional<SemanticMask> semantic;  // flow-domain gate when present
  bool canopy_filter = false;            // post-hoc instance filter
  double rho = kDefaultCanopyFraction;
  int threads = 1;

  void validate() const;
};

struct PipelineStats {
  SegmentStats segment;
  Index n_removed_canopy = 0;
  Index n_tiles = 1;
  Index n_merged = 0;  // seam pieces merged into another instance
  Index n_dropped = 0;  // seam pieces discarded in favour of a larger one
};

struct PipelineResult {
  LabelMap labels;
  PipelineStats stats;
};

/// Segments at the reference scale: inputs are resized by
/// reference_diameter / diameter (flows renormalized), labels are resized
/// back to the input size.
SegmentResult segment_at_diameter(const FlowField& flow, const ProbabilityMap& prob,
                                  const SegmentationSettings& settings, double diameter,
                                  double reference_diameter = kReferenceDiameter,
                                  int threads = 1);

/// Semantic gate, diameter-scaled segmentation and optional canopy filter.
PipelineResult run_segment(const FlowField& flow, const ProbabilityMap& prob,
                           const PipelineOptions& options);

struct TileConfig {
  Index tile = 1024;
  Index overlap = 128;

  /// Throws Error("config.tiling") unless 0 <= 2 * overlap <= tile.
  void validate() const;
};

struct TileSpan {
  Index start = 0;
  Index length = 0;
  Index core_begin = 0;  // [core_begin, core_end) is owned by this tile
  Index core_end = 0;
};

/// Tiles covering [0, extent) along one axis, in increasing order. Cores
/// partition the axis, splitting each overlap at its midpoint.
std::vector<TileSpan> tile_spans(Index extent, const TileConfig& cfg);

/// Segments each tile independently and stitches the result: instances
/// inside a tile core are kept; seam instances are merged when their IoU
/// within the shared tile area is >= 0.5, otherwise the larger survives.
PipelineResult run_pipeline(const FlowField& flow, const ProbabilityMap& prob,
                            const PipelineOptions& options, const TileConfig& tiles);

}  // namespace crownflow
