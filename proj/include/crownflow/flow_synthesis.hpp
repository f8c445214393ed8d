#pragma once

#include <map>
#include <vector>

#include "crownflow/raster.hpp"

namespace crownflow {

/// Inclusive pixel bounds.
struct BBox {
  Index y0 = 0;
  Index x0 = 0;
  Index y1 = -1;
  Index x1 = -1;

  Index height() const { return y1 - y0 + 1; }
  Index width() const { return x1 - x0 + 1; }
  friend bool operator==(const BBox&, const BBox&) = default;
};

struct InstanceStats {
  Label id = 0;
  Point center;  // medoid, always an integer pixel inside the mask
  BBox bbox;
  Index area = 0;
};

/// Heat potential of one instance on its bounding box grown by a one-pixel
/// margin. psi(y, x) corresponds to image pixel (origin_y + y, origin_x + x).
struct PotentialField {
  Grid2D<double> psi;
  Index origin_y = 0;
  Index origin_x = 0;
};

/// Area, bounding box and medoid for every instance, ordered by id.
std::vector<InstanceStats> instance_stats(const LabelMap& labels);

/// Mask pixel closest (squared distance) to the mask centroid; ties go to the
/// smallest row, then the smallest column.
Point instance_center(const LabelMap& labels, Label id);

PotentialField diffuse_potential(const LabelMap& labels, Label id);

/// Unit flows pointing up the heat potential of each instance; exactly zero
/// on background. `threads` only affects scheduling, never the result.
FlowField flows_from_labels(const LabelMap& labels, int threads = 1);

/// Mean squared vector difference between `predicted` and the flows
/// recomputed from `labels`, per instance id.
std::map<Label, double> flow_error(const LabelMap& labels, const FlowField& predicted,
                                   int threads = 1);

/// Removes instances whose flow error exceeds `flow_threshold`, then relabels.
LabelMap filter_by_flow_error(const LabelMap& labels, const FlowField& predicted,
                              double flow_threshold, int threads = 1);

/// Rescales each vector to unit length; vectors shorter than 1e-12 become zero.
void renormalize(FlowField& field);

/// Largest per-pixel magnitude in a flow field.
float max_magnitude(const FlowField& field);

}  // namespace crownflow
