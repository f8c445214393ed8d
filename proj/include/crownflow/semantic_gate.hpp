#pragma once

#include <utility>
#include <vector>

#include "crownflow/raster.hpp"

namespace crownflow {

/// Default minimum in-canopy fraction for filter_instances_by_canopy.
inline constexpr double kDefaultCanopyFraction = 0.5;

/// Maps any nonzero value to 1.
SemanticMask binarize(const SemanticMask& mask);

/// Elementwise band * mask; masked-out pixels become exactly 0.
std::vector<Grid2D<float>> apply_mask_image(const std::vector<Grid2D<float>>& bands,
                                            const SemanticMask& mask);

/// Zeroes flows and probabilities outside the canopy.
std::pair<FlowField, ProbabilityMap> apply_mask_flows(const FlowField& flow,
                                                      const ProbabilityMap& prob,
                                                      const SemanticMask& mask);

/// Drops instances whose in-canopy pixel fraction is below `rho`, then
/// relabels the survivors.
LabelMap filter_instances_by_canopy(const LabelMap& labels, const SemanticMask& mask,
                                    double rho = kDefaultCanopyFraction);

}  // namespace crownflow
