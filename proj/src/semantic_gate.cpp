#include "crownflow/semantic_gate.hpp"

#include <map>

namespace crownflow {

SemanticMask binarize(const SemanticMask& mask) {
  return (mask != 0).cast<std::uint8_t>();
}

std::vector<Grid2D<float>> apply_mask_image(const std::vector<Grid2D<float>>& bands,
                                            const SemanticMask& mask) {
  std::vector<Grid2D<float>> out;
  out.reserve(bands.size());
  for (const auto& band : bands) {
    require_same_dims(dims_of(band), dims_of(mask), "apply_mask_image");
    // select() rather than a product so that masked pixels are exactly +0
    // even for negative or non-finite band values.
    out.push_back((mask != 0).select(band, 0.0f));
  }
  return out;
}

std::pair<FlowField, ProbabilityMap> apply_mask_flows(const FlowField& flow,
                                                      const ProbabilityMap& prob,
                                                      const SemanticMask& mask) {
  require_same_dims(dims_of(flow), dims_of(mask), "apply_mask_flows");
  require_same_dims(dims_of(prob), dims_of(mask), "apply_mask_flows");
  const auto keep = (mask != 0);
  FlowField masked;
  masked.dy = keep.select(flow.dy, 0.0f);
  masked.dx = keep.select(flow.dx, 0.0f);
  ProbabilityMap p = keep.select(prob, 0.0f);
  return {std::move(masked), std::move(p)};
}

LabelMap filter_instances_by_canopy(const LabelMap& labels, const SemanticMask& mask,
                                    double rho) {
  require_same_dims(dims_of(labels), dims_of(mask), "filter_instances_by_canopy");
  if (!(rho >= 0.0 && rho <= 1.0)) {
    throw Error("settings.rho", "rho must lie in [0, 1]");
  }
  std::map<Label, std::pair<Index, Index>> counts;  // (in canopy, total)
  for (Index i = 0; i < labels.size(); ++i) {
    const Label v = labels.data()[i];
    if (v == 0) continue;
    auto& c = counts[v];
    c.first += mask.data()[i] != 0 ? 1 : 0;
    ++c.second;
  }
  LabelMap out = labels;
  for (Index i = 0; i < out.size(); ++i) {
    Label& v = out.data()[i];
    if (v == 0) continue;
    const auto [inside, total] = counts[v];
    if (static_cast<double>(inside) < rho * static_cast<double>(total)) v = 0;
  }
  return relabel_sequential(out);
}

}  // namespace crownflow
