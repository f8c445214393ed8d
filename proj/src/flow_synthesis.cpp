#include "crownflow/flow_synthesis.hpp"

#include <cmath>
#include <limits>

#include "parallel.hpp"

namespace crownflow {

namespace {

struct InstancePixels {
  InstanceStats stats;
  std::vector<Index> pixels;  // row-major linear indices, ascending
};

// Groups pixels by instance id; result is ordered by id.
std::vector<InstancePixels> group_instances(const LabelMap& labels) {
  const Label top = max_label(labels);
  std::vector<Index> slot(static_cast<std::size_t>(top) + 1, -1);
  std::vector<InstancePixels> groups;
  // First pass fixes the order by id.
  std::vector<Index> counts(static_cast<std::size_t>(top) + 1, 0);
  for (Index i = 0; i < labels.size(); ++i) ++counts[labels.data()[i]];
  for (std::size_t id = 1; id < counts.size(); ++id) {
    if (counts[id] == 0) continue;
    slot[id] = static_cast<Index>(groups.size());
    InstancePixels g;
    g.stats.id = static_cast<Label>(id);
    g.stats.bbox = {std::numeric_limits<Index>::max(), std::numeric_limits<Index>::max(), -1, -1};
    g.pixels.reserve(static_cast<std::size_t>(counts[id]));
    groups.push_back(std::move(g));
  }
  const Index w = labels.cols();
  for (Index i = 0; i < labels.size(); ++i) {
    const Label v = labels.data()[i];
    if (v == 0) continue;
    auto& g = groups[static_cast<std::size_t>(slot[v])];
    g.pixels.push_back(i);
    BBox& b = g.stats.bbox;
    const Index y = i / w;
    const Index x = i % w;
    b.y0 = std::min(b.y0, y);
    b.x0 = std::min(b.x0, x);
    b.y1 = std::max(b.y1, y);
    b.x1 = std::max(b.x1, x);
  }
  for (auto& g : groups) {
    g.stats.area = static_cast<Index>(g.pixels.size());
    double sy = 0.0;
    double sx = 0.0;
    for (Index i : g.pixels) {
      sy += static_cast<double>(i / w);
      sx += static_cast<double>(i % w);
    }
    const double cy = sy / static_cast<double>(g.stats.area);
    const double cx = sx / static_cast<double>(g.stats.area);
    // Pixels are visited row-major, so a strict '<' keeps the smallest
    // (row, col) among equally distant candidates.
    double best = std::numeric_limits<double>::infinity();
    Index best_i = g.pixels.front();
    for (Index i : g.pixels) {
      const double dy = static_cast<double>(i / w) - cy;
      const double dx = static_cast<double>(i % w) - cx;
      const double d2 = dy * dy + dx * dx;
      if (d2 < best) {
        best = d2;
        best_i = i;
      }
    }
    g.stats.center = {static_cast<float>(best_i / w), static_cast<float>(best_i % w)};
  }
  return groups;
}

const InstancePixels& find_instance(const std::vector<InstancePixels>& groups, Label id) {
  for (const auto& g : groups) {
    if (g.stats.id == id) return g;
  }
  throw Error("label.unknown_id", "instance id " + std::to_string(id) + " not present");
}

PotentialField diffuse(const InstancePixels& inst, Index image_width) {
  const BBox& b = inst.stats.bbox;
  PotentialField field;
  field.origin_y = b.y0 - 1;
  field.origin_x = b.x0 - 1;
  const Index h = b.height() + 2;
  const Index w = b.width() + 2;

  std::vector<Index> local;
  local.reserve(inst.pixels.size());
  for (Index i : inst.pixels) {
    local.push_back((i / image_width - field.origin_y) * w + (i % image_width - field.origin_x));
  }
  const Index center = (static_cast<Index>(inst.stats.center.y) - field.origin_y) * w +
                       (static_cast<Index>(inst.stats.center.x) - field.origin_x);

  // Out-of-mask cells are never written and stay 0, which is exactly the
  // contribution the masked update assigns to them.
  Grid2D<double> heat = Grid2D<double>::Zero(h, w);
  Grid2D<double> next = Grid2D<double>::Zero(h, w);
  const Index iterations = 2 * (b.height() + b.width());
  for (Index it = 0; it < iterations; ++it) {
    heat.data()[center] += 1.0;
    const double* t = heat.data();
    double* n = next.data();
    for (Index p : local) {
      n[p] = (t[p] + t[p - w] + t[p + w] + t[p - 1] + t[p + 1]) / 5.0;
    }
    heat.swap(next);
  }
  field.psi = heat.log1p();
  return field;
}

// Writes the normalized inward gradient of one instance into `out`.
void write_instance_flow(const InstancePixels& inst, Index image_width, FlowField& out) {
  const PotentialField pot = diffuse(inst, image_width);
  const Grid2D<double>& psi = pot.psi;
  for (Index i : inst.pixels) {
    const Index y = i / image_width;
    const Index x = i % image_width;
    const Index ly = y - pot.origin_y;
    const Index lx = x - pot.origin_x;
    // The one-pixel margin keeps every mask pixel off the box edge, so
    // central differences are always available.
    const double gy = 0.5 * (psi(ly + 1, lx) - psi(ly - 1, lx));
    const double gx = 0.5 * (psi(ly, lx + 1) - psi(ly, lx - 1));
    const double norm = std::sqrt(gy * gy + gx * gx) + 1e-12;
    out.dy(y, x) = static_cast<float>(gy / norm);
    out.dx(y, x) = static_cast<float>(gx / norm);
  }
}

}  // namespace

std::vector<InstanceStats> instance_stats(const LabelMap& labels) {
  std::vector<InstanceStats> out;
  for (auto& g : group_instances(labels)) out.push_back(g.stats);
  return out;
}

Point instance_center(const LabelMap& labels, Label id) {
  return find_instance(group_instances(labels), id).stats.center;
}

PotentialField diffuse_potential(const LabelMap& labels, Label id) {
  const auto groups = group_instances(labels);
  return diffuse(find_instance(groups, id), labels.cols());
}

FlowField flows_from_labels(const LabelMap& labels, int threads) {
  FlowField out(labels.rows(), labels.cols());
  const auto groups = group_instances(labels);
  detail::parallel_for(groups.size(), threads, [&](std::size_t k) {
    write_instance_flow(groups[k], labels.cols(), out);
  });
  return out;
}

std::map<Label, double> flow_error(const LabelMap& labels, const FlowField& predicted,
                                   int threads) {
  require_same_dims(dims_of(labels), dims_of(predicted), "flow_error");
  const FlowField ref = flows_from_labels(labels, threads);
  std::map<Label, double> sum;
  std::map<Label, Index> count;
  for (Index i = 0; i < labels.size(); ++i) {
    const Label v = labels.data()[i];
    if (v == 0) continue;
    const double ey = static_cast<double>(predicted.dy.data()[i]) - ref.dy.data()[i];
    const double ex = static_cast<double>(predicted.dx.data()[i]) - ref.dx.data()[i];
    sum[v] += ey * ey + ex * ex;
    ++count[v];
  }
  for (auto& [id, s] : sum) s /= static_cast<double>(count[id]);
  return sum;
}

LabelMap filter_by_flow_error(const LabelMap& labels, const FlowField& predicted,
                              double flow_threshold, int threads) {
  if (!(flow_threshold >= 0.0)) {
    throw Error("settings.flow_threshold", "flow_threshold must be >= 0");
  }
  const auto errors = flow_error(labels, predicted, threads);
  LabelMap out = labels;
  for (Index i = 0; i < out.size(); ++i) {
    Label& v = out.data()[i];
    if (v != 0 && errors.at(v) > flow_threshold) v = 0;
  }
  return relabel_sequential(out);
}

void renormalize(FlowField& field) {
  for (Index i = 0; i < field.dy.size(); ++i) {
    const double vy = field.dy.data()[i];
    const double vx = field.dx.data()[i];
    const double n = std::sqrt(vy * vy + vx * vx);
    if (n < 1e-12) {
      field.dy.data()[i] = 0.0f;
      field.dx.data()[i] = 0.0f;
    } else {
      field.dy.data()[i] = static_cast<float>(vy / n);
      field.dx.data()[i] = static_cast<float>(vx / n);
    }
  }
}

float max_magnitude(const FlowField& field) {
  if (field.dy.size() == 0) return 0.0f;
  return (field.dy.square() + field.dx.square()).sqrt().maxCoeff();
}

}  // namespace crownflow
