#include "crownflow/advection.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <set>

#include "crownflow/flow_synthesis.hpp"
#include "parallel.hpp"

namespace crownflow {

void SegmentationSettings::validate() const {
  auto fail = [](const std::string& what) { throw Error("settings.invalid", what); };
  if (niter < 1) fail("niter must be >= 1");
  if (!std::isfinite(flow_threshold) || flow_threshold < 0.0) {
    fail("flow_threshold must be finite and >= 0");
  }
  if (!std::isfinite(cellprob_threshold)) fail("cellprob_threshold must be finite");
  if (min_area < 0) fail("min_area must be >= 0");
  if (h_min < 1) fail("h_min must be >= 1");
  if (grow_iters < 0) fail("grow_iters must be >= 0");
  if (grow_min < 1) fail("grow_min must be >= 1");
}

std::vector<TrajectoryEnd> advect(const FlowField& flow, const ProbabilityMap& prob,
                                  const SegmentationSettings& settings, int threads) {
  require_same_dims(dims_of(flow), dims_of(prob), "advect");
  const Dims dims = dims_of(prob);
  const auto gate = static_cast<float>(settings.cellprob_threshold);

  std::vector<TrajectoryEnd> ends;
  for (Index y = 0; y < dims.height; ++y) {
    for (Index x = 0; x < dims.width; ++x) {
      if (prob(y, x) > gate) {
        ends.push_back({{y, x}, {static_cast<float>(y), static_cast<float>(x)}});
      }
    }
  }
  detail::parallel_for(ends.size(), threads, [&](std::size_t i) {
    Point p = ends[i].final;
    for (int step = 0; step < settings.niter; ++step) {
      const auto v = bilinear_sample(flow, p);
      p = clamp_to({p.y + v.vy, p.x + v.vx}, dims);
    }
    ends[i].final = p;
  });
  return ends;
}

namespace {

PixelIndex bin_of(Point p, Dims dims) {
  const Point c = clamp_to(p, dims);
  return {static_cast<Index>(std::lround(c.y)), static_cast<Index>(std::lround(c.x))};
}

Grid2D<int> end_histogram(const std::vector<TrajectoryEnd>& ends, Dims dims) {
  Grid2D<int> hist = Grid2D<int>::Zero(dims.height, dims.width);
  for (const auto& e : ends) {
    const PixelIndex b = bin_of(e.final, dims);
    ++hist(b.y, b.x);
  }
  return hist;
}

// True when bin (y, x) beats every other bin of its 5x5 window under the
// order (count descending, row-major index ascending).
bool is_window_max(const Grid2D<int>& hist, Index y, Index x) {
  const int c = hist(y, x);
  const Index self = y * hist.cols() + x;
  for (Index ny = std::max<Index>(0, y - 2); ny <= std::min(hist.rows() - 1, y + 2); ++ny) {
    for (Index nx = std::max<Index>(0, x - 2); nx <= std::min(hist.cols() - 1, x + 2); ++nx) {
      if (ny == y && nx == x) continue;
      const int o = hist(ny, nx);
      if (o > c || (o == c && ny * hist.cols() + nx < self)) return false;
    }
  }
  return true;
}

}  // namespace

std::vector<Sink> find_sinks(const std::vector<TrajectoryEnd>& ends, Dims dims,
                             const SegmentationSettings& settings) {
  if (ends.empty() || dims.height == 0 || dims.width == 0) return {};
  const Grid2D<int> hist = end_histogram(ends, dims);

  std::vector<Sink> sinks;
  for (Index y = 0; y < dims.height; ++y) {
    for (Index x = 0; x < dims.width; ++x) {
      if (hist(y, x) >= settings.h_min && is_window_max(hist, y, x)) {
        sinks.push_back({{y, x}, hist(y, x), {{y, x}}});
      }
    }
  }
  // Stable sort keeps row-major order among equal masses.
  std::stable_sort(sinks.begin(), sinks.end(),
                   [](const Sink& a, const Sink& b) { return a.mass > b.mass; });

  Grid2D<int> owner = Grid2D<int>::Constant(dims.height, dims.width, -1);
  for (std::size_t s = 0; s < sinks.size(); ++s) {
    owner(sinks[s].seed.y, sinks[s].seed.x) = static_cast<int>(s);
  }
  for (int round = 0; round < settings.grow_iters; ++round) {
    for (std::size_t s = 0; s < sinks.size(); ++s) {
      std::set<Index> claims;
      for (const PixelIndex& b : sinks[s].basin) {
        for (Index ny = std::max<Index>(0, b.y - 1); ny <= std::min(dims.height - 1, b.y + 1);
             ++ny) {
          for (Index nx = std::max<Index>(0, b.x - 1); nx <= std::min(dims.width - 1, b.x + 1);
               ++nx) {
            if (owner(ny, nx) < 0 && hist(ny, nx) >= settings.grow_min) {
              claims.insert(ny * dims.width + nx);
            }
          }
        }
      }
      for (Index c : claims) {
        owner.data()[c] = static_cast<int>(s);
        sinks[s].basin.push_back({c / dims.width, c % dims.width});
        sinks[s].mass += hist.data()[c];
      }
    }
  }
  return sinks;
}

LabelMap cluster_sinks(const std::vector<TrajectoryEnd>& ends, Dims dims,
                       const SegmentationSettings& settings) {
  LabelMap out = LabelMap::Zero(dims.height, dims.width);
  const auto sinks = find_sinks(ends, dims, settings);
  if (sinks.empty()) return out;
  if (sinks.size() > kMaxLabel) {
    throw Error("labels.capacity", "more than 65535 sinks in one tile");
  }
  LabelMap bin_label = LabelMap::Zero(dims.height, dims.width);
  for (std::size_t s = 0; s < sinks.size(); ++s) {
    for (const PixelIndex& b : sinks[s].basin) bin_label(b.y, b.x) = static_cast<Label>(s + 1);
  }
  for (const auto& e : ends) {
    const PixelIndex b = bin_of(e.final, dims);
    out(e.origin.y, e.origin.x) = bin_label(b.y, b.x);
  }
  return relabel_sequential(out);
}

namespace {

std::vector<std::pair<Label, BBox>> label_boxes(const LabelMap& labels) {
  std::vector<std::pair<Label, BBox>> boxes;
  for (const auto& s : instance_stats(labels)) boxes.emplace_back(s.id, s.bbox);
  return boxes;
}

void keep_largest_component(LabelMap& labels, Label id, const BBox& box) {
  const Index h = box.height();
  const Index w = box.width();
  std::vector<int> comp(static_cast<std::size_t>(h * w), -1);
  std::vector<Index> sizes;
  std::vector<Index> stack;
  for (Index y = 0; y < h; ++y) {
    for (Index x = 0; x < w; ++x) {
      const Index i = y * w + x;
      if (comp[i] >= 0 || labels(box.y0 + y, box.x0 + x) != id) continue;
      const int c = static_cast<int>(sizes.size());
      Index size = 0;
      comp[i] = c;
      stack.push_back(i);
      while (!stack.empty()) {
        const Index p = stack.back();
        stack.pop_back();
        ++size;
        const Index py = p / w;
        const Index px = p % w;
        const Index nbrs[4][2] = {{py - 1, px}, {py + 1, px}, {py, px - 1}, {py, px + 1}};
        for (const auto& n : nbrs) {
          if (n[0] < 0 || n[0] >= h || n[1] < 0 || n[1] >= w) continue;
          const Index q = n[0] * w + n[1];
          if (comp[q] < 0 && labels(box.y0 + n[0], box.x0 + n[1]) == id) {
            comp[q] = c;
            stack.push_back(q);
          }
        }
      }
      sizes.push_back(size);
    }
  }
  if (sizes.size() <= 1) return;
  // max_element returns the first maximum, i.e. the earliest component.
  const int keep = static_cast<int>(std::max_element(sizes.begin(), sizes.end()) - sizes.begin());
  for (Index i = 0; i < h * w; ++i) {
    if (comp[i] >= 0 && comp[i] != keep) labels(box.y0 + i / w, box.x0 + i % w) = 0;
  }
}

void fill_holes(LabelMap& labels, Label id, const BBox& box) {
  // Local frame with a one-cell virtual border that counts as outside.
  const Index h = box.height() + 2;
  const Index w = box.width() + 2;
  auto is_inst = [&](Index ly, Index lx) {
    if (ly == 0 || lx == 0 || ly == h - 1 || lx == w - 1) return false;
    return labels(box.y0 + ly - 1, box.x0 + lx - 1) == id;
  };
  std::vector<std::uint8_t> outside(static_cast<std::size_t>(h * w), 0);
  std::deque<Index> queue;
  for (Index ly = 0; ly < h; ++ly) {
    for (Index lx = 0; lx < w; ++lx) {
      if (ly == 0 || lx == 0 || ly == h - 1 || lx == w - 1) {
        outside[ly * w + lx] = 1;
        queue.push_back(ly * w + lx);
      }
    }
  }
  while (!queue.empty()) {
    const Index p = queue.front();
    queue.pop_front();
    const Index py = p / w;
    const Index px = p % w;
    const Index nbrs[4][2] = {{py - 1, px}, {py + 1, px}, {py, px - 1}, {py, px + 1}};
    for (const auto& n : nbrs) {
      if (n[0] < 0 || n[0] >= h || n[1] < 0 || n[1] >= w) continue;
      const Index q = n[0] * w + n[1];
      if (!outside[q] && !is_inst(n[0], n[1])) {
        outside[q] = 1;
        queue.push_back(q);
      }
    }
  }
  for (Index ly = 1; ly < h - 1; ++ly) {
    for (Index lx = 1; lx < w - 1; ++lx) {
      Label& v = labels(box.y0 + ly - 1, box.x0 + lx - 1);
      if (!outside[ly * w + lx] && v == 0) v = id;
    }
  }
}

}  // namespace

LabelMap clean_instances(const LabelMap& labels) {
  LabelMap out = labels;
  const auto boxes = label_boxes(labels);
  for (const auto& [id, box] : boxes) keep_largest_component(out, id, box);
  for (const auto& [id, box] : boxes) fill_holes(out, id, box);
  return out;
}

LabelMap remove_small(const LabelMap& labels, Index min_area) {
  LabelMap out = labels;
  for (const auto& s : instance_stats(labels)) {
    if (s.area >= min_area) continue;
    for (Index y = s.bbox.y0; y <= s.bbox.y1; ++y) {
      for (Index x = s.bbox.x0; x <= s.bbox.x1; ++x) {
        if (out(y, x) == s.id) out(y, x) = 0;
      }
    }
  }
  return out;
}

namespace {

Index count_instances(const LabelMap& labels) {
  std::set<Label> ids(labels.data(), labels.data() + labels.size());
  ids.erase(0);
  return static_cast<Index>(ids.size());
}

}  // namespace

SegmentResult segment_with_stats(const FlowField& flow, const ProbabilityMap& prob,
                                 const SegmentationSettings& settings, int threads) {
  settings.validate();
  require_same_dims(dims_of(flow), dims_of(prob), "segment");
  SegmentResult result;
  const auto ends = advect(flow, prob, settings, threads);
  result.stats.n_gated = static_cast<Index>(ends.size());

  LabelMap labels = cluster_sinks(ends, dims_of(prob), settings);
  result.stats.n_clusters = max_label(labels);
  labels = clean_instances(labels);

  const Index before_small = count_instances(labels);
  labels = remove_small(labels, settings.min_area);
  const Index before_flow = count_instances(labels);
  result.stats.n_removed_small = before_small - before_flow;

  labels = filter_by_flow_error(labels, flow, settings.flow_threshold, threads);
  result.stats.n_instances = max_label(labels);
  result.stats.n_removed_flow = before_flow - result.stats.n_instances;
  result.labels = std::move(labels);
  return result;
}

LabelMap segment(const FlowField& flow, const ProbabilityMap& prob,
                 const SegmentationSettings& settings, int threads) {
  return segment_with_stats(flow, prob, settings, threads).labels;
}

}  // namespace crownflow
