#include "crownflow/pipeline.hpp"

#include <algorithm>
#include <set>

#include "crownflow/flow_synthesis.hpp"
#include "parallel.hpp"

namespace crownflow {

void PipelineOptions::validate() const {
  settings.validate();
  if (!(std::isfinite(diameter) && diameter > 0.0)) {
    throw Error("config.diameter", "diameter must be finite and positive");
  }
  if (!(std::isfinite(reference_diameter) && reference_diameter > 0.0)) {
    throw Error("config.diameter", "reference diameter must be finite and positive");
  }
  if (!(rho >= 0.0 && rho <= 1.0)) throw Error("settings.rho", "rho must lie in [0, 1]");
}

SegmentResult segment_at_diameter(const FlowField& flow, const ProbabilityMap& prob,
                                  const SegmentationSettings& settings, double diameter,
                                  double reference_diameter, int threads) {
  require_same_dims(dims_of(flow), dims_of(prob), "segment");
  const double factor = reference_diameter / diameter;
  if (factor == 1.0) return segment_with_stats(flow, prob, settings, threads);

  const Index h = detail::scaled_extent(prob.rows(), factor);
  const Index w = detail::scaled_extent(prob.cols(), factor);
  FlowField scaled;
  scaled.dy = resize_bilinear(flow.dy, h, w);
  scaled.dx = resize_bilinear(flow.dx, h, w);
  renormalize(scaled);
  const ProbabilityMap scaled_prob = resize_bilinear(prob, h, w);
  SegmentResult r = segment_with_stats(scaled, scaled_prob, settings, threads);
  r.labels = relabel_sequential(resize_nearest(r.labels, prob.rows(), prob.cols()));
  r.stats.n_instances = max_label(r.labels);
  return r;
}

PipelineResult run_segment(const FlowField& flow, const ProbabilityMap& prob,
                           const PipelineOptions& options) {
  options.validate();
  require_same_dims(dims_of(flow), dims_of(prob), "segment");
  PipelineResult out;
  SegmentResult seg;
  if (options.semantic) {
    const auto [gated_flow, gated_prob] = apply_mask_flows(flow, prob, *options.semantic);
    seg = segment_at_diameter(gated_flow, gated_prob, options.settings, options.diameter,
                              options.reference_diameter, options.threads);
  } else {
    seg = segment_at_diameter(flow, prob, options.settings, options.diameter,
                              options.reference_diameter, options.threads);
  }
  out.stats.segment = seg.stats;
  out.labels = std::move(seg.labels);
  if (options.canopy_filter && options.semantic) {
    const Label before = max_label(out.labels);
    out.labels = filter_instances_by_canopy(out.labels, *options.semantic, options.rho);
    out.stats.n_removed_canopy = before - max_label(out.labels);
    out.stats.segment.n_instances = max_label(out.labels);
  }
  return out;
}

void TileConfig::validate() const {
  if (tile < 1 || overlap < 0 || 2 * overlap > tile) {
    throw Error("config.tiling", "tiling requires tile >= 2 * overlap >= 0 and tile >= 1 (tile " +
                                     std::to_string(tile) + ", overlap " +
                                     std::to_string(overlap) + ")");
  }
}

std::vector<TileSpan> tile_spans(Index extent, const TileConfig& cfg) {
  cfg.validate();
  std::vector<TileSpan> spans;
  if (extent <= cfg.tile) {
    spans.push_back({0, extent, 0, extent});
    return spans;
  }
  const Index stride = cfg.tile - cfg.overlap;
  Index start = 0;
  spans.push_back({start, cfg.tile, 0, 0});
  while (start + cfg.tile < extent) {
    start = std::min(start + stride, extent - cfg.tile);
    spans.push_back({start, cfg.tile, 0, 0});
  }
  for (std::size_t i = 0; i < spans.size(); ++i) {
    spans[i].core_begin = i == 0 ? 0 : spans[i - 1].core_end;
    spans[i].core_end = i + 1 == spans.size()
                            ? extent
                            : (spans[i + 1].start + spans[i].start + spans[i].length) / 2;
  }
  return spans;
}

namespace {

struct Rect {
  Index y0 = 0;
  Index x0 = 0;
  Index y1 = 0;  // exclusive
  Index x1 = 0;  // exclusive

  bool contains(Index y, Index x) const { return y >= y0 && y < y1 && x >= x0 && x < x1; }
};

struct Piece {
  Rect tile;
  std::vector<Index> pixels;  // global row-major indices, ascending
  bool alive = true;
};

// IoU of two pieces restricted to the area their tiles share.
double band_iou(const Piece& a, const Piece& b, Index width) {
  const Rect band{std::max(a.tile.y0, b.tile.y0), std::max(a.tile.x0, b.tile.x0),
                  std::min(a.tile.y1, b.tile.y1), std::min(a.tile.x1, b.tile.x1)};
  if (band.y0 >= band.y1 || band.x0 >= band.x1) return 0.0;
  auto in_band = [&](Index i) { return band.contains(i / width, i % width); };
  std::vector<Index> pa;
  std::vector<Index> pb;
  std::copy_if(a.pixels.begin(), a.pixels.end(), std::back_inserter(pa), in_band);
  std::copy_if(b.pixels.begin(), b.pixels.end(), std::back_inserter(pb), in_band);
  std::vector<Index> inter;
  std::set_intersection(pa.begin(), pa.end(), pb.begin(), pb.end(), std::back_inserter(inter));
  const auto uni = static_cast<double>(pa.size() + pb.size() - inter.size());
  return uni > 0.0 ? static_cast<double>(inter.size()) / uni : 0.0;
}

}  // namespace

PipelineResult run_pipeline(const FlowField& flow, const ProbabilityMap& prob,
                            const PipelineOptions& options, const TileConfig& tiles) {
  options.validate();
  tiles.validate();
  require_same_dims(dims_of(flow), dims_of(prob), "pipeline");
  const Index height = prob.rows();
  const Index width = prob.cols();

  FlowField gflow = flow;
  ProbabilityMap gprob = prob;
  if (options.semantic) std::tie(gflow, gprob) = apply_mask_flows(flow, prob, *options.semantic);

  const auto rows = tile_spans(height, tiles);
  const auto cols = tile_spans(width, tiles);
  struct TileJob {
    TileSpan row;
    TileSpan col;
    SegmentResult result;
  };
  std::vector<TileJob> jobs;
  for (const auto& r : rows) {
    for (const auto& c : cols) jobs.push_back({r, c, {}});
  }

  detail::parallel_for(jobs.size(), options.threads, [&](std::size_t j) {
    TileJob& job = jobs[j];
    FlowField f;
    f.dy = gflow.dy.block(job.row.start, job.col.start, job.row.length, job.col.length);
    f.dx = gflow.dx.block(job.row.start, job.col.start, job.row.length, job.col.length);
    const ProbabilityMap p =
        gprob.block(job.row.start, job.col.start, job.row.length, job.col.length);
    job.result = segment_at_diameter(f, p, options.settings, options.diameter,
                                     options.reference_diameter, 1);
  });

  PipelineResult out;
  out.stats.n_tiles = static_cast<Index>(jobs.size());
  std::vector<Piece> core;
  std::vector<Piece> seam;
  for (const TileJob& job : jobs) {
    const SegmentStats& s = job.result.stats;
    out.stats.segment.n_gated += s.n_gated;
    out.stats.segment.n_clusters += s.n_clusters;
    out.stats.segment.n_removed_small += s.n_removed_small;
    out.stats.segment.n_removed_flow += s.n_removed_flow;

    const Rect tile_rect{job.row.start, job.col.start, job.row.start + job.row.length,
                         job.col.start + job.col.length};
    const Rect core_rect{job.row.core_begin, job.col.core_begin, job.row.core_end,
                         job.col.core_end};
    const LabelMap& l = job.result.labels;
    std::vector<Piece> pieces(static_cast<std::size_t>(max_label(l)));
    std::vector<bool> in_core(pieces.size(), true);
    for (Index y = 0; y < l.rows(); ++y) {
      for (Index x = 0; x < l.cols(); ++x) {
        const Label v = l(y, x);
        if (v == 0) continue;
        const Index gy = job.row.start + y;
        const Index gx = job.col.start + x;
        pieces[v - 1].pixels.push_back(gy * width + gx);
        if (!core_rect.contains(gy, gx)) in_core[v - 1] = false;
      }
    }
    for (std::size_t k = 0; k < pieces.size(); ++k) {
      pieces[k].tile = tile_rect;
      (in_core[k] ? core : seam).push_back(std::move(pieces[k]));
    }
  }

  // Core pieces never overlap: cores partition the raster.
  std::vector<Piece> accepted = std::move(core);
  Grid2D<int> owner = Grid2D<int>::Constant(height, width, -1);
  for (std::size_t a = 0; a < accepted.size(); ++a) {
    for (Index i : accepted[a].pixels) owner.data()[i] = static_cast<int>(a);
  }
  for (Piece& cand : seam) {
    std::set<int> overlapping;
    for (Index i : cand.pixels) {
      if (owner.data()[i] >= 0) overlapping.insert(owner.data()[i]);
    }
    int merged_into = -1;
    for (int a : overlapping) {
      if (band_iou(cand, accepted[a], width) >= 0.5) {
        merged_into = a;
        break;
      }
    }
    if (merged_into >= 0) {
      Piece& target = accepted[merged_into];
      std::vector<Index> uni;
      std::set_union(target.pixels.begin(), target.pixels.end(), cand.pixels.begin(),
                     cand.pixels.end(), std::back_inserter(uni));
      target.pixels = std::move(uni);
      for (Index i : cand.pixels) {
        if (owner.data()[i] < 0) owner.data()[i] = merged_into;
      }
      ++out.stats.n_merged;
      continue;
    }
    const bool larger = std::all_of(overlapping.begin(), overlapping.end(), [&](int a) {
      return cand.pixels.size() > accepted[a].pixels.size();
    });
    if (!larger) {
      ++out.stats.n_dropped;
      continue;
    }
    for (int a : overlapping) {
      for (Index i : accepted[a].pixels) {
        if (owner.data()[i] == a) owner.data()[i] = -1;
      }
      accepted[a].alive = false;
      ++out.stats.n_dropped;
    }
    const int id = static_cast<int>(accepted.size());
    for (Index i : cand.pixels) {
      if (owner.data()[i] < 0) owner.data()[i] = id;
    }
    accepted.push_back(std::move(cand));
  }

  LabelMap stitched = LabelMap::Zero(height, width);
  std::vector<Label> label_of(accepted.size(), 0);
  Index next = 0;
  for (std::size_t a = 0; a < accepted.size(); ++a) {
    if (!accepted[a].alive) continue;
    if (++next > kMaxLabel) throw Error("labels.capacity", "more than 65535 stitched instances");
    label_of[a] = static_cast<Label>(next);
  }
  for (Index i = 0; i < stitched.size(); ++i) {
    const int a = owner.data()[i];
    if (a >= 0) stitched.data()[i] = label_of[static_cast<std::size_t>(a)];
  }
  out.labels = relabel_sequential(stitched);

  if (options.canopy_filter && options.semantic) {
    const Label before = max_label(out.labels);
    out.labels = filter_instances_by_canopy(out.labels, *options.semantic, options.rho);
    out.stats.n_removed_canopy = before - max_label(out.labels);
  }
  out.stats.segment.n_instances = max_label(out.labels);
  return out;
}

}  // namespace crownflow
