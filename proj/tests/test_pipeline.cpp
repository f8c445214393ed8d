#include <doctest.h>

#include <random>

#include "crownflow/eval_metrics.hpp"
#include "crownflow/flow_synthesis.hpp"
#include "crownflow/pipeline.hpp"
#include "crownflow/synth_forest.hpp"
#include "fixtures.hpp"

using namespace crownflow;
using namespace crownflow::testing;

TEST_CASE("tile_spans layout") {
  const TileConfig cfg{1024, 128};
  const auto s = tile_spans(2500, cfg);
  REQUIRE(s.size() == 3);
  CHECK(s[0].start == 0);
  CHECK(s[1].start == 896);
  CHECK(s[2].start == 1476);
  CHECK(s[0].core_end == 960);
  CHECK(s[1].core_begin == 960);
  CHECK(s[1].core_end == 1698);
  CHECK(s[2].core_end == 2500);

  const auto single = tile_spans(700, cfg);
  REQUIRE(single.size() == 1);
  CHECK(single[0].length == 700);
  CHECK(single[0].core_end == 700);

  CHECK(error_id([] { tile_spans(100, {100, 60}); }) == "config.tiling");
  CHECK(error_id([] { tile_spans(100, {100, -1}); }) == "config.tiling");
  CHECK(tile_spans(300, {100, 50}).size() == 5);
}

TEST_CASE("tile cores partition the axis") {
  std::mt19937 rng(6);
  std::uniform_int_distribution<Index> ext(1, 3000);
  std::uniform_int_distribution<Index> tile(8, 600);
  for (int t = 0; t < 500; ++t) {
    const Index extent = ext(rng);
    const Index size = tile(rng);
    const Index overlap = std::uniform_int_distribution<Index>(0, size / 2)(rng);
    const auto spans = tile_spans(extent, {size, overlap});
    Index cursor = 0;
    for (const auto& sp : spans) {
      CHECK(sp.start >= 0);
      CHECK(sp.start + sp.length <= extent);
      CHECK(sp.core_begin == cursor);
      CHECK(sp.core_begin >= sp.start);
      CHECK(sp.core_end <= sp.start + sp.length);
      CHECK(sp.core_end > sp.core_begin);
      cursor = sp.core_end;
    }
    CHECK(cursor == extent);
  }
}

TEST_CASE("run_segment gates, rescales and filters") {
  const TwoDisk fx = two_disk_fixture();
  const FlowField f = flows_from_labels(fx.labels);
  const ProbabilityMap p = foreground(fx.labels);

  PipelineOptions opt;
  const PipelineResult plain = run_segment(f, p, opt);
  CHECK((plain.labels == segment(f, p, opt.settings)).all());

  opt.semantic = SemanticMask::Zero(fx.labels.rows(), fx.labels.cols());
  CHECK((run_segment(f, p, opt).labels == 0).all());

  // Only the left disk lies in the canopy; the post filter drops the right one.
  opt.semantic = (fx.labels == 1).cast<std::uint8_t>();
  opt.canopy_filter = true;
  const PipelineResult gated = run_segment(f, p, opt);
  CHECK(max_label(gated.labels) == 1);
  CHECK(gated.labels(fx.cy, fx.cx1) == 1);

  opt = {};
  opt.diameter = 0.0;
  CHECK(error_id([&] { run_segment(f, p, opt); }) == "config.diameter");
  opt = {};
  opt.rho = 2.0;
  CHECK(error_id([&] { run_segment(f, p, opt); }) == "settings.rho");
}

TEST_CASE("segment_at_diameter at the reference diameter is plain segmentation") {
  SceneSpec spec;
  spec.height = spec.width = 128;
  spec.n_crowns = 8;
  spec.seed = 17;
  const Scene scene = generate_scene(spec);
  const FlowField f = flows_from_labels(scene.labels);
  const ProbabilityMap p = foreground(scene.labels);
  const SegmentResult r = segment_at_diameter(f, p, SegmentationSettings{}, 30.0);
  CHECK((r.labels == segment(f, p, SegmentationSettings{})).all());

  const SegmentResult up = segment_at_diameter(f, p, SegmentationSettings{}, 20.0);
  CHECK(up.labels.rows() == 128);
  CHECK(up.labels.cols() == 128);
}

TEST_CASE("tiling recovers crowns that straddle a seam") {
  // Tiles of 128 with overlap 48 on a 200 px axis: cores split at 104.
  const LabelMap gt = disk_cluster(
      200, 200, {{104, 104}, {40, 100}, {104, 40}, {160, 160}, {60, 160}}, 14.0);
  const FlowField f = flows_from_labels(gt);
  const ProbabilityMap p = foreground(gt);
  PipelineOptions opt;
  const PipelineResult tiled = run_pipeline(f, p, opt, {128, 48});
  const PipelineResult whole = run_segment(f, p, opt);
  CHECK(tiled.stats.n_tiles == 4);
  CHECK(max_label(tiled.labels) == 5);

  const IouMatrix m = iou_matrix(whole.labels, tiled.labels);
  for (Index i = 0; i < m.iou.rows(); ++i) CHECK(m.iou.row(i).maxCoeff() >= 0.9);
  // The crown on the seam corner is covered by exactly one tiled instance.
  const IouMatrix g = iou_matrix(gt, tiled.labels);
  Index hits = 0;
  for (Index j = 0; j < g.iou.cols(); ++j) hits += g.iou(0, j) > 0.0 ? 1 : 0;
  CHECK(hits == 1);
  CHECK(summary(gt, score_by_probability(tiled.labels)).ap50 == 1.0);
}

TEST_CASE("a single tile reproduces run_segment") {
  SceneSpec spec;
  spec.height = spec.width = 160;
  spec.n_crowns = 10;
  spec.seed = 23;
  const Scene scene = generate_scene(spec);
  const FlowField f = flows_from_labels(scene.labels);
  const ProbabilityMap p = foreground(scene.labels);
  PipelineOptions opt;
  const PipelineResult tiled = run_pipeline(f, p, opt, {256, 32});
  CHECK(tiled.stats.n_tiles == 1);
  CHECK((tiled.labels == run_segment(f, p, opt).labels).all());
}
