// Acceptance checks A1-A8. Prints one PASS/FAIL line per criterion with the
// attained values and exits nonzero if any criterion fails.

#include <chrono>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "crownflow/advection.hpp"
#include "crownflow/cli.hpp"
#include "crownflow/eval_metrics.hpp"
#include "crownflow/flow_synthesis.hpp"
#include "crownflow/io.hpp"
#include "crownflow/pipeline.hpp"
#include "crownflow/semantic_gate.hpp"
#include "crownflow/synth_forest.hpp"
#include "fixtures.hpp"

using namespace crownflow;
using namespace crownflow::testing;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

std::string read_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

void write_bytes(const std::filesystem::path& p, const std::string& bytes) {
  std::ofstream out(p, std::ios::binary);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

int run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "crownflow");
  std::ostringstream out;
  std::ostringstream err;
  return cli::run(args, out, err);
}

Outcome a1_round_trip() {
  SceneSpec spec;
  spec.height = spec.width = 1024;
  spec.n_crowns = 200;
  spec.r_min = 8.0;
  spec.r_max = 24.0;
  spec.max_occlusion = 0.6;
  spec.seed = 42;
  const Scene scene = generate_scene(spec);
  const auto t0 = std::chrono::steady_clock::now();
  const FlowField flow = flows_from_labels(scene.labels, 1);
  const ProbabilityMap prob = foreground(scene.labels);
  const LabelMap pred = segment(flow, prob, SegmentationSettings{}, 1);
  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const Summary s = summary(scene.labels, score_by_probability(pred, prob));
  return {s.ap50 >= 0.95 && s.mean_iou >= 0.90 && seconds < 60.0,
          fmt("ap50=%.4f mean_iou=%.4f matched=%lld/%lld runtime=%.2fs (single thread)", s.ap50,
              s.mean_iou, static_cast<long long>(s.n_matched), static_cast<long long>(s.n_gt),
              seconds)};
}

Outcome a2_touching() {
  const TwoDisk fx = two_disk_fixture();
  const LabelMap pred =
      segment(flows_from_labels(fx.labels), foreground(fx.labels), SegmentationSettings{});
  const Index n = max_label(pred);
  const MatchResult m = match_at_iou(fx.labels, score_by_probability(pred), 0.5);
  std::map<Label, Label> to_gt;
  for (const auto& p : m.pairs) to_gt[p.pred_id] = p.gt_id;
  const double mid = 0.5 * static_cast<double>(fx.cx1 + fx.cx2);
  Index band = 0;
  Index wrong = 0;
  for (Index y = 0; y < fx.labels.rows(); ++y) {
    for (Index x = 0; x < fx.labels.cols(); ++x) {
      if (fx.labels(y, x) == 0 || std::abs(static_cast<double>(x) - mid) > 2.0) continue;
      ++band;
      const auto it = to_gt.find(pred(y, x));
      if (it == to_gt.end() || it->second != fx.labels(y, x)) ++wrong;
    }
  }
  const double frac = static_cast<double>(wrong) / static_cast<double>(band);
  return {n == 2 && frac <= 0.05,
          fmt("instances=%lld misassigned=%lld/%lld band pixels (%.4f)",
              static_cast<long long>(n), static_cast<long long>(wrong),
              static_cast<long long>(band), frac)};
}

Outcome a3_semantic_gate() {
  SceneSpec spec;
  spec.height = spec.width = 512;
  spec.n_crowns = 40;
  spec.clutter = true;
  spec.seed = 7;
  const Scene scene = generate_scene(spec);
  const FlowField clean = flows_from_labels(scene.labels);
  const ProbabilityMap clean_prob = foreground(scene.labels);

  // Instance-like flows over each background clutter patch.
  LabelMap fake = LabelMap::Zero(spec.height, spec.width);
  for (std::size_t k = 0; k < scene.clutter.size(); ++k) {
    const auto& c = scene.clutter[k];
    paint_disk(fake, c.center.y, c.center.x, c.radius, static_cast<Label>(k + 1));
  }
  fake = (scene.semantic == 0).select(fake, Label{0});
  const FlowField fake_flow = flows_from_labels(fake);
  FlowField flow = clean;
  flow.dy = (fake != 0).select(fake_flow.dy, clean.dy);
  flow.dx = (fake != 0).select(fake_flow.dx, clean.dx);
  const ProbabilityMap prob = ((scene.labels != 0) || (fake != 0)).cast<float>();

  auto background_instances = [&](const LabelMap& pred) {
    std::map<Label, std::pair<Index, Index>> counts;  // id -> (background, total)
    for (Index i = 0; i < pred.size(); ++i) {
      const Label id = pred.data()[i];
      if (id == 0) continue;
      auto& c = counts[id];
      c.second += 1;
      if (scene.semantic.data()[i] == 0) c.first += 1;
    }
    Index n = 0;
    for (const auto& [id, c] : counts) n += 2 * c.first > c.second ? 1 : 0;
    return n;
  };

  PipelineOptions ungated;
  const LabelMap raw = run_segment(flow, prob, ungated).labels;
  PipelineOptions gated;
  gated.semantic = scene.semantic;
  const LabelMap masked = run_segment(flow, prob, gated).labels;
  const LabelMap reference = run_segment(clean, clean_prob, ungated).labels;

  const Index false_raw = background_instances(raw);
  const Index false_gated = background_instances(masked);
  const double ap_gated = average_precision_50(scene.labels, score_by_probability(masked, prob));
  const double ap_clean =
      average_precision_50(scene.labels, score_by_probability(reference, clean_prob));
  return {false_raw >= 1 && false_gated == 0 && std::abs(ap_gated - ap_clean) <= 0.01,
          fmt("patches=%zu false_ungated=%lld false_gated=%lld ap_gated=%.4f ap_clean=%.4f",
              scene.clutter.size(), static_cast<long long>(false_raw),
              static_cast<long long>(false_gated), ap_gated, ap_clean)};
}

Outcome a4_flow_filter() {
  const LabelMap four = four_disk_cluster();
  const LabelMap m = merged(four);
  const FlowField v = flows_from_labels(four);
  const double err = flow_error(m, v).at(1);
  const bool removed = max_label(filter_by_flow_error(m, v, 1.0)) == 0;

  int exact = 0;
  double worst = 0.0;
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    SceneSpec spec;
    spec.height = spec.width = 128;
    spec.n_crowns = 10;
    spec.r_max = 16.0;
    spec.seed = seed;
    const Scene s = generate_scene(spec);
    bool all_zero = true;
    for (const auto& [id, e] : flow_error(s.labels, flows_from_labels(s.labels))) {
      worst = std::max(worst, e);
      if (e != 0.0) all_zero = false;
    }
    exact += all_zero ? 1 : 0;
  }
  return {err > 1.0 && removed && exact == 100,
          fmt("merged 2x2 cluster error=%.6f removed=%s; exact-zero scenes=%d/100 (max %.3g)", err,
              removed ? "yes" : "no", exact, worst)};
}

Outcome a5_diameter() {
  SceneSpec spec;
  spec.height = spec.width = 256;
  spec.n_crowns = 60;
  spec.r_min = 8.0;
  spec.r_max = 16.0;
  spec.seed = 11;
  const Scene scene = generate_scene(spec);
  const FlowField f = flows_from_labels(scene.labels);
  const ProbabilityMap p = foreground(scene.labels);
  auto count = [&](double d) {
    return max_label(segment_at_diameter(f, p, SegmentationSettings{}, d).labels);
  };
  const Index c15 = count(15.0);
  const Index c30 = count(30.0);
  const Index c60 = count(60.0);
  return {c15 >= c30 && c30 >= c60,
          fmt("crowns=%zu count(d=15)=%lld count(d=30)=%lld count(d=60)=%lld",
              scene.crowns.size(), static_cast<long long>(c15), static_cast<long long>(c30),
              static_cast<long long>(c60))};
}

Outcome a6_metrics() {
  LabelMap gt = LabelMap::Zero(30, 30);
  gt.block(2, 2, 8, 8).setConstant(1);
  gt.block(15, 15, 8, 8).setConstant(2);
  LabelMap one = LabelMap::Zero(30, 30);
  one.block(2, 2, 8, 8).setConstant(1);
  const double ap = average_precision_50(gt, score_by_probability(one));
  const bool ap_ok = std::abs(ap - 51.0 / 101.0) <= 1e-9;

  const Summary perfect = summary(gt, score_by_probability(gt));
  const bool perfect_ok = perfect.precision == 1.0 && perfect.recall == 1.0 &&
                          perfect.f1 == 1.0 && perfect.mean_iou == 1.0 && perfect.ap50 == 1.0;

  SceneSpec spec;
  spec.height = spec.width = 160;
  spec.n_crowns = 15;
  spec.seed = 4;
  const Scene scene = generate_scene(spec);
  LabelMap pred = segment(flows_from_labels(scene.labels), foreground(scene.labels),
                          SegmentationSettings{});
  // Degrade the prediction so the metrics are not trivially perfect.
  pred.block(0, 0, 80, 80).setZero();
  pred = relabel_sequential(pred);
  const Label n = max_label(pred);
  std::mt19937 rng(12);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  ScoredPrediction base{pred, {}};
  for (Label id = 1; id <= n; ++id) base.scores[id] = u(rng);
  const Summary ref = summary(scene.labels, base);
  int invariant = 0;
  for (int t = 0; t < 100; ++t) {
    std::vector<Label> perm(n);
    std::iota(perm.begin(), perm.end(), Label{1});
    std::shuffle(perm.begin(), perm.end(), rng);
    ScoredPrediction p{pred.unaryExpr([&](Label v) { return v ? perm[v - 1] : Label{0}; }), {}};
    for (Label id = 1; id <= n; ++id) p.scores[perm[id - 1]] = base.scores[id];
    const Summary s = summary(scene.labels, p);
    if (s.ap50 == ref.ap50 && s.precision == ref.precision && s.recall == ref.recall &&
        std::abs(s.mean_iou - ref.mean_iou) <= 1e-12) {
      ++invariant;
    }
  }
  return {ap_ok && perfect_ok && invariant == 100,
          fmt("ap(1 of 2)=%.12f perfect=%s permutation-invariant=%d/100 (ap50=%.4f)", ap,
              perfect_ok ? "all 1.0" : "no", invariant, ref.ap50)};
}

Outcome a7_io() {
  TempDir dir;
  std::mt19937 rng(77);
  std::uniform_int_distribution<int> dim(1, 40);
  int identical = 0;
  for (int t = 0; t < 50; ++t) {
    // Edge shapes first, then random ones.
    std::vector<std::size_t> shape;
    switch (t) {
      case 0: shape = {1}; break;
      case 1: shape = {1, 1}; break;
      case 2: shape = {0, 5}; break;
      case 3: shape = {2, 1, 7}; break;
      default:
        shape.resize(static_cast<std::size_t>(1 + t % 3));
        for (auto& s : shape) s = static_cast<std::size_t>(dim(rng));
    }
    io::NpyArray a;
    a.header.shape = shape;
    const std::size_t count = a.header.element_count();
    switch (t % 3) {
      case 0: {
        a.header.dtype = io::DType::kFloat32;
        std::vector<float> v(count);
        std::uniform_real_distribution<float> f(-1e6f, 1e6f);
        for (auto& x : v) x = f(rng);
        if (!v.empty()) v[0] = -0.0f;
        a.data = v;
        break;
      }
      case 1: {
        a.header.dtype = io::DType::kUInt16;
        std::vector<std::uint16_t> v(count);
        for (auto& x : v) x = static_cast<std::uint16_t>(rng());
        if (!v.empty()) v.back() = 65535;
        a.data = v;
        break;
      }
      default: {
        a.header.dtype = io::DType::kUInt8;
        std::vector<std::uint8_t> v(count);
        for (auto& x : v) x = static_cast<std::uint8_t>(rng());
        a.data = v;
      }
    }
    io::write_npy(dir / "a.npy", a);
    const io::NpyArray back = io::read_npy(dir / "a.npy");
    io::write_npy(dir / "b.npy", back);
    const bool npy_ok = back.header.shape == shape && back.data == a.data &&
                        read_bytes(dir / "a.npy") == read_bytes(dir / "b.npy") &&
                        read_bytes(dir / "a.npy").size() % 64 ==
                            (count * (t % 3 == 0 ? 4 : t % 3 == 1 ? 2 : 1)) % 64;

    const Index h = t == 0 ? 1 : dim(rng);
    const Index w = t == 1 ? 1 : dim(rng);
    LabelMap l(h, w);
    for (Index i = 0; i < l.size(); ++i) l.data()[i] = static_cast<Label>(rng());
    l(0, 0) = 65535;
    io::write_labels_png(dir / "a.png", l);
    const LabelMap lb = io::read_labels_png(dir / "a.png");
    io::write_labels_png(dir / "b.png", lb);
    const bool png_ok =
        (lb == l).all() && read_bytes(dir / "a.png") == read_bytes(dir / "b.png");
    identical += npy_ok && png_ok ? 1 : 0;
  }

  // Malformed inputs, each expected to produce its own id.
  auto npy = [](std::string dict, std::size_t payload, char major) {
    const std::size_t unpadded = 10 + dict.size() + 1;
    dict.append((64 - unpadded % 64) % 64, ' ');
    dict.push_back('\n');
    std::string out("\x93NUMPY", 6);
    out.push_back(major);
    out.push_back(0);
    out.push_back(static_cast<char>(dict.size() & 0xff));
    out.push_back(static_cast<char>(dict.size() >> 8));
    return out + dict + std::string(payload, '\0');
  };
  const std::string good = "{'descr': '<f4', 'fortran_order': False, 'shape': (2, 2), }";
  const std::vector<std::string> bad = {
      "GIF89a",
      npy(good, 16, 2),
      npy("{'descr': '<f4', 'shape': (2, 2), }", 16, 1),
      npy("{'descr': '>f4', 'fortran_order': False, 'shape': (2, 2), }", 16, 1),
      npy("{'descr': '<f4', 'fortran_order': True, 'shape': (2, 2), }", 16, 1),
      npy(good, 15, 1),
  };
  std::set<std::string> ids;
  for (const auto& bytes : bad) {
    write_bytes(dir / "bad.npy", bytes);
    ids.insert(error_id([&] { io::read_npy(dir / "bad.npy"); }));
  }
  io::write_mask_png(dir / "eight.png", SemanticMask::Ones(4, 4));
  ids.insert(error_id([&] { io::read_labels_png(dir / "eight.png"); }));
  io::write_rgb_png(dir / "rgb.png", std::vector<Grid2D<float>>(3, Grid2D<float>::Zero(4, 4)));
  ids.insert(error_id([&] { io::read_labels_png(dir / "rgb.png"); }));
  write_bytes(dir / "junk.png", "junk");
  ids.insert(error_id([&] { io::read_labels_png(dir / "junk.png"); }));
  const std::size_t expected = bad.size() + 3;
  const bool distinct = ids.size() == expected && !ids.contains("");

  std::string joined;
  for (const auto& id : ids) joined += (joined.empty() ? "" : ",") + id;
  return {identical == 50 && distinct,
          fmt("round-trips identical=%d/50; malformed ids=%zu/%zu distinct [%s]", identical,
              ids.size(), expected, joined.c_str())};
}

Outcome a8_determinism() {
  TempDir dir;
  const std::string d = dir.path().string();
  if (run_cli({"synth", "--height", "600", "--width", "600", "-n", "60", "--r-max", "20",
               "--seed", "5", "--out-dir", d}) != 0 ||
      run_cli({"flows", "--labels", d + "/labels.png", "--out-dir", d}) != 0) {
    return {false, "could not prepare inputs"};
  }
  const std::vector<std::string> io_args = {"--flows", d + "/flows.npy", "--prob",
                                            d + "/prob.npy"};
  auto run_to = [&](std::vector<std::string> cmd, const std::string& out,
                    const std::string& threads) {
    cmd.insert(cmd.end(), io_args.begin(), io_args.end());
    cmd.insert(cmd.end(), {"--threads", threads, "--out", d + "/" + out, "--report",
                           d + "/" + out + ".json"});
    return run_cli(cmd) == 0 ? io::sha256_file(dir / out) : std::string("failed");
  };
  std::set<std::string> seg;
  std::set<std::string> pipe;
  for (const char* threads : {"1", "1", "2", "8"}) {
    seg.insert(run_to({"segment"}, "seg.png", threads));
    pipe.insert(run_to({"pipeline", "--tile", "256", "--overlap", "96"}, "pipe.png", threads));
  }
  // Largest crown diameter is 2 * 20 * 1.3 = 52 px, below the 96 px overlap.
  const LabelMap gt = io::read_labels_png(dir / "labels.png");
  const LabelMap untiled = io::read_labels_png(dir / "seg.png");
  const LabelMap tiled = io::read_labels_png(dir / "pipe.png");
  const double ap_tiled = average_precision_50(gt, score_by_probability(tiled));
  const double ap_vs_untiled = average_precision_50(untiled, score_by_probability(tiled));
  const bool ok = seg.size() == 1 && !seg.contains("failed") && pipe.size() == 1 &&
                  !pipe.contains("failed") && ap_vs_untiled >= 0.95;
  return {ok, fmt("segment digests=%zu pipeline digests=%zu over 4 runs (threads 1,1,2,8); "
                  "ap50 tiled vs untiled=%.4f, tiled vs gt=%.4f",
                  seg.size(), pipe.size(), ap_vs_untiled, ap_tiled)};
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
      {"A1 round-trip oracle", a1_round_trip},
      {"A2 touching-instance separation", a2_touching},
      {"A3 semantic-gate efficacy", a3_semantic_gate},
      {"A4 flow-consistency filter", a4_flow_filter},
      {"A5 diameter-prior monotonicity", a5_diameter},
      {"A6 metric correctness", a6_metrics},
      {"A7 IO bit-exactness", a7_io},
      {"A8 determinism", a8_determinism},
  };
  int failures = 0;
  for (const auto& [name, check] : criteria) {
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.pass) ++failures;
    std::cout << (o.pass ? "PASS " : "FAIL ") << name << ": " << o.detail << std::endl;
  }
  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " failed")
            << std::endl;
  return failures == 0 ? 0 : 1;
}
