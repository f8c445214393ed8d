#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "crownflow/raster.hpp"

namespace crownflow {

/// xoshiro256** seeded through splitmix64. Transforms to floating point are
/// done by hand so streams are identical on every standard library.
class Xoshiro256 {
 public:
  explicit Xoshiro256(std::uint64_t seed);

  std::uint64_t next();
  /// Uniform in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Standard normal via Box-Muller (no cached second sample).
  double normal();

 private:
  std::array<std::uint64_t, 4> s_{};
};

struct Harmonic {
  int order = 2;  // j >= 2
  double amplitude = 0.0;
  double phase = 0.0;
};

/// Rasterizes { (y, x) : |(y, x) - center| <= r(theta) } with
/// r(theta) = r0 * (1 + sum_j a_j cos(j theta + phi_j)), theta = atan2(dy, dx).
/// Requires sum of |a_j| < 0.5, which keeps the region star-convex.
BinaryMask crown_shape(Point center, double r0, const std::vector<Harmonic>& harmonics,
                       Dims dims);

/// Crown radius along direction theta.
double crown_radius(double r0, const std::vector<Harmonic>& harmonics, double theta);

struct SceneSpec {
  Index height = 256;
  Index width = 256;
  int n_crowns = 20;
  double r_min = 8.0;
  double r_max = 24.0;
  double lobe_amplitude = 0.3;  // upper bound on the summed harmonic amplitudes
  double max_occlusion = 0.6;
  bool clutter = false;
  std::uint64_t seed = 42;

  /// Throws Error("scene.spec") on invalid fields.
  void validate() const;
};

struct Crown {
  Point center;
  double r0 = 0.0;
  std::vector<Harmonic> harmonics;
  Index full_area = 0;
};

struct ClutterPatch {
  Point center;
  double radius = 0.0;
};

struct Scene {
  std::vector<Grid2D<float>> image;  // 3 bands in [0, 1]
  LabelMap labels;                   // crown i (0-based) has id i + 1
  SemanticMask semantic;             // union of crowns
  SceneSpec spec;
  std::vector<Crown> crowns;
  std::vector<ClutterPatch> clutter;  // background texture patches (image only)
};

/// Deterministic scene for a given spec. Crowns are placed in z-order, newer
/// crowns on top; a placement is rejected if it would leave any existing
/// crown with less than (1 - max_occlusion) of its full area visible.
/// Throws Error("scene.placement") after 1000 * n_crowns rejections.
Scene generate_scene(const SceneSpec& spec);

}  // namespace crownflow
