#include "crownflow/synth_forest.hpp"

#include <cmath>
#include <map>
#include <numbers>

#include "crownflow/flow_synthesis.hpp"

namespace crownflow {

namespace {

std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

constexpr double kTwoPi = 2.0 * std::numbers::pi;

}  // namespace

Xoshiro256::Xoshiro256(std::uint64_t seed) {
  std::uint64_t state = seed;
  for (auto& word : s_) word = splitmix64(state);
}

std::uint64_t Xoshiro256::next() {
  const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
  const std::uint64_t t = s_[1] << 17;
  s_[2] ^= s_[0];
  s_[3] ^= s_[1];
  s_[1] ^= s_[2];
  s_[0] ^= s_[3];
  s_[2] ^= t;
  s_[3] = rotl(s_[3], 45);
  return result;
}

double Xoshiro256::uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

double Xoshiro256::normal() {
  const double u1 = 1.0 - uniform();  // (0, 1]
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(kTwoPi * u2);
}

double crown_radius(double r0, const std::vector<Harmonic>& harmonics, double theta) {
  double s = 1.0;
  for (const auto& h : harmonics) s += h.amplitude * std::cos(h.order * theta + h.phase);
  return r0 * s;
}

namespace {

double amplitude_sum(const std::vector<Harmonic>& harmonics) {
  double sum = 0.0;
  for (const auto& h : harmonics) sum += std::abs(h.amplitude);
  return sum;
}

// Pixel bounds of a crown's support, clipped to the raster.
BBox crown_bounds(Point center, double r0, const std::vector<Harmonic>& harmonics, Dims dims) {
  const double reach = r0 * (1.0 + amplitude_sum(harmonics)) + 1.0;
  return {std::max<Index>(0, static_cast<Index>(std::floor(center.y - reach))),
          std::max<Index>(0, static_cast<Index>(std::floor(center.x - reach))),
          std::min<Index>(dims.height - 1, static_cast<Index>(std::ceil(center.y + reach))),
          std::min<Index>(dims.width - 1, static_cast<Index>(std::ceil(center.x + reach)))};
}

bool inside_crown(Point center, double r0, const std::vector<Harmonic>& harmonics, Index y,
                  Index x) {
  const double dy = static_cast<double>(y) - center.y;
  const double dx = static_cast<double>(x) - center.x;
  const double d = std::hypot(dy, dx);
  if (d == 0.0) return true;
  return d <= crown_radius(r0, harmonics, std::atan2(dy, dx));
}

}  // namespace

BinaryMask crown_shape(Point center, double r0, const std::vector<Harmonic>& harmonics,
                       Dims dims) {
  if (amplitude_sum(harmonics) >= 0.5) {
    throw Error("crown.amplitude", "harmonic amplitudes must sum to less than 0.5");
  }
  for (const auto& h : harmonics) {
    if (h.order < 2) throw Error("crown.order", "harmonic orders start at 2");
  }
  if (!(r0 > 0.0)) throw Error("crown.radius", "crown radius must be positive");
  BinaryMask mask = BinaryMask::Zero(dims.height, dims.width);
  const auto b = crown_bounds(center, r0, harmonics, dims);
  for (Index y = b.y0; y <= b.y1; ++y) {
    for (Index x = b.x0; x <= b.x1; ++x) {
      if (inside_crown(center, r0, harmonics, y, x)) mask(y, x) = 1;
    }
  }
  return mask;
}

void SceneSpec::validate() const {
  auto fail = [](const std::string& what) { throw Error("scene.spec", what); };
  if (height < 1 || width < 1) fail("scene dimensions must be positive");
  if (n_crowns < 0) fail("n_crowns must be >= 0");
  if (n_crowns > kMaxLabel) fail("n_crowns exceeds the 65535 label capacity");
  if (!(r_min >= 3.0)) fail("r_min must be >= 3");
  if (!(r_max >= r_min)) fail("r_max must be >= r_min");
  if (!(lobe_amplitude >= 0.0 && lobe_amplitude < 0.5)) fail("lobe_amplitude must be in [0, 0.5)");
  if (!(max_occlusion >= 0.0 && max_occlusion < 1.0)) fail("max_occlusion must be in [0, 1)");
  if (n_crowns > 0) {
    const double span = 2.0 * r_max * (1.0 + lobe_amplitude) + 3.0;
    if (static_cast<double>(std::min(height, width)) < span) {
      fail("scene too small for r_max");
    }
  }
}

namespace {

Crown sample_crown(Xoshiro256& rng, const SceneSpec& spec) {
  Crown c;
  c.r0 = rng.uniform(spec.r_min, spec.r_max);
  for (int order = 2; order <= 4; ++order) {
    const double a = spec.lobe_amplitude * rng.uniform() / 3.0;
    c.harmonics.push_back({order, a, rng.uniform(0.0, kTwoPi)});
  }
  // Keep the whole crown inside the raster so its full area is visible.
  const double reach = c.r0 * (1.0 + amplitude_sum(c.harmonics)) + 1.0;
  c.center.y = static_cast<float>(rng.uniform(reach, static_cast<double>(spec.height - 1) - reach));
  c.center.x = static_cast<float>(rng.uniform(reach, static_cast<double>(spec.width - 1) - reach));
  return c;
}

struct PixelList {
  std::vector<Index> pixels;  // linear indices
};

PixelList rasterize(const Crown& c, Dims dims) {
  PixelList out;
  const auto b = crown_bounds(c.center, c.r0, c.harmonics, dims);
  for (Index y = b.y0; y <= b.y1; ++y) {
    for (Index x = b.x0; x <= b.x1; ++x) {
      if (inside_crown(c.center, c.r0, c.harmonics, y, x)) out.pixels.push_back(y * dims.width + x);
    }
  }
  return out;
}

void render_image(Scene& scene, Xoshiro256& rng) {
  const Index h = scene.spec.height;
  const Index w = scene.spec.width;
  scene.image.assign(3, Grid2D<float>::Zero(h, w));
  const std::array<double, 3> soil = {0.46, 0.40, 0.31};

  std::vector<std::array<double, 3>> base;
  for (std::size_t k = 0; k < scene.crowns.size(); ++k) {
    const double u = rng.uniform();
    base.push_back({0.10 + 0.10 * u, 0.30 + 0.25 * rng.uniform(), 0.08 + 0.10 * u});
  }
  std::vector<std::array<double, 3>> patch_tone;
  for (std::size_t k = 0; k < scene.clutter.size(); ++k) {
    const double g = 0.35 + 0.3 * rng.uniform();
    patch_tone.push_back({g, 0.9 * g + 0.05 * rng.uniform(), 0.8 * g});
  }

  for (Index y = 0; y < h; ++y) {
    for (Index x = 0; x < w; ++x) {
      std::array<double, 3> color = soil;
      const Label id = scene.labels(y, x);
      if (id != 0) {
        const Crown& c = scene.crowns[id - 1];
        const double dy = static_cast<double>(y) - c.center.y;
        const double dx = static_cast<double>(x) - c.center.x;
        const double rel =
            std::hypot(dy, dx) / crown_radius(c.r0, c.harmonics, std::atan2(dy, dx));
        const double shade = 0.55 + 0.45 * (1.0 - std::min(rel, 1.0));
        for (int b = 0; b < 3; ++b) color[b] = base[id - 1][b] * shade * 1.6;
      } else {
        for (std::size_t k = 0; k < scene.clutter.size(); ++k) {
          const auto& p = scene.clutter[k];
          const double d = std::hypot(static_cast<double>(y) - p.center.y,
                                      static_cast<double>(x) - p.center.x);
          if (d > p.radius) continue;
          // Striped texture to mimic roofs, rows or roads.
          const double stripe = 0.5 + 0.5 * std::sin(0.9 * static_cast<double>(x + y));
          for (int b = 0; b < 3; ++b) color[b] = patch_tone[k][b] * (0.7 + 0.3 * stripe);
          break;
        }
      }
      for (int b = 0; b < 3; ++b) {
        const double v = color[b] + 0.03 * rng.normal();
        scene.image[b](y, x) = static_cast<float>(std::clamp(v, 0.0, 1.0));
      }
    }
  }
}

void place_clutter(Scene& scene, Xoshiro256& rng) {
  const SceneSpec& spec = scene.spec;
  const int wanted = std::max(3, spec.n_crowns / 4);
  const int max_tries = 1000 * wanted;
  for (int tries = 0; tries < max_tries && static_cast<int>(scene.clutter.size()) < wanted;
       ++tries) {
    ClutterPatch p;
    p.radius = rng.uniform(spec.r_min, std::max(spec.r_min, spec.r_max));
    const double reach = p.radius + 1.0;
    if (2.0 * reach >= static_cast<double>(std::min(spec.height, spec.width))) break;
    p.center.y = static_cast<float>(rng.uniform(reach, static_cast<double>(spec.height - 1) - reach));
    p.center.x = static_cast<float>(rng.uniform(reach, static_cast<double>(spec.width - 1) - reach));
    bool clear = true;
    for (Index y = static_cast<Index>(p.center.y - reach); clear && y <= p.center.y + reach; ++y) {
      for (Index x = static_cast<Index>(p.center.x - reach); x <= p.center.x + reach; ++x) {
        if (scene.labels(y, x) != 0) {
          clear = false;
          break;
        }
      }
    }
    for (const auto& q : scene.clutter) {
      if (std::hypot(p.center.y - q.center.y, p.center.x - q.center.x) <
          p.radius + q.radius + 2.0) {
        clear = false;
      }
    }
    if (clear) scene.clutter.push_back(p);
  }
}

}  // namespace

Scene generate_scene(const SceneSpec& spec) {
  spec.validate();
  Scene scene;
  scene.spec = spec;
  const Dims dims{spec.height, spec.width};
  scene.labels = LabelMap::Zero(dims.height, dims.width);
  Xoshiro256 rng(spec.seed);

  std::vector<Index> visible;
  const long long max_rejections = 1000LL * spec.n_crowns;
  long long rejections = 0;
  while (static_cast<int>(scene.crowns.size()) < spec.n_crowns) {
    Crown c = sample_crown(rng, spec);
    const PixelList px = rasterize(c, dims);
    std::map<Label, Index> hidden;
    for (Index i : px.pixels) {
      const Label under = scene.labels.data()[i];
      if (under != 0) ++hidden[under];
    }
    bool ok = true;
    for (const auto& [id, n] : hidden) {
      const double left = static_cast<double>(visible[id - 1] - n);
      if (left < (1.0 - spec.max_occlusion) * static_cast<double>(scene.crowns[id - 1].full_area)) {
        ok = false;
        break;
      }
    }
    if (!ok) {
      if (++rejections >= max_rejections) {
        throw Error("scene.placement",
                    "crown placement failed after " + std::to_string(rejections) +
                        " rejections; placed " + std::to_string(scene.crowns.size()) + " of " +
                        std::to_string(spec.n_crowns));
      }
      continue;
    }
    for (const auto& [id, n] : hidden) visible[id - 1] -= n;
    c.full_area = static_cast<Index>(px.pixels.size());
    scene.crowns.push_back(c);
    visible.push_back(c.full_area);
    const auto id = static_cast<Label>(scene.crowns.size());
    for (Index i : px.pixels) scene.labels.data()[i] = id;
  }

  scene.semantic = (scene.labels != 0).cast<std::uint8_t>();
  if (spec.clutter) place_clutter(scene, rng);
  render_image(scene, rng);
  return scene;
}

}  // namespace crownflow
