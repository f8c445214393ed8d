#pragma once

#include <cmath>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "crownflow/error.hpp"
#include "crownflow/raster.hpp"

namespace crownflow::testing {

/// Pixels with (y - cy)^2 + (x - cx)^2 <= r^2.
inline void paint_disk(LabelMap& l, double cy, double cx, double r, Label id) {
  for (Index y = 0; y < l.rows(); ++y) {
    for (Index x = 0; x < l.cols(); ++x) {
      const double dy = static_cast<double>(y) - cy;
      const double dx = static_cast<double>(x) - cx;
      if (dy * dy + dx * dx <= r * r) l(y, x) = id;
    }
  }
}

inline LabelMap disk_map(Index h, Index w, double cy, double cx, double r) {
  LabelMap l = LabelMap::Zero(h, w);
  paint_disk(l, cy, cx, r, 1);
  return l;
}

/// Two overlapping disks of radius 12 whose centers are 20 px apart on one
/// row; the overlap is split at the equidistant column.
struct TwoDisk {
  LabelMap labels;
  Index cy = 24;
  Index cx1 = 20;
  Index cx2 = 40;
  double radius = 12.0;
};

inline TwoDisk two_disk_fixture() {
  TwoDisk f;
  f.labels = LabelMap::Zero(49, 61);
  for (Index y = 0; y < f.labels.rows(); ++y) {
    for (Index x = 0; x < f.labels.cols(); ++x) {
      const double dy = static_cast<double>(y - f.cy);
      const double d1 = std::hypot(dy, static_cast<double>(x - f.cx1));
      const double d2 = std::hypot(dy, static_cast<double>(x - f.cx2));
      if (d1 <= f.radius && d1 <= d2) {
        f.labels(y, x) = 1;
      } else if (d2 <= f.radius) {
        f.labels(y, x) = 2;
      }
    }
  }
  return f;
}

/// Disks of radius `r` at `centers`; overlaps go to the nearest center
/// (lowest index on ties). Instance k + 1 is centers[k].
inline LabelMap disk_cluster(Index h, Index w, const std::vector<std::pair<Index, Index>>& centers,
                             double r) {
  LabelMap l = LabelMap::Zero(h, w);
  for (Index y = 0; y < h; ++y) {
    for (Index x = 0; x < w; ++x) {
      double best = r;
      for (std::size_t k = 0; k < centers.size(); ++k) {
        const double d = std::hypot(static_cast<double>(y - centers[k].first),
                                    static_cast<double>(x - centers[k].second));
        if (d < best || (d == best && l(y, x) == 0)) {
          best = d;
          l(y, x) = static_cast<Label>(k + 1);
        }
      }
    }
  }
  return l;
}

/// 2x2 block of radius-12 disks at 20 px spacing.
inline LabelMap four_disk_cluster() {
  return disk_cluster(58, 58, {{18, 18}, {18, 38}, {38, 18}, {38, 38}}, 12.0);
}

/// Union of the disks as one instance.
inline LabelMap merged(const LabelMap& l) { return (l != 0).cast<Label>(); }

inline ProbabilityMap foreground(const LabelMap& l) { return (l != 0).cast<float>(); }

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("crownflow_test_" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

/// Id of the Error thrown by `fn`, or "" when nothing is thrown.
template <class Fn>
std::string error_id(Fn&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.id();
  }
  return "";
}

}  // namespace crownflow::testing
