#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <unordered_map>

#include "crownflow/error.hpp"

namespace crownflow {

using Index = Eigen::Index;

/// Row-major H x W raster; element (y, x) is row y, column x, origin top-left.
template <typename Scalar>
using Grid2D = Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using Label = std::uint16_t;
using LabelMap = Grid2D<Label>;
using ProbabilityMap = Grid2D<float>;
using SemanticMask = Grid2D<std::uint8_t>;
using BinaryMask = Grid2D<std::uint8_t>;

inline constexpr Label kMaxLabel = 65535;

/// Per-pixel displacement (pixels/step). dy is the row component.
template <typename Scalar>
struct FlowFieldT {
  Grid2D<Scalar> dy;
  Grid2D<Scalar> dx;

  FlowFieldT() = default;
  FlowFieldT(Index height, Index width)
      : dy(Grid2D<Scalar>::Zero(height, width)), dx(Grid2D<Scalar>::Zero(height, width)) {}

  Index rows() const { return dy.rows(); }
  Index cols() const { return dy.cols(); }
};

using FlowField = FlowFieldT<float>;

/// Sub-pixel position (row, column).
struct Point {
  float y = 0.0f;
  float x = 0.0f;

  friend bool operator==(const Point&, const Point&) = default;
};

struct Dims {
  Index height = 0;
  Index width = 0;

  friend bool operator==(const Dims&, const Dims&) = default;
};

template <typename Derived>
Dims dims_of(const Eigen::DenseBase<Derived>& g) {
  return {g.rows(), g.cols()};
}

template <typename Scalar>
Dims dims_of(const FlowFieldT<Scalar>& f) {
  return {f.rows(), f.cols()};
}

inline void require_same_dims(Dims a, Dims b, const char* what) {
  if (a != b) {
    throw Error("dims.mismatch", std::string(what) + ": dimension mismatch (" +
                                     std::to_string(a.height) + "x" + std::to_string(a.width) +
                                     " vs " + std::to_string(b.height) + "x" +
                                     std::to_string(b.width) + ")");
  }
}

inline Point clamp_to(Point p, Dims d) {
  return {std::clamp(p.y, 0.0f, static_cast<float>(d.height - 1)),
          std::clamp(p.x, 0.0f, static_cast<float>(d.width - 1))};
}

/// Bilinear value of a scalar grid at p, edge-clamped.
template <typename Derived>
typename Derived::Scalar bilinear_at(const Eigen::DenseBase<Derived>& g, Point p) {
  using Scalar = typename Derived::Scalar;
  const Index h = g.rows();
  const Index w = g.cols();
  const Scalar y = std::clamp(static_cast<Scalar>(p.y), Scalar(0), static_cast<Scalar>(h - 1));
  const Scalar x = std::clamp(static_cast<Scalar>(p.x), Scalar(0), static_cast<Scalar>(w - 1));
  const Index y0 = static_cast<Index>(std::floor(y));
  const Index x0 = static_cast<Index>(std::floor(x));
  const Index y1 = std::min(y0 + 1, h - 1);
  const Index x1 = std::min(x0 + 1, w - 1);
  const Scalar fy = y - static_cast<Scalar>(y0);
  const Scalar fx = x - static_cast<Scalar>(x0);
  const Scalar top = g(y0, x0) * (Scalar(1) - fx) + g(y0, x1) * fx;
  const Scalar bottom = g(y1, x0) * (Scalar(1) - fx) + g(y1, x1) * fx;
  return top * (Scalar(1) - fy) + bottom * fy;
}

template <typename Scalar>
struct FlowSample {
  Scalar vy;
  Scalar vx;
};

/// Flow at a sub-pixel position. Coordinates outside the raster are clamped
/// to the nearest edge, so every finite point is a valid query.
template <typename Scalar>
FlowSample<Scalar> bilinear_sample(const FlowFieldT<Scalar>& field, Point p) {
  return {bilinear_at(field.dy, p), bilinear_at(field.dx, p)};
}

namespace detail {

inline Index scaled_extent(Index n, double factor) {
  if (!std::isfinite(factor) || factor <= 0.0) {
    throw Error("rescale.factor", "rescale factor must be finite and positive");
  }
  const auto out = static_cast<Index>(std::lround(static_cast<double>(n) * factor));
  if (out < 1) {
    throw Error("rescale.factor", "rescale factor collapses a dimension to zero");
  }
  return out;
}

// Align-corners mapping: output index i samples source coordinate
// i * (n_in - 1) / (n_out - 1), so the first and last samples coincide.
inline double source_coord(Index i, Index n_in, Index n_out) {
  if (n_out <= 1) return 0.0;
  return static_cast<double>(i) * static_cast<double>(n_in - 1) / static_cast<double>(n_out - 1);
}

}  // namespace detail

template <typename Scalar>
Grid2D<Scalar> resize_bilinear(const Grid2D<Scalar>& g, Index height, Index width) {
  if (height < 1 || width < 1) throw Error("rescale.factor", "target size must be positive");
  if (height == g.rows() && width == g.cols()) return g;
  Grid2D<Scalar> out(height, width);
  for (Index y = 0; y < height; ++y) {
    const auto sy = static_cast<float>(detail::source_coord(y, g.rows(), height));
    for (Index x = 0; x < width; ++x) {
      const auto sx = static_cast<float>(detail::source_coord(x, g.cols(), width));
      out(y, x) = bilinear_at(g, Point{sy, sx});
    }
  }
  return out;
}

template <typename Scalar>
Grid2D<Scalar> rescale_bilinear(const Grid2D<Scalar>& g, double factor) {
  const Index h = detail::scaled_extent(g.rows(), factor);
  const Index w = detail::scaled_extent(g.cols(), factor);
  return resize_bilinear(g, h, w);
}

template <typename Scalar>
Grid2D<Scalar> resize_nearest(const Grid2D<Scalar>& g, Index height, Index width) {
  if (height < 1 || width < 1) throw Error("rescale.factor", "target size must be positive");
  if (height == g.rows() && width == g.cols()) return g;
  Grid2D<Scalar> out(height, width);
  for (Index y = 0; y < height; ++y) {
    const Index sy = std::lround(detail::source_coord(y, g.rows(), height));
    for (Index x = 0; x < width; ++x) {
      out(y, x) = g(sy, std::lround(detail::source_coord(x, g.cols(), width)));
    }
  }
  return out;
}

inline LabelMap rescale_nearest(const LabelMap& l, double factor) {
  const Index h = detail::scaled_extent(l.rows(), factor);
  const Index w = detail::scaled_extent(l.cols(), factor);
  return resize_nearest(l, h, w);
}

/// Renumbers instances to 1..K in order of first appearance in a row-major
/// scan. Background (0) is preserved.
inline LabelMap relabel_sequential(const LabelMap& l) {
  LabelMap out(l.rows(), l.cols());
  std::unordered_map<Label, Label> remap;
  Label next = 1;
  for (Index i = 0; i < l.size(); ++i) {
    const Label v = l.data()[i];
    if (v == 0) {
      out.data()[i] = 0;
      continue;
    }
    auto [it, inserted] = remap.try_emplace(v, next);
    if (inserted) ++next;
    out.data()[i] = it->second;
  }
  return out;
}

/// Largest instance id present (K after relabel_sequential).
inline Label max_label(const LabelMap& l) { return l.size() == 0 ? Label{0} : l.maxCoeff(); }

}  // namespace crownflow
