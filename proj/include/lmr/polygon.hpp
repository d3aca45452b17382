#pragma once

#include "lmr/homography.hpp"

#include <Eigen/Core>

#include <cmath>

namespace lmr {

/// Convex polygon as 2 x n vertex columns.
template <typename Scalar>
using Polygon = Eigen::Matrix<Scalar, 2, Eigen::Dynamic>;

template <typename Scalar>
Polygon<Scalar> rectangle_polygon(Scalar width, Scalar height) {
  Polygon<Scalar> p(2, 4);
  p << 0, width, width, 0,
       0, 0, height, height;
  return p;
}

template <typename Scalar>
Scalar signed_area(const Polygon<Scalar>& p) {
  const Eigen::Index n = p.cols();
  Scalar acc = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::Index j = (i + 1) % n;
    acc += p(0, i) * p(1, j) - p(0, j) * p(1, i);
  }
  return acc / Scalar(2);
}

template <typename Scalar>
Scalar polygon_area(const Polygon<Scalar>& p) {
  return p.cols() < 3 ? Scalar(0) : std::abs(signed_area(p));
}

/// Keeps the part of `poly` where a*x + b*y + c >= 0.
template <typename Scalar>
Polygon<Scalar> clip_halfplane(const Polygon<Scalar>& poly, Scalar a, Scalar b, Scalar c) {
  const Eigen::Index n = poly.cols();
  Polygon<Scalar> out(2, 2 * n);
  Eigen::Index m = 0;
  auto value = [&](Eigen::Index i) { return a * poly(0, i) + b * poly(1, i) + c; };
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::Index j = (i + 1) % n;
    const Scalar vi = value(i), vj = value(j);
    if (vi >= 0) out.col(m++) = poly.col(i);
    if ((vi >= 0) != (vj >= 0)) {
      const Scalar t = vi / (vi - vj);
      out.col(m++) = poly.col(i) + t * (poly.col(j) - poly.col(i));
    }
  }
  return out.leftCols(m);
}

/// Sutherland-Hodgman clip of a convex polygon against a convex clip polygon.
template <typename Scalar>
Polygon<Scalar> clip_convex(Polygon<Scalar> subject, const Polygon<Scalar>& clip) {
  const Eigen::Index n = clip.cols();
  if (n < 3) return Polygon<Scalar>(2, 0);
  const Scalar orientation = signed_area(clip) >= 0 ? Scalar(1) : Scalar(-1);
  for (Eigen::Index i = 0; i < n && subject.cols() > 0; ++i) {
    const Eigen::Index j = (i + 1) % n;
    // Inside is to the left of edge i->j for a counter-clockwise clip polygon.
    const Scalar a = -(clip(1, j) - clip(1, i)) * orientation;
    const Scalar b = (clip(0, j) - clip(0, i)) * orientation;
    const Scalar c = -(a * clip(0, i) + b * clip(1, i));
    subject = clip_halfplane(subject, a, b, c);
  }
  return subject;
}

template <typename Scalar>
Polygon<Scalar> clip_rectangle(const Polygon<Scalar>& subject, Scalar width, Scalar height) {
  Polygon<Scalar> p = clip_halfplane(subject, Scalar(1), Scalar(0), Scalar(0));
  p = clip_halfplane(p, Scalar(-1), Scalar(0), width);
  p = clip_halfplane(p, Scalar(0), Scalar(1), Scalar(0));
  return clip_halfplane(p, Scalar(0), Scalar(-1), height);
}

/// Maps a convex polygon through a homography. The part whose projective
/// weight has the opposite sign of the polygon's centroid weight (i.e. lies
/// across the vanishing line) is clipped away first.
template <typename Scalar>
Polygon<Scalar> map_polygon(const Matrix3<Scalar>& h, const Polygon<Scalar>& poly) {
  if (poly.cols() == 0) return poly;
  const Eigen::Matrix<Scalar, 2, 1> centroid = poly.rowwise().mean();
  const Scalar wc = h.row(2).dot(centroid.homogeneous());
  const Scalar sign = wc >= 0 ? Scalar(1) : Scalar(-1);
  const Scalar eps = std::numeric_limits<Scalar>::epsilon() * Scalar(1e3) *
                     (std::abs(h(2, 2)) + h.row(2).template head<2>().norm() *
                                              poly.cwiseAbs().maxCoeff());
  Polygon<Scalar> front =
      clip_halfplane(poly, sign * h(2, 0), sign * h(2, 1), sign * h(2, 2) - eps);
  if (front.cols() == 0) return front;
  Polygon<Scalar> mapped = apply_homography<Scalar>(h, front);
  if (signed_area(mapped) < 0) mapped = mapped.rowwise().reverse().eval();
  return mapped;
}

}  // namespace lmr
