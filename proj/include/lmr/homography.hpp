#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <Eigen/LU>
#include <Eigen/SVD>

#include <cmath>
#include <optional>

namespace lmr {

template <typename Scalar>
using Matrix3 = Eigen::Matrix<Scalar, 3, 3>;

/// Scales to unit Frobenius norm with the largest-magnitude entry positive.
template <typename Derived>
Matrix3<typename Derived::Scalar> normalize_homography(const Eigen::MatrixBase<Derived>& h) {
  using Scalar = typename Derived::Scalar;
  Matrix3<Scalar> out = h;
  Eigen::Index r = 0, c = 0;
  out.cwiseAbs().maxCoeff(&r, &c);
  const Scalar norm = out.norm();
  if (norm == Scalar(0)) return out;
  out /= (out(r, c) < Scalar(0) ? -norm : norm);
  return out;
}

template <typename Derived>
bool is_nonsingular(const Eigen::MatrixBase<Derived>& h) {
  using Scalar = typename Derived::Scalar;
  return std::abs(normalize_homography(h).determinant()) > Scalar(1e-12);
}

/// Maps 2 x n points through a homography.
template <typename Scalar, typename Derived>
Eigen::Matrix<Scalar, 2, Eigen::Dynamic> apply_homography(
    const Matrix3<Scalar>& h, const Eigen::MatrixBase<Derived>& points) {
  const Eigen::Matrix<Scalar, 3, Eigen::Dynamic> mapped =
      h * points.template cast<Scalar>().colwise().homogeneous();
  return mapped.colwise().hnormalized();
}

template <typename Scalar>
Eigen::Matrix<Scalar, 2, 1> apply_homography(const Matrix3<Scalar>& h,
                                             const Eigen::Matrix<Scalar, 2, 1>& p) {
  return (h * p.homogeneous()).hnormalized();
}

namespace detail {

/// Similarity transform moving the centroid to the origin with mean distance sqrt(2).
template <typename Scalar, typename Derived>
Matrix3<Scalar> hartley_normalizer(const Eigen::MatrixBase<Derived>& points) {
  const Eigen::Matrix<Scalar, 2, 1> centroid = points.rowwise().mean();
  const Scalar mean_dist = (points.colwise() - centroid).colwise().norm().mean();
  const Scalar s = mean_dist > Scalar(0) ? std::sqrt(Scalar(2)) / mean_dist : Scalar(1);
  Matrix3<Scalar> t;
  t << s, 0, -s * centroid.x(), 0, s, -s * centroid.y(), 0, 0, 1;
  return t;
}

}  // namespace detail

/// Direct linear transform with Hartley normalization; src/dst are 2 x n,
/// n >= 4. Returns nullopt for a rank-deficient system.
template <typename DerivedA, typename DerivedB>
std::optional<Matrix3<typename DerivedA::Scalar>> fit_homography_dlt(
    const Eigen::MatrixBase<DerivedA>& src, const Eigen::MatrixBase<DerivedB>& dst) {
  using Scalar = typename DerivedA::Scalar;
  const Eigen::Index n = src.cols();
  if (n < 4 || dst.cols() != n) return std::nullopt;

  const Matrix3<Scalar> ts = detail::hartley_normalizer<Scalar>(src);
  const Matrix3<Scalar> td = detail::hartley_normalizer<Scalar>(dst);
  const Eigen::Matrix<Scalar, 2, Eigen::Dynamic> a =
      (ts * src.colwise().homogeneous()).colwise().hnormalized();
  const Eigen::Matrix<Scalar, 2, Eigen::Dynamic> b =
      (td * dst.template cast<Scalar>().colwise().homogeneous()).colwise().hnormalized();

  Eigen::Matrix<Scalar, Eigen::Dynamic, 9> system(2 * n, 9);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Scalar x = a(0, i), y = a(1, i), u = b(0, i), v = b(1, i);
    system.row(2 * i) << -x, -y, -1, 0, 0, 0, u * x, u * y, u;
    system.row(2 * i + 1) << 0, 0, 0, -x, -y, -1, v * x, v * y, v;
  }
  Eigen::JacobiSVD<Eigen::Matrix<Scalar, Eigen::Dynamic, 9>> svd(system, Eigen::ComputeFullV);
  const auto& sv = svd.singularValues();
  // The null space must be one-dimensional.
  if (sv.size() >= 8 && sv(7) <= std::numeric_limits<Scalar>::epsilon() * Scalar(64) * sv(0))
    return std::nullopt;
  const Eigen::Matrix<Scalar, 9, 1> h = svd.matrixV().col(8);
  Matrix3<Scalar> hn;
  hn << h(0), h(1), h(2), h(3), h(4), h(5), h(6), h(7), h(8);
  const Matrix3<Scalar> result = td.inverse() * hn * ts;
  if (!is_nonsingular(result)) return std::nullopt;
  return normalize_homography(result);
}

/// Symmetric transfer error sqrt(|b - H a|^2 + |a - H^-1 b|^2).
template <typename Scalar>
Scalar symmetric_transfer_error(const Matrix3<Scalar>& h, const Matrix3<Scalar>& h_inv,
                                const Eigen::Matrix<Scalar, 2, 1>& a,
                                const Eigen::Matrix<Scalar, 2, 1>& b) {
  const Eigen::Matrix<Scalar, 3, 1> fa = h * a.homogeneous();
  const Eigen::Matrix<Scalar, 3, 1> bb = h_inv * b.homogeneous();
  if (fa.z() == Scalar(0) || bb.z() == Scalar(0)) return std::numeric_limits<Scalar>::infinity();
  return std::sqrt((fa.hnormalized() - b).squaredNorm() + (bb.hnormalized() - a).squaredNorm());
}

/// Twice the signed area of triangle (p, q, r).
template <typename Scalar>
Scalar cross2(const Eigen::Matrix<Scalar, 2, 1>& p, const Eigen::Matrix<Scalar, 2, 1>& q,
              const Eigen::Matrix<Scalar, 2, 1>& r) {
  return (q - p).x() * (r - p).y() - (q - p).y() * (r - p).x();
}

}  // namespace lmr
