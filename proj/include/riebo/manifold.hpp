#pragma once

// Geometries: Euclidean space, the SPD cone with the affine-invariant metric,
// products of two manifolds, and the probability simplex as a projection-based
// constraint set. Tangent vectors carry their base point; operations that
// combine tangents require identical bases.

#include <Eigen/Dense>

#include <cmath>
#include <utility>

#include "riebo/common.hpp"
#include "riebo/sym_matrix.hpp"

namespace riebo {

template <typename Scalar_>
class EuclideanManifold {
 public:
  using Scalar = Scalar_;
  using Point = Vec<Scalar>;
  using Payload = Vec<Scalar>;
  struct Tangent {
    Point base;
    Payload dir;
  };

  explicit EuclideanManifold(Eigen::Index dim) : dim_(dim) {
    if (dim <= 0) throw ConfigError("EuclideanManifold: dimension must be positive");
  }

  Eigen::Index dim() const { return dim_; }

  static bool same_point(const Point& a, const Point& b) {
    return a.size() == b.size() && (a.array() == b.array()).all();
  }

  void check_point(const Point& p) const {
    if (p.size() != dim_) throw DimensionError("Euclidean point: dimension mismatch");
    require_finite(p, "Euclidean point");
  }

  void check_tangent(const Point& p, const Tangent& v) const {
    check_point(p);
    if (!same_point(v.base, p)) throw BasePointError("Euclidean tangent: base-point mismatch");
    if (v.dir.size() != dim_) throw DimensionError("Euclidean tangent: dimension mismatch");
    require_finite(v.dir, "Euclidean tangent");
  }

  Tangent make_tangent(const Point& p, const Payload& d) const {
    Tangent v{p, d};
    check_tangent(p, v);
    return v;
  }

  Tangent zero_tangent(const Point& p) const {
    check_point(p);
    return Tangent{p, Payload::Zero(dim_)};
  }

  Point exp_map(const Point& p, const Tangent& v) const {
    check_tangent(p, v);
    return p + v.dir;
  }

  Tangent log_map(const Point& p, const Point& q) const {
    check_point(p);
    check_point(q);
    return Tangent{p, q - p};
  }

  Scalar distance(const Point& p, const Point& q) const {
    check_point(p);
    check_point(q);
    return (q - p).norm();
  }

  Scalar inner(const Point& p, const Tangent& u, const Tangent& v) const {
    check_tangent(p, u);
    check_tangent(p, v);
    return u.dir.dot(v.dir);
  }

  Scalar norm(const Point& p, const Tangent& v) const { return std::sqrt(inner(p, v, v)); }

  Tangent parallel_transport(const Point& p, const Point& q, const Tangent& v) const {
    check_tangent(p, v);
    check_point(q);
    return Tangent{q, v.dir};
  }

  // a*x + y at a common base.
  Tangent axpy(Scalar a, const Tangent& x, const Tangent& y) const {
    if (!same_point(x.base, y.base)) throw BasePointError("axpy: base-point mismatch");
    return Tangent{x.base, a * x.dir + y.dir};
  }

  Tangent scale(Scalar a, const Tangent& x) const { return Tangent{x.base, a * x.dir}; }

  Tangent random_tangent(const Point& p, Rng& rng) const {
    check_point(p);
    Payload d(dim_);
    for (Eigen::Index i = 0; i < dim_; ++i) d[i] = Scalar(rng.normal());
    return Tangent{p, std::move(d)};
  }

  Eigen::Index tangent_coord_dim() const { return dim_; }

  // Coordinates are isometric for the Euclidean metric.
  Vec<Scalar> tangent_coords(const Point&, const Tangent& v) const { return v.dir; }

  Tangent tangent_from_coords(const Point& p, const Vec<Scalar>& c) const {
    return make_tangent(p, c);
  }

 private:
  Eigen::Index dim_;
};

// SPD matrices of fixed size with the affine-invariant metric
// <U, V>_S = tr(S^-1 U S^-1 V).
template <typename Scalar_>
class SpdManifold {
 public:
  using Scalar = Scalar_;
  using Point = Mat<Scalar>;
  using Payload = Mat<Scalar>;
  struct Tangent {
    Point base;
    Payload dir;
  };

  explicit SpdManifold(Eigen::Index d) : d_(d) {
    if (d <= 0) throw ConfigError("SpdManifold: dimension must be positive");
  }

  Eigen::Index matrix_dim() const { return d_; }

  static bool same_point(const Point& a, const Point& b) {
    return a.rows() == b.rows() && a.cols() == b.cols() && (a.array() == b.array()).all();
  }

  void check_point(const Point& p) const {
    if (p.rows() != d_ || p.cols() != d_) throw DimensionError("SPD point: dimension mismatch");
    require_finite(p, "SPD point");
    const Scalar scale = p.template lpNorm<Eigen::Infinity>();
    if (Mat<Scalar>(p - p.transpose()).template lpNorm<Eigen::Infinity>() >
        Scalar(1e-12) * std::max(Scalar(1), scale))
      throw NotSymmetricError("SPD point: payload is not symmetric");
    Eigen::LLT<Mat<Scalar>> llt(symmetrize(p));
    if (llt.info() != Eigen::Success)
      throw NotPositiveDefiniteError("SPD point: payload is not positive definite");
  }

  void check_tangent(const Point& p, const Tangent& v) const {
    check_point(p);
    if (!same_point(v.base, p)) throw BasePointError("SPD tangent: base-point mismatch");
    if (v.dir.rows() != d_ || v.dir.cols() != d_)
      throw DimensionError("SPD tangent: dimension mismatch");
    require_symmetric<Scalar>(v.dir, "SPD tangent");
  }

  Tangent make_tangent(const Point& p, const Payload& d) const {
    require_symmetric<Scalar>(d, "SPD tangent");
    Tangent v{p, symmetrize(d)};
    check_tangent(p, v);
    return v;
  }

  Tangent zero_tangent(const Point& p) const {
    check_point(p);
    return Tangent{p, Payload::Zero(d_, d_)};
  }

  Point exp_map(const Point& p, const Tangent& v) const {
    check_tangent(p, v);
    const Mat<Scalar> rp = spd_sqrt(p);
    const Mat<Scalar> rpi = spd_inv_sqrt(p);
    return symmetrize<Scalar>(rp * sym_exp<Scalar>(symmetrize<Scalar>(rpi * v.dir * rpi)) * rp);
  }

  Tangent log_map(const Point& p, const Point& q) const {
    check_point(p);
    check_point(q);
    const Mat<Scalar> rp = spd_sqrt(p);
    const Mat<Scalar> rpi = spd_inv_sqrt(p);
    const Mat<Scalar> payload =
        symmetrize<Scalar>(rp * spd_log<Scalar>(symmetrize<Scalar>(rpi * q * rpi)) * rp);
    return Tangent{p, payload};
  }

  Scalar distance(const Point& p, const Point& q) const {
    check_point(p);
    check_point(q);
    const Mat<Scalar> rpi = spd_inv_sqrt(p);
    auto eig = sym_eigen<Scalar>(symmetrize<Scalar>(rpi * q * rpi));
    require_positive_spectrum(eig, "SPD distance");
    Scalar acc = 0;
    for (Eigen::Index i = 0; i < eig.lambda.size(); ++i) {
      const Scalar l = std::log(eig.lambda[i]);
      acc += l * l;
    }
    return std::sqrt(acc);
  }

  Scalar inner(const Point& p, const Tangent& u, const Tangent& v) const {
    check_tangent(p, u);
    check_tangent(p, v);
    Eigen::LLT<Mat<Scalar>> llt(symmetrize(p));
    if (llt.info() != Eigen::Success)
      throw NotPositiveDefiniteError("SPD inner: base is not positive definite");
    const Mat<Scalar> a = llt.solve(u.dir);
    const Mat<Scalar> b = llt.solve(v.dir);
    return (a.array() * b.transpose().array()).sum();
  }

  Scalar norm(const Point& p, const Tangent& v) const { return std::sqrt(inner(p, v, v)); }

  // E V E^T with E = (T S^-1)^{1/2}, evaluated through symmetric roots.
  Tangent parallel_transport(const Point& p, const Point& q, const Tangent& v) const {
    check_tangent(p, v);
    check_point(q);
    const Mat<Scalar> rp = spd_sqrt(p);
    const Mat<Scalar> rpi = spd_inv_sqrt(p);
    const Mat<Scalar> m = symmetrize<Scalar>(rpi * q * rpi);
    const Mat<Scalar> e = rp * spd_sqrt(m) * rpi;
    return Tangent{q, symmetrize<Scalar>(e * v.dir * e.transpose())};
  }

  Tangent axpy(Scalar a, const Tangent& x, const Tangent& y) const {
    if (!same_point(x.base, y.base)) throw BasePointError("axpy: base-point mismatch");
    return Tangent{x.base, symmetrize<Scalar>(a * x.dir + y.dir)};
  }

  Tangent scale(Scalar a, const Tangent& x) const {
    return Tangent{x.base, Payload(a * x.dir)};
  }

  Tangent random_tangent(const Point& p, Rng& rng) const {
    check_point(p);
    Mat<Scalar> d(d_, d_);
    for (Eigen::Index j = 0; j < d_; ++j)
      for (Eigen::Index i = 0; i < d_; ++i) d(i, j) = Scalar(rng.normal());
    return Tangent{p, symmetrize<Scalar>(d)};
  }

  Eigen::Index tangent_coord_dim() const { return sym_coord_dim(d_); }

  // Coordinates are isometric for the Frobenius inner product (not the
  // affine-invariant metric); consumers needing the Riemannian metric build
  // its Gram matrix from basis vectors.
  Vec<Scalar> tangent_coords(const Point&, const Tangent& v) const {
    return sym_to_coords<Scalar>(v.dir);
  }

  Tangent tangent_from_coords(const Point& p, const Vec<Scalar>& c) const {
    return make_tangent(p, sym_from_coords<Scalar>(c, d_));
  }

 private:
  Eigen::Index d_;
};

// Product of two manifolds with the product metric.
template <typename M1, typename M2>
class ProductManifold {
 public:
  using Scalar = typename M1::Scalar;
  static_assert(std::is_same_v<Scalar, typename M2::Scalar>,
                "product components must share a scalar type");
  using Point = std::pair<typename M1::Point, typename M2::Point>;
  struct Tangent {
    Point base;
    std::pair<typename M1::Tangent, typename M2::Tangent> parts;
  };

  ProductManifold(M1 m1, M2 m2) : m1_(std::move(m1)), m2_(std::move(m2)) {}

  const M1& first() const { return m1_; }
  const M2& second() const { return m2_; }

  static bool same_point(const Point& a, const Point& b) {
    return M1::same_point(a.first, b.first) && M2::same_point(a.second, b.second);
  }

  void check_point(const Point& p) const {
    m1_.check_point(p.first);
    m2_.check_point(p.second);
  }

  void check_tangent(const Point& p, const Tangent& v) const {
    if (!same_point(v.base, p)) throw BasePointError("product tangent: base-point mismatch");
    m1_.check_tangent(p.first, v.parts.first);
    m2_.check_tangent(p.second, v.parts.second);
  }

  Tangent make_tangent(const Point& p, typename M1::Tangent a, typename M2::Tangent b) const {
    Tangent v{p, {std::move(a), std::move(b)}};
    check_tangent(p, v);
    return v;
  }

  Tangent zero_tangent(const Point& p) const {
    return Tangent{p, {m1_.zero_tangent(p.first), m2_.zero_tangent(p.second)}};
  }

  Point exp_map(const Point& p, const Tangent& v) const {
    check_tangent(p, v);
    return Point{m1_.exp_map(p.first, v.parts.first), m2_.exp_map(p.second, v.parts.second)};
  }

  Tangent log_map(const Point& p, const Point& q) const {
    return Tangent{p, {m1_.log_map(p.first, q.first), m2_.log_map(p.second, q.second)}};
  }

  Scalar distance(const Point& p, const Point& q) const {
    const Scalar d1 = m1_.distance(p.first, q.first);
    const Scalar d2 = m2_.distance(p.second, q.second);
    return std::sqrt(d1 * d1 + d2 * d2);
  }

  Scalar inner(const Point& p, const Tangent& u, const Tangent& v) const {
    return m1_.inner(p.first, u.parts.first, v.parts.first) +
           m2_.inner(p.second, u.parts.second, v.parts.second);
  }

  Scalar norm(const Point& p, const Tangent& v) const { return std::sqrt(inner(p, v, v)); }

  Tangent parallel_transport(const Point& p, const Point& q, const Tangent& v) const {
    return Tangent{q,
                   {m1_.parallel_transport(p.first, q.first, v.parts.first),
                    m2_.parallel_transport(p.second, q.second, v.parts.second)}};
  }

  Tangent axpy(Scalar a, const Tangent& x, const Tangent& y) const {
    if (!same_point(x.base, y.base)) throw BasePointError("axpy: base-point mismatch");
    return Tangent{x.base,
                   {m1_.axpy(a, x.parts.first, y.parts.first),
                    m2_.axpy(a, x.parts.second, y.parts.second)}};
  }

  Tangent scale(Scalar a, const Tangent& x) const {
    return Tangent{x.base, {m1_.scale(a, x.parts.first), m2_.scale(a, x.parts.second)}};
  }

  Tangent random_tangent(const Point& p, Rng& rng) const {
    auto a = m1_.random_tangent(p.first, rng);
    auto b = m2_.random_tangent(p.second, rng);
    return Tangent{p, {std::move(a), std::move(b)}};
  }

  Eigen::Index tangent_coord_dim() const {
    return m1_.tangent_coord_dim() + m2_.tangent_coord_dim();
  }

  Vec<Scalar> tangent_coords(const Point& p, const Tangent& v) const {
    Vec<Scalar> c(tangent_coord_dim());
    c.head(m1_.tangent_coord_dim()) = m1_.tangent_coords(p.first, v.parts.first);
    c.tail(m2_.tangent_coord_dim()) = m2_.tangent_coords(p.second, v.parts.second);
    return c;
  }

  Tangent tangent_from_coords(const Point& p, const Vec<Scalar>& c) const {
    if (c.size() != tangent_coord_dim())
      throw DimensionError("product tangent_from_coords: coordinate length mismatch");
    return Tangent{p,
                   {m1_.tangent_from_coords(p.first, c.head(m1_.tangent_coord_dim())),
                    m2_.tangent_from_coords(p.second, c.tail(m2_.tangent_coord_dim()))}};
  }

 private:
  M1 m1_;
  M2 m2_;
};

// Probability simplex as a convex constraint set in R^n. It has no smooth
// geometry here; iterates combine Euclidean steps with projection, so the
// Riemannian operations are deliberately unsupported.
class SimplexSet {
 public:
  explicit SimplexSet(Eigen::Index n) : n_(n) {
    if (n <= 0) throw ConfigError("SimplexSet: dimension must be positive");
  }

  Eigen::Index dim() const { return n_; }

  bool contains(const Vecd& v, double tol = 1e-12) const {
    if (v.size() != n_ || !v.allFinite()) return false;
    if ((v.array() < -tol).any()) return false;
    return std::abs(v.sum() - 1.0) <= tol;
  }

  [[noreturn]] void exp_map() const { unsupported("exp_map"); }
  [[noreturn]] void log_map() const { unsupported("log_map"); }
  [[noreturn]] void parallel_transport() const { unsupported("parallel_transport"); }
  [[noreturn]] void distance() const { unsupported("distance"); }
  [[noreturn]] void inner() const { unsupported("inner"); }

 private:
  [[noreturn]] static void unsupported(const char* op) {
    throw UnsupportedOperation(std::string("SimplexSet: ") + op +
                               " is undefined for a projection-based constraint set");
  }

  Eigen::Index n_;
};

// Central finite difference of a scalar field along the geodesic through p
// with velocity v.
template <typename Manifold, typename Fn>
typename Manifold::Scalar fd_directional_derivative(const Manifold& man, Fn&& f,
                                                    const typename Manifold::Point& p,
                                                    const typename Manifold::Tangent& v,
                                                    typename Manifold::Scalar h = 1e-5) {
  using Scalar = typename Manifold::Scalar;
  if (!(h > 0)) throw ConfigError("fd_directional_derivative: h must be positive");
  const auto plus = man.exp_map(p, man.scale(h, v));
  const auto minus = man.exp_map(p, man.scale(-h, v));
  return (f(plus) - f(minus)) / (Scalar(2) * h);
}

// Second central difference of a scalar field along the geodesic through p.
template <typename Manifold, typename Fn>
typename Manifold::Scalar fd_second_derivative(const Manifold& man, Fn&& f,
                                               const typename Manifold::Point& p,
                                               const typename Manifold::Tangent& v,
                                               typename Manifold::Scalar h = 1e-4) {
  using Scalar = typename Manifold::Scalar;
  if (!(h > 0)) throw ConfigError("fd_second_derivative: h must be positive");
  const auto plus = man.exp_map(p, man.scale(h, v));
  const auto minus = man.exp_map(p, man.scale(-h, v));
  return (f(plus) - Scalar(2) * f(p) + f(minus)) / (h * h);
}

}  // namespace riebo
