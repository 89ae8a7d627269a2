#include <gtest/gtest.h>

#include <cmath>
#include <utility>

#include "riebo/common.hpp"
#include "riebo/manifold.hpp"

namespace riebo {
namespace {

using Spd = SpdManifold<double>;
using Euc = EuclideanManifold<double>;

Matd fixture_s() {
  Matd s(3, 3);
  s << 2.0, 0.5, 0.25, 0.5, 1.5, 0.1, 0.25, 0.1, 1.0;
  return s;
}

Matd fixture_t() {
  Matd t(3, 3);
  t << 1.2, -0.3, 0.0, -0.3, 2.0, 0.4, 0.0, 0.4, 0.9;
  return t;
}

Matd fixture_v() {
  Matd v(3, 3);
  v << 0.3, -0.2, 0.1, -0.2, 0.0, 0.5, 0.1, 0.5, -0.4;
  return v;
}

Matd fixture_u() {
  Matd u(3, 3);
  u << 0.1, 0.3, -0.1, 0.3, -0.2, 0.0, -0.1, 0.0, 0.2;
  return u;
}

Matd random_spd(Rng& r, Eigen::Index d, double spread = 0.3) {
  const Matd z = r.normal_mat(d, d) * spread;
  return symmetrize<double>(Matd(z * z.transpose())) + Matd::Identity(d, d);
}

TEST(Euclidean, StraightLineGeodesics) {
  Euc man(2);
  Vecd p(2), d(2);
  p << 1.0, 2.0;
  d << 0.5, -1.0;
  const auto v = man.make_tangent(p, d);
  Vecd want(2);
  want << 1.5, 1.0;
  EXPECT_EQ(man.exp_map(p, v), want);
  EXPECT_EQ(man.exp_map(p, man.zero_tangent(p)), p);
  const auto back = man.log_map(p, want);
  EXPECT_EQ(back.dir, d);
  EXPECT_EQ(man.log_map(p, p).dir, Vecd::Zero(2));
  EXPECT_DOUBLE_EQ(man.distance(p, want), d.norm());
  EXPECT_DOUBLE_EQ(man.inner(p, v, v), d.squaredNorm());
}

TEST(Euclidean, TransportRebasesPayloadUnchanged) {
  Euc man(3);
  Rng r(1);
  const Vecd p = r.normal_vec(3);
  const Vecd q = r.normal_vec(3);
  const auto v = man.random_tangent(p, r);
  const auto moved = man.parallel_transport(p, q, v);
  EXPECT_EQ(moved.dir, v.dir);
  EXPECT_EQ(moved.base, q);
}

TEST(Euclidean, ErrorsOnMismatch) {
  Euc man(2);
  Vecd p(2), q3(3);
  p << 1.0, 2.0;
  q3 << 1.0, 2.0, 3.0;
  EXPECT_THROW(man.check_point(q3), DimensionError);
  Vecd other(2);
  other << 0.0, 0.0;
  const auto v = man.make_tangent(other, other);
  EXPECT_THROW(man.check_tangent(p, v), BasePointError);
  EXPECT_THROW(man.exp_map(p, v), BasePointError);
  Vecd bad(2);
  bad << 1.0, std::numeric_limits<double>::infinity();
  EXPECT_THROW(man.check_point(bad), NonFiniteError);
  EXPECT_THROW(Euc(0), ConfigError);
}

TEST(Spd, ExponentialAtIdentityIsMatrixExponential) {
  Spd man(2);
  const Matd eye = Matd::Identity(2, 2);
  Matd diag(2, 2);
  diag << std::log(2.0), 0.0, 0.0, std::log(3.0);
  const Matd got = man.exp_map(eye, man.make_tangent(eye, diag));
  Matd want(2, 2);
  want << 2.0, 0.0, 0.0, 3.0;
  EXPECT_LE((got - want).norm(), 1e-12);
}

TEST(Spd, DistanceAtIdentityIsLogSpectrumNorm) {
  Spd man(2);
  Matd q(2, 2);
  q << std::exp(2.0), 0.0, 0.0, 1.0;
  EXPECT_NEAR(man.distance(Matd::Identity(2, 2), q), 2.0, 1e-12);
  EXPECT_LE(man.distance(q, q), 1e-12);  // same-point distance is only zero up to roundoff
}

TEST(Spd, MetricAtIdentity) {
  Spd man(2);
  const Matd eye = Matd::Identity(2, 2);
  const auto v = man.make_tangent(eye, eye);
  EXPECT_DOUBLE_EQ(man.inner(eye, v, v), 2.0);
}

TEST(Spd, FrozenFixtureValues) {
  // Reference values from an independent high-precision implementation.
  Spd man(3);
  const Matd s = fixture_s();
  const Matd t = fixture_t();
  const auto v = man.make_tangent(s, fixture_v());
  const auto u = man.make_tangent(s, fixture_u());

  EXPECT_NEAR(man.inner(s, u, v), -0.1862780837926498, 1e-13);
  EXPECT_NEAR(man.norm(s, v), 0.8302932657220498, 1e-13);
  EXPECT_NEAR(man.distance(s, t), 0.9932383337371592, 1e-12);

  Matd exp_want(3, 3);
  exp_want << 2.35550329397874, 0.2866375412271718, 0.30103394602521794,
      0.2866375412271718, 1.6382276554489885, 0.518269151003915,
      0.30103394602521794, 0.518269151003915, 0.7449376836764484;
  EXPECT_LE((man.exp_map(s, v) - exp_want).norm(), 1e-11);

  Matd log_want(3, 3);
  log_want << -1.216439337955345, -0.90472900381513, -0.25834284095692767,
      -0.90472900381513, 0.1706379627021581, 0.2114064302896182,
      -0.25834284095692767, 0.2114064302896182, -0.15591965051111187;
  EXPECT_LE((man.log_map(s, t).dir - log_want).norm(), 1e-11);

  Matd moved_want(3, 3);
  moved_want << 0.26907113808819827, -0.30640227490757277, -0.04793339728160061,
      -0.30640227490757277, 0.3443615451583864, 0.5121804872280067,
      -0.04793339728160061, 0.5121804872280067, -0.25762208813061643;
  const auto moved = man.parallel_transport(s, t, v);
  EXPECT_LE((moved.dir - moved_want).norm(), 1e-11);
  EXPECT_TRUE(Spd::same_point(moved.base, t));
}

TEST(Spd, RoundTripSpeedAndIsometryOnRandomInputs) {
  Spd man(4);
  Rng r(7);
  for (int t = 0; t < 100; ++t) {
    const Matd p = random_spd(r, 4);
    auto v = man.random_tangent(p, r);
    const double n = man.norm(p, v);
    if (n > 1.0) v = man.scale(1.0 / n, v);  // round-trip contract is for small v
    const Matd q = man.exp_map(p, v);
    const auto back = man.log_map(p, q);
    EXPECT_LE((back.dir - v.dir).norm(), 1e-9 * (1.0 + v.dir.norm()));
    EXPECT_NEAR(man.distance(p, q), man.norm(p, v), 1e-9 * (1.0 + man.norm(p, v)));
    EXPECT_NEAR(man.norm(p, back), man.distance(p, q), 1e-9 * (1.0 + man.distance(p, q)));

    const Matd w = random_spd(r, 4);
    auto a = man.random_tangent(p, r);
    auto b = man.random_tangent(p, r);
    a = man.scale(1.0 / man.norm(p, a), a);
    b = man.scale(1.0 / man.norm(p, b), b);
    const auto ta = man.parallel_transport(p, w, a);
    const auto tb = man.parallel_transport(p, w, b);
    EXPECT_NEAR(man.inner(w, ta, tb), man.inner(p, a, b), 1e-10);
  }
}

TEST(Spd, TransportAtSamePointIsIdentity) {
  Spd man(3);
  Rng r(9);
  const Matd p = random_spd(r, 3);
  const auto v = man.random_tangent(p, r);
  const auto moved = man.parallel_transport(p, p, v);
  EXPECT_LE((moved.dir - v.dir).norm(), 1e-12 * (1.0 + v.dir.norm()));
}

TEST(Spd, DistanceAxioms) {
  Spd man(3);
  Rng r(13);
  for (int t = 0; t < 50; ++t) {
    const Matd a = random_spd(r, 3);
    const Matd b = random_spd(r, 3);
    const Matd c = random_spd(r, 3);
    EXPECT_NEAR(man.distance(a, b), man.distance(b, a), 1e-11);
    EXPECT_GT(man.distance(a, b), 0.0);
    EXPECT_LE(man.distance(a, c), man.distance(a, b) + man.distance(b, c) + 1e-9);
    auto v = man.random_tangent(a, r);
    EXPECT_GT(man.inner(a, v, v), 0.0);
    EXPECT_DOUBLE_EQ(man.inner(a, man.zero_tangent(a), man.zero_tangent(a)), 0.0);
  }
}

TEST(Spd, DistanceIsCongruenceInvariant) {
  Spd man(3);
  Rng r(17);
  for (int t = 0; t < 20; ++t) {
    const Matd a = random_spd(r, 3);
    const Matd b = random_spd(r, 3);
    Matd m = r.normal_mat(3, 3);
    m += 3.0 * Matd::Identity(3, 3);  // keep it comfortably invertible
    const Matd am = symmetrize<double>(Matd(m * a * m.transpose()));
    const Matd bm = symmetrize<double>(Matd(m * b * m.transpose()));
    EXPECT_NEAR(man.distance(am, bm), man.distance(a, b),
                1e-9 * (1.0 + man.distance(a, b)));
  }
}

TEST(Spd, PointAndTangentValidation) {
  Spd man(2);
  Matd indef(2, 2);
  indef << 1.0, 0.0, 0.0, -1.0;
  EXPECT_THROW(man.check_point(indef), NotPositiveDefiniteError);
  Matd asym(2, 2);
  asym << 1.0, 0.5, 0.0, 1.0;
  EXPECT_THROW(man.check_point(asym), NotSymmetricError);
  EXPECT_THROW(man.check_point(Matd::Identity(3, 3)), DimensionError);

  const Matd eye = Matd::Identity(2, 2);
  const Matd other = 2.0 * eye;
  const auto v = man.make_tangent(other, eye);
  EXPECT_THROW(man.check_tangent(eye, v), BasePointError);
  EXPECT_THROW(man.exp_map(eye, v), BasePointError);
  const auto u = man.make_tangent(eye, eye);
  EXPECT_THROW(man.axpy(1.0, u, v), BasePointError);
  EXPECT_THROW(Spd(0), ConfigError);
}

TEST(Spd, TangentCoordinatesAreFrobeniusIsometric) {
  Spd man(3);
  Rng r(19);
  const Matd p = random_spd(r, 3);
  EXPECT_EQ(man.tangent_coord_dim(), 6);
  const auto v = man.random_tangent(p, r);
  const Vecd c = man.tangent_coords(p, v);
  EXPECT_NEAR(c.squaredNorm(), v.dir.squaredNorm(), 1e-12 * (1.0 + v.dir.squaredNorm()));
  const auto back = man.tangent_from_coords(p, c);
  EXPECT_LE((back.dir - v.dir).norm(), 1e-13);
}

TEST(Product, TwoLinesMakeAPlane) {
  using Prod = ProductManifold<Euc, Euc>;
  Prod man(Euc(1), Euc(1));
  Vecd a1(1), a2(1), b1(1), b2(1);
  a1 << 0.0;
  a2 << 0.0;
  b1 << 3.0;
  b2 << 4.0;
  const Prod::Point p{a1, a2};
  const Prod::Point q{b1, b2};
  EXPECT_DOUBLE_EQ(man.distance(p, q), 5.0);
  EXPECT_DOUBLE_EQ(man.distance(p, Prod::Point{a1, b2}), 4.0);
}

TEST(Product, ComponentwiseOperationsAndCoords) {
  using Prod = ProductManifold<Euc, Spd>;
  Prod man(Euc(2), Spd(2));
  Rng r(23);
  const Vecd x = r.normal_vec(2);
  const Matd s = random_spd(r, 2);
  const Prod::Point p{x, s};
  man.check_point(p);
  const auto v = man.random_tangent(p, r);
  const auto q = man.exp_map(p, v);
  const auto back = man.log_map(p, q);
  EXPECT_LE((back.parts.first.dir - v.parts.first.dir).norm(), 1e-9);
  EXPECT_LE((back.parts.second.dir - v.parts.second.dir).norm(), 1e-8);

  Euc ex(2);
  Spd sm(2);
  const double d1 = ex.distance(p.first, q.first);
  const double d2 = sm.distance(p.second, q.second);
  EXPECT_NEAR(man.distance(p, q), std::hypot(d1, d2), 1e-12);

  const auto u = man.random_tangent(p, r);
  EXPECT_NEAR(man.inner(p, u, v),
              ex.inner(p.first, u.parts.first, v.parts.first) +
                  sm.inner(p.second, u.parts.second, v.parts.second),
              1e-12);

  EXPECT_EQ(man.tangent_coord_dim(), 2 + 3);
  const Vecd c = man.tangent_coords(p, v);
  const auto v2 = man.tangent_from_coords(p, c);
  EXPECT_LE((v2.parts.first.dir - v.parts.first.dir).norm(), 1e-14);
  EXPECT_LE((v2.parts.second.dir - v.parts.second.dir).norm(), 1e-13);

  const auto w = man.parallel_transport(p, q, v);
  EXPECT_NEAR(man.inner(q, w, w), man.inner(p, v, v), 1e-10 * (1.0 + man.inner(p, v, v)));
}

TEST(SimplexSet, MembershipAndUnsupportedOps) {
  SimplexSet simplex(3);
  Vecd good(3);
  good << 0.2, 0.3, 0.5;
  EXPECT_TRUE(simplex.contains(good));
  Vecd vertex(3);
  vertex << 1.0, 0.0, 0.0;
  EXPECT_TRUE(simplex.contains(vertex));
  Vecd negative(3);
  negative << -0.1, 0.6, 0.5;
  EXPECT_FALSE(simplex.contains(negative));
  Vecd off_sum(3);
  off_sum << 0.2, 0.3, 0.6;
  EXPECT_FALSE(simplex.contains(off_sum));
  EXPECT_FALSE(simplex.contains(Vecd::Zero(2)));

  EXPECT_THROW(simplex.exp_map(), UnsupportedOperation);
  EXPECT_THROW(simplex.log_map(), UnsupportedOperation);
  EXPECT_THROW(simplex.parallel_transport(), UnsupportedOperation);
  EXPECT_THROW(simplex.distance(), UnsupportedOperation);
  EXPECT_THROW(simplex.inner(), UnsupportedOperation);
  EXPECT_THROW(SimplexSet(0), ConfigError);
}

TEST(FiniteDifferences, DirectionalDerivativeOnKnownFields) {
  Euc man(3);
  Rng r(29);
  const Vecd p = r.normal_vec(3);
  const auto v = man.random_tangent(p, r);
  const double constant =
      fd_directional_derivative(man, [](const Vecd&) { return 4.5; }, p, v);
  EXPECT_NEAR(constant, 0.0, 1e-10);
  const double quad = fd_directional_derivative(
      man, [](const Vecd& x) { return 0.5 * x.squaredNorm(); }, p, v);
  EXPECT_NEAR(quad, p.dot(v.dir), 1e-9 * (1.0 + std::abs(p.dot(v.dir))));
  const double second = fd_second_derivative(
      man, [](const Vecd& x) { return 0.5 * x.squaredNorm(); }, p, v);
  EXPECT_NEAR(second, v.dir.squaredNorm(), 1e-6 * (1.0 + v.dir.squaredNorm()));
  EXPECT_THROW(fd_directional_derivative(man, [](const Vecd&) { return 0.0; }, p, v, 0.0),
               ConfigError);
}

}  // namespace
}  // namespace riebo
