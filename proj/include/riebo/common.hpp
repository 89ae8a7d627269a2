#pragma once

// Shared basics: Eigen aliases, error types, deterministic random streams,
// finite/symmetry checks, and the smoothness-constant bundle used by
// step-size defaults and bias bounds.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>

namespace riebo {

template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using Matd = Mat<double>;
using Vecd = Vec<double>;

// Contract violations: wrong shapes, mismatched tangent base points, bad config.
class DimensionError : public std::invalid_argument {
 public:
  explicit DimensionError(const std::string& what) : std::invalid_argument(what) {}
};

class BasePointError : public std::invalid_argument {
 public:
  explicit BasePointError(const std::string& what) : std::invalid_argument(what) {}
};

class NotSymmetricError : public std::invalid_argument {
 public:
  explicit NotSymmetricError(const std::string& what) : std::invalid_argument(what) {}
};

// Input expected positive definite has smallest eigenvalue <= 0.
class NotPositiveDefiniteError : public std::domain_error {
 public:
  explicit NotPositiveDefiniteError(const std::string& what) : std::domain_error(what) {}
};

// Operation not defined for the geometry (e.g. log_map on the simplex set).
class UnsupportedOperation : public std::logic_error {
 public:
  explicit UnsupportedOperation(const std::string& what) : std::logic_error(what) {}
};

// NaN/Inf encountered in inputs or produced by an iteration.
class NonFiniteError : public std::runtime_error {
 public:
  explicit NonFiniteError(const std::string& what) : std::runtime_error(what) {}
};

class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

template <typename Derived>
bool all_finite(const Eigen::MatrixBase<Derived>& m) {
  return m.allFinite();
}

template <typename Derived>
void require_finite(const Eigen::MatrixBase<Derived>& m, const char* what) {
  if (!m.allFinite()) throw NonFiniteError(std::string("non-finite values in ") + what);
}

template <typename Scalar>
Mat<Scalar> symmetrize(const Mat<Scalar>& m) {
  return ((m + m.transpose()) * Scalar(0.5)).eval();
}

// Relative asymmetry ||M - M^T||_max / max(1, ||M||_max).
template <typename Scalar>
Scalar asymmetry(const Mat<Scalar>& m) {
  if (m.rows() != m.cols()) return std::numeric_limits<Scalar>::infinity();
  Scalar scale = std::max(Scalar(1), m.template lpNorm<Eigen::Infinity>());
  return Mat<Scalar>(m - m.transpose()).template lpNorm<Eigen::Infinity>() / scale;
}

template <typename Scalar>
void require_symmetric(const Mat<Scalar>& m, const char* what, Scalar tol = Scalar(1e-9)) {
  if (m.rows() != m.cols())
    throw DimensionError(std::string(what) + ": matrix is not square");
  require_finite(m, what);
  if (asymmetry(m) > tol)
    throw NotSymmetricError(std::string(what) + ": input is not symmetric within tolerance");
}

// One-shot mix of a seed with a tag; used to derive independent seeds.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t tag);

inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ull);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t tag) {
  std::uint64_t x = seed ^ (0x9e3779b97f4a7c15ull * (tag + 1));
  return splitmix64(x);
}

// Deterministic random stream. Gaussian draws use an explicit Box-Muller
// transform (not std::normal_distribution) so the byte-level output of a
// seeded run is pinned by this code alone.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  std::uint64_t next_u64() { return eng_(); }

  // Uniform double in [0, 1) with 53 random bits.
  double uniform01() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

  // Standard normal via Box-Muller; two uniforms per draw, no cached state.
  double normal() {
    double u1 = 1.0 - uniform01();  // (0, 1], keeps log finite
    double u2 = uniform01();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  // Exact uniform draw from {0, ..., n-1} via rejection.
  std::uint64_t uniform_below(std::uint64_t n) {
    if (n == 0) throw ConfigError("uniform_below: n must be positive");
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t r;
    do {
      r = eng_();
    } while (r >= limit);
    return r % n;
  }

  // Child stream seeded from this stream; advances the parent by one draw.
  Rng fork() {
    std::uint64_t s = eng_();
    return Rng(splitmix64(s));
  }

  Vecd normal_vec(Eigen::Index n) {
    Vecd v(n);
    for (Eigen::Index i = 0; i < n; ++i) v[i] = normal();
    return v;
  }

  Matd normal_mat(Eigen::Index r, Eigen::Index c) {
    Matd m(r, c);
    for (Eigen::Index j = 0; j < c; ++j)
      for (Eigen::Index i = 0; i < r; ++i) m(i, j) = normal();
    return m;
  }

 private:
  std::mt19937_64 eng_;
};

// Stream derived from a seed and up to three tags; used to give solver
// sub-tasks (inner loop, estimator, data generation) isolated randomness.
inline Rng derive_rng(std::uint64_t seed, std::uint64_t a = 0, std::uint64_t b = 0,
                      std::uint64_t c = 0) {
  std::uint64_t x = seed;
  splitmix64(x);
  x ^= a;
  splitmix64(x);
  x ^= b;
  splitmix64(x);
  x ^= c;
  std::uint64_t s = splitmix64(x);
  return Rng(s);
}

// Smoothness constants of a bilevel instance: mu-strong geodesic convexity of
// the lower objective, Lipschitz constants of f and of the first/second
// derivatives of g, and a variance bound for stochastic samplers.
struct SmoothnessMeta {
  double mu = 1.0;
  double l_f0 = 0.0;
  double l_f1 = 1.0;
  double l_g1 = 1.0;
  double l_g2 = 0.0;
  double sigma2 = 0.0;

  double kappa() const { return l_g1 / mu; }

  void validate() const {
    if (!(mu > 0)) throw ConfigError("SmoothnessMeta: mu must be > 0");
    if (l_f0 < 0 || l_f1 < 0 || l_g1 < 0 || l_g2 < 0 || sigma2 < 0)
      throw ConfigError("SmoothnessMeta: constants must be >= 0");
    if (!(kappa() >= 1.0)) throw ConfigError("SmoothnessMeta: kappa = l_g1/mu must be >= 1");
    if (!std::isfinite(mu) || !std::isfinite(l_f0) || !std::isfinite(l_f1) ||
        !std::isfinite(l_g1) || !std::isfinite(l_g2) || !std::isfinite(sigma2))
      throw ConfigError("SmoothnessMeta: constants must be finite");
  }

  // Smoothness estimate for the composed objective x -> f(x, y*(x)); used by
  // the default upper step size alpha = 1/(8 * phi_smoothness()).
  double phi_smoothness() const {
    const double k = kappa();
    const double root = std::sqrt(1.0 + k * k);
    return l_f1 * root + l_g2 * l_f0 / mu +
           l_g1 * (l_f0 * l_g2 / (mu * mu) * root + l_f1 / mu);
  }
};

}  // namespace riebo
