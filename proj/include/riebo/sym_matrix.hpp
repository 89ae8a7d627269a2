#pragma once

// Dense symmetric/SPD matrix functions: spectral decomposition, sqrt/log/exp,
// and the Frechet derivative of the matrix logarithm (Daleckii-Krein kernel,
// cross-checked by a block-matrix construction with an independent general
// matrix logarithm).

#include <Eigen/Dense>

#include <cmath>
#include <string>

#include "riebo/common.hpp"

namespace riebo {

template <typename Scalar>
struct SymEigen {
  Mat<Scalar> Q;        // orthonormal eigenvectors, columnwise
  Vec<Scalar> lambda;   // ascending eigenvalues
};

template <typename Scalar>
SymEigen<Scalar> sym_eigen(const Mat<Scalar>& S) {
  require_symmetric<Scalar>(S, "sym_eigen");
  Eigen::SelfAdjointEigenSolver<Mat<Scalar>> es(symmetrize(S));
  if (es.info() != Eigen::Success)
    throw NonFiniteError("sym_eigen: eigendecomposition failed");
  return {es.eigenvectors(), es.eigenvalues()};
}

template <typename Scalar>
bool is_spd(const Mat<Scalar>& S, Scalar sym_tol = Scalar(1e-9)) {
  if (S.rows() != S.cols() || !S.allFinite()) return false;
  if (asymmetry(S) > sym_tol) return false;
  Eigen::LLT<Mat<Scalar>> llt(symmetrize(S));
  return llt.info() == Eigen::Success;
}

template <typename Scalar>
void require_spd(const Mat<Scalar>& S, const char* what) {
  require_symmetric<Scalar>(S, what);
  Eigen::LLT<Mat<Scalar>> llt(symmetrize(S));
  if (llt.info() != Eigen::Success)
    throw NotPositiveDefiniteError(std::string(what) + ": matrix is not positive definite");
}

// Q f(Lambda) Q^T for an eigendecomposition of a symmetric matrix.
template <typename Scalar, typename Fn>
Mat<Scalar> apply_spectral(const SymEigen<Scalar>& eig, Fn&& fn) {
  Vec<Scalar> fl(eig.lambda.size());
  for (Eigen::Index i = 0; i < fl.size(); ++i) fl[i] = fn(eig.lambda[i]);
  return symmetrize<Scalar>(eig.Q * fl.asDiagonal() * eig.Q.transpose());
}

template <typename Scalar>
void require_positive_spectrum(const SymEigen<Scalar>& eig, const char* what) {
  if (eig.lambda.size() == 0 || eig.lambda.minCoeff() <= Scalar(0))
    throw NotPositiveDefiniteError(std::string(what) + ": matrix is not positive definite");
}

template <typename Scalar>
Mat<Scalar> spd_sqrt(const Mat<Scalar>& S) {
  auto eig = sym_eigen(S);
  require_positive_spectrum(eig, "spd_sqrt");
  return apply_spectral(eig, [](Scalar l) { return std::sqrt(l); });
}

template <typename Scalar>
Mat<Scalar> spd_inv_sqrt(const Mat<Scalar>& S) {
  auto eig = sym_eigen(S);
  require_positive_spectrum(eig, "spd_inv_sqrt");
  return apply_spectral(eig, [](Scalar l) { return Scalar(1) / std::sqrt(l); });
}

template <typename Scalar>
Mat<Scalar> spd_log(const Mat<Scalar>& S) {
  auto eig = sym_eigen(S);
  require_positive_spectrum(eig, "spd_log");
  return apply_spectral(eig, [](Scalar l) { return std::log(l); });
}

template <typename Scalar>
Mat<Scalar> sym_exp(const Mat<Scalar>& V) {
  auto eig = sym_eigen(V);
  return apply_spectral(eig, [](Scalar l) { return std::exp(l); });
}

template <typename Scalar>
Mat<Scalar> spd_inv(const Mat<Scalar>& S) {
  require_spd(S, "spd_inv");
  return symmetrize<Scalar>(Eigen::LLT<Mat<Scalar>>(symmetrize(S)).solve(
      Mat<Scalar>::Identity(S.rows(), S.cols())));
}

// Divided-difference kernel of log on the spectrum; near-degenerate pairs use
// the midpoint limit 2/(li+lj) to avoid cancellation.
template <typename Scalar>
Mat<Scalar> log_dd_kernel(const Vec<Scalar>& lambda) {
  const Eigen::Index d = lambda.size();
  Mat<Scalar> K(d, d);
  for (Eigen::Index i = 0; i < d; ++i) {
    for (Eigen::Index j = 0; j < d; ++j) {
      const Scalar li = lambda[i], lj = lambda[j];
      if (std::abs(li - lj) < Scalar(1e-8) * std::max(li, lj)) {
        K(i, j) = Scalar(2) / (li + lj);
      } else {
        K(i, j) = (std::log(li) - std::log(lj)) / (li - lj);
      }
    }
  }
  return K;
}

enum class FrechetMethod { daleckii_krein, blockwise };

namespace detail {

// log(I + X) by its power series; requires ||X|| well below 1.
template <typename Scalar>
Mat<Scalar> log_near_identity(const Mat<Scalar>& X) {
  Mat<Scalar> term = X;
  Mat<Scalar> acc = X;
  const Scalar floor_norm =
      std::numeric_limits<Scalar>::epsilon() * std::max(Scalar(1), X.norm());
  for (int k = 2; k <= 128; ++k) {
    term = (term * X).eval();
    Mat<Scalar> contrib = term / Scalar(k);
    if (k % 2 == 0) contrib = -contrib;
    acc += contrib;
    if (term.norm() / Scalar(k) < floor_norm) break;
  }
  return acc;
}

// Denman-Beavers iteration: principal square root of a matrix with spectrum
// in the open right half plane.
template <typename Scalar>
Mat<Scalar> general_sqrt(const Mat<Scalar>& A) {
  Mat<Scalar> Y = A;
  Mat<Scalar> Z = Mat<Scalar>::Identity(A.rows(), A.cols());
  for (int k = 0; k < 100; ++k) {
    Mat<Scalar> Yn = Scalar(0.5) * (Y + Z.inverse());
    Mat<Scalar> Zn = Scalar(0.5) * (Z + Y.inverse());
    const Scalar delta = (Yn - Y).norm();
    Y = Yn;
    Z = Zn;
    if (delta <= Scalar(1e3) * std::numeric_limits<Scalar>::epsilon() * Y.norm()) break;
  }
  return Y;
}

// Principal log of a general matrix with positive real spectrum, by inverse
// scaling-and-squaring with Denman-Beavers roots.
template <typename Scalar>
Mat<Scalar> general_log(Mat<Scalar> A) {
  const Eigen::Index d = A.rows();
  const Mat<Scalar> I = Mat<Scalar>::Identity(d, d);
  int squarings = 0;
  while ((A - I).norm() > Scalar(0.25) && squarings < 64) {
    A = general_sqrt(A);
    ++squarings;
  }
  return std::ldexp(Scalar(1), squarings) * log_near_identity<Scalar>(A - I);
}

}  // namespace detail

// Directional derivative D log(Y)[E] of the matrix logarithm at SPD Y.
// E need not be symmetric; for symmetric E the result is symmetric.
// The default evaluates the Daleckii-Krein kernel on the eigenbasis of Y;
// the blockwise method reads the top-right block of the logarithm of
// [[Y, E], [0, Y]] computed with an unrelated general-matrix algorithm,
// and exists to cross-validate the default.
template <typename Scalar>
Mat<Scalar> frechet_log(const Mat<Scalar>& Y, const Mat<Scalar>& E,
                        FrechetMethod method = FrechetMethod::daleckii_krein) {
  if (E.rows() != Y.rows() || E.cols() != Y.cols())
    throw DimensionError("frechet_log: direction shape mismatch");
  require_finite(E, "frechet_log direction");
  if (method == FrechetMethod::daleckii_krein) {
    auto eig = sym_eigen(Y);
    require_positive_spectrum(eig, "frechet_log");
    const Mat<Scalar> K = log_dd_kernel(eig.lambda);
    const Mat<Scalar> F = eig.Q.transpose() * E * eig.Q;
    return eig.Q * K.cwiseProduct(F) * eig.Q.transpose();
  }
  require_spd(Y, "frechet_log");
  const Eigen::Index d = Y.rows();
  Mat<Scalar> B = Mat<Scalar>::Zero(2 * d, 2 * d);
  B.topLeftCorner(d, d) = Y;
  B.bottomRightCorner(d, d) = Y;
  B.topRightCorner(d, d) = E;
  const Mat<Scalar> L = detail::general_log(B);
  return L.topRightCorner(d, d);
}

// Isometric coordinates for symmetric matrices: the Frobenius inner product
// equals the dot product of coordinate vectors.
inline Eigen::Index sym_coord_dim(Eigen::Index d) { return d * (d + 1) / 2; }

template <typename Scalar>
Vec<Scalar> sym_to_coords(const Mat<Scalar>& M) {
  const Eigen::Index d = M.rows();
  const Scalar r2 = std::sqrt(Scalar(2));
  Vec<Scalar> v(sym_coord_dim(d));
  Eigen::Index k = 0;
  for (Eigen::Index i = 0; i < d; ++i) {
    v[k++] = M(i, i);
    for (Eigen::Index j = i + 1; j < d; ++j) v[k++] = r2 * M(i, j);
  }
  return v;
}

template <typename Scalar>
Mat<Scalar> sym_from_coords(const Vec<Scalar>& v, Eigen::Index d) {
  if (v.size() != sym_coord_dim(d))
    throw DimensionError("sym_from_coords: coordinate length mismatch");
  const Scalar inv_r2 = Scalar(1) / std::sqrt(Scalar(2));
  Mat<Scalar> M(d, d);
  Eigen::Index k = 0;
  for (Eigen::Index i = 0; i < d; ++i) {
    M(i, i) = v[k++];
    for (Eigen::Index j = i + 1; j < d; ++j) {
      M(i, j) = inv_r2 * v[k];
      M(j, i) = M(i, j);
      ++k;
    }
  }
  return M;
}

}  // namespace riebo
