#pragma once

// Differential calculus on the SPD cone for the two concrete losses used by
// the applications: half squared geodesic distance to a reference matrix
// ("Karcher term") and the Gaussian negative log-likelihood. Includes the
// generic Euclidean-to-Riemannian gradient/Hessian conversions for the
// affine-invariant metric.

#include <Eigen/Dense>

#include <cmath>
#include <vector>

#include "riebo/common.hpp"
#include "riebo/manifold.hpp"
#include "riebo/sym_matrix.hpp"

namespace riebo {

// Riemannian gradient S G S of a function with Euclidean gradient G.
template <typename Scalar>
typename SpdManifold<Scalar>::Tangent egrad_to_rgrad(const Mat<Scalar>& S,
                                                     const Mat<Scalar>& G) {
  if (G.rows() != S.rows() || G.cols() != S.cols())
    throw DimensionError("egrad_to_rgrad: shape mismatch");
  require_symmetric<Scalar>(G, "egrad_to_rgrad gradient");
  return {S, symmetrize<Scalar>(S * G * S)};
}

// Riemannian Hessian action S He[V] S + sym(S G V) from Euclidean gradient G
// and Euclidean Hessian action He[V].
template <typename Scalar>
typename SpdManifold<Scalar>::Tangent ehess_to_rhess(
    const Mat<Scalar>& S, const Mat<Scalar>& egrad, const Mat<Scalar>& ehess_v,
    const typename SpdManifold<Scalar>::Tangent& V) {
  if (egrad.rows() != S.rows() || ehess_v.rows() != S.rows() || V.dir.rows() != S.rows())
    throw DimensionError("ehess_to_rhess: shape mismatch");
  if (!SpdManifold<Scalar>::same_point(V.base, S))
    throw BasePointError("ehess_to_rhess: tangent base-point mismatch");
  const Mat<Scalar> curv = S * egrad * V.dir;
  const Mat<Scalar> out =
      S * ehess_v * S + Scalar(0.5) * (curv + curv.transpose());
  return {S, symmetrize<Scalar>(out)};
}

// --- half squared geodesic distance to a fixed SPD matrix A ---

template <typename Scalar>
Scalar karcher_loss(const Mat<Scalar>& S, const Mat<Scalar>& A) {
  const Mat<Scalar> rai = spd_inv_sqrt(A);
  auto eig = sym_eigen<Scalar>(symmetrize<Scalar>(rai * S * rai));
  require_positive_spectrum(eig, "karcher_loss");
  Scalar acc = 0;
  for (Eigen::Index i = 0; i < eig.lambda.size(); ++i) {
    const Scalar l = std::log(eig.lambda[i]);
    acc += l * l;
  }
  return Scalar(0.5) * acc;
}

// Euclidean gradient S^{-1/2} log(S^{1/2} A^{-1} S^{1/2}) S^{-1/2}.
template <typename Scalar>
Mat<Scalar> karcher_egrad(const Mat<Scalar>& S, const Mat<Scalar>& A) {
  const Mat<Scalar> rs = spd_sqrt(S);
  const Mat<Scalar> rsi = spd_inv_sqrt(S);
  const Mat<Scalar> ai = spd_inv(A);
  const Mat<Scalar> inner_log = spd_log<Scalar>(symmetrize<Scalar>(rs * ai * rs));
  return symmetrize<Scalar>(rsi * inner_log * rsi);
}

// Riemannian gradient of the loss; equals -log_map(S, A).
template <typename Scalar>
typename SpdManifold<Scalar>::Tangent karcher_rgrad(const Mat<Scalar>& S,
                                                    const Mat<Scalar>& A) {
  return egrad_to_rgrad<Scalar>(S, karcher_egrad(S, A));
}

enum class KarcherHessMethod { daleckii_krein, entrywise };

// Riemannian Hessian action of the loss on tangent V at S. The Euclidean
// Hessian is   He[V] = -S^-1 V A^{-1/2} log(Y) A^{1/2} S^-1 + L,
// Y = A^{-1/2} S A^{-1/2}. The default computes the correction term L in one
// Frechet-derivative application,
//   L = A^{-1/2} (D log(Y)[C])^T A^{-1/2},  C = A^{-1/2} V S^-1 A^{1/2};
// the entrywise method assembles L_ij = tr(C * D log(Y)[A^{-1/2} e_i e_j^T
// A^{-1/2}]) one basis direction at a time and exists as a cross-check for
// small d.
template <typename Scalar>
typename SpdManifold<Scalar>::Tangent karcher_rhess_apply(
    const Mat<Scalar>& S, const Mat<Scalar>& A,
    const typename SpdManifold<Scalar>::Tangent& V,
    KarcherHessMethod method = KarcherHessMethod::daleckii_krein) {
  if (!SpdManifold<Scalar>::same_point(V.base, S))
    throw BasePointError("karcher_rhess_apply: tangent base-point mismatch");
  const Eigen::Index d = S.rows();
  const Mat<Scalar> ra = spd_sqrt(A);
  const Mat<Scalar> rai = spd_inv_sqrt(A);
  const Mat<Scalar> Y = symmetrize<Scalar>(rai * S * rai);
  const Mat<Scalar> logY = spd_log(Y);
  const Mat<Scalar> Si = spd_inv(S);

  const Mat<Scalar> log_ainv_s = rai * logY * ra;  // log(A^-1 S)
  const Mat<Scalar> first = -Si * V.dir * log_ainv_s * Si;

  Mat<Scalar> L(d, d);
  const Mat<Scalar> C = rai * V.dir * Si * ra;
  if (method == KarcherHessMethod::daleckii_krein) {
    L = rai * frechet_log<Scalar>(Y, C).transpose() * rai;
  } else {
    for (Eigen::Index i = 0; i < d; ++i) {
      for (Eigen::Index j = 0; j < d; ++j) {
        Mat<Scalar> Eij = Mat<Scalar>::Zero(d, d);
        Eij(i, j) = Scalar(1);
        const Mat<Scalar> dlog = frechet_log<Scalar>(Y, Mat<Scalar>(rai * Eij * rai));
        L(i, j) = (C.transpose().array() * dlog.array()).sum();
      }
    }
  }

  const Mat<Scalar> ehess_v = symmetrize<Scalar>(first + L);
  const Mat<Scalar> egrad = symmetrize<Scalar>(log_ainv_s * Si);
  return ehess_to_rhess<Scalar>(S, egrad, ehess_v, V);
}

// One weighted datum of a Karcher-mean style objective sum_i w_i * l(S; A_i).
template <typename Scalar>
struct KarcherTerm {
  Mat<Scalar> data_matrix;
  Scalar weight = 1;

  void validate() const {
    if (!(weight >= 0)) throw ConfigError("KarcherTerm: weight must be >= 0");
    require_spd(data_matrix, "KarcherTerm data matrix");
  }
};

template <typename Scalar>
Scalar karcher_sum_loss(const Mat<Scalar>& S, const std::vector<KarcherTerm<Scalar>>& terms) {
  Scalar acc = 0;
  for (const auto& t : terms) acc += t.weight * karcher_loss(S, t.data_matrix);
  return acc;
}

template <typename Scalar>
typename SpdManifold<Scalar>::Tangent karcher_sum_rgrad(
    const Mat<Scalar>& S, const std::vector<KarcherTerm<Scalar>>& terms) {
  Mat<Scalar> acc = Mat<Scalar>::Zero(S.rows(), S.cols());
  for (const auto& t : terms) acc += t.weight * karcher_rgrad(S, t.data_matrix).dir;
  return {S, symmetrize<Scalar>(acc)};
}

template <typename Scalar>
typename SpdManifold<Scalar>::Tangent karcher_sum_rhess_apply(
    const Mat<Scalar>& S, const std::vector<KarcherTerm<Scalar>>& terms,
    const typename SpdManifold<Scalar>::Tangent& V,
    KarcherHessMethod method = KarcherHessMethod::daleckii_krein) {
  Mat<Scalar> acc = Mat<Scalar>::Zero(S.rows(), S.cols());
  for (const auto& t : terms)
    acc += t.weight * karcher_rhess_apply(S, t.data_matrix, V, method).dir;
  return {S, symmetrize<Scalar>(acc)};
}

// --- Gaussian negative log-likelihood terms ---

template <typename Scalar>
Scalar mle_loss(const Mat<Scalar>& S, const Vec<Scalar>& x) {
  if (x.size() != S.rows()) throw DimensionError("mle_loss: data dimension mismatch");
  require_spd(S, "mle_loss");
  Eigen::LLT<Mat<Scalar>> llt(symmetrize(S));
  Scalar logdet = 0;
  for (Eigen::Index i = 0; i < S.rows(); ++i)
    logdet += Scalar(2) * std::log(llt.matrixL()(i, i));
  return Scalar(0.5) * logdet + Scalar(0.5) * x.dot(llt.solve(x));
}

template <typename Scalar>
Mat<Scalar> mle_egrad(const Mat<Scalar>& S, const Vec<Scalar>& x) {
  if (x.size() != S.rows()) throw DimensionError("mle_egrad: data dimension mismatch");
  require_spd(S, "mle_egrad");
  Eigen::LLT<Mat<Scalar>> llt(symmetrize(S));
  const Mat<Scalar> Si = llt.solve(Mat<Scalar>::Identity(S.rows(), S.cols()));
  const Vec<Scalar> w = llt.solve(x);
  return symmetrize<Scalar>(Scalar(0.5) * Si - Scalar(0.5) * w * w.transpose());
}

template <typename Scalar>
Mat<Scalar> mle_ehess_apply(const Mat<Scalar>& S, const Vec<Scalar>& x,
                            const Mat<Scalar>& V) {
  if (x.size() != S.rows() || V.rows() != S.rows())
    throw DimensionError("mle_ehess_apply: shape mismatch");
  require_spd(S, "mle_ehess_apply");
  Eigen::LLT<Mat<Scalar>> llt(symmetrize(S));
  const Mat<Scalar> SiV = llt.solve(V);
  const Vec<Scalar> w = llt.solve(x);                    // S^-1 x
  const Mat<Scalar> SiVSi = llt.solve(SiV.transpose()).transpose();  // S^-1 V S^-1
  const Mat<Scalar> cross = SiVSi * (x * w.transpose()); // S^-1 V S^-1 x x^T S^-1
  return symmetrize<Scalar>(Scalar(-0.5) * SiVSi +
                            Scalar(0.5) * (cross + cross.transpose()));
}

}  // namespace riebo
