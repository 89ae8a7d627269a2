#pragma once

// Shipped problem instances:
//  - a Euclidean toy quadratic bilevel family with closed-form lower solution
//    and hypergradient, plus optional additive-noise samplers;
//  - robust weighting problems on the SPD cone (Karcher-mean and Gaussian
//    maximum-likelihood lower levels) with a simplex-constrained upper level;
//  - deterministic synthetic data generators.

#include <cmath>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "riebo/common.hpp"
#include "riebo/hypergrad.hpp"
#include "riebo/manifold.hpp"
#include "riebo/spd_calculus.hpp"
#include "riebo/sym_matrix.hpp"

namespace riebo {

// Random orthogonal matrix (QR of a Gaussian matrix, signs fixed).
inline Matd random_orthogonal(Eigen::Index d, Rng& rng) {
  const Matd z = rng.normal_mat(d, d);
  Eigen::HouseholderQR<Matd> qr(z);
  Matd q = qr.householderQ();
  const Matd r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (Eigen::Index i = 0; i < d; ++i)
    if (r(i, i) < 0) q.col(i) = -q.col(i);
  return q;
}

// SPD matrices Q diag(lambda) Q^T with eigenvalues uniform in
// [1, conditioning] and random orthogonal Q.
inline std::vector<Matd> generate_spd_data(Eigen::Index d, int n, double conditioning,
                                           std::uint64_t seed) {
  if (d <= 0 || n <= 0) throw ConfigError("generate_spd_data: d and n must be positive");
  if (!(conditioning >= 1)) throw ConfigError("generate_spd_data: conditioning must be >= 1");
  Rng rng = derive_rng(seed, 0x5bd1u);
  std::vector<Matd> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const Matd q = random_orthogonal(d, rng);
    Vecd lam(d);
    for (Eigen::Index j = 0; j < d; ++j)
      lam[j] = 1.0 + (conditioning - 1.0) * rng.uniform01();
    out.push_back(symmetrize<double>(q * lam.asDiagonal() * q.transpose()));
  }
  return out;
}

// Zero-mean Gaussian samples with the given covariance.
inline std::vector<Vecd> generate_gaussian_data(Eigen::Index d, int n, std::uint64_t seed,
                                                const Matd& true_cov) {
  if (d <= 0 || n <= 0) throw ConfigError("generate_gaussian_data: d and n must be positive");
  require_spd<double>(true_cov, "generate_gaussian_data covariance");
  if (true_cov.rows() != d) throw DimensionError("generate_gaussian_data: covariance dim");
  Eigen::LLT<Matd> llt(symmetrize(true_cov));
  const Matd L = llt.matrixL();
  Rng rng = derive_rng(seed, 0x6a09u);
  std::vector<Vecd> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) out.push_back(L * rng.normal_vec(d));
  return out;
}

// --- toy quadratic bilevel family -----------------------------------------
//
//   f(x, y) = 1/2 ||y||^2 + 1/2 x^T D x
//   g(x, y) = 1/2 y^T A y - y^T (B x + c)
//
// Closed forms: y*(x) = A^-1 (B x + c), grad Phi(x) = D x + B^T A^-1 y*(x).
struct ToyQuadratic {
  Matd A;  // n x n SPD lower Hessian, spectrum [1, kappa]
  Matd B;  // n x m cross term, unit operator norm
  Vecd c;  // length n
  Matd D;  // m x m SPD upper curvature, spectrum within (0, 1]
  SmoothnessMeta meta;

  Eigen::Index x_dim() const { return B.cols(); }
  Eigen::Index y_dim() const { return A.rows(); }

  Vecd y_star(const Vecd& x) const { return A.ldlt().solve(B * x + c); }

  double phi(const Vecd& x) const {
    const Vecd ys = y_star(x);
    return 0.5 * ys.squaredNorm() + 0.5 * x.dot(D * x);
  }

  Vecd grad_phi(const Vecd& x) const {
    return D * x + B.transpose() * Vecd(A.ldlt().solve(y_star(x)));
  }

  // Constant Hessian of the composed objective, D + B^T A^-2 B.
  Matd phi_hessian() const {
    const Matd Ai = spd_inv<double>(A);
    return symmetrize<double>(D + B.transpose() * Ai * Ai * B);
  }

  // Oracle bundle. sigma > 0 equips the samplers with additive Gaussian
  // noise of that scale (symmetric perturbation for the Hessian sampler);
  // sigma = 0 samplers reproduce the deterministic oracles bit for bit.
  BilevelOracles<EuclideanManifold<double>, EuclideanManifold<double>> oracles(
      double sigma = 0.0) const;
};

inline BilevelOracles<EuclideanManifold<double>, EuclideanManifold<double>>
ToyQuadratic::oracles(double sigma) const {
  using M = EuclideanManifold<double>;
  using T = M::Tangent;
  if (sigma < 0) throw ConfigError("ToyQuadratic::oracles: sigma must be >= 0");

  auto self = std::make_shared<const ToyQuadratic>(*this);
  BilevelOracles<M, M> pr{M(x_dim()), M(y_dim())};
  pr.meta = meta;
  pr.meta.sigma2 = sigma * sigma;

  pr.f = [self](const Vecd& x, const Vecd& y) {
    return 0.5 * y.squaredNorm() + 0.5 * x.dot(self->D * x);
  };
  pr.g = [self](const Vecd& x, const Vecd& y) {
    return 0.5 * y.dot(self->A * y) - y.dot(self->B * x + self->c);
  };
  pr.grad_x_f = [self](const Vecd& x, const Vecd&) { return T{x, Vecd(self->D * x)}; };
  pr.grad_y_f = [](const Vecd&, const Vecd& y) { return T{y, y}; };
  pr.grad_y_g = [self](const Vecd& x, const Vecd& y) {
    return T{y, Vecd(self->A * y - (self->B * x + self->c))};
  };
  pr.hvp = [self](const Vecd&, const Vecd& y, const T& v) {
    return T{y, Vecd(self->A * v.dir)};
  };
  pr.cross_apply = [self](const Vecd& x, const Vecd&, const T& v) {
    return T{x, Vecd(-self->B.transpose() * v.dir)};
  };
  pr.cross_adjoint_apply = [self](const Vecd&, const Vecd& y, const T& xi) {
    return T{y, Vecd(-self->B * xi.dir)};
  };

  // Additive perturbations; skipped entirely at sigma = 0 so zero-variance
  // runs match the deterministic code path exactly.
  auto perturb_vec = [sigma](Vecd v, Rng& rng) {
    if (sigma != 0.0)
      for (Eigen::Index i = 0; i < v.size(); ++i) v[i] += sigma * rng.normal();
    return v;
  };
  pr.sample_grad_x_F = [self, perturb_vec](const Vecd& x, const Vecd& y, Rng& rng) {
    (void)y;
    return T{x, perturb_vec(self->D * x, rng)};
  };
  pr.sample_grad_y_F = [perturb_vec](const Vecd&, const Vecd& y, Rng& rng) {
    return T{y, perturb_vec(y, rng)};
  };
  pr.sample_grad_y_G = [self, perturb_vec](const Vecd& x, const Vecd& y, Rng& rng) {
    return T{y, perturb_vec(self->A * y - (self->B * x + self->c), rng)};
  };
  pr.sample_hvp_G = [self, sigma](const Vecd&, const Vecd& y, const T& v, Rng& rng) {
    Vecd out = self->A * v.dir;
    if (sigma != 0.0) {
      const Eigen::Index n = v.dir.size();
      const Matd z = rng.normal_mat(n, n);
      out += sigma * Vecd(symmetrize<double>(z) * v.dir);
    }
    return T{y, std::move(out)};
  };
  pr.sample_cross_G = [self, perturb_vec](const Vecd& x, const Vecd&, const T& v, Rng& rng) {
    return T{x, perturb_vec(-self->B.transpose() * v.dir, rng)};
  };
  return pr;
}

// Instance with exact condition number kappa on the lower level: A has
// spectrum {1, ..., kappa} (endpoints exact), B has unit operator norm, and
// D has spectrum within (0, 1] so the upper gradient Lipschitz constant is 1.
// The closed-form hypergradient is validated against finite differences of
// the composed objective at construction.
inline ToyQuadratic make_toy_quadratic(Eigen::Index m, Eigen::Index n, double kappa_target,
                                       std::uint64_t seed) {
  if (m <= 0 || n <= 0) throw ConfigError("make_toy_quadratic: dims must be positive");
  if (!(kappa_target >= 1)) throw ConfigError("make_toy_quadratic: kappa_target must be >= 1");
  Rng rng = derive_rng(seed, 0x707fu);

  ToyQuadratic toy;
  {
    Vecd lam(n);
    lam[0] = 1.0;
    if (n > 1) lam[n - 1] = kappa_target;
    for (Eigen::Index i = 1; i + 1 < n; ++i)
      lam[i] = 1.0 + (kappa_target - 1.0) * rng.uniform01();
    const Matd q = random_orthogonal(n, rng);
    toy.A = symmetrize<double>(q * lam.asDiagonal() * q.transpose());
  }
  {
    Matd b = rng.normal_mat(n, m);
    Eigen::JacobiSVD<Matd> svd(b);
    const double top = svd.singularValues()[0];
    toy.B = b / (top > 0 ? top : 1.0);
  }
  toy.c = rng.normal_vec(n);
  {
    Vecd lam(m);
    for (Eigen::Index i = 0; i < m; ++i) lam[i] = 0.25 + 0.75 * rng.uniform01();
    const Matd q = random_orthogonal(m, rng);
    toy.D = symmetrize<double>(q * lam.asDiagonal() * q.transpose());
  }

  toy.meta.mu = 1.0;
  toy.meta.l_g1 = kappa_target;  // = max(lambda_max(A), ||B||)
  toy.meta.l_g2 = 0.0;
  toy.meta.l_f1 = 1.0;           // = max(lambda_max(D), 1)
  toy.meta.l_f0 = 0.0;           // unbounded globally; tests set it pointwise
  toy.meta.validate();

  for (int trial = 0; trial < 3; ++trial) {
    const Vecd x = rng.normal_vec(m);
    const Vecd gp = toy.grad_phi(x);
    const double h = 1e-5;
    for (Eigen::Index i = 0; i < m; ++i) {
      Vecd xp = x, xm = x;
      xp[i] += h;
      xm[i] -= h;
      const double fd = (toy.phi(xp) - toy.phi(xm)) / (2 * h);
      if (std::abs(fd - gp[i]) > 1e-6 * (1.0 + std::abs(fd)))
        throw NonFiniteError("make_toy_quadratic: closed-form gradient failed its "
                             "finite-difference self-check");
    }
  }
  return toy;
}

// --- robust weighting problems on the SPD cone ------------------------------
//
// Upper variable: weights w constrained to the probability simplex.
// Lower variable: S in the SPD cone. Objectives:
//   upper  f(w, S) = lambda ||w - 1/n||^2 - sum_i w_i loss_i(S)
//   lower  g(w, S) = sum_i w_i loss_i(S)
// with loss_i either half squared geodesic distance to datum A_i (Karcher)
// or the Gaussian negative log-likelihood of datum x_i (MLE).

enum class RobustKind { karcher, mle };

struct RobustInstance {
  RobustKind kind = RobustKind::karcher;
  Eigen::Index d = 2;
  int n = 1;
  double lambda = 1.0;
  double conditioning = 10.0;  // data-generation spread
  std::uint64_t seed = 0;
  std::vector<Matd> spd_data;  // Karcher data A_i
  std::vector<Vecd> vec_data;  // MLE data x_i

  void validate() const {
    if (d <= 0 || n < 1) throw ConfigError("RobustInstance: d and n must be positive");
    if (lambda < 0) throw ConfigError("RobustInstance: lambda must be >= 0");
    if (kind == RobustKind::karcher && static_cast<int>(spd_data.size()) != n)
      throw DimensionError("RobustInstance: data count mismatch");
    if (kind == RobustKind::mle && static_cast<int>(vec_data.size()) != n)
      throw DimensionError("RobustInstance: data count mismatch");
  }

  double loss(const Matd& S, int i) const {
    return kind == RobustKind::karcher ? karcher_loss<double>(S, spd_data[i])
                                       : mle_loss<double>(S, vec_data[i]);
  }

  // Riemannian gradient payload of loss_i at S.
  Matd loss_rgrad(const Matd& S, int i) const {
    if (kind == RobustKind::karcher) return karcher_rgrad<double>(S, spd_data[i]).dir;
    return symmetrize<double>(0.5 * (S - vec_data[i] * vec_data[i].transpose()));
  }

  // Weighted second-moment matrix sum_i u_i x_i x_i^T (MLE only).
  Matd weighted_second_moment(const Vecd& u) const {
    Matd w = Matd::Zero(d, d);
    for (int i = 0; i < n; ++i) w += u[i] * (vec_data[i] * vec_data[i].transpose());
    return symmetrize<double>(w);
  }

  // Natural starting matrix: arithmetic mean of the data (Karcher) or the
  // uniformly weighted second moment, which is the analytic stationary point
  // of the uniform lower problem (MLE).
  Matd default_start() const {
    if (kind == RobustKind::karcher) {
      Matd acc = Matd::Zero(d, d);
      for (const auto& a : spd_data) acc += a;
      return symmetrize<double>(acc / static_cast<double>(n));
    }
    return weighted_second_moment(Vecd::Constant(n, 1.0 / n));
  }
};

inline Vecd robust_loss_vector(const RobustInstance& inst, const Matd& S) {
  Vecd v(inst.n);
  for (int i = 0; i < inst.n; ++i) v[i] = inst.loss(S, i);
  return v;
}

// Upper-objective gradient in the weights: 2 lambda (w - 1/n) - loss vector.
inline Vecd robust_upper_grad(const RobustInstance& inst, const Vecd& w, const Matd& S) {
  if (w.size() != inst.n) throw DimensionError("robust_upper_grad: weight length mismatch");
  return 2.0 * inst.lambda * (w.array() - 1.0 / inst.n).matrix() - robust_loss_vector(inst, S);
}

// Companion gradient of the upper objective in S: - sum_i w_i grad loss_i.
inline typename SpdManifold<double>::Tangent robust_upper_grad_s(const RobustInstance& inst,
                                                                 const Vecd& w, const Matd& S) {
  if (w.size() != inst.n) throw DimensionError("robust_upper_grad_s: weight length mismatch");
  Matd acc = Matd::Zero(inst.d, inst.d);
  for (int i = 0; i < inst.n; ++i) acc -= w[i] * inst.loss_rgrad(S, i);
  return {S, symmetrize<double>(acc)};
}

struct RobustLowerOracles {
  std::function<double(const Matd&)> value;
  std::function<typename SpdManifold<double>::Tangent(const Matd&)> grad;
  std::function<typename SpdManifold<double>::Tangent(const Matd&,
                                                      const typename SpdManifold<double>::Tangent&)>
      hvp;
};

// Lower-problem pieces at frozen weights: value, Riemannian gradient, and
// Hessian action of S -> sum_i w_i loss_i(S).
inline RobustLowerOracles robust_lower_oracles(const RobustInstance& inst, const Vecd& w) {
  if (w.size() != inst.n) throw DimensionError("robust_lower_oracles: weight length mismatch");
  auto self = std::make_shared<const RobustInstance>(inst);
  const Vecd weights = w;
  RobustLowerOracles out;
  out.value = [self, weights](const Matd& S) {
    double acc = 0;
    for (int i = 0; i < self->n; ++i) acc += weights[i] * self->loss(S, i);
    return acc;
  };
  if (inst.kind == RobustKind::karcher) {
    auto terms = std::make_shared<std::vector<KarcherTerm<double>>>();
    terms->reserve(static_cast<std::size_t>(inst.n));
    for (int i = 0; i < inst.n; ++i)
      terms->push_back({inst.spd_data[static_cast<std::size_t>(i)], w[i]});
    out.grad = [terms](const Matd& S) { return karcher_sum_rgrad<double>(S, *terms); };
    out.hvp = [terms](const Matd& S, const typename SpdManifold<double>::Tangent& V) {
      return karcher_sum_rhess_apply<double>(S, *terms, V);
    };
  } else {
    const Matd W = inst.weighted_second_moment(w);
    const double wsum = w.sum();
    out.grad = [W, wsum](const Matd& S) {
      return typename SpdManifold<double>::Tangent{
          S, symmetrize<double>(0.5 * (wsum * S - W))};
    };
    out.hvp = [W](const Matd& S, const typename SpdManifold<double>::Tangent& V) {
      Eigen::LLT<Matd> llt(symmetrize(S));
      const Matd SiW = llt.solve(W);
      const Matd prod = V.dir * SiW;
      return typename SpdManifold<double>::Tangent{
          S, symmetrize<double>(0.25 * (prod + prod.transpose()))};
    };
  }
  return out;
}

// Mixed derivative of g mapping tangents at S to weight-space vectors:
// entry i is <grad loss_i, V>_S.
inline Vecd robust_cross_apply(const RobustInstance& inst, const Vecd& w, const Matd& S,
                               const typename SpdManifold<double>::Tangent& V) {
  (void)w;
  if (!SpdManifold<double>::same_point(V.base, S))
    throw BasePointError("robust_cross_apply: tangent base-point mismatch");
  Vecd out(inst.n);
  Eigen::LLT<Matd> llt(symmetrize(S));
  const Matd SiV = llt.solve(V.dir);
  if (inst.kind == RobustKind::karcher) {
    // <S egrad_i S, V>_S = tr(egrad_i V)
    for (int i = 0; i < inst.n; ++i) {
      const Matd eg = karcher_egrad<double>(S, inst.spd_data[i]);
      out[i] = (eg.array() * V.dir.array()).sum();
    }
  } else {
    // <(S - x x^T)/2, V>_S = (tr(S^-1 V) - x^T S^-1 V S^-1 x) / 2
    const double trSiV = SiV.trace();
    for (int i = 0; i < inst.n; ++i) {
      const Vecd sx = llt.solve(inst.vec_data[i]);
      out[i] = 0.5 * (trSiV - sx.dot(V.dir * sx));
    }
  }
  return out;
}

// Adjoint of the mixed derivative: weight-space u to sum_i u_i grad loss_i.
inline typename SpdManifold<double>::Tangent robust_cross_adjoint(const RobustInstance& inst,
                                                                  const Vecd& w, const Matd& S,
                                                                  const Vecd& u) {
  (void)w;
  if (u.size() != inst.n) throw DimensionError("robust_cross_adjoint: length mismatch");
  Matd acc = Matd::Zero(inst.d, inst.d);
  for (int i = 0; i < inst.n; ++i) acc += u[i] * inst.loss_rgrad(S, i);
  return {S, symmetrize<double>(acc)};
}

// Smoothness constants of the lower problem, estimated on the region the
// iterates visit. Karcher: the per-datum Hessian spectrum lies in
// [1, 1 + dist(S, A_i)], bounded through the data diameter around the
// default start. MLE: the Hessian action 1/4 (V S^-1 W + W S^-1 V) has
// spectrum 1/2 * eig(S^-1 W); near the stationary region S ~ W this is 1/2,
// padded by a factor-4 margin on each side.
inline SmoothnessMeta robust_meta(const RobustInstance& inst) {
  SmoothnessMeta meta;
  if (inst.kind == RobustKind::karcher) {
    SpdManifold<double> man(inst.d);
    const Matd ref = inst.default_start();
    double reach = 0;
    for (const auto& a : inst.spd_data) reach = std::max(reach, man.distance(ref, a));
    meta.mu = 1.0;
    meta.l_g1 = 1.0 + 2.0 * reach;
  } else {
    meta.mu = 0.125;
    meta.l_g1 = 2.0;
  }
  meta.l_f0 = 0.0;
  meta.l_f1 = 1.0;
  meta.l_g2 = 0.0;
  meta.validate();
  return meta;
}

// Full oracle bundle for the simplex-weighted bilevel problem; the upper
// variable is Euclidean (projection handled by the solver loop).
inline BilevelOracles<EuclideanManifold<double>, SpdManifold<double>> make_robust_oracles(
    const RobustInstance& inst) {
  inst.validate();
  using MX = EuclideanManifold<double>;
  using MY = SpdManifold<double>;
  auto self = std::make_shared<const RobustInstance>(inst);
  BilevelOracles<MX, MY> pr{MX(inst.n), MY(inst.d)};
  pr.meta = robust_meta(inst);

  pr.f = [self](const Vecd& w, const Matd& S) {
    const Vecd losses = robust_loss_vector(*self, S);
    return self->lambda * (w.array() - 1.0 / self->n).matrix().squaredNorm() - w.dot(losses);
  };
  pr.g = [self](const Vecd& w, const Matd& S) {
    return w.dot(robust_loss_vector(*self, S));
  };
  pr.grad_x_f = [self](const Vecd& w, const Matd& S) {
    return typename MX::Tangent{w, robust_upper_grad(*self, w, S)};
  };
  pr.grad_y_f = [self](const Vecd& w, const Matd& S) {
    return robust_upper_grad_s(*self, w, S);
  };
  pr.grad_y_g = [self](const Vecd& w, const Matd& S) {
    auto t = robust_upper_grad_s(*self, w, S);
    t.dir = -t.dir;
    return t;
  };
  pr.hvp = [self](const Vecd& w, const Matd& S, const typename MY::Tangent& V) {
    return robust_lower_oracles(*self, w).hvp(S, V);
  };
  pr.cross_apply = [self](const Vecd& w, const Matd& S, const typename MY::Tangent& V) {
    return typename MX::Tangent{w, robust_cross_apply(*self, w, S, V)};
  };
  pr.cross_adjoint_apply = [self](const Vecd& w, const Matd& S,
                                  const typename MX::Tangent& u) {
    return robust_cross_adjoint(*self, w, S, u.dir);
  };
  return pr;
}

// Deterministic instance builders.
inline RobustInstance make_robust_karcher(Eigen::Index d, int n, double conditioning,
                                          double lambda, std::uint64_t seed) {
  RobustInstance inst;
  inst.kind = RobustKind::karcher;
  inst.d = d;
  inst.n = n;
  inst.lambda = lambda;
  inst.conditioning = conditioning;
  inst.seed = seed;
  inst.spd_data = generate_spd_data(d, n, conditioning, seed);
  inst.validate();
  return inst;
}

inline RobustInstance make_robust_mle(Eigen::Index d, int n, double conditioning,
                                      double lambda, std::uint64_t seed) {
  RobustInstance inst;
  inst.kind = RobustKind::mle;
  inst.d = d;
  inst.n = n;
  inst.lambda = lambda;
  inst.conditioning = conditioning;
  inst.seed = seed;
  if (n < d + 1)
    throw ConfigError("make_robust_mle: need n >= d + 1 samples for an interior optimum");
  const Matd true_cov = generate_spd_data(d, 1, conditioning, mix_seed(seed, 0xc0))[0];
  inst.vec_data = generate_gaussian_data(d, n, seed, true_cov);
  inst.validate();
  return inst;
}

}  // namespace riebo
