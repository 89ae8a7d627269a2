#pragma once

// Hypergradient machinery for bilevel problems on manifolds:
//   grad Phi(x) = grad_x f(x, y*) - cross(x, y*)[v*],  hvp(x, y*)[v*] = grad_y f.
// Provides the exact dense solve, the approximate-implicit-differentiation
// estimate backed by tangent-space conjugate gradient, and truncated
// Neumann-series estimates (randomized single-sample and deterministic
// partial-sum variants).

#include <cmath>
#include <functional>
#include <string>
#include <utility>

#include "riebo/common.hpp"
#include "riebo/manifold.hpp"

namespace riebo {

// Smooth two-level problem stated through callables. Deterministic oracles
// are required; stochastic samplers are optional and receive an explicit
// noise stream so estimators stay reproducible under seeding.
template <typename MX, typename MY>
struct BilevelOracles {
  using Scalar = typename MX::Scalar;
  using XPoint = typename MX::Point;
  using YPoint = typename MY::Point;
  using XTangent = typename MX::Tangent;
  using YTangent = typename MY::Tangent;

  MX mx;
  MY my;

  BilevelOracles(MX mx_, MY my_) : mx(std::move(mx_)), my(std::move(my_)) {}

  std::function<Scalar(const XPoint&, const YPoint&)> f;
  std::function<Scalar(const XPoint&, const YPoint&)> g;
  std::function<XTangent(const XPoint&, const YPoint&)> grad_x_f;
  std::function<YTangent(const XPoint&, const YPoint&)> grad_y_f;
  std::function<YTangent(const XPoint&, const YPoint&)> grad_y_g;
  // Lower-level Hessian action H_y(g)[v], self-adjoint and >= mu-definite.
  std::function<YTangent(const XPoint&, const YPoint&, const YTangent&)> hvp;
  // Mixed second derivative of g mapping T_y -> T_x, and its adjoint.
  std::function<XTangent(const XPoint&, const YPoint&, const YTangent&)> cross_apply;
  std::function<YTangent(const XPoint&, const YPoint&, const XTangent&)> cross_adjoint_apply;

  std::function<XTangent(const XPoint&, const YPoint&, Rng&)> sample_grad_x_F;
  std::function<YTangent(const XPoint&, const YPoint&, Rng&)> sample_grad_y_F;
  std::function<YTangent(const XPoint&, const YPoint&, Rng&)> sample_grad_y_G;
  std::function<YTangent(const XPoint&, const YPoint&, const YTangent&, Rng&)> sample_hvp_G;
  std::function<XTangent(const XPoint&, const YPoint&, const YTangent&, Rng&)> sample_cross_G;

  SmoothnessMeta meta;

  bool has_stochastic() const {
    return sample_grad_x_F && sample_grad_y_F && sample_grad_y_G && sample_hvp_G &&
           sample_cross_G;
  }
};

enum class HypergradKind { aid_cg, neumann_det };

struct EstimatorConfig {
  int cg_steps = 20;        // N
  double cg_tol = 0.0;      // 0 runs all N iterations
  int neumann_terms = 20;   // Q
  double neumann_scale = 0; // eta; 0 derives 1/l_g1 from the problem meta
  HypergradKind kind = HypergradKind::aid_cg;

  void validate() const {
    if (cg_steps < 1) throw ConfigError("EstimatorConfig: cg_steps must be >= 1");
    if (neumann_terms < 1) throw ConfigError("EstimatorConfig: neumann_terms must be >= 1");
    if (cg_tol < 0) throw ConfigError("EstimatorConfig: cg_tol must be >= 0");
    if (neumann_scale < 0) throw ConfigError("EstimatorConfig: neumann_scale must be >= 0");
  }

  double eta_for(const SmoothnessMeta& meta) const {
    const double eta = neumann_scale > 0 ? neumann_scale : 1.0 / meta.l_g1;
    if (eta > 1.0 / meta.l_g1 * (1.0 + 1e-12))
      throw ConfigError("EstimatorConfig: neumann_scale exceeds 1/l_g1");
    return eta;
  }
};

template <typename Manifold>
struct CgResult {
  typename Manifold::Tangent v;
  typename Manifold::Scalar residual_norm = 0;
  int iterations = 0;
};

// Conjugate gradient for hvp(v) = rhs on the tangent space at the common base
// of rhs and v0, with inner products in the Riemannian metric. Runs until the
// residual norm drops to tol or N iterations are spent.
template <typename Manifold, typename HvpFn>
CgResult<Manifold> tangent_cg(const Manifold& man, const typename Manifold::Point& y,
                              HvpFn&& hvp, const typename Manifold::Tangent& rhs,
                              const typename Manifold::Tangent& v0, int N,
                              typename Manifold::Scalar tol = 0) {
  using Scalar = typename Manifold::Scalar;
  man.check_tangent(y, rhs);
  man.check_tangent(y, v0);
  if (N < 1) throw ConfigError("tangent_cg: N must be >= 1");

  CgResult<Manifold> out{v0, 0, 0};
  auto r = man.axpy(Scalar(-1), hvp(v0), rhs);
  auto p = r;
  Scalar rr = man.inner(y, r, r);
  if (!std::isfinite(static_cast<double>(rr)))
    throw NonFiniteError("tangent_cg: non-finite residual");
  for (int i = 0; i < N; ++i) {
    if (std::sqrt(rr) <= tol) break;
    auto hp = hvp(p);
    const Scalar php = man.inner(y, p, hp);
    if (!std::isfinite(static_cast<double>(php)) || php <= Scalar(0))
      throw NonFiniteError("tangent_cg: operator is not positive definite on the Krylov space");
    const Scalar alpha = rr / php;
    out.v = man.axpy(alpha, p, out.v);
    r = man.axpy(-alpha, hp, r);
    const Scalar rr_new = man.inner(y, r, r);
    if (!std::isfinite(static_cast<double>(rr_new)))
      throw NonFiniteError("tangent_cg: non-finite iterate");
    p = man.axpy(rr_new / rr, p, r);
    rr = rr_new;
    ++out.iterations;
  }
  out.residual_norm = std::sqrt(rr);
  return out;
}

template <typename MX, typename MY>
struct HypergradResult {
  typename MX::Tangent h;  // hypergradient estimate in T_x
  typename MY::Tangent v;  // linear-system solution estimate in T_y
};

// Direct dense solve of hvp(v) = grad_y f in an explicit tangent basis,
// assembled as the Gram matrix of the Hessian in the Riemannian metric.
// Intended for validation at small dimension.
template <typename MX, typename MY>
HypergradResult<MX, MY> exact_hypergradient(const BilevelOracles<MX, MY>& pr,
                                            const typename MX::Point& x,
                                            const typename MY::Point& y) {
  using Scalar = typename MX::Scalar;
  const Eigen::Index n = pr.my.tangent_coord_dim();
  const auto gy = pr.grad_y_f(x, y);

  std::vector<typename MY::Tangent> basis;
  basis.reserve(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    Vec<Scalar> e = Vec<Scalar>::Zero(n);
    e[j] = Scalar(1);
    basis.push_back(pr.my.tangent_from_coords(y, e));
  }
  Mat<Scalar> M(n, n);
  Vec<Scalar> rhs(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const auto hb = pr.hvp(x, y, basis[j]);
    for (Eigen::Index i = 0; i < n; ++i) M(i, j) = pr.my.inner(y, basis[i], hb);
    rhs[j] = pr.my.inner(y, basis[j], gy);
  }
  Eigen::FullPivLU<Mat<Scalar>> lu(symmetrize(M));
  if (!lu.isInvertible())
    throw NonFiniteError("exact_hypergradient: lower-level Hessian is singular");
  const Vec<Scalar> c = lu.solve(rhs);
  const auto v = pr.my.tangent_from_coords(y, c);
  const auto h = pr.mx.axpy(Scalar(-1), pr.cross_apply(x, y, v), pr.grad_x_f(x, y));
  return {h, v};
}

template <typename MX, typename MY>
struct AidResult {
  typename MX::Tangent h;
  typename MY::Tangent v;  // CG output, reusable as the next warm start
  typename MX::Scalar cg_residual = 0;
  int cg_iterations = 0;
};

// Approximate implicit differentiation: N-step CG on the lower-level Hessian
// system from warm start v0, then h = grad_x f - cross[v_N].
template <typename MX, typename MY>
AidResult<MX, MY> aid_hypergradient(const BilevelOracles<MX, MY>& pr,
                                    const typename MX::Point& x,
                                    const typename MY::Point& y,
                                    const typename MY::Tangent& v0,
                                    const EstimatorConfig& cfg) {
  using Scalar = typename MX::Scalar;
  cfg.validate();
  auto cg = tangent_cg(
      pr.my, y, [&](const typename MY::Tangent& t) { return pr.hvp(x, y, t); },
      pr.grad_y_f(x, y), v0, cfg.cg_steps, Scalar(cfg.cg_tol));
  const auto h = pr.mx.axpy(Scalar(-1), pr.cross_apply(x, y, cg.v), pr.grad_x_f(x, y));
  return {h, cg.v, cg.residual_norm, cg.iterations};
}

// Randomized truncated Neumann inverse: draws Q' uniform on {0,...,Q-1}, then
// returns eta*Q * prod_{q=1}^{Q'} (I - eta*H_q)[rhs] with independently
// sampled Hessian factors applied in sequence. Q' = 0 gives eta*Q*rhs.
template <typename Manifold, typename HvpSampler>
typename Manifold::Tangent neumann_inverse_apply(const Manifold& man,
                                                 const typename Manifold::Point& y,
                                                 HvpSampler&& hvp_sampler,
                                                 const typename Manifold::Tangent& rhs,
                                                 double eta, int Q, Rng& rng) {
  using Scalar = typename Manifold::Scalar;
  man.check_tangent(y, rhs);
  if (Q < 1) throw ConfigError("neumann_inverse_apply: Q must be >= 1");
  if (!(eta > 0)) throw ConfigError("neumann_inverse_apply: eta must be positive");
  const auto q_trunc = rng.uniform_below(static_cast<std::uint64_t>(Q));
  auto v = rhs;
  for (std::uint64_t q = 0; q < q_trunc; ++q) {
    Rng zeta = rng.fork();
    v = man.axpy(Scalar(-eta), hvp_sampler(v, zeta), v);
  }
  return man.scale(Scalar(eta) * Scalar(Q), v);
}

// Deterministic counterpart: the expectation of the randomized estimate,
// eta * sum_{q=0}^{Q-1} (I - eta*H)^q [rhs].
template <typename Manifold, typename HvpFn>
typename Manifold::Tangent neumann_partial_sum_apply(const Manifold& man,
                                                     const typename Manifold::Point& y,
                                                     HvpFn&& hvp,
                                                     const typename Manifold::Tangent& rhs,
                                                     double eta, int Q) {
  using Scalar = typename Manifold::Scalar;
  man.check_tangent(y, rhs);
  if (Q < 1) throw ConfigError("neumann_partial_sum_apply: Q must be >= 1");
  if (!(eta > 0)) throw ConfigError("neumann_partial_sum_apply: eta must be positive");
  auto acc = man.zero_tangent(y);
  auto cur = rhs;
  for (int q = 0; q < Q; ++q) {
    acc = man.axpy(Scalar(1), cur, acc);
    if (q + 1 < Q) cur = man.axpy(Scalar(-eta), hvp(cur), cur);
  }
  return man.scale(Scalar(eta), acc);
}

// Single-sample stochastic hypergradient: one shared noise draw for both
// partial gradients of F, a randomized Neumann inverse against sampled
// Hessian factors, and an independent draw for the cross term. The stream is
// split into fixed-order substreams (xi, Neumann, zeta0) so that zero-variance
// samplers reproduce the same arithmetic as their deterministic counterparts
// draw for draw.
template <typename MX, typename MY>
typename MX::Tangent stochastic_hypergradient(const BilevelOracles<MX, MY>& pr,
                                              const typename MX::Point& x,
                                              const typename MY::Point& y,
                                              const EstimatorConfig& cfg, Rng& rng) {
  using Scalar = typename MX::Scalar;
  cfg.validate();
  if (!pr.has_stochastic())
    throw ConfigError("stochastic_hypergradient: problem provides no stochastic samplers");
  const double eta = cfg.eta_for(pr.meta);

  Rng xi = rng.fork();
  Rng neumann_rng = rng.fork();
  Rng zeta0 = rng.fork();

  Rng xi_for_x = xi;
  Rng xi_for_y = xi;
  const auto gx = pr.sample_grad_x_F(x, y, xi_for_x);
  const auto gy = pr.sample_grad_y_F(x, y, xi_for_y);
  const auto vq = neumann_inverse_apply(
      pr.my, y,
      [&](const typename MY::Tangent& t, Rng& z) { return pr.sample_hvp_G(x, y, t, z); }, gy,
      eta, cfg.neumann_terms, neumann_rng);
  const auto cr = pr.sample_cross_G(x, y, vq, zeta0);
  return pr.mx.axpy(Scalar(-1), cr, gx);
}

// Deterministic Neumann hypergradient: partial-sum inverse against the exact
// Hessian, assembled like the AID estimate.
template <typename MX, typename MY>
HypergradResult<MX, MY> deterministic_neumann_hypergradient(const BilevelOracles<MX, MY>& pr,
                                                            const typename MX::Point& x,
                                                            const typename MY::Point& y,
                                                            const EstimatorConfig& cfg) {
  using Scalar = typename MX::Scalar;
  cfg.validate();
  const double eta = cfg.eta_for(pr.meta);
  const auto v = neumann_partial_sum_apply(
      pr.my, y, [&](const typename MY::Tangent& t) { return pr.hvp(x, y, t); },
      pr.grad_y_f(x, y), eta, cfg.neumann_terms);
  const auto h = pr.mx.axpy(Scalar(-1), pr.cross_apply(x, y, v), pr.grad_x_f(x, y));
  return {h, v};
}

// Bias bound of the truncated Neumann hypergradient at eta = 1/l_g1:
// l_f0 * kappa * (1 - mu/l_g1)^Q.
inline double neumann_bias_bound(const SmoothnessMeta& meta, int Q) {
  meta.validate();
  if (Q < 0) throw ConfigError("neumann_bias_bound: Q must be >= 0");
  return meta.l_f0 * meta.kappa() * std::pow(1.0 - meta.mu / meta.l_g1, Q);
}

// Max relative defect between the two cross-derivative oracles over random
// tangent pairs: they must be mutual adjoints.
template <typename MX, typename MY>
typename MX::Scalar adjointness_check(const BilevelOracles<MX, MY>& pr,
                                      const typename MX::Point& x,
                                      const typename MY::Point& y, int trials, Rng& rng) {
  using Scalar = typename MX::Scalar;
  if (trials < 1) throw ConfigError("adjointness_check: trials must be >= 1");
  Scalar worst = 0;
  for (int t = 0; t < trials; ++t) {
    const auto xi = pr.mx.random_tangent(x, rng);
    const auto eta = pr.my.random_tangent(y, rng);
    const Scalar lhs = pr.my.inner(y, eta, pr.cross_adjoint_apply(x, y, xi));
    const Scalar rhs = pr.mx.inner(x, pr.cross_apply(x, y, eta), xi);
    const Scalar scale = Scalar(1) + pr.mx.norm(x, xi) * pr.my.norm(y, eta);
    worst = std::max(worst, std::abs(lhs - rhs) / scale);
  }
  return worst;
}

}  // namespace riebo
