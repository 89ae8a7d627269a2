#pragma once

// Outer solver loops: deterministic bilevel descent with warm-started CG
// (riebo), its stochastic single-sample counterpart (riesbo), and the
// projected loop for simplex-constrained upper variables (robust_bilevel).
// All loops share one iteration engine so that configurations which must
// agree (e.g. zero-variance sampling at Q = 1 against the deterministic
// Neumann path) produce identical arithmetic operation for operation.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "riebo/common.hpp"
#include "riebo/hypergrad.hpp"
#include "riebo/manifold.hpp"

namespace riebo {

struct SolverConfig {
  int K = 100;             // outer iterations
  int T = 10;              // inner gradient steps per outer iteration
  double alpha = 1e-2;     // upper step size
  double beta = 1e-1;      // lower step size
  EstimatorConfig estimator{};
  std::uint64_t seed = 0;
  int record_every = 1;
  double grad_tol = 0.0;   // > 0 enables early exit on the recorded grad norm

  void validate() const {
    if (K < 0) throw ConfigError("SolverConfig: K must be >= 0");
    if (T < 0) throw ConfigError("SolverConfig: T must be >= 0");
    if (!(alpha > 0)) throw ConfigError("SolverConfig: alpha must be > 0");
    if (!(beta > 0)) throw ConfigError("SolverConfig: beta must be > 0");
    if (record_every < 1) throw ConfigError("SolverConfig: record_every must be >= 1");
    if (grad_tol < 0) throw ConfigError("SolverConfig: grad_tol must be >= 0");
    estimator.validate();
  }
};

struct TraceRecord {
  int iter = 0;
  double elapsed_s = 0;       // active solver time, excludes recording overhead
  double objective = 0;       // f(x^k, y^k)
  double grad_norm = 0;       // hypergradient estimate norm, or gradient-mapping norm
  double inner_residual = 0;  // norm of grad_y g(x^k, y^k)
};

template <typename MX, typename MY>
struct BilevelTrace {
  std::vector<TraceRecord> records;
  typename MX::Point final_x;
  typename MY::Point final_y;
  bool aborted = false;
  std::string abort_reason;
  std::vector<std::string> warnings;
};

namespace detail {

class ActiveTimer {
 public:
  void start() {
    if (!running_) {
      t0_ = std::chrono::steady_clock::now();
      running_ = true;
    }
  }
  void stop() {
    if (running_) {
      total_ += std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_).count();
      running_ = false;
    }
  }
  double seconds() const {
    double t = total_;
    if (running_)
      t += std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_).count();
    return t;
  }

 private:
  double total_ = 0;
  std::chrono::steady_clock::time_point t0_{};
  bool running_ = false;
};

// T explicit-step gradient descent along exp_map; grad_fn(y, rng) returns the
// (possibly sampled) lower gradient and receives a fresh substream per step.
template <typename Manifold, typename GradFn>
typename Manifold::Point inner_descent(const Manifold& man, typename Manifold::Point y, int T,
                                       double beta, GradFn&& grad_fn, Rng& rng) {
  using Scalar = typename Manifold::Scalar;
  for (int t = 0; t < T; ++t) {
    Rng step_rng = rng.fork();
    const auto g = grad_fn(y, step_rng);
    y = man.exp_map(y, man.scale(Scalar(-beta), g));
  }
  return y;
}

}  // namespace detail

// T Riemannian gradient steps on g(x, .) from y0.
template <typename MX, typename MY>
typename MY::Point lower_gd(const BilevelOracles<MX, MY>& pr, const typename MX::Point& x,
                            const typename MY::Point& y0, int T, double beta) {
  if (T < 0) throw ConfigError("lower_gd: T must be >= 0");
  if (!(beta > 0)) throw ConfigError("lower_gd: beta must be > 0");
  pr.my.check_point(y0);
  Rng unused(0);
  return detail::inner_descent(
      pr.my, y0, T, beta,
      [&](const typename MY::Point& y, Rng&) { return pr.grad_y_g(x, y); }, unused);
}

template <typename MX, typename MY>
using SolverObserver = std::function<void(int, const typename MX::Point&,
                                          const typename MY::Point&,
                                          const typename MX::Tangent&)>;

namespace detail {

template <typename MX, typename MY>
struct EstimateOut {
  typename MX::Tangent h;
  std::optional<typename MY::Tangent> v;  // warm-startable linear-system state
};

// Shared outer loop. Per iteration: fork inner and estimator substreams in a
// fixed order, run the inner descent warm-started at the previous y, form the
// hypergradient (optionally warm-started through parallel transport of the
// previous linear-system state), record off the clock, then step x.
template <typename MX, typename MY, typename InnerGrad, typename Estimator>
BilevelTrace<MX, MY> run_bilevel(const BilevelOracles<MX, MY>& pr,
                                 const typename MX::Point& x0, const typename MY::Point& y0,
                                 const SolverConfig& cfg, InnerGrad&& inner_grad,
                                 Estimator&& estimator,
                                 const SolverObserver<MX, MY>& observer) {
  using Scalar = typename MX::Scalar;
  cfg.validate();
  pr.mx.check_point(x0);
  pr.my.check_point(y0);

  BilevelTrace<MX, MY> trace{{}, x0, y0, false, "", {}};
  if (pr.meta.l_g1 > 0 && cfg.beta > (1.0 + 1e-12) / pr.meta.l_g1)
    trace.warnings.push_back("beta exceeds 1/l_g1; inner descent may be unstable");

  Rng root(cfg.seed);
  auto x = x0;
  auto y = y0;
  std::optional<typename MY::Tangent> v_state;

  ActiveTimer timer;
  for (int k = 0; k < cfg.K; ++k) {
    try {
      timer.start();
      Rng rng_inner = root.fork();
      Rng rng_est = root.fork();

      const auto y_new = inner_descent(
          pr.my, y, cfg.T, cfg.beta,
          [&](const typename MY::Point& yt, Rng& r) { return inner_grad(x, yt, r); },
          rng_inner);

      typename MY::Tangent v0 = v_state
          ? pr.my.parallel_transport(v_state->base, y_new, *v_state)
          : pr.my.zero_tangent(y_new);
      EstimateOut<MX, MY> est = estimator(x, y_new, v0, rng_est);
      timer.stop();

      const double grad_norm = static_cast<double>(pr.mx.norm(x, est.h));
      const bool record_now = (k % cfg.record_every == 0) || (k + 1 == cfg.K) ||
                              (cfg.grad_tol > 0 && grad_norm <= cfg.grad_tol);
      if (record_now) {
        pr.mx.check_point(x);
        pr.my.check_point(y_new);
        const double obj = static_cast<double>(pr.f(x, y_new));
        const double inner_res =
            static_cast<double>(pr.my.norm(y_new, pr.grad_y_g(x, y_new)));
        if (!std::isfinite(obj) || !std::isfinite(grad_norm) || !std::isfinite(inner_res))
          throw NonFiniteError("solver: non-finite trace values");
        trace.records.push_back({k, timer.seconds(), obj, grad_norm, inner_res});
      }
      if (observer) observer(k, x, y_new, est.h);
      if (!std::isfinite(grad_norm))
        throw NonFiniteError("solver: non-finite hypergradient");

      timer.start();
      x = pr.mx.exp_map(x, pr.mx.scale(Scalar(-cfg.alpha), est.h));
      y = y_new;
      v_state = std::move(est.v);
      timer.stop();

      if (cfg.grad_tol > 0 && grad_norm <= cfg.grad_tol) break;
    } catch (const NonFiniteError& e) {
      trace.aborted = true;
      trace.abort_reason = e.what();
      break;
    } catch (const NotPositiveDefiniteError& e) {
      trace.aborted = true;
      trace.abort_reason = e.what();
      break;
    }
  }
  trace.final_x = x;
  trace.final_y = y;
  return trace;
}

}  // namespace detail

// Deterministic bilevel descent. Warm starts: the inner loop resumes from the
// previous y^k; the CG system is warm-started with the parallel-transported
// previous solution (zero at k = 0). The estimator kind selects warm-started
// CG or the stateless deterministic Neumann partial sum.
template <typename MX, typename MY>
BilevelTrace<MX, MY> riebo(const BilevelOracles<MX, MY>& pr, const typename MX::Point& x0,
                           const typename MY::Point& y0, const SolverConfig& cfg,
                           const SolverObserver<MX, MY>& observer = {}) {
  return detail::run_bilevel(
      pr, x0, y0, cfg,
      [&](const typename MX::Point& x, const typename MY::Point& yt, Rng&) {
        return pr.grad_y_g(x, yt);
      },
      [&](const typename MX::Point& x, const typename MY::Point& y,
          const typename MY::Tangent& v0, Rng&) -> detail::EstimateOut<MX, MY> {
        if (cfg.estimator.kind == HypergradKind::neumann_det) {
          auto r = deterministic_neumann_hypergradient(pr, x, y, cfg.estimator);
          return {std::move(r.h), std::nullopt};
        }
        auto r = aid_hypergradient(pr, x, y, v0, cfg.estimator);
        return {std::move(r.h), std::move(r.v)};
      },
      observer);
}

// Stochastic bilevel descent: sampled inner gradients and the single-sample
// randomized Neumann hypergradient. Fully determined by cfg.seed.
template <typename MX, typename MY>
BilevelTrace<MX, MY> riesbo(const BilevelOracles<MX, MY>& pr, const typename MX::Point& x0,
                            const typename MY::Point& y0, const SolverConfig& cfg,
                            const SolverObserver<MX, MY>& observer = {}) {
  if (!pr.has_stochastic())
    throw ConfigError("riesbo: problem provides no stochastic samplers");
  return detail::run_bilevel(
      pr, x0, y0, cfg,
      [&](const typename MX::Point& x, const typename MY::Point& yt, Rng& r) {
        return pr.sample_grad_y_G(x, yt, r);
      },
      [&](const typename MX::Point& x, const typename MY::Point& y,
          const typename MY::Tangent&, Rng& r) -> detail::EstimateOut<MX, MY> {
        return {stochastic_hypergradient(pr, x, y, cfg.estimator, r), std::nullopt};
      },
      observer);
}

// Euclidean projection onto the probability simplex (sort and threshold).
inline Vecd project_simplex(const Vecd& v) {
  if (v.size() == 0) throw DimensionError("project_simplex: empty vector");
  require_finite(v, "project_simplex input");
  const Eigen::Index n = v.size();
  std::vector<double> u(v.data(), v.data() + n);
  std::sort(u.begin(), u.end(), std::greater<double>());
  double cumsum = 0;
  double tau = 0;
  Eigen::Index rho = 0;
  for (Eigen::Index j = 0; j < n; ++j) {
    cumsum += u[static_cast<std::size_t>(j)];
    const double candidate = (cumsum - 1.0) / static_cast<double>(j + 1);
    if (u[static_cast<std::size_t>(j)] - candidate > 0) {
      rho = j + 1;
      tau = candidate;
    }
  }
  Vecd w(n);
  for (Eigen::Index i = 0; i < n; ++i) w[i] = std::max(v[i] - tau, 0.0);
  (void)rho;
  return w;
}

// (y_k - y_next) / alpha: reduces to the hypergradient when the projection is
// inactive.
inline Vecd gradient_mapping(const Vecd& y_k, const Vecd& y_next, double alpha) {
  if (!(alpha > 0)) throw ConfigError("gradient_mapping: alpha must be > 0");
  if (y_k.size() != y_next.size()) throw DimensionError("gradient_mapping: size mismatch");
  return (y_k - y_next) / alpha;
}

// Projected bilevel loop for a Euclidean upper variable constrained to the
// probability simplex, with the stateless deterministic Neumann estimator.
// grad_norm records the gradient-mapping norm.
template <typename MY>
BilevelTrace<EuclideanManifold<double>, MY> robust_bilevel(
    const BilevelOracles<EuclideanManifold<double>, MY>& pr, const Vecd& w0,
    const typename MY::Point& s0, const SolverConfig& cfg,
    const SolverObserver<EuclideanManifold<double>, MY>& observer = {}) {
  cfg.validate();
  pr.mx.check_point(w0);
  pr.my.check_point(s0);
  SimplexSet simplex(w0.size());
  if (!simplex.contains(w0))
    throw ConfigError("robust_bilevel: initial weights are not in the simplex");

  BilevelTrace<EuclideanManifold<double>, MY> trace{{}, w0, s0, false, "", {}};
  if (pr.meta.l_g1 > 0 && cfg.beta > (1.0 + 1e-12) / pr.meta.l_g1)
    trace.warnings.push_back("beta exceeds 1/l_g1; inner descent may be unstable");

  Vecd w = w0;
  auto s = s0;
  Rng unused(0);
  detail::ActiveTimer timer;
  for (int k = 0; k < cfg.K; ++k) {
    try {
      timer.start();
      const auto s_new = detail::inner_descent(
          pr.my, s, cfg.T, cfg.beta,
          [&](const typename MY::Point& st, Rng&) { return pr.grad_y_g(w, st); }, unused);
      const auto est = deterministic_neumann_hypergradient(pr, w, s_new, cfg.estimator);
      const Vecd w_next = project_simplex(w - cfg.alpha * est.h.dir);
      const Vecd mapping = gradient_mapping(w, w_next, cfg.alpha);
      timer.stop();

      const double map_norm = mapping.norm();
      const bool record_now = (k % cfg.record_every == 0) || (k + 1 == cfg.K) ||
                              (cfg.grad_tol > 0 && map_norm <= cfg.grad_tol);
      if (record_now) {
        pr.my.check_point(s_new);
        if (!simplex.contains(w))
          throw NonFiniteError("robust_bilevel: weights left the simplex");
        const double obj = pr.f(w, s_new);
        const double inner_res = pr.my.norm(s_new, pr.grad_y_g(w, s_new));
        if (!std::isfinite(obj) || !std::isfinite(map_norm) || !std::isfinite(inner_res))
          throw NonFiniteError("solver: non-finite trace values");
        trace.records.push_back({k, timer.seconds(), obj, map_norm, inner_res});
      }
      if (observer) observer(k, w, s_new, est.h);
      if (!std::isfinite(map_norm))
        throw NonFiniteError("robust_bilevel: non-finite gradient mapping");

      w = w_next;
      s = s_new;
      if (cfg.grad_tol > 0 && map_norm <= cfg.grad_tol) break;
    } catch (const NonFiniteError& e) {
      trace.aborted = true;
      trace.abort_reason = e.what();
      break;
    } catch (const NotPositiveDefiniteError& e) {
      trace.aborted = true;
      trace.abort_reason = e.what();
      break;
    }
  }
  trace.final_x = w;
  trace.final_y = s;
  return trace;
}

}  // namespace riebo
