#pragma once

// Experiment execution: dispatches a RunConfig to the matching solver, runs
// the seed list in parallel (worker count capped by RIEBO_THREADS), and writes
// per-seed traces, the aggregate trace, and a metadata echo of the effective
// configuration. Also hosts the self-check suite behind `validate`.

#include <atomic>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include "riebo/hypergrad.hpp"
#include "riebo/problems.hpp"
#include "riebo/run_config.hpp"
#include "riebo/solvers.hpp"
#include "riebo/trace_io.hpp"

namespace riebo {

inline constexpr int kExitOk = 0;
inline constexpr int kExitIo = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitNumeric = 3;

inline std::string build_identifier() {
#if defined(__clang_version__)
  return std::string("riebo 0.1.0 clang ") + __clang_version__;
#elif defined(__GNUC__)
  return std::string("riebo 0.1.0 gcc ") + std::to_string(__GNUC__) + "." +
         std::to_string(__GNUC_MINOR__) + "." + std::to_string(__GNUC_PATCHLEVEL__);
#else
  return "riebo 0.1.0";
#endif
}

// Worker cap: RIEBO_THREADS when set to a positive integer, otherwise the
// hardware concurrency (at least 1 either way).
inline int worker_cap() {
  if (const char* env = std::getenv("RIEBO_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end && *end == '\0' && v >= 1) return static_cast<int>(v);
  }
  const unsigned hc = std::thread::hardware_concurrency();
  return hc >= 1 ? static_cast<int>(hc) : 1;
}

struct SeedRunResult {
  std::uint64_t seed = 0;
  std::vector<TraceRecord> records;
  bool aborted = false;
  std::string abort_reason;
  std::vector<std::string> warnings;
};

namespace detail {

// Runs fn(i) for i in [0, count) on min(worker_cap, count) threads. The first
// exception (if any) is rethrown on the calling thread after all workers join.
inline void parallel_for_each_seed(int count, const std::function<void(int)>& fn) {
  if (count <= 0) return;
  const int workers = std::min(worker_cap(), count);
  if (workers <= 1) {
    for (int i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(workers));
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(workers));
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (int i = next.fetch_add(1); i < count; i = next.fetch_add(1)) fn(i);
      } catch (...) {
        errors[static_cast<std::size_t>(w)] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
}

template <typename MX, typename MY>
SeedRunResult to_seed_result(std::uint64_t seed, BilevelTrace<MX, MY>&& trace) {
  return SeedRunResult{seed, std::move(trace.records), trace.aborted,
                       std::move(trace.abort_reason), std::move(trace.warnings)};
}

}  // namespace detail

// One seed of the configured experiment. Toy experiments share a fixed
// instance (generator seed 42); robust experiments draw fresh data per seed so
// the aggregate averages over datasets as well as solver randomness.
inline SeedRunResult run_one_seed(const RunConfig& cfg, std::uint64_t seed) {
  SolverConfig solver = cfg.solver;
  solver.seed = seed;
  if (cfg.experiment == "toy-riebo" || cfg.experiment == "toy-riesbo") {
    const ToyQuadratic toy = make_toy_quadratic(cfg.d, cfg.n, cfg.kappa, 42);
    const auto pr = toy.oracles(cfg.sigma);
    const Vecd x0 = Vecd::Ones(cfg.d);
    const Vecd y0 = Vecd::Zero(cfg.n);
    if (cfg.experiment == "toy-riebo") {
      solver.estimator.kind = HypergradKind::aid_cg;
      return detail::to_seed_result(seed, riebo(pr, x0, y0, solver));
    }
    return detail::to_seed_result(seed, riesbo(pr, x0, y0, solver));
  }
  if (cfg.experiment == "robust-karcher" || cfg.experiment == "robust-mle") {
    const RobustInstance inst =
        cfg.experiment == "robust-karcher"
            ? make_robust_karcher(cfg.d, cfg.n, cfg.conditioning, cfg.lambda, seed)
            : make_robust_mle(cfg.d, cfg.n, cfg.conditioning, cfg.lambda, seed);
    const auto pr = make_robust_oracles(inst);
    const Vecd w0 = Vecd::Constant(cfg.n, 1.0 / static_cast<double>(cfg.n));
    const Matd s0 = inst.default_start();
    return detail::to_seed_result(seed, robust_bilevel(pr, w0, s0, solver));
  }
  throw ConfigError("run_one_seed: experiment has no seed runner: " + cfg.experiment);
}

inline std::string seed_trace_path(const std::string& out, std::uint64_t seed) {
  return out + "/trace_seed" + std::to_string(seed) + ".csv";
}

// Executes every seed, writes trace_seed<seed>.csv per seed plus
// trace_aggregate.csv and metadata.json under cfg.out. Returns kExitOk, or
// kExitNumeric when any seed aborted on a numeric failure (partial traces are
// still flushed), kExitConfig/kExitIo on configuration or filesystem errors.
inline int run_experiment(const RunConfig& cfg, std::ostream& err) {
  try {
    cfg.validate();
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kExitConfig;
  }

  std::vector<SeedRunResult> results(cfg.seeds.size());
  try {
    detail::parallel_for_each_seed(static_cast<int>(cfg.seeds.size()), [&](int i) {
      results[static_cast<std::size_t>(i)] =
          run_one_seed(cfg, cfg.seeds[static_cast<std::size_t>(i)]);
    });
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitNumeric;
  }

  try {
    std::filesystem::create_directories(cfg.out);
    std::vector<std::vector<TraceRecord>> per_seed;
    per_seed.reserve(results.size());
    for (const auto& r : results) {
      write_trace_csv(seed_trace_path(cfg.out, r.seed), r.records);
      per_seed.push_back(r.records);
    }
    write_trace_csv(cfg.out + "/trace_aggregate.csv", aggregate_traces(per_seed));

    json meta;
    meta["build"] = build_identifier();
    meta["config"] = to_json(cfg);
    std::ofstream mf(cfg.out + "/metadata.json");
    if (!mf) throw std::runtime_error("cannot open " + cfg.out + "/metadata.json");
    mf << meta.dump(2) << "\n";
    if (!mf.good()) throw std::runtime_error("failed writing metadata.json");
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitIo;
  }

  int code = kExitOk;
  for (const auto& r : results) {
    for (const auto& w : r.warnings) err << "warning: seed " << r.seed << ": " << w << "\n";
    if (r.aborted) {
      err << "error: seed " << r.seed << " aborted: " << r.abort_reason << "\n";
      code = kExitNumeric;
    }
  }
  return code;
}

// ---------------------------------------------------------------------------
// Self-check suite
// ---------------------------------------------------------------------------

namespace detail {

struct CheckReporter {
  std::ostream& os;
  bool all_ok = true;

  void run(const std::string& name, const std::function<void()>& body) {
    try {
      body();
      os << "ok: " << name << "\n";
    } catch (const std::exception& e) {
      all_ok = false;
      os << "FAIL: " << name << ": " << e.what() << "\n";
    }
  }
};

inline void check(bool cond, const std::string& detail) {
  if (!cond) throw std::runtime_error(detail);
}

inline void check_close(double a, double b, double tol, const std::string& what) {
  if (!(std::abs(a - b) <= tol))
    throw std::runtime_error(what + ": |" + std::to_string(a) + " - " + std::to_string(b) +
                             "| > " + std::to_string(tol));
}

}  // namespace detail

// Slow, printed diagnostics covering the geometric and solver invariants that
// must hold on any build of this library. `fast` trims trial counts for smoke
// use. Returns true when every check passed.
inline bool run_validation_suite(bool fast, std::ostream& os) {
  using detail::check;
  using detail::check_close;
  detail::CheckReporter rep{os};
  const int trials = fast ? 3 : 10;
  const Eigen::Index d = fast ? 3 : 5;

  SpdManifold<double> spd(d);
  Rng rng(20260814);

  auto random_spd_point = [&](Rng& r) {
    Matd z = r.normal_mat(d, d) * 0.3;
    Matd s = symmetrize(Matd(z * z.transpose())) + Matd::Identity(d, d);
    return s;
  };

  rep.run("spd exp/log round trip", [&] {
    for (int t = 0; t < trials; ++t) {
      const Matd s = random_spd_point(rng);
      const auto v = spd.random_tangent(s, rng);
      const Matd q = spd.exp_map(s, v);
      const auto back = spd.log_map(s, q);
      check((back.dir - v.dir).norm() <= 1e-9 * (1.0 + v.dir.norm()),
            "log(exp(v)) != v");
      const Matd p2 = spd.exp_map(s, back);
      check((p2 - q).norm() <= 1e-9 * (1.0 + q.norm()), "exp(log(q)) != q");
    }
  });

  rep.run("spd exponential preserves speed", [&] {
    for (int t = 0; t < trials; ++t) {
      const Matd s = random_spd_point(rng);
      const auto v = spd.random_tangent(s, rng);
      const double dist = spd.distance(s, spd.exp_map(s, v));
      check_close(dist, spd.norm(s, v), 1e-9 * (1.0 + spd.norm(s, v)),
                  "dist(s, exp_s(v)) vs |v|");
    }
  });

  rep.run("spd transport is a metric isometry", [&] {
    for (int t = 0; t < trials; ++t) {
      const Matd s = random_spd_point(rng);
      const Matd q = random_spd_point(rng);
      const auto u = spd.random_tangent(s, rng);
      const auto v = spd.random_tangent(s, rng);
      const auto tu = spd.parallel_transport(s, q, u);
      const auto tv = spd.parallel_transport(s, q, v);
      check_close(spd.inner(q, tu, tv), spd.inner(s, u, v),
                  1e-9 * (1.0 + std::abs(spd.inner(s, u, v))), "inner product drift");
    }
  });

  rep.run("spd distance: symmetry, positivity, triangle inequality", [&] {
    for (int t = 0; t < trials; ++t) {
      const Matd a = random_spd_point(rng);
      const Matd b = random_spd_point(rng);
      const Matd c = random_spd_point(rng);
      check_close(spd.distance(a, b), spd.distance(b, a), 1e-10, "symmetry");
      check(spd.distance(a, a) <= 1e-9, "dist(a,a) != 0");
      check(spd.distance(a, b) > 0, "dist(a,b) must be positive for a != b");
      check(spd.distance(a, c) <= spd.distance(a, b) + spd.distance(b, c) + 1e-10,
            "triangle inequality violated");
    }
  });

  rep.run("matrix-log directional derivative: linearity and method agreement", [&] {
    for (int t = 0; t < trials; ++t) {
      const Matd y = random_spd_point(rng);
      const Matd e1 = rng.normal_mat(d, d);
      const Matd e2 = rng.normal_mat(d, d);
      const Matd lhs = frechet_log(y, Matd(2.0 * e1 + 3.0 * e2), FrechetMethod::daleckii_krein);
      const Matd rhs = 2.0 * frechet_log(y, e1, FrechetMethod::daleckii_krein) +
                       3.0 * frechet_log(y, e2, FrechetMethod::daleckii_krein);
      check((lhs - rhs).norm() <= 1e-9 * (1.0 + rhs.norm()), "not linear in the direction");
      const Matd blockwise = frechet_log(y, e1, FrechetMethod::blockwise);
      const Matd dk = frechet_log(y, e1, FrechetMethod::daleckii_krein);
      check((blockwise - dk).norm() <= 1e-8 * (1.0 + dk.norm()),
            "eigen-kernel and block-matrix methods disagree");
    }
  });

  rep.run("karcher hessian: self-adjoint and positive near the data", [&] {
    Rng r(7);
    for (int t = 0; t < trials; ++t) {
      const Matd a = random_spd_point(r);
      const Matd s = random_spd_point(r);
      const auto u = spd.random_tangent(s, r);
      const auto v = spd.random_tangent(s, r);
      const auto hu = karcher_rhess_apply(s, a, u);
      const auto hv = karcher_rhess_apply(s, a, v);
      check_close(spd.inner(s, hu, v), spd.inner(s, u, hv),
                  1e-8 * (1.0 + std::abs(spd.inner(s, u, hv))), "not self-adjoint");
      const auto w = spd.random_tangent(a, r);
      const auto hw = karcher_rhess_apply(a, a, w);
      check(spd.inner(a, hw, w) >= 0.99 * spd.inner(a, w, w),
            "curvature below 1 at the datum");
    }
  });

  rep.run("gaussian-likelihood hessian: self-adjoint, positive at the optimum", [&] {
    Rng r(11);
    for (int t = 0; t < trials; ++t) {
      const RobustInstance inst =
          make_robust_mle(d, static_cast<int>(3 * d), 3.0, 1.0, 100 + static_cast<unsigned>(t));
      const Vecd w = Vecd::Constant(inst.n, 1.0 / inst.n);
      const auto low = robust_lower_oracles(inst, w);
      const Matd s_opt = inst.weighted_second_moment(w);
      const auto u = spd.random_tangent(s_opt, r);
      const auto v = spd.random_tangent(s_opt, r);
      const auto hu = low.hvp(s_opt, u);
      const auto hv = low.hvp(s_opt, v);
      check_close(spd.inner(s_opt, hu, v), spd.inner(s_opt, u, hv),
                  1e-8 * (1.0 + std::abs(spd.inner(s_opt, u, hv))), "not self-adjoint");
      check(spd.inner(s_opt, hu, u) >= 0.2 * spd.inner(s_opt, u, u),
            "curvature below 1/4 at the stationary point");
      check(low.grad(s_opt).dir.norm() <= 1e-9 * (1.0 + s_opt.norm()),
            "gradient not zero at the weighted second moment");
    }
  });

  rep.run("cross-derivative adjoint identity (toy)", [&] {
    const ToyQuadratic toy = make_toy_quadratic(4, 3, 5.0, 3);
    Rng r(13);
    const auto pr = toy.oracles(0.0);
    const Vecd x = r.normal_vec(4);
    const Vecd y = r.normal_vec(3);
    const double gap = adjointness_check(pr, x, y, trials, r);
    check(gap <= 1e-10, "adjoint gap " + std::to_string(gap));
  });

  rep.run("cross-derivative adjoint identity (robust)", [&] {
    for (auto kind : {RobustKind::karcher, RobustKind::mle}) {
      const RobustInstance inst = kind == RobustKind::karcher
                                      ? make_robust_karcher(3, 4, 4.0, 1.0, 5)
                                      : make_robust_mle(3, 12, 4.0, 1.0, 5);
      const auto pr = make_robust_oracles(inst);
      Rng r(17);
      Vecd w = Vecd::Constant(inst.n, 1.0 / inst.n);
      const Matd s = inst.default_start();
      const double gap = adjointness_check(pr, w, s, trials, r);
      check(gap <= 1e-9, "adjoint gap " + std::to_string(gap));
    }
  });

  rep.run("simplex projection: feasibility, idempotence, known points", [&] {
    Rng r(19);
    for (int t = 0; t < 50 * trials; ++t) {
      const Vecd v = 3.0 * r.normal_vec(6);
      const Vecd p = project_simplex(v);
      SimplexSet simplex(6);
      check(simplex.contains(p), "projection left the simplex");
      check((project_simplex(p) - p).norm() <= 1e-12, "not idempotent");
    }
    Vecd two_zero(2);
    two_zero << 2.0, 0.0;
    Vecd e1(2);
    e1 << 1.0, 0.0;
    check((project_simplex(two_zero) - e1).norm() <= 1e-15, "proj(2,0) != (1,0)");
  });

  rep.run("gradient mapping vanishes at a projected fixed point", [&] {
    Vecd w(3);
    w << 0.2, 0.3, 0.5;
    const Vecd next = project_simplex(w - 0.1 * Vecd::Zero(3));
    check(gradient_mapping(w, next, 0.1).norm() <= 1e-14, "nonzero at fixed point");
  });

  rep.run("randomized inverse estimator matches its truncated-series mean", [&] {
    const ToyQuadratic toy = make_toy_quadratic(3, 3, 4.0, 9);
    const auto pr = toy.oracles(0.0);
    EuclideanManifold<double> man(3);
    const Vecd x = Vecd::Ones(3);
    const Vecd y = toy.y_star(x);
    const auto rhs = pr.grad_y_f(x, y);
    const double eta = 1.0 / pr.meta.l_g1;
    const int q_terms = 6;
    const auto mean_target = neumann_partial_sum_apply(
        man, y, [&](const typename EuclideanManifold<double>::Tangent& v) {
          return pr.hvp(x, y, v);
        },
        rhs, eta, q_terms);
    Vecd acc = Vecd::Zero(3);
    const int draws = fast ? 2000 : 20000;
    Rng r(23);
    for (int i = 0; i < draws; ++i) {
      Rng ri = r.fork();
      const auto est = neumann_inverse_apply(
          man, y,
          [&](const typename EuclideanManifold<double>::Tangent& v, Rng&) {
            return pr.hvp(x, y, v);
          },
          rhs, eta, q_terms, ri);
      acc += est.dir;
    }
    acc /= static_cast<double>(draws);
    const double err_norm = (acc - mean_target.dir).norm();
    check(err_norm <= (fast ? 0.15 : 0.05) * (1.0 + mean_target.dir.norm()),
          "monte-carlo mean off by " + std::to_string(err_norm));
  });

  rep.run("deterministic solver: exact repeatability across runs", [&] {
    const ToyQuadratic toy = make_toy_quadratic(4, 4, 6.0, 21);
    const auto pr = toy.oracles(0.0);
    SolverConfig cfg;
    cfg.K = fast ? 10 : 40;
    cfg.T = 6;
    cfg.alpha = 0.05;
    cfg.beta = 1.0 / pr.meta.l_g1;
    cfg.estimator.cg_steps = 5;
    cfg.seed = 3;
    const auto t1 = riebo(pr, Vecd::Ones(4), Vecd::Zero(4), cfg);
    const auto t2 = riebo(pr, Vecd::Ones(4), Vecd::Zero(4), cfg);
    check(!t1.aborted && !t2.aborted, "run aborted");
    check(t1.records.size() == t2.records.size(), "trace lengths differ");
    for (std::size_t i = 0; i < t1.records.size(); ++i) {
      check(t1.records[i].objective == t2.records[i].objective &&
                t1.records[i].grad_norm == t2.records[i].grad_norm &&
                t1.records[i].inner_residual == t2.records[i].inner_residual,
            "records differ at row " + std::to_string(i));
    }
  });

  rep.run("implicit-differentiation estimate matches the analytic gradient", [&] {
    const ToyQuadratic toy = make_toy_quadratic(5, 5, 8.0, 27);
    const auto pr = toy.oracles(0.0);
    Rng r(29);
    for (int t = 0; t < trials; ++t) {
      const Vecd x = r.normal_vec(5);
      const Vecd y = toy.y_star(x);
      const auto exact = exact_hypergradient(pr, x, y);
      const Vecd analytic = toy.grad_phi(x);
      check((exact.h.dir - analytic).norm() <= 1e-8 * (1.0 + analytic.norm()),
            "solve-based and closed-form gradients disagree");
    }
  });

  return rep.all_ok;
}

}  // namespace riebo
