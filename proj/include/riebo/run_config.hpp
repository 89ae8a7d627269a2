#pragma once

// Experiment configuration: JSON documents and --key=value flags sharing one
// key set, experiment presets, strict unknown-key rejection, and a lossless
// effective-config echo (emit -> parse -> identical).

#include <json.hpp>

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "riebo/common.hpp"
#include "riebo/problems.hpp"
#include "riebo/solvers.hpp"

namespace riebo {

using nlohmann::json;

struct RunConfig {
  std::string experiment;   // toy-riebo | toy-riesbo | robust-karcher | robust-mle | validate
  int d = 0;                // toy: upper dimension; robust: SPD matrix dimension
  int n = 0;                // toy: lower dimension; robust: datum count
  double kappa = 1.0;       // toy lower-level condition number
  double lambda = 1.0;      // robust regularization weight
  double sigma = 0.0;       // toy sampler noise scale
  double conditioning = 1.0;  // robust data spread
  SolverConfig solver;
  std::vector<std::uint64_t> seeds;
  std::string out;

  bool needs_problem_fields() const { return experiment != "validate"; }

  void validate() const {
    if (experiment != "toy-riebo" && experiment != "toy-riesbo" &&
        experiment != "robust-karcher" && experiment != "robust-mle" &&
        experiment != "validate")
      throw ConfigError("unknown experiment: " + experiment);
    if (!needs_problem_fields()) return;
    if (d <= 0 || n <= 0) throw ConfigError("RunConfig: d and n must be positive");
    if (kappa < 1.0) throw ConfigError("RunConfig: kappa must be >= 1");
    if (lambda < 0 || sigma < 0) throw ConfigError("RunConfig: lambda, sigma must be >= 0");
    if (conditioning < 1.0) throw ConfigError("RunConfig: conditioning must be >= 1");
    if (seeds.empty()) throw ConfigError("RunConfig: seeds must be non-empty");
    if (out.empty()) throw ConfigError("RunConfig: out path must be non-empty");
    solver.validate();
  }

  bool operator==(const RunConfig& o) const {
    return experiment == o.experiment && d == o.d && n == o.n && kappa == o.kappa &&
           lambda == o.lambda && sigma == o.sigma && conditioning == o.conditioning &&
           solver.K == o.solver.K && solver.T == o.solver.T && solver.alpha == o.solver.alpha &&
           solver.beta == o.solver.beta && solver.record_every == o.solver.record_every &&
           solver.grad_tol == o.solver.grad_tol &&
           solver.estimator.cg_steps == o.solver.estimator.cg_steps &&
           solver.estimator.neumann_terms == o.solver.estimator.neumann_terms &&
           solver.estimator.neumann_scale == o.solver.estimator.neumann_scale &&
           seeds == o.seeds && out == o.out;
  }
};

// Partial configuration from one source (file or flags); sources merge with
// flags overriding file values, then presets fill what remains.
struct ConfigOverlay {
  std::optional<std::string> experiment;
  std::optional<int> d, n, K, T, N, Q, record_every;
  std::optional<double> kappa, lambda, sigma, conditioning, alpha, beta, eta, grad_tol;
  std::optional<std::vector<std::uint64_t>> seeds;
  std::optional<std::string> out;

  void merge_over(const ConfigOverlay& weaker) {
    auto pick = [](auto& strong, const auto& weak) {
      if (!strong && weak) strong = weak;
    };
    pick(experiment, weaker.experiment);
    pick(d, weaker.d);
    pick(n, weaker.n);
    pick(K, weaker.K);
    pick(T, weaker.T);
    pick(N, weaker.N);
    pick(Q, weaker.Q);
    pick(record_every, weaker.record_every);
    pick(kappa, weaker.kappa);
    pick(lambda, weaker.lambda);
    pick(sigma, weaker.sigma);
    pick(conditioning, weaker.conditioning);
    pick(alpha, weaker.alpha);
    pick(beta, weaker.beta);
    pick(eta, weaker.eta);
    pick(grad_tol, weaker.grad_tol);
    pick(seeds, weaker.seeds);
    pick(out, weaker.out);
  }
};

inline ConfigOverlay overlay_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("config document must be a JSON object");
  ConfigOverlay o;
  for (const auto& [key, value] : j.items()) {
    try {
      if (key == "experiment") o.experiment = value.get<std::string>();
      else if (key == "d") o.d = value.get<int>();
      else if (key == "n") o.n = value.get<int>();
      else if (key == "K") o.K = value.get<int>();
      else if (key == "T") o.T = value.get<int>();
      else if (key == "N") o.N = value.get<int>();
      else if (key == "Q") o.Q = value.get<int>();
      else if (key == "record-every") o.record_every = value.get<int>();
      else if (key == "kappa") o.kappa = value.get<double>();
      else if (key == "lambda") o.lambda = value.get<double>();
      else if (key == "sigma") o.sigma = value.get<double>();
      else if (key == "conditioning") o.conditioning = value.get<double>();
      else if (key == "alpha") o.alpha = value.get<double>();
      else if (key == "beta") o.beta = value.get<double>();
      else if (key == "eta") o.eta = value.get<double>();
      else if (key == "grad-tol") o.grad_tol = value.get<double>();
      else if (key == "seeds") o.seeds = value.get<std::vector<std::uint64_t>>();
      else if (key == "out") o.out = value.get<std::string>();
      else throw ConfigError("unknown config key: " + key);
    } catch (const json::exception& e) {
      throw ConfigError("bad value for config key '" + key + "': " + e.what());
    }
  }
  return o;
}

// Composed-objective smoothness estimate for the toy family (unit l_f1,
// zero l_g2): sqrt(1 + kappa^2) + kappa.
inline double toy_phi_smoothness(double kappa) {
  SmoothnessMeta meta;
  meta.mu = 1.0;
  meta.l_g1 = kappa;
  meta.l_f1 = 1.0;
  meta.l_f0 = 0.0;
  meta.l_g2 = 0.0;
  return meta.phi_smoothness();
}

// Preset defaults plus derived step sizes. Derivations (applied only when the
// user did not pin the value): toy T = ceil(kappa), N = ceil(sqrt(kappa)),
// beta = 1/kappa, alpha = 1/(8 L), with alpha additionally divided by sqrt(K)
// for the stochastic run. The robust Karcher preset uses fixed constants; the
// robust MLE weight step is capped at 1/(4 d^2) because the curvature of the
// reduced weight objective scales with the squared per-sample Mahalanobis
// energy, whose mean is exactly d, so a dimension-independent step leaves the
// projected update's stability region once d grows.
inline RunConfig finalize_config(const ConfigOverlay& o) {
  if (!o.experiment) throw ConfigError("config requires an experiment name");
  RunConfig c;
  c.experiment = *o.experiment;

  const bool toy = c.experiment == "toy-riebo" || c.experiment == "toy-riesbo";
  const bool robust = c.experiment == "robust-karcher" || c.experiment == "robust-mle";
  if (!toy && !robust && c.experiment != "validate")
    throw ConfigError("unknown experiment: " + c.experiment);

  if (toy) {
    c.d = 5;
    c.n = 5;
    c.kappa = 10.0;
    c.lambda = 0.0;
    c.conditioning = 1.0;
    c.sigma = c.experiment == "toy-riesbo" ? 0.1 : 0.0;
    c.solver.K = c.experiment == "toy-riesbo" ? 4000 : 500;
    c.solver.estimator.neumann_terms = 20;
    c.solver.record_every = 1;
    c.seeds = c.experiment == "toy-riesbo"
                  ? std::vector<std::uint64_t>{0, 1, 2, 3, 4, 5, 6, 7, 8, 9}
                  : std::vector<std::uint64_t>{0};
  } else if (robust) {
    c.d = 10;
    c.n = c.experiment == "robust-karcher" ? 5 : 100;
    c.kappa = 1.0;
    c.lambda = 1.0;
    c.conditioning = c.experiment == "robust-karcher" ? 10.0 : 4.0;
    c.sigma = 0.0;
    c.solver.K = c.experiment == "robust-karcher" ? 200 : 1000;
    c.solver.T = 200;
    c.solver.alpha = 1e-2;
    c.solver.beta = 1e-1;
    c.solver.estimator.neumann_terms = 20;
    c.solver.estimator.cg_steps = 20;
    c.solver.estimator.kind = HypergradKind::neumann_det;
    c.solver.record_every = 1;
    c.seeds = {0, 1, 2, 3, 4};
  } else {
    c.seeds = {0};
  }
  c.out = "out/" + c.experiment;

  if (o.d) c.d = *o.d;
  if (o.n) c.n = *o.n;
  if (o.kappa) c.kappa = *o.kappa;
  if (o.lambda) c.lambda = *o.lambda;
  if (o.sigma) c.sigma = *o.sigma;
  if (o.conditioning) c.conditioning = *o.conditioning;
  if (o.K) c.solver.K = *o.K;
  if (o.record_every) c.solver.record_every = *o.record_every;
  if (o.grad_tol) c.solver.grad_tol = *o.grad_tol;
  if (o.N) c.solver.estimator.cg_steps = *o.N;
  if (o.Q) c.solver.estimator.neumann_terms = *o.Q;
  if (o.eta) c.solver.estimator.neumann_scale = *o.eta;
  if (o.seeds) c.seeds = *o.seeds;
  if (o.out) c.out = *o.out;

  if (toy) {
    c.solver.T = o.T ? *o.T : static_cast<int>(std::ceil(c.kappa));
    if (!o.N) c.solver.estimator.cg_steps = static_cast<int>(std::ceil(std::sqrt(c.kappa)));
    c.solver.beta = o.beta ? *o.beta : 1.0 / c.kappa;
    double alpha = 1.0 / (8.0 * toy_phi_smoothness(c.kappa));
    if (c.experiment == "toy-riesbo") alpha /= std::sqrt(static_cast<double>(c.solver.K));
    c.solver.alpha = o.alpha ? *o.alpha : alpha;
  } else {
    if (o.T) c.solver.T = *o.T;
    if (o.alpha)
      c.solver.alpha = *o.alpha;
    else if (c.experiment == "robust-mle")
      c.solver.alpha = std::min(1e-2, 0.25 / (static_cast<double>(c.d) * c.d));
    if (o.beta) c.solver.beta = *o.beta;
  }

  c.validate();
  return c;
}

inline json to_json(const RunConfig& c) {
  json j;
  j["experiment"] = c.experiment;
  j["d"] = c.d;
  j["n"] = c.n;
  j["kappa"] = c.kappa;
  j["lambda"] = c.lambda;
  j["sigma"] = c.sigma;
  j["conditioning"] = c.conditioning;
  j["K"] = c.solver.K;
  j["T"] = c.solver.T;
  j["N"] = c.solver.estimator.cg_steps;
  j["Q"] = c.solver.estimator.neumann_terms;
  j["alpha"] = c.solver.alpha;
  j["beta"] = c.solver.beta;
  j["eta"] = c.solver.estimator.neumann_scale;
  j["grad-tol"] = c.solver.grad_tol;
  j["record-every"] = c.solver.record_every;
  j["seeds"] = c.seeds;
  j["out"] = c.out;
  return j;
}

// Robust-instance recipe serialization: enough to regenerate the data
// deterministically.
inline json to_json(const RobustInstance& inst) {
  json j;
  j["kind"] = inst.kind == RobustKind::karcher ? "karcher" : "mle";
  j["d"] = inst.d;
  j["n"] = inst.n;
  j["lambda"] = inst.lambda;
  j["conditioning"] = inst.conditioning;
  j["seed"] = inst.seed;
  return j;
}

inline RobustInstance robust_instance_from_json(const json& j) {
  const std::string kind = j.at("kind").get<std::string>();
  const auto d = j.at("d").get<Eigen::Index>();
  const auto n = j.at("n").get<int>();
  const auto lambda = j.at("lambda").get<double>();
  const auto conditioning = j.at("conditioning").get<double>();
  const auto seed = j.at("seed").get<std::uint64_t>();
  if (kind == "karcher") return make_robust_karcher(d, n, conditioning, lambda, seed);
  if (kind == "mle") return make_robust_mle(d, n, conditioning, lambda, seed);
  throw ConfigError("robust instance: unknown kind " + kind);
}

}  // namespace riebo
