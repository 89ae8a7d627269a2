// Command-line front end.
//
//   riebo run --experiment <name> [--config file.json] [--key=value ...]
//   riebo validate [--fast]
//
// Flags override config-file values, which override the experiment preset.
// Exit codes: 0 success, 1 I/O failure, 2 configuration error (including
// unknown experiment names and unknown config keys), 3 numeric failure.

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "riebo/riebo.hpp"

namespace {

std::vector<std::uint64_t> parse_seed_list(const std::string& text) {
  std::vector<std::uint64_t> seeds;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) throw riebo::ConfigError("--seeds: empty entry in list");
    std::size_t used = 0;
    unsigned long long v = 0;
    try {
      v = std::stoull(item, &used);
    } catch (const std::exception&) {
      throw riebo::ConfigError("--seeds: not an integer: " + item);
    }
    if (used != item.size()) throw riebo::ConfigError("--seeds: not an integer: " + item);
    seeds.push_back(static_cast<std::uint64_t>(v));
  }
  if (seeds.empty()) throw riebo::ConfigError("--seeds: empty list");
  return seeds;
}

riebo::json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file: " + path);
  riebo::json j;
  try {
    in >> j;
  } catch (const riebo::json::exception& e) {
    throw riebo::ConfigError(std::string("config file is not valid JSON: ") + e.what());
  }
  return j;
}

struct RunFlags {
  std::string experiment, config_path, seeds_text, out;
  int d = 0, n = 0, K = 0, T = 0, N = 0, Q = 0, record_every = 0;
  double kappa = 0, lambda = 0, sigma = 0, conditioning = 0, alpha = 0, beta = 0, eta = 0,
         grad_tol = 0;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bilevel optimization on Riemannian manifolds"};
  app.require_subcommand(1);

  RunFlags fl;
  CLI::App* run = app.add_subcommand("run", "Run an experiment and write traces");
  run->add_option("--experiment", fl.experiment, "Experiment name");
  run->add_option("--config", fl.config_path, "JSON config file");
  run->add_option("--d", fl.d, "Dimension (upper variable / matrix size)");
  run->add_option("--n", fl.n, "Count (lower dimension / datum count)");
  run->add_option("--kappa", fl.kappa, "Lower-level condition number (toy)");
  run->add_option("--lambda", fl.lambda, "Robust regularization weight");
  run->add_option("--sigma", fl.sigma, "Sampler noise scale (toy)");
  run->add_option("--conditioning", fl.conditioning, "Robust data spread");
  run->add_option("--K", fl.K, "Outer iterations");
  run->add_option("--T", fl.T, "Inner gradient steps per outer iteration");
  run->add_option("--N", fl.N, "Linear-solve iterations (CG)");
  run->add_option("--Q", fl.Q, "Truncated-series terms");
  run->add_option("--alpha", fl.alpha, "Upper step size");
  run->add_option("--beta", fl.beta, "Lower step size");
  run->add_option("--eta", fl.eta, "Series scale (default 1/l_g1)");
  run->add_option("--grad-tol", fl.grad_tol, "Early-exit gradient norm");
  run->add_option("--record-every", fl.record_every, "Trace recording stride");
  run->add_option("--seeds", fl.seeds_text, "Comma-separated seed list");
  run->add_option("--out", fl.out, "Output directory");

  bool fast = false;
  CLI::App* validate = app.add_subcommand("validate", "Run the self-check suite");
  validate->add_flag("--fast", fast, "Smaller dimensions and trial counts");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : riebo::kExitConfig;
  }

  if (validate->parsed()) {
    const bool ok = riebo::run_validation_suite(fast, std::cout);
    std::cout << (ok ? "validation passed" : "validation FAILED") << "\n";
    return ok ? riebo::kExitOk : riebo::kExitNumeric;
  }

  try {
    riebo::ConfigOverlay flags;
    if (run->count("--experiment")) flags.experiment = fl.experiment;
    if (run->count("--d")) flags.d = fl.d;
    if (run->count("--n")) flags.n = fl.n;
    if (run->count("--kappa")) flags.kappa = fl.kappa;
    if (run->count("--lambda")) flags.lambda = fl.lambda;
    if (run->count("--sigma")) flags.sigma = fl.sigma;
    if (run->count("--conditioning")) flags.conditioning = fl.conditioning;
    if (run->count("--K")) flags.K = fl.K;
    if (run->count("--T")) flags.T = fl.T;
    if (run->count("--N")) flags.N = fl.N;
    if (run->count("--Q")) flags.Q = fl.Q;
    if (run->count("--alpha")) flags.alpha = fl.alpha;
    if (run->count("--beta")) flags.beta = fl.beta;
    if (run->count("--eta")) flags.eta = fl.eta;
    if (run->count("--grad-tol")) flags.grad_tol = fl.grad_tol;
    if (run->count("--record-every")) flags.record_every = fl.record_every;
    if (run->count("--seeds")) flags.seeds = parse_seed_list(fl.seeds_text);
    if (run->count("--out")) flags.out = fl.out;

    if (!fl.config_path.empty()) {
      riebo::ConfigOverlay file = riebo::overlay_from_json(load_json_file(fl.config_path));
      flags.merge_over(file);
    }

    const riebo::RunConfig cfg = riebo::finalize_config(flags);
    if (cfg.experiment == "validate") {
      const bool ok = riebo::run_validation_suite(false, std::cout);
      std::cout << (ok ? "validation passed" : "validation FAILED") << "\n";
      return ok ? riebo::kExitOk : riebo::kExitNumeric;
    }
    return riebo::run_experiment(cfg, std::cerr);
  } catch (const riebo::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return riebo::kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return riebo::kExitIo;
  }
}
