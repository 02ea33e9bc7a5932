#pragma once

#include <chrono>
#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "specal/pipeline.hpp"

namespace specal {

namespace cli {

struct Options {
  std::string config_path;
  std::string out_dir = "artifacts";
  bool force = false;
  std::optional<int> q;
  std::optional<double> lambda_y;
  std::optional<int> samples;
  std::optional<std::uint64_t> seed_design_train, seed_design_test, seed_noise,
      seed_mcmc, seed_mle;
  // design-only
  std::optional<int> m;
  std::string kind;
  std::optional<std::uint64_t> seed;
  // calibrate-only
  std::string case_filter = "all";
};

inline PipelineConfig resolve_config(const Options& opt) {
  PipelineConfig cfg;
  if (!opt.config_path.empty()) cfg = load_config(opt.config_path);
  // Flags win over the config file.
  if (opt.q) cfg.q = *opt.q;
  if (opt.lambda_y) cfg.lambda_y = *opt.lambda_y;
  if (opt.samples) cfg.n_samples = *opt.samples;
  if (opt.seed_design_train) cfg.seeds.design_train = *opt.seed_design_train;
  if (opt.seed_design_test) cfg.seeds.design_test = *opt.seed_design_test;
  if (opt.seed_noise) cfg.seeds.noise = *opt.seed_noise;
  if (opt.seed_mcmc) cfg.seeds.mcmc = *opt.seed_mcmc;
  if (opt.seed_mle) cfg.seeds.mle = *opt.seed_mle;
  cfg.validate();
  return cfg;
}

inline void add_common_options(CLI::App* cmd, Options& opt) {
  cmd->add_option("--config", opt.config_path, "JSON config file");
  cmd->add_option("--out", opt.out_dir, "artifact directory")
      ->capture_default_str();
  cmd->add_flag("--force", opt.force, "ignore config-hash staleness checks");
  cmd->add_option("--q", opt.q, "number of principal components");
  cmd->add_option("--lambda-y", opt.lambda_y, "observation noise precision");
  cmd->add_option("--samples", opt.samples, "post-burn-in MCMC samples per case");
  cmd->add_option("--seed-design-train", opt.seed_design_train,
                  "training design seed");
  cmd->add_option("--seed-design-test", opt.seed_design_test, "test design seed");
  cmd->add_option("--seed-noise", opt.seed_noise, "observation noise seed");
  cmd->add_option("--seed-mcmc", opt.seed_mcmc, "MCMC seed");
  cmd->add_option("--seed-mle", opt.seed_mle, "hyperparameter fit seed");
}

}  // namespace cli

/// Entry point behind tools/specal.cpp, separated so tests can drive the
/// command surface in-process. Exit codes: 0 success, 2 usage error,
/// 3 integrity error, 1 anything else.
inline int run_cli(int argc, const char* const* argv) {
  using Clock = std::chrono::steady_clock;
  cli::Options opt;
  CLI::App app{"Spectrum disaggregation pipeline: surrogate simulation, "
               "SVD-reduced GP emulation, Bayesian calibration"};
  app.require_subcommand(1);

  auto* cmd_design = app.add_subcommand("design", "generate Latin hypercube designs");
  cli::add_common_options(cmd_design, opt);
  auto* m_opt = cmd_design->add_option("--m", opt.m, "design size for --kind");
  auto* kind_opt =
      cmd_design
          ->add_option("--kind", opt.kind, "which design to generate")
          ->check(CLI::IsMember({"training", "test"}));
  auto* seed_opt = cmd_design->add_option("--seed", opt.seed, "seed for --kind");
  m_opt->needs(kind_opt);
  seed_opt->needs(kind_opt);

  auto* cmd_simulate =
      app.add_subcommand("simulate", "run the forward surrogate over the designs");
  cli::add_common_options(cmd_simulate, opt);
  auto* cmd_reduce =
      app.add_subcommand("reduce", "log-transform, standardize, build the SVD basis");
  cli::add_common_options(cmd_reduce, opt);
  auto* cmd_fit =
      app.add_subcommand("fit", "fit the per-weight GP emulators by maximum likelihood");
  cli::add_common_options(cmd_fit, opt);
  auto* cmd_calibrate =
      app.add_subcommand("calibrate", "MCMC posterior sampling for the test cases");
  cli::add_common_options(cmd_calibrate, opt);
  cmd_calibrate->add_option("--case", opt.case_filter,
                            "'all', a case name (test_07, na_03, cu_24), or a "
                            "two-element index")
      ->capture_default_str();
  auto* cmd_evaluate =
      app.add_subcommand("evaluate", "emulator metrics and calibration reports");
  cli::add_common_options(cmd_evaluate, opt);
  auto* cmd_run_all = app.add_subcommand("run-all", "all stages in order");
  cli::add_common_options(cmd_run_all, opt);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    const PipelineConfig base = cli::resolve_config(opt);
    ArtifactStore store(opt.out_dir);
    const auto t0 = Clock::now();
    auto report = [&](const char* stage) {
      const double secs =
          std::chrono::duration<double>(Clock::now() - t0).count();
      std::cout << stage << ": done in " << secs << " s (out: " << opt.out_dir
                << ")\n";
    };

    if (cmd_design->parsed()) {
      PipelineConfig cfg = base;
      if (opt.kind.empty()) {
        run_design(cfg, store);
      } else {
        const DesignKind kind = opt.kind == "training" ? DesignKind::training
                                                       : DesignKind::test;
        if (opt.m) (kind == DesignKind::training ? cfg.m_train : cfg.m_test) = *opt.m;
        if (opt.seed)
          (kind == DesignKind::training ? cfg.seeds.design_train
                                        : cfg.seeds.design_test) = *opt.seed;
        cfg.validate();
        run_design_kind(cfg, store, kind);
      }
      report("design");
    } else if (cmd_simulate->parsed()) {
      run_simulate(base, store, opt.force);
      report("simulate");
    } else if (cmd_reduce->parsed()) {
      run_reduce(base, store, opt.force);
      report("reduce");
    } else if (cmd_fit->parsed()) {
      run_fit(base, store, opt.force);
      report("fit");
    } else if (cmd_calibrate->parsed()) {
      run_calibrate(base, store, opt.force, opt.case_filter);
      report("calibrate");
    } else if (cmd_evaluate->parsed()) {
      run_evaluate(base, store, opt.force);
      report("evaluate");
    } else if (cmd_run_all->parsed()) {
      run_all(base, store, opt.force);
      report("run-all");
    }
    return 0;
  } catch (const IntegrityError& e) {
    std::cerr << "integrity error: " << e.what() << "\n";
    return 3;
  } catch (const StateError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const DomainError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace specal
