#pragma once

#include <cinttypes>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "specal/artifact_store.hpp"
#include "specal/calibration.hpp"
#include "specal/core.hpp"
#include "specal/design.hpp"
#include "specal/emulator.hpp"
#include "specal/evaluation.hpp"
#include "specal/reduction.hpp"
#include "specal/surrogate.hpp"
#include "specal/threading.hpp"

namespace specal {

struct PipelineSeeds {
  std::uint64_t design_train = 101;
  std::uint64_t design_test = 202;
  std::uint64_t noise = 303;
  std::uint64_t mcmc = 404;
  std::uint64_t mle = 505;
};

/// The experiment's operating point. Defaults reproduce the reference run:
/// 500 training and 25 test spectra, q = 15 components, noise precision 4,
/// 15,000 posterior samples per observation.
struct PipelineConfig {
  int n_eta = 2048;
  double lambda_min_nm = 250.0;
  double lambda_max_nm = 900.0;
  int m_train = 500;
  int m_test = 25;
  int q = 15;
  double lambda_y = 4.0;
  int n_samples = 15000;
  double nugget = 1e-8;
  PipelineSeeds seeds;
  std::string surrogate_config;  // optional path to a surrogate JSON file

  void validate() const {
    if (n_eta < 2 || m_train < 2 || m_test < 1 || q < 1 || n_samples < 1)
      throw DomainError("PipelineConfig: sizes must be positive");
    if (q > m_train)
      throw DomainError("PipelineConfig: q cannot exceed m_train");
    if (!(lambda_y > 0.0)) throw DomainError("PipelineConfig: lambda_y <= 0");
    if (nugget < 0.0) throw DomainError("PipelineConfig: nugget < 0");
  }
};

inline void to_json(nlohmann::json& j, const PipelineSeeds& s) {
  j = {{"design_train", s.design_train},
       {"design_test", s.design_test},
       {"noise", s.noise},
       {"mcmc", s.mcmc},
       {"mle", s.mle}};
}

inline void from_json(const nlohmann::json& j, PipelineSeeds& s) {
  if (j.contains("design_train")) j.at("design_train").get_to(s.design_train);
  if (j.contains("design_test")) j.at("design_test").get_to(s.design_test);
  if (j.contains("noise")) j.at("noise").get_to(s.noise);
  if (j.contains("mcmc")) j.at("mcmc").get_to(s.mcmc);
  if (j.contains("mle")) j.at("mle").get_to(s.mle);
}

inline void to_json(nlohmann::json& j, const PipelineConfig& c) {
  j = {{"n_eta", c.n_eta},
       {"lambda_min_nm", c.lambda_min_nm},
       {"lambda_max_nm", c.lambda_max_nm},
       {"m_train", c.m_train},
       {"m_test", c.m_test},
       {"q", c.q},
       {"lambda_y", c.lambda_y},
       {"n_samples", c.n_samples},
       {"nugget", c.nugget},
       {"seeds", c.seeds},
       {"surrogate_config", c.surrogate_config}};
}

inline void from_json(const nlohmann::json& j, PipelineConfig& c) {
  if (j.contains("n_eta")) j.at("n_eta").get_to(c.n_eta);
  if (j.contains("lambda_min_nm")) j.at("lambda_min_nm").get_to(c.lambda_min_nm);
  if (j.contains("lambda_max_nm")) j.at("lambda_max_nm").get_to(c.lambda_max_nm);
  if (j.contains("m_train")) j.at("m_train").get_to(c.m_train);
  if (j.contains("m_test")) j.at("m_test").get_to(c.m_test);
  if (j.contains("q")) j.at("q").get_to(c.q);
  if (j.contains("lambda_y")) j.at("lambda_y").get_to(c.lambda_y);
  if (j.contains("n_samples")) j.at("n_samples").get_to(c.n_samples);
  if (j.contains("nugget")) j.at("nugget").get_to(c.nugget);
  if (j.contains("seeds")) j.at("seeds").get_to(c.seeds);
  if (j.contains("surrogate_config"))
    j.at("surrogate_config").get_to(c.surrogate_config);
}

inline PipelineConfig load_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw StateError("cannot open config '" + path + "'");
  nlohmann::json j;
  is >> j;
  PipelineConfig cfg = j.get<PipelineConfig>();
  cfg.validate();
  return cfg;
}

/// The surrogate actually used by a run: grid from the pipeline config, line
/// and continuum constants from the optional surrogate JSON.
inline SurrogateConfig make_surrogate(const PipelineConfig& cfg) {
  GridPtr grid = make_uniform_grid(cfg.n_eta, cfg.lambda_min_nm, cfg.lambda_max_nm);
  if (cfg.surrogate_config.empty()) {
    SurrogateConfig s;
    s.grid = std::move(grid);
    s.validate();
    return s;
  }
  return load_surrogate_config(cfg.surrogate_config, std::move(grid));
}

/// Hash of the fully resolved configuration (pipeline fields plus the loaded
/// surrogate constants, so editing the surrogate file invalidates stages even
/// when its path is unchanged). FNV-1a over the canonical JSON dump.
inline std::string config_hash(const PipelineConfig& cfg) {
  nlohmann::json j = cfg;
  j.erase("surrogate_config");
  j["surrogate"] = make_surrogate(cfg);
  const std::string dump = j.dump();
  std::uint64_t h = 1469598103934665603ULL;
  for (const char ch : dump) {
    h ^= static_cast<unsigned char>(ch);
    h *= 1099511628211ULL;
  }
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%016" PRIx64, h);
  return buf;
}

/// Refuses to consume a stage produced under a different configuration
/// unless forced; missing stages name the command that has to run first.
inline nlohmann::json require_stage_fresh(const ArtifactStore& store,
                                          const std::string& name,
                                          const std::string& hash, bool force,
                                          std::string command = "") {
  if (command.empty()) command = name;
  if (!store.has_stage(name))
    throw StateError("stage '" + name + "' has not run; run `specal " +
                     command + "` first");
  nlohmann::json record = store.stage(name);
  if (!force && record.value("config_hash", "") != hash)
    throw StateError("stage '" + name +
                     "' artifacts were produced with a different config "
                     "(hash " + record.value("config_hash", "?") + ", current " +
                     hash + "); rerun `specal " + command + "` or pass --force");
  return record;
}

// --- calibration case bookkeeping -------------------------------------------

enum class CaseKind { two_element, pure_na, pure_cu };

inline const char* case_kind_name(CaseKind k) {
  switch (k) {
    case CaseKind::two_element: return "test";
    case CaseKind::pure_na: return "na";
    case CaseKind::pure_cu: return "cu";
  }
  return "?";
}

struct CalibrationCase {
  CaseKind kind = CaseKind::two_element;
  int index = 0;             // position within its suite
  ParameterPoint truth;      // unit cube

  /// Stable id: seeds and file names key off this, so suites can be added
  /// without renumbering.
  std::uint64_t uid() const {
    switch (kind) {
      case CaseKind::two_element: return static_cast<std::uint64_t>(index);
      case CaseKind::pure_na: return 1000 + static_cast<std::uint64_t>(index);
      case CaseKind::pure_cu: return 2000 + static_cast<std::uint64_t>(index);
    }
    return 0;
  }

  std::string name() const {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%s_%02d", case_kind_name(kind), index);
    return buf;
  }
};

// --- CSV helpers -------------------------------------------------------------

inline std::string spectra_csv(const WavelengthGrid& grid, const MatrixXd& matrix) {
  if (grid.values.size() != matrix.rows())
    throw DomainError("spectra_csv: grid/matrix mismatch");
  std::string out;
  out.reserve(static_cast<std::size_t>(matrix.size()) * 26 + 1024);
  out += "wavelength";
  char buf[64];
  for (Eigen::Index c = 0; c < matrix.cols(); ++c) {
    std::snprintf(buf, sizeof(buf), ",run_%03lld", static_cast<long long>(c));
    out += buf;
  }
  out += "\n";
  for (Eigen::Index r = 0; r < matrix.rows(); ++r) {
    std::snprintf(buf, sizeof(buf), "%.17g", grid.values[r]);
    out += buf;
    for (Eigen::Index c = 0; c < matrix.cols(); ++c) {
      std::snprintf(buf, sizeof(buf), ",%.17g", matrix(r, c));
      out += buf;
    }
    out += "\n";
  }
  return out;
}

// --- stages -------------------------------------------------------------------

inline void run_design_kind(const PipelineConfig& cfg, ArtifactStore& store,
                            DesignKind kind) {
  cfg.validate();
  const bool training = kind == DesignKind::training;
  const int m = training ? cfg.m_train : cfg.m_test;
  const std::uint64_t seed =
      training ? cfg.seeds.design_train : cfg.seeds.design_test;
  const Design d = latin_hypercube(m, kParamDim, seed, kind);
  std::ostringstream csv;
  write_design_csv(d, csv);
  const std::string stem = training ? "design_train" : "design_test";
  store.write_text(stem + ".csv", csv.str());
  store.set_stage(stem, {{"config_hash", config_hash(cfg)},
                         {"seed", seed},
                         {"m", m},
                         {"kind", design_kind_name(kind)}});
}

inline void run_design(const PipelineConfig& cfg, ArtifactStore& store) {
  run_design_kind(cfg, store, DesignKind::training);
  run_design_kind(cfg, store, DesignKind::test);
}

inline Design load_design(const ArtifactStore& store, const std::string& file,
                          std::uint64_t seed, DesignKind kind) {
  std::istringstream is(store.read_text(file));
  return read_design_csv(is, seed, kind);
}

inline void run_simulate(const PipelineConfig& cfg, ArtifactStore& store,
                         bool force = false) {
  cfg.validate();
  const std::string hash = config_hash(cfg);
  require_stage_fresh(store, "design_train", hash, force, "design");
  require_stage_fresh(store, "design_test", hash, force, "design");
  const SurrogateConfig surrogate = make_surrogate(cfg);
  const Design train = load_design(store, "design_train.csv",
                                   cfg.seeds.design_train, DesignKind::training);
  const Design test = load_design(store, "design_test.csv",
                                  cfg.seeds.design_test, DesignKind::test);

  const SpectrumSet train_set = simulate_batch(train, surrogate);
  const SpectrumSet test_set = simulate_batch(test, surrogate);
  const SpectrumSet na_set =
      simulate_batch(fixed_composition_design(test, 1.0), surrogate);
  const SpectrumSet cu_set =
      simulate_batch(fixed_composition_design(test, 0.0), surrogate);

  store.write_array("grid", surrogate.grid->values);
  store.write_array("spectra_train", train_set.matrix);
  store.write_array("spectra_test", test_set.matrix);
  store.write_array("spectra_test_na", na_set.matrix);
  store.write_array("spectra_test_cu", cu_set.matrix);
  store.write_text("spectra_train.csv",
                   spectra_csv(*train_set.grid, train_set.matrix));
  store.write_text("spectra_test.csv",
                   spectra_csv(*test_set.grid, test_set.matrix));
  store.set_stage("simulate", {{"config_hash", hash}});
}

inline void run_reduce(const PipelineConfig& cfg, ArtifactStore& store,
                       bool force = false) {
  cfg.validate();
  const std::string hash = config_hash(cfg);
  require_stage_fresh(store, "simulate", hash, force);
  const GridPtr grid = std::make_shared<WavelengthGrid>(store.read_vector("grid"));
  const Design train = load_design(store, "design_train.csv",
                                   cfg.seeds.design_train, DesignKind::training);
  SpectrumSet train_raw(grid, store.read_matrix("spectra_train"), train.points,
                        Scale::raw);
  const SpectrumSet train_log = log_transform(train_raw);
  const StandardizationStats stats = fit_standardization(train_log);
  const SpectrumSet train_std = standardize(train_log, stats);
  const Basis basis = build_basis(train_std, cfg.q);

  store.write_array("basis_K", basis.basis);
  store.write_array("basis_W", basis.weights);
  store.write_array("basis_ktk_diag", basis.ktk_diag);
  store.write_array("basis_singular_values", basis.singular_values);
  store.write_array("basis_variance_explained", basis.variance_explained);
  store.write_array("stats_mean", stats.mean);
  store.set_stage("reduce",
                  {{"config_hash", hash},
                   {"q", cfg.q},
                   {"stats_scale", stats.scale},
                   {"variance_explained_at_q",
                    basis.variance_explained[cfg.q - 1]}});
}

inline Basis load_basis(const ArtifactStore& store) {
  const nlohmann::json record = store.stage("reduce");
  Basis b;
  b.basis = store.read_matrix("basis_K");
  b.weights = store.read_matrix("basis_W");
  b.ktk_diag = store.read_vector("basis_ktk_diag");
  b.singular_values = store.read_vector("basis_singular_values");
  b.variance_explained = store.read_vector("basis_variance_explained");
  b.rank = record["q"].get<int>();
  b.grid = std::make_shared<WavelengthGrid>(store.read_vector("grid"));
  b.validate();
  return b;
}

inline StandardizationStats load_stats(const ArtifactStore& store) {
  StandardizationStats stats;
  stats.mean = store.read_vector("stats_mean");
  stats.scale = store.stage("reduce")["stats_scale"].get<double>();
  stats.validate();
  return stats;
}

inline void run_fit(const PipelineConfig& cfg, ArtifactStore& store,
                    bool force = false) {
  cfg.validate();
  const std::string hash = config_hash(cfg);
  require_stage_fresh(store, "reduce", hash, force);
  const Basis basis = load_basis(store);
  const StandardizationStats stats = load_stats(store);
  const Design train = load_design(store, "design_train.csv",
                                   cfg.seeds.design_train, DesignKind::training);
  const EmulatorBundle bundle = fit_bundle(basis, stats, cfg.nugget,
                                           cfg.seeds.mle, train.points, {}, hash);
  save_bundle(bundle, store);
}

/// All calibration cases of a run: the noise-added test suite plus the two
/// single-element suites sharing the same temperature/density design.
inline std::vector<CalibrationCase> enumerate_cases(const Design& test) {
  std::vector<CalibrationCase> cases;
  const Design na = fixed_composition_design(test, 1.0);
  const Design cu = fixed_composition_design(test, 0.0);
  for (int i = 0; i < test.size(); ++i)
    cases.push_back({CaseKind::two_element, i, test.points[i]});
  for (int i = 0; i < test.size(); ++i)
    cases.push_back({CaseKind::pure_na, i, na.points[i]});
  for (int i = 0; i < test.size(); ++i)
    cases.push_back({CaseKind::pure_cu, i, cu.points[i]});
  return cases;
}

inline nlohmann::json summary_to_json(const PosteriorSummary& s) {
  auto pack = [](const std::vector<ParamSummary>& v) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& p : v)
      arr.push_back({{"mean", p.mean},
                     {"median", p.median},
                     {"q05", p.q05},
                     {"q95", p.q95}});
    return arr;
  };
  return {{"unit", pack(s.unit)}, {"native", pack(s.native)}};
}

/// Calibrates the requested cases ("all", a case name like "test_07", or a
/// bare two-element index). Partial runs are a debugging aid; the summary
/// file reflects the cases run in this invocation.
inline void run_calibrate(const PipelineConfig& cfg, ArtifactStore& store,
                          bool force = false,
                          const std::string& case_filter = "all") {
  cfg.validate();
  const std::string hash = config_hash(cfg);
  require_stage_fresh(store, "fit", hash, force);
  require_stage_fresh(store, "simulate", hash, force);
  const EmulatorBundle bundle = load_bundle(store);
  const Design test = load_design(store, "design_test.csv",
                                  cfg.seeds.design_test, DesignKind::test);
  std::vector<CalibrationCase> cases = enumerate_cases(test);
  if (case_filter != "all") {
    std::vector<CalibrationCase> keep;
    for (const auto& c : cases)
      if (c.name() == case_filter ||
          (c.kind == CaseKind::two_element &&
           std::to_string(c.index) == case_filter))
        keep.push_back(c);
    if (keep.empty())
      throw DomainError("calibrate: no case matches '" + case_filter + "'");
    cases = std::move(keep);
  }

  const GridPtr grid = bundle.basis.grid;
  std::vector<MatrixXd> raw(3);
  raw[0] = store.read_matrix("spectra_test");
  raw[1] = store.read_matrix("spectra_test_na");
  raw[2] = store.read_matrix("spectra_test_cu");

  struct CaseResult {
    Chain chain;
    PosteriorSummary summary;
    std::uint64_t noise_seed = 0;
    std::uint64_t mcmc_seed = 0;
  };
  std::vector<CaseResult> results(cases.size());

  parallel_for(static_cast<int>(cases.size()), [&](int c) {
    const CalibrationCase& cal_case = cases[c];
    const MatrixXd& suite = raw[static_cast<int>(cal_case.kind)];
    Spectrum clean_raw(grid, suite.col(cal_case.index), Scale::raw);
    Spectrum clean_log(grid, clean_raw.intensity.array().log().matrix(),
                       Scale::log);
    const Spectrum clean_std = standardize(clean_log, bundle.stats);
    CaseResult& out = results[c];
    out.noise_seed = rng::derive_seed(cfg.seeds.noise, cal_case.uid());
    out.mcmc_seed = rng::derive_seed(cfg.seeds.mcmc, cal_case.uid());
    const Spectrum observed =
        add_noise(clean_std, NoiseModel{cfg.lambda_y, out.noise_seed});
    const CalibrationProblem problem = make_problem(bundle, observed, cfg.lambda_y);
    out.chain = run_mcmc(problem, cfg.n_samples, out.mcmc_seed);
    out.summary = summarize(out.chain);
  });

  nlohmann::json summaries = nlohmann::json::array();
  for (std::size_t c = 0; c < cases.size(); ++c) {
    const CalibrationCase& cal_case = cases[c];
    const CaseResult& res = results[c];
    std::ostringstream chain_csv;
    write_chain_csv(res.chain, chain_csv);
    store.write_text("chains/chain_" + cal_case.name() + ".csv", chain_csv.str());
    const NativeParameters truth_native = to_native(cal_case.truth);
    summaries.push_back(
        {{"case", cal_case.name()},
         {"kind", case_kind_name(cal_case.kind)},
         {"index", cal_case.index},
         {"truth_unit",
          {cal_case.truth.coords[0], cal_case.truth.coords[1],
           cal_case.truth.coords[2]}},
         {"truth_native",
          {{"temperature_eV", truth_native.temperature_eV},
           {"log10_density_gcc", truth_native.log10_density_gcc},
           {"sodium_fraction", truth_native.sodium_fraction}}},
         {"posterior", summary_to_json(res.summary)},
         {"acceptance_rate", res.chain.acceptance_rate},
         {"noise_seed", res.noise_seed},
         {"mcmc_seed", res.mcmc_seed}});
  }
  store.write_text("calibration_summaries.json", summaries.dump(2) + "\n");
  store.set_stage("calibrate", {{"config_hash", hash},
                                {"n_samples", cfg.n_samples},
                                {"lambda_y", cfg.lambda_y},
                                {"cases", cases.size()}});
}

inline void run_evaluate(const PipelineConfig& cfg, ArtifactStore& store,
                         bool force = false) {
  cfg.validate();
  const std::string hash = config_hash(cfg);
  require_stage_fresh(store, "calibrate", hash, force);
  const EmulatorBundle bundle = load_bundle(store);
  const Design test = load_design(store, "design_test.csv",
                                  cfg.seeds.design_test, DesignKind::test);
  const GridPtr grid = bundle.basis.grid;

  // Emulator metrics: predictions at the true test inputs vs the clean
  // standardized test spectra.
  SpectrumSet test_raw(grid, store.read_matrix("spectra_test"), test.points,
                       Scale::raw);
  const SpectrumSet test_std = standardize(log_transform(test_raw), bundle.stats);
  MatrixXd predictions(test_std.bins(), test_std.runs());
  parallel_for(test_std.runs(), [&](int i) {
    const WeightPrediction p = bundle.predict_weights(test.points[i]);
    predictions.col(i) = reconstruct_standardized(p.mean, bundle.basis);
  });
  const EmulatorReport emu = emulator_report(predictions, test_std, bundle.stats);

  char buf[128];
  std::string metrics;
  metrics.reserve(static_cast<std::size_t>(test_std.bins()) * 26 *
                  (test_std.runs() + 2));
  metrics += "wavelength,r2";
  for (int i = 0; i < test_std.runs(); ++i) {
    std::snprintf(buf, sizeof(buf), ",pct_err_run_%02d", i);
    metrics += buf;
  }
  metrics += "\n";
  for (int r = 0; r < test_std.bins(); ++r) {
    std::snprintf(buf, sizeof(buf), "%.17g,%.17g", grid->values[r], emu.r2[r]);
    metrics += buf;
    for (int i = 0; i < test_std.runs(); ++i) {
      std::snprintf(buf, sizeof(buf), ",%.17g", emu.percent_errors(r, i));
      metrics += buf;
    }
    metrics += "\n";
  }
  store.write_text("emulator_metrics.csv", metrics);

  // Calibration scatter (the estimated-vs-true panels) for the two-element
  // suite, plus the single-element histograms.
  const nlohmann::json summaries =
      nlohmann::json::parse(store.read_text("calibration_summaries.json"));
  std::string scatter =
      "case,median_abs_pct_error,"
      "true_t,est_t,est_t_q05,est_t_q95,"
      "true_log10_rho,est_log10_rho,est_log10_rho_q05,est_log10_rho_q95,"
      "true_na_frac,est_na_frac,est_na_frac_q05,est_na_frac_q95\n";
  std::string hist = "suite,case,post_mean_na_frac\n";
  for (const auto& rec : summaries) {
    const std::string kind = rec["kind"].get<std::string>();
    const auto& unit = rec["posterior"]["unit"];
    if (kind == "test") {
      const int idx = rec["index"].get<int>();
      std::snprintf(buf, sizeof(buf), "%s,%.17g",
                    rec["case"].get<std::string>().c_str(),
                    emu.median_abs_percent[idx]);
      scatter += buf;
      for (int j = 0; j < kParamDim; ++j) {
        std::snprintf(buf, sizeof(buf), ",%.17g,%.17g,%.17g,%.17g",
                      rec["truth_unit"][j].get<double>(),
                      unit[j]["mean"].get<double>(),
                      unit[j]["q05"].get<double>(),
                      unit[j]["q95"].get<double>());
        scatter += buf;
      }
      scatter += "\n";
    } else {
      std::snprintf(buf, sizeof(buf), "%s,%s,%.17g\n", kind.c_str(),
                    rec["case"].get<std::string>().c_str(),
                    unit[2]["mean"].get<double>());
      hist += buf;
    }
  }
  store.write_text("calibration_scatter.csv", scatter);
  store.write_text("single_element_hist.csv", hist);

  // Pairwise-sample files for the showcase cases: the worst-emulated test
  // run and the median one.
  std::vector<int> order(test_std.runs());
  for (int i = 0; i < test_std.runs(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    return emu.median_abs_percent[a] < emu.median_abs_percent[b];
  });
  const int worst = order.back();
  const int median_case = order[order.size() / 2];
  for (const int idx : {worst, median_case}) {
    std::snprintf(buf, sizeof(buf), "test_%02d", idx);
    store.write_text(std::string("pairwise_samples_") + buf + ".csv",
                     store.read_text("chains/chain_" + std::string(buf) + ".csv"));
  }

  // Headline numbers, used by reporting and the acceptance run.
  long cells_total = 0, cells_within = 0;
  for (int i = 0; i < emu.percent_errors.cols(); ++i)
    for (int r = 0; r < emu.percent_errors.rows(); ++r)
      if (std::isfinite(emu.percent_errors(r, i))) {
        ++cells_total;
        if (std::fabs(emu.percent_errors(r, i)) <= 2.0) ++cells_within;
      }
  long bins_defined = 0, bins_good = 0;
  for (int r = 0; r < emu.r2.size(); ++r)
    if (std::isfinite(emu.r2[r])) {
      ++bins_defined;
      if (emu.r2[r] > 0.9) ++bins_good;
    }
  int na_hits = 0, t_hits = 0, rho_hits = 0;
  std::vector<double> na_means, cu_means;
  for (const auto& rec : summaries) {
    const std::string kind = rec["kind"].get<std::string>();
    const auto& unit = rec["posterior"]["unit"];
    if (kind == "test") {
      const double dt = std::fabs(unit[0]["mean"].get<double>() -
                                  rec["truth_unit"][0].get<double>());
      const double drho = std::fabs(unit[1]["mean"].get<double>() -
                                    rec["truth_unit"][1].get<double>());
      const double dna = std::fabs(unit[2]["mean"].get<double>() -
                                   rec["truth_unit"][2].get<double>());
      if (dna <= 0.05) ++na_hits;
      if (dt <= 0.15) ++t_hits;
      if (drho <= 0.15) ++rho_hits;
    } else if (kind == "na") {
      na_means.push_back(unit[2]["mean"].get<double>());
    } else {
      cu_means.push_back(unit[2]["mean"].get<double>());
    }
  }
  nlohmann::json eval = {
      {"percent_error_cells_total", cells_total},
      {"percent_error_cells_within_2pct", cells_within},
      {"r2_bins_defined", bins_defined},
      {"r2_bins_above_0_9", bins_good},
      {"calibration", {{"na_within_0_05", na_hits},
                       {"t_within_0_15", t_hits},
                       {"rho_within_0_15", rho_hits},
                       {"cases", 0}}},
      {"single_element",
       {{"na_means", na_means}, {"cu_means", cu_means}}}};
  eval["calibration"]["cases"] = static_cast<int>(test_std.runs());
  store.write_text("eval_summary.json", eval.dump(2) + "\n");
  store.set_stage("evaluate", {{"config_hash", hash}});
}

inline void run_all(const PipelineConfig& cfg, ArtifactStore& store,
                    bool force = false) {
  run_design(cfg, store);
  run_simulate(cfg, store, force);
  run_reduce(cfg, store, force);
  run_fit(cfg, store, force);
  run_calibrate(cfg, store, force);
  run_evaluate(cfg, store, force);
}

}  // namespace specal
