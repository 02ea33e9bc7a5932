#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "specal/core.hpp"
#include "specal/emulator.hpp"
#include "specal/random.hpp"
#include "specal/threading.hpp"

namespace specal {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();
inline constexpr double kLog2Pi = 1.8378770664093454836;

/// Everything the posterior evaluation needs: the fitted (and from here on
/// frozen) emulator bundle, the observation projected into weight space, the
/// known noise precision, and the diagonal of K^T K.
struct CalibrationProblem {
  const EmulatorBundle* bundle = nullptr;
  VectorXd w_obs;
  double lambda_y = 4.0;
  VectorXd ktk_diag;

  void validate() const {
    if (!bundle) throw StateError("CalibrationProblem: missing bundle");
    bundle->validate();
    if (w_obs.size() != bundle->q() || ktk_diag.size() != bundle->q())
      throw DomainError("CalibrationProblem: weight-vector length != q");
    if (!(lambda_y > 0.0))
      throw DomainError("CalibrationProblem: lambda_y must be positive");
  }
};

/// Projects a standardized observation into weight space and packages the
/// problem. The observation is typically a noise-added test spectrum.
inline CalibrationProblem make_problem(const EmulatorBundle& bundle,
                                       const Spectrum& observed_standardized,
                                       double lambda_y) {
  require_scale(observed_standardized.scale, Scale::standardized, "make_problem");
  CalibrationProblem p;
  p.bundle = &bundle;
  p.w_obs = project(observed_standardized, bundle.basis);
  p.lambda_y = lambda_y;
  p.ktk_diag = bundle.basis.ktk_diag;
  p.validate();
  return p;
}

/// Log density of w_obs | theta ~ N(mu_w(theta), (lambda_y K'K)^{-1} + Sigma_w(theta)).
/// Both covariance terms are diagonal -- K'K by construction of the basis,
/// Sigma_w because the weight GPs are independent -- so the density is a sum
/// of q univariate Gaussian log densities.
inline double log_likelihood(const CalibrationProblem& problem,
                             const ParameterPoint& theta) {
  const WeightPrediction pred = problem.bundle->predict_weights(theta);
  double ll = 0.0;
  for (int i = 0; i < problem.bundle->q(); ++i) {
    const double var =
        1.0 / (problem.lambda_y * problem.ktk_diag[i]) + pred.variance[i];
    const double d = problem.w_obs[i] - pred.mean[i];
    ll += -0.5 * (kLog2Pi + std::log(var) + d * d / var);
  }
  if (!std::isfinite(ll))
    throw NumericalError("log_likelihood: non-finite density");
  return ll;
}

/// Independent uniform prior on the closed unit cube.
inline double log_prior(const VectorXd& theta) {
  for (Eigen::Index j = 0; j < theta.size(); ++j)
    if (!(theta[j] >= 0.0 && theta[j] <= 1.0)) return kNegInf;
  return 0.0;
}

inline double log_posterior(const CalibrationProblem& problem,
                            const ParameterPoint& theta) {
  const double lp = log_prior(theta.coords);
  if (lp == kNegInf) return kNegInf;
  return lp + log_likelihood(problem, theta);
}

/// Post-burn-in MCMC output. Samples live in the unit cube.
struct Chain {
  MatrixXd samples;      // n x p
  VectorXd log_post;     // n
  double acceptance_rate = 0.0;  // post-burn-in
  std::uint64_t seed = 0;
  int burn_in = 0;       // iterations discarded before the first row

  int size() const { return static_cast<int>(samples.rows()); }
  int dim() const { return static_cast<int>(samples.cols()); }
};

struct McmcOptions {
  double initial_step = 0.1;
  double target_acceptance = 0.3;  // adapted into [0.2, 0.5]
  int adapt_batch = 50;
  double burn_in_fraction = 0.2;   // of the requested sample count
};

/// Reflects a proposal into [0, 1]; the folded Gaussian step kernel stays
/// symmetric, so no proposal correction is needed.
inline double reflect_unit(double v) {
  v = std::fabs(v);
  v = std::fmod(v, 2.0);
  return v > 1.0 ? 2.0 - v : v;
}

/// Adaptive random-walk Metropolis on the unit cube. The scalar proposal
/// scale is tuned during burn-in toward the target acceptance rate and then
/// frozen, preserving detailed balance for the retained samples. Returns
/// exactly `n_samples` post-burn-in draws; the burn-in block (20% of the
/// requested count, prepended) is discarded. Deterministic given the seed.
inline Chain sample_box_mcmc(const std::function<double(const VectorXd&)>& log_post_fn,
                             int dim, int n_samples, std::uint64_t seed,
                             const VectorXd& start, const McmcOptions& opts = {}) {
  if (n_samples < 1) throw DomainError("mcmc: n_samples must be >= 1");
  if (dim < 1) throw DomainError("mcmc: dimension must be >= 1");
  rng::Engine engine(seed);
  const int burn_in = static_cast<int>(
      std::ceil(opts.burn_in_fraction * static_cast<double>(n_samples)));
  const int total = n_samples + burn_in;

  VectorXd current = start;
  double current_lp = log_post_fn(current);
  if (!std::isfinite(current_lp))
    throw StateError("mcmc: zero-probability start");

  Chain chain;
  chain.samples.resize(n_samples, dim);
  chain.log_post.resize(n_samples);
  chain.seed = seed;
  chain.burn_in = burn_in;

  double step = opts.initial_step;
  int batch_accepts = 0, batch_count = 0, batch_index = 0;
  long kept_accepts = 0;
  VectorXd proposal(dim);
  for (int iter = 0; iter < total; ++iter) {
    for (int j = 0; j < dim; ++j)
      proposal[j] = reflect_unit(current[j] + step * engine.normal());
    const double proposal_lp = log_post_fn(proposal);
    const bool accept =
        std::log(1.0 - engine.uniform()) < proposal_lp - current_lp;
    if (accept) {
      current = proposal;
      current_lp = proposal_lp;
    }
    if (iter < burn_in) {
      batch_accepts += accept ? 1 : 0;
      if (++batch_count == opts.adapt_batch) {
        const double rate = static_cast<double>(batch_accepts) / batch_count;
        ++batch_index;
        step *= std::exp((rate - opts.target_acceptance) /
                         std::sqrt(static_cast<double>(batch_index)));
        step = std::clamp(step, 1e-4, 1.0);
        batch_accepts = 0;
        batch_count = 0;
      }
    } else {
      const int k = iter - burn_in;
      chain.samples.row(k) = current.transpose();
      chain.log_post[k] = current_lp;
      kept_accepts += accept ? 1 : 0;
    }
  }
  chain.acceptance_rate = static_cast<double>(kept_accepts) / n_samples;
  return chain;
}

/// MCMC over a calibration problem. Starts at the cube center; if that has
/// zero posterior probability the training design points are tried in order.
inline Chain run_mcmc(const CalibrationProblem& problem, int n_samples,
                      std::uint64_t seed, const McmcOptions& opts = {}) {
  problem.validate();
  const int p = static_cast<int>(problem.bundle->emulators.front().inputs().cols());
  auto target = [&problem](const VectorXd& v) {
    const double lp = log_prior(v);
    if (lp == kNegInf) return kNegInf;
    return lp + log_likelihood(problem, ParameterPoint(v));
  };
  VectorXd start = VectorXd::Constant(p, 0.5);
  if (!std::isfinite(target(start))) {
    const MatrixXd& inputs = problem.bundle->emulators.front().inputs();
    bool found = false;
    for (Eigen::Index i = 0; i < inputs.rows() && !found; ++i) {
      start = inputs.row(i).transpose();
      found = std::isfinite(target(start));
    }
    if (!found)
      throw StateError("run_mcmc: no finite-posterior start among design points");
  }
  return sample_box_mcmc(target, p, n_samples, seed, start, opts);
}

/// Brute-force posterior on a uniform grid over the unit cube; the
/// independent oracle the samplers are validated against. Cell masses are
/// normalized with log-sum-exp so underflow cannot zero the grid.
struct GridPosterior {
  int resolution = 0;
  int dim = 0;
  VectorXd mass;  // resolution^dim, last coordinate fastest

  double cell_center(int index_along_dim) const {
    return (index_along_dim + 0.5) / resolution;
  }

  /// Marginal over one coordinate (sums out all the others).
  VectorXd marginal(int coord) const {
    VectorXd out = VectorXd::Zero(resolution);
    std::vector<int> idx(dim, 0);
    for (Eigen::Index flat = 0; flat < mass.size(); ++flat) {
      Eigen::Index rest = flat;
      for (int j = dim - 1; j >= 0; --j) {
        idx[j] = static_cast<int>(rest % resolution);
        rest /= resolution;
      }
      out[idx[coord]] += mass[flat];
    }
    return out;
  }
};

inline GridPosterior grid_posterior(const CalibrationProblem& problem,
                                    int resolution) {
  problem.validate();
  if (resolution < 2) throw DomainError("grid_posterior: resolution must be >= 2");
  const int p = static_cast<int>(problem.bundle->emulators.front().inputs().cols());
  GridPosterior grid;
  grid.resolution = resolution;
  grid.dim = p;
  Eigen::Index cells = 1;
  for (int j = 0; j < p; ++j) cells *= resolution;
  VectorXd log_density(cells);

  Eigen::Index slab = cells / resolution;
  parallel_for(resolution, [&](int i0) {
    std::vector<int> idx(p, 0);
    idx[0] = i0;
    VectorXd theta(p);
    for (Eigen::Index r = 0; r < slab; ++r) {
      Eigen::Index rest = r;
      for (int j = p - 1; j >= 1; --j) {
        idx[j] = static_cast<int>(rest % resolution);
        rest /= resolution;
      }
      for (int j = 0; j < p; ++j) theta[j] = grid.cell_center(idx[j]);
      log_density[i0 * slab + r] = log_posterior(problem, ParameterPoint(theta));
    }
  });

  const double peak = log_density.maxCoeff();
  if (!std::isfinite(peak))
    throw NumericalError("grid_posterior: posterior is zero everywhere on the grid");
  VectorXd shifted = (log_density.array() - peak).exp();
  grid.mass = shifted / shifted.sum();
  return grid;
}

struct ParamSummary {
  double mean = 0.0;
  double median = 0.0;
  double q05 = 0.0;
  double q95 = 0.0;
};

/// Per-parameter posterior summaries in unit-cube and native units. The
/// native values come from mapping the unit-cube statistics through the
/// monotone affine transform (endpoint-wise for the quantiles).
struct PosteriorSummary {
  std::vector<ParamSummary> unit;
  std::vector<ParamSummary> native;
};

namespace detail {
inline double quantile_sorted(const std::vector<double>& sorted, double prob) {
  const double pos = prob * (static_cast<double>(sorted.size()) - 1.0);
  const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(sorted.size() - 1, lo + 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] * (1.0 - frac) + sorted[hi] * frac;
}
}  // namespace detail

inline PosteriorSummary summarize(const Chain& chain) {
  if (chain.size() < 1) throw DomainError("summarize: empty chain");
  PosteriorSummary summary;
  summary.unit.resize(chain.dim());
  for (int j = 0; j < chain.dim(); ++j) {
    std::vector<double> values(chain.samples.col(j).data(),
                               chain.samples.col(j).data() + chain.size());
    std::sort(values.begin(), values.end());
    ParamSummary& s = summary.unit[j];
    s.mean = chain.samples.col(j).mean();
    s.median = detail::quantile_sorted(values, 0.5);
    s.q05 = detail::quantile_sorted(values, 0.05);
    s.q95 = detail::quantile_sorted(values, 0.95);
  }
  if (chain.dim() == kParamDim) {
    const double lo[3] = {kTemperatureLo, kLog10DensityLo, kSodiumLo};
    const double hi[3] = {kTemperatureHi, kLog10DensityHi, kSodiumHi};
    summary.native.resize(kParamDim);
    for (int j = 0; j < kParamDim; ++j) {
      auto affine = [&](double v) { return lo[j] + v * (hi[j] - lo[j]); };
      summary.native[j] = {affine(summary.unit[j].mean),
                           affine(summary.unit[j].median),
                           affine(summary.unit[j].q05),
                           affine(summary.unit[j].q95)};
    }
  }
  return summary;
}

inline constexpr const char* kChainCsvHeader =
    "iteration,t,log10_rho,na_frac,log_post";

inline void write_chain_csv(const Chain& chain, std::ostream& os) {
  if (chain.dim() != kParamDim)
    throw DomainError("write_chain_csv: expected 3 coordinates");
  os << kChainCsvHeader << "\n";
  char buf[256];
  for (int i = 0; i < chain.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g,%.17g,%.17g\n", i,
                  chain.samples(i, 0), chain.samples(i, 1),
                  chain.samples(i, 2), chain.log_post[i]);
    os << buf;
  }
}

inline Chain read_chain_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line != kChainCsvHeader)
    throw IntegrityError("chain CSV: bad header");
  std::vector<std::array<double, 4>> rows;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    int iteration;
    char comma;
    std::array<double, 4> row;
    if (!(ss >> iteration >> comma >> row[0] >> comma >> row[1] >> comma >>
          row[2] >> comma >> row[3]))
      throw IntegrityError("chain CSV: malformed row '" + line + "'");
    rows.push_back(row);
  }
  if (rows.empty()) throw IntegrityError("chain CSV: no rows");
  Chain chain;
  chain.samples.resize(static_cast<int>(rows.size()), kParamDim);
  chain.log_post.resize(static_cast<int>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    chain.samples(static_cast<int>(i), 0) = rows[i][0];
    chain.samples(static_cast<int>(i), 1) = rows[i][1];
    chain.samples(static_cast<int>(i), 2) = rows[i][2];
    chain.log_post[static_cast<int>(i)] = rows[i][3];
  }
  return chain;
}

}  // namespace specal
