#pragma once

#include <Eigen/Cholesky>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "specal/core.hpp"
#include "specal/random.hpp"
#include "specal/reduction.hpp"
#include "specal/threading.hpp"

namespace specal {

/// Hyperparameters of one weight surface's GP: a squared-exponential product
/// kernel with one length scale per input dimension, a marginal variance, and
/// a small nugget for conditioning (the 500-point correlation matrices are
/// near-singular at large length scales without it).
struct GpHyperParams {
  VectorXd length_scales;          // one per input dimension, > 0
  double marginal_variance = 1.0;  // sigma_wi^2
  double nugget = 1e-8;

  void validate() const {
    if (length_scales.size() == 0 || (length_scales.array() <= 0.0).any())
      throw DomainError("GpHyperParams: length scales must be positive");
    if (!(marginal_variance > 0.0))
      throw DomainError("GpHyperParams: marginal variance must be positive");
    if (nugget < 0.0) throw DomainError("GpHyperParams: nugget must be >= 0");
  }
};

/// Product squared-exponential correlation,
///   corr(t, t') = prod_j exp(-(t_j - t'_j)^2 / (2 l_j^2)),
/// always in (0, 1].
inline double correlation(const ParameterPoint& a, const ParameterPoint& b,
                          const VectorXd& length_scales) {
  if (a.dim() != b.dim() || a.dim() != length_scales.size())
    throw DomainError("correlation: dimension mismatch");
  if ((length_scales.array() <= 0.0).any())
    throw DomainError("correlation: length scales must be positive");
  double expo = 0.0;
  for (Eigen::Index j = 0; j < length_scales.size(); ++j) {
    const double d = a.coords[j] - b.coords[j];
    expo += d * d / (2.0 * length_scales[j] * length_scales[j]);
  }
  return std::exp(-expo);
}

namespace detail {

/// Correlation matrix of the training inputs (rows of `inputs`), unit
/// diagonal, no nugget.
inline MatrixXd correlation_matrix(const MatrixXd& inputs, const VectorXd& ls) {
  const int m = static_cast<int>(inputs.rows());
  MatrixXd r = MatrixXd::Zero(m, m);
  const VectorXd inv2 = (2.0 * ls.array().square()).inverse();
  for (int k = 0; k < m; ++k) {
    r(k, k) = 1.0;
    for (int l = k + 1; l < m; ++l) {
      double expo = 0.0;
      for (Eigen::Index j = 0; j < inputs.cols(); ++j) {
        const double d = inputs(k, j) - inputs(l, j);
        expo += d * d * inv2[j];
      }
      r(k, l) = r(l, k) = std::exp(-expo);
    }
  }
  return r;
}

/// Profiled negative log marginal likelihood of a zero-mean GP with
/// covariance sigma^2 (R + nu I), where sigma^2 has been maximized in closed
/// form (sigma^2 = w' (R + nu I)^-1 w / m). Constant terms dropped. Returns
/// +inf when the factorization fails or the data quadratic form degenerates.
struct ProfiledLikelihood {
  const MatrixXd& inputs;
  const VectorXd& weights;
  double nugget;

  double operator()(const VectorXd& log_ls) const {
    const VectorXd ls = log_ls.array().exp();
    MatrixXd m = correlation_matrix(inputs, ls);
    m.diagonal().array() += nugget;
    Eigen::LLT<MatrixXd> llt(m);
    if (llt.info() != Eigen::Success)
      return std::numeric_limits<double>::infinity();
    const double n = static_cast<double>(weights.size());
    const double quad = weights.dot(llt.solve(weights));
    if (!(quad > 0.0) || !std::isfinite(quad))
      return std::numeric_limits<double>::infinity();
    const double log_det =
        2.0 * llt.matrixLLT().diagonal().array().log().sum();
    return 0.5 * (n * std::log(quad / n) + log_det);
  }
};

/// Standard Nelder-Mead simplex minimization. Returns the best point ever
/// evaluated, so the result is never worse than the starting point.
template <class F>
std::pair<VectorXd, double> nelder_mead(const F& f, const VectorXd& x0,
                                        double initial_step, int max_evals,
                                        double ftol) {
  const int p = static_cast<int>(x0.size());
  std::vector<VectorXd> xs(p + 1, x0);
  std::vector<double> fs(p + 1);
  int evals = 0;
  VectorXd best_x = x0;
  double best_f = std::numeric_limits<double>::infinity();
  auto eval = [&](const VectorXd& x) {
    const double v = f(x);
    ++evals;
    if (v < best_f) {
      best_f = v;
      best_x = x;
    }
    return v;
  };
  for (int j = 0; j < p; ++j) xs[j + 1][j] += initial_step;
  for (int j = 0; j <= p; ++j) fs[j] = eval(xs[j]);

  std::vector<int> order(p + 1);
  while (evals < max_evals) {
    for (int j = 0; j <= p; ++j) order[j] = j;
    std::sort(order.begin(), order.end(),
              [&](int a, int b) { return fs[a] < fs[b]; });
    const int lo = order[0], hi = order[p], second_hi = order[p - 1];
    if (std::isfinite(fs[lo]) &&
        fs[hi] - fs[lo] <= ftol * (1.0 + std::abs(fs[lo])))
      break;
    VectorXd centroid = VectorXd::Zero(p);
    for (int j = 0; j <= p; ++j)
      if (j != hi) centroid += xs[j];
    centroid /= p;

    const VectorXd reflected = centroid + (centroid - xs[hi]);
    const double fr = eval(reflected);
    if (fr < fs[lo]) {
      const VectorXd expanded = centroid + 2.0 * (centroid - xs[hi]);
      const double fe = eval(expanded);
      if (fe < fr) {
        xs[hi] = expanded;
        fs[hi] = fe;
      } else {
        xs[hi] = reflected;
        fs[hi] = fr;
      }
    } else if (fr < fs[second_hi]) {
      xs[hi] = reflected;
      fs[hi] = fr;
    } else {
      const bool outside = fr < fs[hi];
      const VectorXd contracted =
          outside ? centroid + 0.5 * (reflected - centroid)
                  : centroid + 0.5 * (xs[hi] - centroid);
      const double fc = eval(contracted);
      if (fc < std::min(fr, fs[hi])) {
        xs[hi] = contracted;
        fs[hi] = fc;
      } else {
        for (int j = 0; j <= p; ++j) {  // shrink toward the best vertex
          if (j == lo) continue;
          xs[j] = xs[lo] + 0.5 * (xs[j] - xs[lo]);
          fs[j] = eval(xs[j]);
        }
      }
    }
  }
  return {best_x, best_f};
}

}  // namespace detail

struct MleOptions {
  int n_starts = 8;
  double start_lo = 0.05;  // log-spaced isotropic initial length scales
  double start_hi = 5.0;
  double start_jitter = 0.15;  // seeded per-dimension log-space jitter
  int max_evals_per_start = 140;
  double ftol = 1e-8;
  double simplex_step = 0.35;  // in log length-scale space
};

/// Maximum-likelihood hyperparameters for one weight surface. Length scales
/// are optimized by multi-start Nelder-Mead in log space; the marginal
/// variance is profiled out in closed form. Deterministic given `seed`.
/// The hyperparameters are fixed here once and never revisited during the
/// Bayesian calibration (the modular approach).
inline GpHyperParams fit_mle(const MatrixXd& inputs, const VectorXd& weights,
                             double nugget, std::uint64_t seed,
                             const MleOptions& opts = {}) {
  const int m = static_cast<int>(inputs.rows());
  const int p = static_cast<int>(inputs.cols());
  if (m < p + 2)
    throw DomainError("fit_mle: need at least p + 2 training points");
  if (weights.size() != m) throw DomainError("fit_mle: weight length mismatch");
  const double spread = weights.maxCoeff() - weights.minCoeff();
  if (!(spread > 1e-12 * std::max(1.0, weights.cwiseAbs().maxCoeff())))
    throw DegenerateDataError("fit_mle: all training weights equal");

  const detail::ProfiledLikelihood objective{inputs, weights, nugget};
  VectorXd best_x;
  double best_f = std::numeric_limits<double>::infinity();
  for (int s = 0; s < opts.n_starts; ++s) {
    const double frac =
        opts.n_starts == 1 ? 0.0 : static_cast<double>(s) / (opts.n_starts - 1);
    const double base = opts.start_lo * std::pow(opts.start_hi / opts.start_lo, frac);
    VectorXd x0 = VectorXd::Constant(p, std::log(base));
    if (s > 0) {  // first start is exactly isotropic
      rng::Engine jitter(rng::derive_seed(seed, static_cast<std::uint64_t>(s)));
      for (int j = 0; j < p; ++j)
        x0[j] += jitter.uniform(-opts.start_jitter, opts.start_jitter);
    }
    auto [x, f] = detail::nelder_mead(objective, x0, opts.simplex_step,
                                      opts.max_evals_per_start, opts.ftol);
    if (f < best_f) {
      best_f = f;
      best_x = x;
    }
  }
  if (!std::isfinite(best_f))
    throw NumericalError(
        "fit_mle: no start produced a positive-definite correlation matrix "
        "(nugget " + std::to_string(nugget) + ")");

  GpHyperParams hyper;
  hyper.length_scales = best_x.array().exp();
  hyper.nugget = nugget;
  MatrixXd r = detail::correlation_matrix(inputs, hyper.length_scales);
  r.diagonal().array() += nugget;
  Eigen::LLT<MatrixXd> llt(r);
  if (llt.info() != Eigen::Success)
    throw NumericalError("fit_mle: final correlation matrix not positive definite");
  hyper.marginal_variance = weights.dot(llt.solve(weights)) / m;
  hyper.validate();
  return hyper;
}

/// GP over one principal-component weight surface, with the Cholesky factor
/// of (R + nugget I) and the solved vector (R + nugget I)^{-1} w cached for
/// fast prediction. Immutable once built; safe to share across threads.
class WeightEmulator {
 public:
  WeightEmulator() = default;

  /// Fit by maximum likelihood, then cache the factorization.
  static WeightEmulator fit(int index, std::shared_ptr<const MatrixXd> inputs,
                            VectorXd weights, double nugget, std::uint64_t seed,
                            const MleOptions& opts = {}) {
    GpHyperParams hyper = fit_mle(*inputs, weights, nugget, seed, opts);
    return WeightEmulator(index, std::move(inputs), std::move(weights),
                          std::move(hyper));
  }

  /// Rebuild from stored hyperparameters (deserialization path). The
  /// factorization is recomputed, which is deterministic, so reloaded
  /// emulators predict bit-identically.
  static WeightEmulator from_hyper(int index, std::shared_ptr<const MatrixXd> inputs,
                                   VectorXd weights, GpHyperParams hyper) {
    return WeightEmulator(index, std::move(inputs), std::move(weights),
                          std::move(hyper));
  }

  int index() const { return index_; }
  const GpHyperParams& hyper() const { return hyper_; }
  const MatrixXd& inputs() const { return *inputs_; }
  const VectorXd& weights() const { return weights_; }
  bool fitted() const { return fitted_; }

  /// Conditional mean and variance at theta:
  ///   mean = r(theta)' (R + nu I)^{-1} w
  ///   var  = sigma^2 [max(0, 1 - r(theta)' (R + nu I)^{-1} r(theta)) + nu]
  /// The bracket can round to -1e-15 at training points, hence the clamp.
  std::pair<double, double> predict(const ParameterPoint& theta) const {
    require_fitted();
    const MatrixXd& x = *inputs_;
    if (theta.dim() != x.cols())
      throw DomainError("WeightEmulator: parameter dimension mismatch");
    VectorXd expo = VectorXd::Zero(x.rows());
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      const double inv2 =
          1.0 / (2.0 * hyper_.length_scales[j] * hyper_.length_scales[j]);
      expo.array() += (x.col(j).array() - theta.coords[j]).square() * inv2;
    }
    const VectorXd r = (-expo.array()).exp();
    const double mean = r.dot(alpha_);
    VectorXd z = r;
    chol_.matrixL().solveInPlace(z);
    const double reduction = std::max(0.0, 1.0 - z.squaredNorm());
    const double variance =
        hyper_.marginal_variance * (reduction + hyper_.nugget);
    return {mean, variance};
  }

  /// Residual of the cached solve, `(R + nu I) alpha - w`; used by the
  /// consistency checks.
  double solve_residual() const {
    require_fitted();
    MatrixXd r = detail::correlation_matrix(*inputs_, hyper_.length_scales);
    r.diagonal().array() += hyper_.nugget;
    return (r * alpha_ - weights_).norm() / weights_.norm();
  }

 private:
  WeightEmulator(int index, std::shared_ptr<const MatrixXd> inputs,
                 VectorXd weights, GpHyperParams hyper)
      : index_(index),
        hyper_(std::move(hyper)),
        inputs_(std::move(inputs)),
        weights_(std::move(weights)) {
    hyper_.validate();
    if (weights_.size() != inputs_->rows())
      throw DomainError("WeightEmulator: weight/input size mismatch");
    MatrixXd r = detail::correlation_matrix(*inputs_, hyper_.length_scales);
    r.diagonal().array() += hyper_.nugget;
    chol_.compute(r);
    if (chol_.info() != Eigen::Success)
      throw NumericalError("WeightEmulator " + std::to_string(index_) +
                           ": correlation matrix not positive definite after nugget");
    alpha_ = chol_.solve(weights_);
    fitted_ = true;
  }

  void require_fitted() const {
    if (!fitted_) throw StateError("WeightEmulator: not fitted");
  }

  int index_ = -1;
  GpHyperParams hyper_;
  std::shared_ptr<const MatrixXd> inputs_;
  VectorXd weights_;
  Eigen::LLT<MatrixXd> chol_;
  VectorXd alpha_;
  bool fitted_ = false;
};

struct WeightPrediction {
  VectorXd mean;      // length q
  VectorXd variance;  // length q, >= 0
};

struct Provenance {
  std::uint64_t mle_seed = 0;
  std::string config_hash;
};

/// The complete emulator: q independent weight GPs over a shared basis.
/// Prediction composes Eq-style pieces: GP means in weight space, then the
/// basis and standardization maps back to a log-scale spectrum.
struct EmulatorBundle {
  std::vector<WeightEmulator> emulators;
  Basis basis;
  StandardizationStats stats;
  Provenance provenance;

  int q() const { return static_cast<int>(emulators.size()); }

  void validate() const {
    basis.validate();
    stats.validate();
    if (q() != basis.rank)
      throw StateError("EmulatorBundle: emulator count != basis rank");
    for (const auto& em : emulators)
      if (!em.fitted()) throw StateError("EmulatorBundle: unfitted emulator");
  }

  WeightPrediction predict_weights(const ParameterPoint& theta) const {
    WeightPrediction p;
    p.mean.resize(q());
    p.variance.resize(q());
    for (int i = 0; i < q(); ++i) {
      auto [mean, var] = emulators[i].predict(theta);
      p.mean[i] = mean;
      p.variance[i] = var;
    }
    return p;
  }

  /// Mean log-scale spectrum at theta plus the per-weight predictive moments.
  std::pair<Spectrum, WeightPrediction> emulate_spectrum(const ParameterPoint& theta) const {
    WeightPrediction p = predict_weights(theta);
    Spectrum mean_log = reconstruct(p.mean, basis, stats);
    return {std::move(mean_log), std::move(p)};
  }
};

/// Fits the q weight emulators (one per basis row), in parallel; weight i
/// never sees weights j != i. Each fit gets its own derived seed.
inline EmulatorBundle fit_bundle(const Basis& basis, const StandardizationStats& stats,
                                 double nugget, std::uint64_t mle_seed,
                                 const std::vector<ParameterPoint>& training_inputs,
                                 const MleOptions& opts = {},
                                 const std::string& config_hash = "") {
  basis.validate();
  stats.validate();
  const int m = static_cast<int>(training_inputs.size());
  if (m != basis.weights.cols())
    throw DomainError("fit_bundle: design size != weight matrix columns");
  auto inputs = std::make_shared<MatrixXd>(m, training_inputs.front().dim());
  for (int i = 0; i < m; ++i)
    inputs->row(i) = training_inputs[i].coords.transpose();

  EmulatorBundle bundle;
  bundle.basis = basis;
  bundle.stats = stats;
  bundle.provenance.mle_seed = mle_seed;
  bundle.provenance.config_hash = config_hash;
  bundle.emulators.resize(basis.rank);
  parallel_for(basis.rank, [&](int i) {
    bundle.emulators[i] = WeightEmulator::fit(
        i, inputs, basis.weights.row(i).transpose(), nugget,
        rng::derive_seed(mle_seed, static_cast<std::uint64_t>(i)), opts);
  });
  bundle.validate();
  return bundle;
}

}  // namespace specal
