#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "specal/core.hpp"
#include "specal/reduction.hpp"

namespace specal {

/// Marker for bins where a metric is undefined (zero denominator). Undefined
/// bins are excluded from medians rather than zero-filled.
inline constexpr double kUndefinedMetric = std::numeric_limits<double>::quiet_NaN();

/// Per-wavelength-bin R^2 = 1 - var(residual) / var(truth around its mean),
/// variances taken across test runs. Bins with zero raw variance get the
/// undefined marker.
inline VectorXd r_squared(const MatrixXd& predictions, const MatrixXd& truths) {
  if (predictions.rows() != truths.rows() || predictions.cols() != truths.cols())
    throw DomainError("r_squared: shape mismatch");
  const int n_runs = static_cast<int>(truths.cols());
  if (n_runs < 2) throw DomainError("r_squared: need at least 2 test runs");
  VectorXd out(truths.rows());
  for (Eigen::Index bin = 0; bin < truths.rows(); ++bin) {
    const auto truth_row = truths.row(bin);
    const auto resid = (predictions.row(bin) - truth_row).eval();
    const double truth_mean = truth_row.mean();
    const double var_raw =
        (truth_row.array() - truth_mean).square().sum() / n_runs;
    const double resid_mean = resid.mean();
    const double var_res =
        (resid.array() - resid_mean).square().sum() / n_runs;
    out[bin] = var_raw > 0.0 ? 1.0 - var_res / var_raw : kUndefinedMetric;
  }
  return out;
}

/// Signed per-bin percent error of a standardized prediction against a
/// standardized truth:
///   100 * sigma * (pred_j - truth_j) / (sigma * truth_j + mu_j),
/// i.e. the residual mapped back to log-intensity units, divided by the true
/// log intensity. Positive when the prediction exceeds the truth.
inline VectorXd percent_error(const VectorXd& prediction_std,
                              const VectorXd& truth_std,
                              const StandardizationStats& stats) {
  stats.validate();
  if (prediction_std.size() != truth_std.size() ||
      truth_std.size() != stats.mean.size())
    throw DomainError("percent_error: length mismatch");
  VectorXd out(truth_std.size());
  for (Eigen::Index j = 0; j < truth_std.size(); ++j) {
    const double denom = stats.scale * truth_std[j] + stats.mean[j];
    out[j] = denom != 0.0
                 ? 100.0 * stats.scale * (prediction_std[j] - truth_std[j]) / denom
                 : kUndefinedMetric;
  }
  return out;
}

/// Median of |values|, skipping undefined entries.
inline double median_abs_defined(const VectorXd& values) {
  std::vector<double> v;
  v.reserve(values.size());
  for (Eigen::Index i = 0; i < values.size(); ++i)
    if (std::isfinite(values[i])) v.push_back(std::fabs(values[i]));
  if (v.empty()) throw DegenerateDataError("median_abs_defined: no defined bins");
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

struct EmulatorReport {
  VectorXd r2;                    // per bin
  MatrixXd percent_errors;        // n_eta x n_test
  VectorXd median_abs_percent;    // per test run
};

/// Emulator metrics on a standardized test set: predictions emulated at the
/// true test inputs against the clean test spectra.
inline EmulatorReport emulator_report(const MatrixXd& predictions_std,
                                      const SpectrumSet& test_std,
                                      const StandardizationStats& stats) {
  require_scale(test_std.scale, Scale::standardized, "emulator_report");
  if (predictions_std.rows() != test_std.matrix.rows() ||
      predictions_std.cols() != test_std.matrix.cols())
    throw DomainError("emulator_report: shape mismatch");
  EmulatorReport report;
  report.r2 = r_squared(predictions_std, test_std.matrix);
  report.percent_errors.resize(test_std.bins(), test_std.runs());
  report.median_abs_percent.resize(test_std.runs());
  for (int i = 0; i < test_std.runs(); ++i) {
    report.percent_errors.col(i) =
        percent_error(predictions_std.col(i), test_std.matrix.col(i), stats);
    report.median_abs_percent[i] = median_abs_defined(report.percent_errors.col(i));
  }
  return report;
}

}  // namespace specal
