#pragma once

#include "dfinv/differentiation.hpp"
#include "dfinv/trajectory.hpp"

#include <string>
#include <vector>

namespace dfinv {

/// Per-component scale-only normalization (the mean is not subtracted).
struct Normalizer {
  Vec scale;

  Index dim() const { return scale.size(); }

  Vec apply(const Eigen::Ref<const Vec>& x) const {
    detail::require(x.size() == scale.size(), "Normalizer: dimension mismatch");
    return x.cwiseQuotient(scale);
  }

  Mat apply_rows(const Eigen::Ref<const Mat>& X) const {
    detail::require(X.cols() == scale.size(), "Normalizer: dimension mismatch");
    return X * scale.cwiseInverse().asDiagonal();
  }

  static Normalizer identity(Index m) { return {Vec::Ones(m)}; }

  /// Population standard deviation of every column of `rows`. Components with
  /// zero variance get scale 1; their indices are appended to `degenerate`.
  static Normalizer fit(const Eigen::Ref<const Mat>& rows, std::vector<Index>* degenerate = nullptr) {
    detail::require(rows.rows() >= 1, "Normalizer::fit: need at least one row");
    Normalizer nz;
    nz.scale.resize(rows.cols());
    const double n = static_cast<double>(rows.rows());
    for (Index j = 0; j < rows.cols(); ++j) {
      const double mean = rows.col(j).mean();
      const double var = (rows.col(j).array() - mean).square().sum() / n;
      const double sd = std::sqrt(var);
      if (!(sd > 1e-12 * (1.0 + std::abs(mean)))) {
        nz.scale(j) = 1.0;
        if (degenerate) degenerate->push_back(j);
      } else {
        nz.scale(j) = sd;
      }
    }
    return nz;
  }
};

enum class DerivativeSource { True, Numeric };

struct InputLocationSet {
  Mat x;  // N x 3n, rows [q qd qdd]
  Normalizer normalizer;
  std::size_t transient_samples = 0;
  std::vector<std::string> warnings;
};

/// Stacks x(t) = [q qd qdd] for every sample; the normalizer is fitted on rows
/// [transient, fit_count) only so later data never leaks into the scales.
inline InputLocationSet build_input_locations(const TrajectoryDataset& ds, DerivativeSource source,
                                              const DifferentiatorConfig& cfg,
                                              std::size_t fit_count) {
  const Index N = static_cast<Index>(ds.size());
  const Index n = static_cast<Index>(ds.n_dof());
  InputLocationSet out;
  out.x.resize(N, 3 * n);
  out.x.leftCols(n) = ds.positions;
  if (source == DerivativeSource::True) {
    detail::require(ds.has_truth(), "build_input_locations: dataset carries no true derivatives");
    out.x.middleCols(n, n) = ds.true_velocities;
    out.x.rightCols(n) = ds.true_accelerations;
  } else {
    const Derivatives d = numeric_differentiate(ds.positions, cfg);
    out.x.middleCols(n, n) = d.qd;
    out.x.rightCols(n) = d.qdd;
    out.transient_samples = d.transient_samples;
  }
  fit_count = std::min<std::size_t>(fit_count, ds.size());
  std::size_t first = out.transient_samples < fit_count ? out.transient_samples : 0;
  std::vector<Index> degenerate;
  out.normalizer = Normalizer::fit(
      out.x.middleRows(static_cast<Index>(first), static_cast<Index>(fit_count - first)),
      &degenerate);
  for (Index j : degenerate)
    out.warnings.push_back("input component " + std::to_string(j) +
                           " has zero variance on the fit split; scale set to 1");
  return out;
}

}  // namespace dfinv
