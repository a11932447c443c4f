#pragma once

#include <algorithm>
#include <cmath>
#include <iostream>
#include <vector>

#include <Eigen/Core>

#include "amlrec/errors.hpp"
#include "amlrec/gplvm.hpp"
#include "amlrec/kernel.hpp"

namespace amlrec {

struct PosteriorPrediction {
  int pipeline = -1;
  double mean = 0.0;
  double variance = 0.0;
};

/// Scores observed so far for a single dataset, keyed by pipeline row index.
struct DatasetObservations {
  std::vector<int> idx;
  std::vector<double> y;

  void add(int pipeline, double score) {
    idx.push_back(pipeline);
    y.push_back(score);
  }
  bool empty() const { return idx.empty(); }
  std::size_t size() const { return idx.size(); }

  Eigen::VectorXd y_vector() const {
    return Eigen::Map<const Eigen::VectorXd>(y.data(), static_cast<Eigen::Index>(y.size()));
  }

  void validate(int n_pipelines) const {
    if (idx.size() != y.size())
      throw ArgumentError("observations: index/score length mismatch");
    std::vector<int> sorted = idx;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
      throw ArgumentError("observations: duplicate pipeline index");
    for (int i : idx)
      if (i < 0 || i >= n_pipelines)
        throw ArgumentError("observations: pipeline index out of range");
    for (double s : y)
      if (!std::isfinite(s)) throw ArgumentError("observations: non-finite score");
  }
};

namespace detail {

inline double clamp_variance(double v) {
  if (v < -1e-10)
    std::cerr << "[amlrec] negative posterior variance " << v << " clamped to zero\n";
  return std::max(v, 0.0);
}

} // namespace detail

/// GP posterior for one unevaluated pipeline on a partially observed dataset:
///   mean = k' C^-1 y,  var = k(x,x) + sigma^2 - k' C^-1 k
/// with C built over the observed rows. No observations yields the prior
/// (0, k(x,x) + sigma^2) with no jitter term. center_observations subtracts
/// the observed mean before the solve and adds it back to the posterior mean.
inline PosteriorPrediction posterior(const Model& model, const DatasetObservations& obs,
                                     int pipeline, bool center_observations = false) {
  const int n = static_cast<int>(model.embedding.n());
  if (pipeline < 0 || pipeline >= n)
    throw ArgumentError("posterior: pipeline index out of range");
  obs.validate(n);

  const KernelParams& p = model.params;
  const Eigen::RowVectorXd xm = model.embedding.X.row(pipeline);
  const double kmm = kernel_value(xm, xm, p);
  const double noise = p.sigma * p.sigma;
  if (obs.empty()) return {pipeline, 0.0, kmm + noise};

  const std::vector<int> rows = obs.idx;
  const Eigen::MatrixXd Xe = model.embedding.rows(rows);
  const FactoredGram fg = gram_factored(Xe, p, /*add_noise=*/true);
  const Eigen::VectorXd k = gram_cross(Xe, xm, p);

  Eigen::VectorXd yv = obs.y_vector();
  double shift = 0.0;
  if (center_observations) {
    shift = yv.mean();
    yv.array() -= shift;
  }
  const Eigen::VectorXd w = fg.chol.matrixL().solve(k);
  const Eigen::VectorXd z = fg.chol.matrixL().solve(yv);
  PosteriorPrediction out;
  out.pipeline = pipeline;
  out.mean = w.dot(z) + shift;
  out.variance = detail::clamp_variance(kmm + noise - w.squaredNorm());
  return out;
}

/// Posterior for many candidates against one observation set. Factorizes C
/// once and reuses the triangular factor for every candidate, so it matches
/// posterior() exactly while doing the O(m^3) work a single time.
inline std::vector<PosteriorPrediction> posterior_batch(const Model& model,
                                                        const DatasetObservations& obs,
                                                        const std::vector<int>& candidates,
                                                        bool center_observations = false) {
  const int n = static_cast<int>(model.embedding.n());
  obs.validate(n);
  for (int c : candidates)
    if (c < 0 || c >= n) throw ArgumentError("posterior_batch: pipeline index out of range");

  const KernelParams& p = model.params;
  const double noise = p.sigma * p.sigma;
  std::vector<PosteriorPrediction> out(candidates.size());

  if (obs.empty()) {
    for (std::size_t i = 0; i < candidates.size(); ++i) {
      const Eigen::RowVectorXd xm = model.embedding.X.row(candidates[i]);
      out[i] = {candidates[i], 0.0, kernel_value(xm, xm, p) + noise};
    }
    return out;
  }

  const Eigen::MatrixXd Xe = model.embedding.rows(obs.idx);
  const Eigen::MatrixXd Xc = model.embedding.rows(candidates);
  const FactoredGram fg = gram_factored(Xe, p, /*add_noise=*/true);
  const Eigen::MatrixXd K = gram_cross(Xe, Xc, p);

  Eigen::VectorXd yv = obs.y_vector();
  double shift = 0.0;
  if (center_observations) {
    shift = yv.mean();
    yv.array() -= shift;
  }
  const Eigen::MatrixXd W = fg.chol.matrixL().solve(K);
  const Eigen::VectorXd z = fg.chol.matrixL().solve(yv);
  const Eigen::VectorXd means = W.transpose() * z;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const Eigen::Index col = static_cast<Eigen::Index>(i);
    const Eigen::RowVectorXd xm = Xc.row(col);
    const double kmm = kernel_value(xm, xm, p);
    out[i].pipeline = candidates[i];
    out[i].mean = means(col) + shift;
    out[i].variance = detail::clamp_variance(kmm + noise - W.col(col).squaredNorm());
  }
  return out;
}

} // namespace amlrec
