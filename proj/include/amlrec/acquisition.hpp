#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <unordered_set>
#include <vector>

#include "amlrec/errors.hpp"
#include "amlrec/predictor.hpp"
#include "amlrec/rng.hpp"

namespace amlrec {

enum class Policy { ei, greedy_mean, random };

inline std::string to_string(Policy p) {
  switch (p) {
    case Policy::ei: return "ei";
    case Policy::greedy_mean: return "greedy_mean";
    case Policy::random: return "random";
  }
  return "ei";
}

inline Policy policy_from_string(const std::string& s) {
  if (s == "ei") return Policy::ei;
  if (s == "greedy_mean") return Policy::greedy_mean;
  if (s == "random") return Policy::random;
  throw ArgumentError("unknown acquisition policy '" + s + "'");
}

struct AcquisitionConfig {
  Policy policy = Policy::ei;
  double xi = 0.01;
  std::uint64_t seed = 0;

  void validate() const {
    if (!std::isfinite(xi)) throw ArgumentError("xi must be finite");
  }
};

inline double norm_pdf(double x) {
  return std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI);
}

inline double norm_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

/// Closed-form expected improvement for a Gaussian posterior, with
/// exploration offset xi:
///   s = sqrt(variance), g = (mean - y_best - xi)/s,  EI = s * (g Phi(g) + phi(g)).
/// The degenerate s = 0 case is the hard improvement max(0, mean - y_best - xi).
inline double expected_improvement(double mean, double variance, double y_best,
                                   double xi = 0.01) {
  if (variance < 0.0) throw ArgumentError("expected_improvement: negative variance");
  const double delta = mean - y_best - xi;
  const double s = std::sqrt(variance);
  if (s == 0.0) return std::max(0.0, delta);
  const double g = delta / s;
  return std::max(0.0, s * (g * norm_cdf(g) + norm_pdf(g)));
}

namespace detail {

inline double policy_score(Policy policy, const PosteriorPrediction& pred,
                           double y_best, double xi) {
  return policy == Policy::ei ? expected_improvement(pred.mean, pred.variance, y_best, xi)
                              : pred.mean;
}

} // namespace detail

/// Picks the next pipeline: the policy-score argmax over non-evaluated
/// indices, exact ties broken uniformly with the supplied generator. The
/// random policy ignores the predictions and draws uniformly.
inline int select_next(const std::vector<PosteriorPrediction>& preds,
                       const std::unordered_set<int>& evaluated,
                       const AcquisitionConfig& cfg, double y_best, Rng& rng) {
  cfg.validate();
  std::vector<int> remaining;
  remaining.reserve(preds.size());
  for (int i = 0; i < static_cast<int>(preds.size()); ++i)
    if (!evaluated.count(i)) remaining.push_back(i);
  if (remaining.empty())
    throw ExhaustionError("select_next: every pipeline already evaluated");

  if (cfg.policy == Policy::random)
    return remaining[rng.below(remaining.size())];

  double best = -std::numeric_limits<double>::infinity();
  std::vector<int> argmax;
  for (int i : remaining) {
    const double s = detail::policy_score(cfg.policy, preds[static_cast<std::size_t>(i)],
                                          y_best, cfg.xi);
    if (s > best) {
      best = s;
      argmax.assign(1, i);
    } else if (s == best) {
      argmax.push_back(i);
    }
  }
  if (argmax.size() == 1) return argmax.front();
  return argmax[rng.below(argmax.size())];
}

inline int select_next(const std::vector<PosteriorPrediction>& preds,
                       const std::unordered_set<int>& evaluated,
                       const AcquisitionConfig& cfg, double y_best) {
  Rng rng(mix_seed(cfg.seed, 0x73656c656374ull)); // "select"
  return select_next(preds, evaluated, cfg, y_best, rng);
}

} // namespace amlrec
