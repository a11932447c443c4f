#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "amlrec/errors.hpp"
#include "amlrec/gplvm.hpp"
#include "amlrec/perf_matrix.hpp"
#include "amlrec/predictor.hpp"
#include "amlrec/recommender.hpp"
#include "amlrec/rng.hpp"

namespace amlrec {

// --- synthetic benchmark matrices ------------------------------------------

enum class SynthSurface { linear, nonlinear };

inline std::string to_string(SynthSurface s) {
  return s == SynthSurface::linear ? "linear" : "nonlinear";
}

inline SynthSurface surface_from_string(const std::string& s) {
  if (s == "linear") return SynthSurface::linear;
  if (s == "nonlinear") return SynthSurface::nonlinear;
  throw ArgumentError("unknown synthetic surface '" + s + "'");
}

struct SynthConfig {
  int n_pipelines = 100;
  int n_datasets = 20;
  int q_true = 3;
  double noise_sigma = 0.01;
  double missing_fraction = 0.0;
  SynthSurface surface = SynthSurface::nonlinear;
  std::uint64_t seed = 0;

  void validate() const {
    if (n_pipelines < 1 || n_datasets < 1)
      throw ArgumentError("synth: matrix dimensions must be positive");
    if (q_true < 1 || q_true > std::min(n_pipelines, n_datasets))
      throw ArgumentError("synth: q_true must lie in [1, min(N,D)]");
    if (!(noise_sigma >= 0.0)) throw ArgumentError("synth: noise_sigma must be >= 0");
    if (!(missing_fraction >= 0.0) || missing_fraction >= 1.0)
      throw ArgumentError("synth: missing_fraction must lie in [0, 1)");
  }
};

namespace detail {

inline std::string padded_id(char prefix, int index, int count) {
  int width = 1;
  for (int v = count - 1; v >= 10; v /= 10) ++width;
  std::string digits = std::to_string(index);
  std::string out(1, prefix);
  out.append(static_cast<std::size_t>(width) - digits.size(), '0');
  out += digits;
  return out;
}

} // namespace detail

/// Benchmark matrix with a known low-dimensional structure. The linear
/// surface is Y = Z W + noise with standard-normal rank-q_true factors; the
/// nonlinear surface mixes q_true shared sigmoidal features of the latent
/// pipeline factors with dataset-specific convex weights, keeping scores in
/// roughly [0,1]. A missing_fraction of cells, chosen uniformly, is dropped.
inline SparsePerfMatrix synth_generate(const SynthConfig& cfg) {
  cfg.validate();
  const int n = cfg.n_pipelines;
  const int d = cfg.n_datasets;
  const int q = cfg.q_true;

  Rng factor_rng(mix_seed(cfg.seed, 1));
  Eigen::MatrixXd Z(n, q);
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < q; ++k) Z(i, k) = factor_rng.normal();

  Eigen::MatrixXd Y(n, d);
  Rng surface_rng(mix_seed(cfg.seed, 2));
  if (cfg.surface == SynthSurface::linear) {
    Eigen::MatrixXd W(q, d);
    for (int k = 0; k < q; ++k)
      for (int j = 0; j < d; ++j) W(k, j) = surface_rng.normal();
    Y = Z * W;
  } else {
    Eigen::VectorXd a(q), b(q);
    for (int k = 0; k < q; ++k) {
      a(k) = 0.5 + 2.5 * surface_rng.uniform01();
      b(k) = surface_rng.normal();
    }
    Eigen::MatrixXd W(q, d);
    for (int j = 0; j < d; ++j) {
      double total = 0.0;
      for (int k = 0; k < q; ++k) {
        W(k, j) = surface_rng.uniform01();
        total += W(k, j);
      }
      if (total > 0.0)
        W.col(j) /= total;
      else
        W.col(j).setConstant(1.0 / static_cast<double>(q));
    }
    Eigen::MatrixXd F(n, q);
    for (int i = 0; i < n; ++i)
      for (int k = 0; k < q; ++k)
        F(i, k) = 1.0 / (1.0 + std::exp(-(a(k) * Z(i, k) + b(k))));
    Y = F * W;
  }

  if (cfg.noise_sigma > 0.0) {
    Rng noise_rng(mix_seed(cfg.seed, 3));
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < d; ++j) Y(i, j) += cfg.noise_sigma * noise_rng.normal();
  }

  std::vector<char> dropped(static_cast<std::size_t>(n) * static_cast<std::size_t>(d), 0);
  const int n_drop = static_cast<int>(cfg.missing_fraction * n * d);
  if (n_drop > 0) {
    Rng drop_rng(mix_seed(cfg.seed, 4));
    for (int cell : drop_rng.sample_without_replacement(n * d, n_drop))
      dropped[static_cast<std::size_t>(cell)] = 1;
  }

  std::vector<std::string> pids, dids;
  pids.reserve(static_cast<std::size_t>(n));
  dids.reserve(static_cast<std::size_t>(d));
  for (int i = 0; i < n; ++i) pids.push_back(detail::padded_id('p', i, n));
  for (int j = 0; j < d; ++j) dids.push_back(detail::padded_id('d', j, d));

  std::vector<MatrixEntry> entries;
  entries.reserve(static_cast<std::size_t>(n * d - n_drop));
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j)
      if (!dropped[static_cast<std::size_t>(i) * static_cast<std::size_t>(d) +
                   static_cast<std::size_t>(j)])
        entries.push_back({i, j, Y(i, j)});
  return SparsePerfMatrix(std::move(pids), std::move(dids), entries);
}

// --- per-trace and per-method curves ----------------------------------------

/// Gap between the best score available in the column and best_so_far at each
/// step; steps before the first real observation count the full gap.
inline std::vector<double> regret_curve(const SelectionTrace& trace,
                                        const TargetColumn& column) {
  if (trace.steps.empty()) throw ArgumentError("regret_curve: empty trace");
  const std::optional<double> best = column.max_score();
  if (!best)
    throw ArgumentError("regret_curve: column has no observed entries");
  std::vector<double> out;
  out.reserve(trace.steps.size());
  for (const TraceStep& s : trace.steps) out.push_back(*best - s.best_so_far.value_or(0.0));
  return out;
}

struct MethodTraces {
  std::string method;
  std::vector<SelectionTrace> traces;
};

namespace detail {

inline int aligned_length(const std::vector<MethodTraces>& methods) {
  if (methods.empty()) throw ArgumentError("no methods supplied");
  const std::size_t n_traces = methods.front().traces.size();
  int len = -1;
  for (const MethodTraces& mt : methods) {
    if (mt.traces.size() != n_traces)
      throw ArgumentError("methods cover different numbers of episodes");
    for (const SelectionTrace& t : mt.traces) {
      const int l = static_cast<int>(t.steps.size());
      if (len == -1) len = l;
      if (l != len) throw ArgumentError("traces have mismatched iteration counts");
    }
  }
  return std::max(len, 0);
}

struct Accumulator {
  std::vector<double> sum, sumsq;
  std::vector<int> count;

  explicit Accumulator(int len)
      : sum(static_cast<std::size_t>(len), 0.0),
        sumsq(static_cast<std::size_t>(len), 0.0),
        count(static_cast<std::size_t>(len), 0) {}

  void add(int t, double v) {
    sum[static_cast<std::size_t>(t)] += v;
    sumsq[static_cast<std::size_t>(t)] += v * v;
    count[static_cast<std::size_t>(t)] += 1;
  }

  double mean(int t) const {
    const int c = count[static_cast<std::size_t>(t)];
    return c > 0 ? sum[static_cast<std::size_t>(t)] / c
                 : std::numeric_limits<double>::quiet_NaN();
  }

  // standard error of the mean across contributions
  double sem(int t) const {
    const int c = count[static_cast<std::size_t>(t)];
    if (c <= 0) return std::numeric_limits<double>::quiet_NaN();
    if (c == 1) return 0.0;
    const double m = mean(t);
    const double var =
        std::max(0.0, (sumsq[static_cast<std::size_t>(t)] - c * m * m) / (c - 1));
    return std::sqrt(var / c);
  }
};

} // namespace detail

/// Average rank of each method per iteration: within every episode the
/// methods are ranked by best_so_far (descending, average ties), then ranks
/// are averaged across episodes. Lower is better.
inline std::map<std::string, std::vector<double>> rank_curves(
    const std::vector<MethodTraces>& methods) {
  const int len = detail::aligned_length(methods);
  const std::size_t n_methods = methods.size();
  const std::size_t n_traces = methods.front().traces.size();
  std::map<std::string, std::vector<double>> out;
  for (const MethodTraces& mt : methods) {
    if (!out.emplace(mt.method, std::vector<double>(static_cast<std::size_t>(len), 0.0)).second)
      throw ArgumentError("duplicate method name '" + mt.method + "'");
  }
  if (n_traces == 0 || len == 0) return out;
  std::vector<double> values(n_methods);
  for (std::size_t k = 0; k < n_traces; ++k)
    for (int t = 0; t < len; ++t) {
      for (std::size_t m = 0; m < n_methods; ++m)
        values[m] =
            methods[m].traces[k].steps[static_cast<std::size_t>(t)].best_so_far.value_or(0.0);
      const std::vector<double> ranks = detail::average_ranks_desc(values);
      for (std::size_t m = 0; m < n_methods; ++m)
        out[methods[m].method][static_cast<std::size_t>(t)] +=
            ranks[m] / static_cast<double>(n_traces);
    }
  return out;
}

struct PredictionCurves {
  std::vector<double> mse;
  std::vector<double> variance;
  std::vector<double> mse_stderr;
  std::vector<double> variance_stderr;
};

/// Replays each trace against the frozen model: after every iteration the
/// posterior is recomputed over the pipelines with known ground truth that
/// have not yet been tried, giving the mean squared prediction error and the
/// mean posterior variance on that shrinking candidate set, averaged over
/// episodes that still have candidates left.
inline PredictionCurves prediction_curves(const Model& model,
                                          const std::vector<SelectionTrace>& traces,
                                          const std::vector<TargetColumn>& columns,
                                          bool center_observations = false) {
  if (traces.size() != columns.size())
    throw ArgumentError("prediction_curves: one column per trace required");
  int len = -1;
  for (const SelectionTrace& t : traces) {
    const int l = static_cast<int>(t.steps.size());
    if (len == -1) len = l;
    if (l != len) throw ArgumentError("prediction_curves: mismatched iteration counts");
  }
  len = std::max(len, 0);
  detail::Accumulator mse_acc(len), var_acc(len);

  for (std::size_t k = 0; k < traces.size(); ++k) {
    const TargetColumn& column = columns[k];
    std::vector<int> known;
    known.reserve(column.scores.size());
    for (const auto& [i, s] : column.scores) known.push_back(i);
    std::sort(known.begin(), known.end());

    DatasetObservations obs;
    std::vector<char> evaluated(static_cast<std::size_t>(column.n_pipelines), 0);
    for (int t = 0; t < len; ++t) {
      const TraceStep& s = traces[k].steps[static_cast<std::size_t>(t)];
      if (s.observed) obs.add(s.pipeline, *s.observed);
      evaluated[static_cast<std::size_t>(s.pipeline)] = 1;

      std::vector<int> cands;
      for (int i : known)
        if (!evaluated[static_cast<std::size_t>(i)]) cands.push_back(i);
      if (cands.empty()) continue;
      const std::vector<PosteriorPrediction> preds =
          posterior_batch(model, obs, cands, center_observations);
      double se = 0.0, v = 0.0;
      for (std::size_t c = 0; c < cands.size(); ++c) {
        const double truth = column.scores.at(cands[c]);
        se += (preds[c].mean - truth) * (preds[c].mean - truth);
        v += preds[c].variance;
      }
      mse_acc.add(t, se / static_cast<double>(cands.size()));
      var_acc.add(t, v / static_cast<double>(cands.size()));
    }
  }

  PredictionCurves out;
  for (int t = 0; t < len; ++t) {
    out.mse.push_back(mse_acc.mean(t));
    out.variance.push_back(var_acc.mean(t));
    out.mse_stderr.push_back(mse_acc.sem(t));
    out.variance_stderr.push_back(var_acc.sem(t));
  }
  return out;
}

// --- difficulty-weighted test-set selection ---------------------------------

enum class RegretAggregation { mean, final };

inline std::string to_string(RegretAggregation a) {
  return a == RegretAggregation::mean ? "mean" : "final";
}

inline RegretAggregation regret_aggregation_from_string(const std::string& s) {
  if (s == "mean") return RegretAggregation::mean;
  if (s == "final") return RegretAggregation::final;
  throw ArgumentError("unknown regret aggregation '" + s + "'");
}

/// How badly plain random search does on each dataset: seeded trials of
/// `iters` uniform draws without replacement, regret aggregated over the
/// iteration axis and averaged over trials. Datasets with no observations
/// score zero.
inline std::vector<double> dataset_difficulties(const SparsePerfMatrix& m, int trials,
                                                int iters, std::uint64_t seed,
                                                RegretAggregation agg = RegretAggregation::mean) {
  if (trials < 1) throw ArgumentError("dataset_difficulties: trials must be >= 1");
  if (iters < 1) throw ArgumentError("dataset_difficulties: iters must be >= 1");
  const int n = m.n_pipelines();
  const int draws = std::min(iters, n);
  std::vector<double> difficulty(static_cast<std::size_t>(m.n_datasets()), 0.0);

  for (int d = 0; d < m.n_datasets(); ++d) {
    const auto& col = m.column(d);
    if (col.empty()) continue;
    double best_available = col.front().second;
    std::vector<double> lookup(static_cast<std::size_t>(n),
                               std::numeric_limits<double>::quiet_NaN());
    for (const auto& [i, s] : col) {
      lookup[static_cast<std::size_t>(i)] = s;
      best_available = std::max(best_available, s);
    }
    double total = 0.0;
    for (int trial = 0; trial < trials; ++trial) {
      Rng rng(mix_seed(seed, 0x64696666ull, static_cast<std::uint64_t>(d),
                       static_cast<std::uint64_t>(trial))); // "diff"
      double best = 0.0;
      double agg_value = 0.0;
      int t = 0;
      for (int pick : rng.sample_without_replacement(n, draws)) {
        ++t;
        const double s = lookup[static_cast<std::size_t>(pick)];
        if (!std::isnan(s)) best = std::max(best, s);
        if (agg == RegretAggregation::mean) agg_value += best_available - best;
        else agg_value = best_available - best;
      }
      if (agg == RegretAggregation::mean) {
        // draws beyond the pipeline count cannot change best_so_far
        agg_value += static_cast<double>(iters - t) * (best_available - best);
        agg_value /= static_cast<double>(iters);
      }
      total += agg_value;
    }
    difficulty[static_cast<std::size_t>(d)] = total / static_cast<double>(trials);
  }
  return difficulty;
}

/// Draws n_test datasets without replacement with probability proportional to
/// their random-search difficulty. Zero-difficulty datasets are only eligible
/// once every remaining dataset is zero, at which point the draw is uniform.
inline std::vector<int> difficulty_weighted_sample(const SparsePerfMatrix& m, int n_test,
                                                   int trials, int iters, std::uint64_t seed,
                                                   RegretAggregation agg = RegretAggregation::mean) {
  if (n_test < 0 || n_test > m.n_datasets())
    throw ArgumentError("difficulty_weighted_sample: n_test must lie in [0, D]");
  const std::vector<double> difficulty = dataset_difficulties(m, trials, iters, seed, agg);

  std::vector<int> remaining(static_cast<std::size_t>(m.n_datasets()));
  for (std::size_t i = 0; i < remaining.size(); ++i) remaining[i] = static_cast<int>(i);
  std::vector<int> picked;
  picked.reserve(static_cast<std::size_t>(n_test));
  Rng rng(mix_seed(seed, 0x74657374736574ull)); // "testset"

  while (static_cast<int>(picked.size()) < n_test) {
    double total = 0.0;
    for (int d : remaining) total += difficulty[static_cast<std::size_t>(d)];
    const bool uniform = !(total > 0.0);
    double u = rng.uniform01() * (uniform ? static_cast<double>(remaining.size()) : total);
    std::size_t chosen = remaining.size() - 1;
    double cum = 0.0;
    for (std::size_t r = 0; r < remaining.size(); ++r) {
      const double w = uniform ? 1.0 : difficulty[static_cast<std::size_t>(remaining[r])];
      if (w <= 0.0 && !uniform) continue;
      cum += w;
      if (u < cum) {
        chosen = r;
        break;
      }
    }
    if (!uniform && difficulty[static_cast<std::size_t>(remaining[chosen])] <= 0.0) {
      // u landed past the last positive weight through rounding; take the
      // last positive-difficulty dataset instead
      for (std::size_t r = remaining.size(); r-- > 0;)
        if (difficulty[static_cast<std::size_t>(remaining[r])] > 0.0) {
          chosen = r;
          break;
        }
    }
    picked.push_back(remaining[chosen]);
    remaining.erase(remaining.begin() + static_cast<std::ptrdiff_t>(chosen));
  }
  return picked;
}

// --- assembled curve sets and CSV output ------------------------------------

struct MetricSeries {
  std::vector<double> value;
  std::vector<double> stderr_;
  bool empty() const { return value.empty(); }
};

struct MethodCurves {
  MetricSeries avg_rank;
  MetricSeries regret;
  MetricSeries mse;
  MetricSeries posterior_variance;
};

struct CurveSet {
  int iterations = 0;
  std::vector<std::pair<std::string, MethodCurves>> methods;
};

namespace detail {

inline bool has_predictions(const std::vector<SelectionTrace>& traces) {
  for (const SelectionTrace& t : traces)
    for (const TraceStep& s : t.steps)
      if (s.pred_mean) return true;
  return false;
}

} // namespace detail

/// Builds the full evaluation picture for a set of methods run over the same
/// episodes: average rank, regret (mean with standard error across episodes),
/// and, for methods driven by the model, prediction MSE and posterior
/// variance. Pass model = nullptr to skip the prediction metrics.
inline CurveSet compute_curves(const std::vector<MethodTraces>& methods,
                               const std::vector<TargetColumn>& columns,
                               const Model* model = nullptr,
                               bool center_observations = false) {
  const int len = detail::aligned_length(methods);
  const std::size_t n_traces = methods.front().traces.size();
  if (columns.size() != n_traces)
    throw ArgumentError("compute_curves: one column per episode required");

  CurveSet out;
  out.iterations = len;
  if (len == 0) {
    for (const MethodTraces& mt : methods) out.methods.emplace_back(mt.method, MethodCurves{});
    return out;
  }

  // per-episode ranks, accumulated per method
  std::vector<detail::Accumulator> rank_acc(methods.size(), detail::Accumulator(len));
  std::vector<double> values(methods.size());
  for (std::size_t k = 0; k < n_traces; ++k)
    for (int t = 0; t < len; ++t) {
      for (std::size_t m = 0; m < methods.size(); ++m)
        values[m] =
            methods[m].traces[k].steps[static_cast<std::size_t>(t)].best_so_far.value_or(0.0);
      const std::vector<double> ranks = detail::average_ranks_desc(values);
      for (std::size_t m = 0; m < methods.size(); ++m) rank_acc[m].add(t, ranks[m]);
    }

  for (std::size_t m = 0; m < methods.size(); ++m) {
    MethodCurves curves;
    for (int t = 0; t < len; ++t) {
      curves.avg_rank.value.push_back(rank_acc[m].mean(t));
      curves.avg_rank.stderr_.push_back(rank_acc[m].sem(t));
    }
    detail::Accumulator regret_acc(len);
    for (std::size_t k = 0; k < n_traces; ++k) {
      const std::vector<double> r = regret_curve(methods[m].traces[k], columns[k]);
      for (int t = 0; t < len; ++t) regret_acc.add(t, r[static_cast<std::size_t>(t)]);
    }
    for (int t = 0; t < len; ++t) {
      curves.regret.value.push_back(regret_acc.mean(t));
      curves.regret.stderr_.push_back(regret_acc.sem(t));
    }
    if (model != nullptr && detail::has_predictions(methods[m].traces)) {
      const PredictionCurves pc =
          prediction_curves(*model, methods[m].traces, columns, center_observations);
      curves.mse.value = pc.mse;
      curves.mse.stderr_ = pc.mse_stderr;
      curves.posterior_variance.value = pc.variance;
      curves.posterior_variance.stderr_ = pc.variance_stderr;
    }
    out.methods.emplace_back(methods[m].method, std::move(curves));
  }
  return out;
}

/// CSV layout: method,iteration,metric,value,stderr with 1-based iterations.
inline void write_curves_csv(const CurveSet& curves, std::ostream& out) {
  out << "method,iteration,metric,value,stderr\n";
  auto emit = [&](const std::string& method, const char* metric, const MetricSeries& s) {
    for (std::size_t t = 0; t < s.value.size(); ++t)
      out << method << ',' << (t + 1) << ',' << metric << ','
          << detail::format_double(s.value[t]) << ',' << detail::format_double(s.stderr_[t])
          << '\n';
  };
  for (const auto& [method, curves_m] : curves.methods) {
    emit(method, "avg_rank", curves_m.avg_rank);
    emit(method, "regret", curves_m.regret);
    emit(method, "mse", curves_m.mse);
    emit(method, "posterior_variance", curves_m.posterior_variance);
  }
}

} // namespace amlrec
