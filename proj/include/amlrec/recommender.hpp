#pragma once

#include <algorithm>
#include <cstdint>
#include <iostream>
#include <optional>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "amlrec/acquisition.hpp"
#include "amlrec/errors.hpp"
#include "amlrec/gplvm.hpp"
#include "amlrec/perf_matrix.hpp"
#include "amlrec/predictor.hpp"
#include "amlrec/rng.hpp"

namespace amlrec {

/// Ground-truth scores for one dataset, playable as an oracle: a lookup that
/// answers "what score would pipeline i get here?" or "never measured".
struct TargetColumn {
  int dataset_index = -1;
  std::string dataset_id;
  int n_pipelines = 0;
  std::unordered_map<int, double> scores;

  static TargetColumn from_matrix(const SparsePerfMatrix& m, int d) {
    if (d < 0 || d >= m.n_datasets())
      throw ArgumentError("target column: dataset index out of range");
    TargetColumn c;
    c.dataset_index = d;
    c.dataset_id = m.dataset_ids()[static_cast<std::size_t>(d)];
    c.n_pipelines = m.n_pipelines();
    for (const auto& [i, s] : m.column(d)) c.scores.emplace(i, s);
    return c;
  }

  std::optional<double> at(int pipeline) const {
    const auto it = scores.find(pipeline);
    if (it == scores.end()) return std::nullopt;
    return it->second;
  }

  bool empty() const { return scores.empty(); }

  std::optional<double> max_score() const {
    std::optional<double> best;
    for (const auto& [i, s] : scores)
      if (!best || s > *best) best = s;
    return best;
  }
};

struct TraceStep {
  int iteration = 0; // 1-based position within the episode
  int pipeline = -1;
  std::optional<double> observed;    // empty = pipeline never measured here
  std::optional<double> best_so_far; // empty until the first real observation
  std::optional<double> pred_mean;   // present only for model-driven picks
  std::optional<double> pred_variance;
};

struct SelectionTrace {
  std::string method;
  std::string dataset;
  std::uint64_t seed = 0;
  int budget = 0;
  std::vector<TraceStep> steps;

  void validate() const {
    if (static_cast<int>(steps.size()) > budget)
      throw ValidationError("trace has more steps than budget");
    std::unordered_set<int> seen;
    std::optional<double> prev;
    for (std::size_t t = 0; t < steps.size(); ++t) {
      const TraceStep& s = steps[t];
      if (s.iteration != static_cast<int>(t) + 1)
        throw ValidationError("trace iterations are not consecutive from 1");
      if (!seen.insert(s.pipeline).second)
        throw ValidationError("trace repeats a pipeline");
      if (prev && (!s.best_so_far || *s.best_so_far < *prev))
        throw ValidationError("best_so_far decreases within trace");
      if (s.best_so_far) prev = s.best_so_far;
    }
  }
};

namespace detail {

/// Ranks values descending (largest gets rank 1); tied values all receive the
/// mean of the positions they span.
inline std::vector<double> average_ranks_desc(const std::vector<double>& values) {
  const std::size_t n = values.size();
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return values[a] > values[b]; });
  std::vector<double> ranks(n, 0.0);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + 1 + j + 1);
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = avg;
    i = j + 1;
  }
  return ranks;
}

} // namespace detail

/// Ranks pipelines by average per-dataset rank (descending score, average
/// ties, missing entries excluded) and returns the best k. Pipelines observed
/// on fewer than min_datasets datasets are not eligible; final ties break by
/// pipeline index.
inline std::vector<int> warm_start(const SparsePerfMatrix& m, int k, int min_datasets = 5) {
  if (k < 0) throw ArgumentError("warm_start: k must be >= 0");
  if (k == 0) return {};
  const int n = m.n_pipelines();
  std::vector<double> rank_sum(static_cast<std::size_t>(n), 0.0);
  std::vector<int> rank_cnt(static_cast<std::size_t>(n), 0);
  for (int d = 0; d < m.n_datasets(); ++d) {
    const auto& col = m.column(d);
    if (col.empty()) continue;
    std::vector<double> scores(col.size());
    for (std::size_t r = 0; r < col.size(); ++r) scores[r] = col[r].second;
    const std::vector<double> ranks = detail::average_ranks_desc(scores);
    for (std::size_t r = 0; r < col.size(); ++r) {
      rank_sum[static_cast<std::size_t>(col[r].first)] += ranks[r];
      rank_cnt[static_cast<std::size_t>(col[r].first)] += 1;
    }
  }
  std::vector<int> eligible;
  for (int i = 0; i < n; ++i)
    if (rank_cnt[static_cast<std::size_t>(i)] >= min_datasets) eligible.push_back(i);
  if (static_cast<int>(eligible.size()) < k)
    throw ArgumentError("warm_start: only " + std::to_string(eligible.size()) +
                        " pipelines observed on >= " + std::to_string(min_datasets) +
                        " datasets, need " + std::to_string(k));
  std::stable_sort(eligible.begin(), eligible.end(), [&](int a, int b) {
    const double ra = rank_sum[static_cast<std::size_t>(a)] / rank_cnt[static_cast<std::size_t>(a)];
    const double rb = rank_sum[static_cast<std::size_t>(b)] / rank_cnt[static_cast<std::size_t>(b)];
    if (ra != rb) return ra < rb;
    return a < b;
  });
  eligible.resize(static_cast<std::size_t>(k));
  return eligible;
}

/// One sequential-selection episode on a frozen model: the warm-start picks
/// are evaluated first, then predict -> acquire -> look up repeats until the
/// budget is spent. A pick whose score was never measured still costs one
/// budget unit but contributes nothing to the posterior or best_so_far.
inline SelectionTrace run_episode(const Model& model, const TargetColumn& column,
                                  int budget, const AcquisitionConfig& cfg,
                                  const std::vector<int>& warm, std::uint64_t seed) {
  cfg.validate();
  const int n = static_cast<int>(model.embedding.n());
  if (column.n_pipelines != n)
    throw ArgumentError("run_episode: column and model disagree on pipeline count");
  if (budget < 0) throw ArgumentError("run_episode: negative budget");
  if (budget > n) {
    std::cerr << "[amlrec] budget " << budget << " exceeds the " << n
              << " available pipelines; truncating\n";
    budget = n;
  }
  if (static_cast<int>(warm.size()) > budget)
    throw ArgumentError("run_episode: warm-start list exceeds budget");
  for (int w : warm)
    if (w < 0 || w >= n) throw ArgumentError("run_episode: warm-start index out of range");

  SelectionTrace trace;
  trace.method = to_string(cfg.policy);
  trace.dataset = column.dataset_id;
  trace.seed = seed;
  trace.budget = budget;

  DatasetObservations obs;
  std::unordered_set<int> evaluated;
  std::optional<double> best;
  Rng rng(mix_seed(seed, 0x657069736f6465ull)); // "episode"

  auto record = [&](int pipeline, std::optional<double> mean, std::optional<double> var) {
    TraceStep step;
    step.iteration = static_cast<int>(trace.steps.size()) + 1;
    step.pipeline = pipeline;
    step.pred_mean = mean;
    step.pred_variance = var;
    if (const std::optional<double> score = column.at(pipeline)) {
      step.observed = score;
      obs.add(pipeline, *score);
      if (!best || *score > *best) best = score;
    }
    step.best_so_far = best;
    evaluated.insert(pipeline);
    trace.steps.push_back(step);
  };

  for (int w : warm) {
    if (evaluated.count(w)) throw ArgumentError("run_episode: duplicate warm-start index");
    record(w, std::nullopt, std::nullopt);
  }

  std::vector<PosteriorPrediction> preds(static_cast<std::size_t>(n));
  while (static_cast<int>(trace.steps.size()) < budget) {
    if (cfg.policy == Policy::random) {
      const int pick = select_next(preds, evaluated, cfg, best.value_or(0.0), rng);
      record(pick, std::nullopt, std::nullopt);
      continue;
    }
    std::vector<int> cands;
    cands.reserve(static_cast<std::size_t>(n) - evaluated.size());
    for (int i = 0; i < n; ++i)
      if (!evaluated.count(i)) cands.push_back(i);
    const std::vector<PosteriorPrediction> cand_preds = posterior_batch(model, obs, cands);
    for (std::size_t c = 0; c < cands.size(); ++c)
      preds[static_cast<std::size_t>(cands[c])] = cand_preds[c];
    const int pick = select_next(preds, evaluated, cfg, best.value_or(0.0), rng);
    record(pick, preds[static_cast<std::size_t>(pick)].mean,
           preds[static_cast<std::size_t>(pick)].variance);
  }
  trace.validate();
  return trace;
}

/// Uniform sampling without replacement with a budget multiplier: draws
/// budget*multiplier distinct pipelines, then reports on the base-budget axis
/// where step t covers draw block t (simulating multiplier-way parallelism).
/// The step's pipeline is the best-scoring draw of its block.
inline SelectionTrace random_baseline(const TargetColumn& column, int budget,
                                      int multiplier, std::uint64_t seed) {
  if (multiplier != 1 && multiplier != 2 && multiplier != 4)
    throw ArgumentError("random_baseline: multiplier must be 1, 2, or 4");
  if (budget < 0) throw ArgumentError("random_baseline: negative budget");
  const int n = column.n_pipelines;
  if (budget * multiplier > n)
    throw ArgumentError("random_baseline: budget*multiplier exceeds pipeline count");

  SelectionTrace trace;
  trace.method = multiplier == 1 ? "random" : "random" + std::to_string(multiplier) + "x";
  trace.dataset = column.dataset_id;
  trace.seed = seed;
  trace.budget = budget;

  Rng rng(mix_seed(seed, 0x72616e64ull, static_cast<std::uint64_t>(multiplier))); // "rand"
  const std::vector<int> draws =
      rng.sample_without_replacement(n, budget * multiplier);

  std::optional<double> best;
  for (int t = 0; t < budget; ++t) {
    int rep = draws[static_cast<std::size_t>(t * multiplier)];
    std::optional<double> block_best;
    for (int j = t * multiplier; j < (t + 1) * multiplier; ++j) {
      const int pick = draws[static_cast<std::size_t>(j)];
      const std::optional<double> score = column.at(pick);
      if (score && (!block_best || *score > *block_best)) {
        block_best = score;
        rep = pick;
      }
    }
    if (block_best && (!best || *block_best > *best)) best = block_best;
    TraceStep step;
    step.iteration = t + 1;
    step.pipeline = rep;
    step.observed = block_best;
    step.best_so_far = best;
    trace.steps.push_back(step);
  }
  trace.validate();
  return trace;
}

// --- trace serialization: one JSON object per line, a method/dataset/seed/
// --- budget header followed by the steps, traces concatenated back to back.

inline void write_trace_jsonl(const SelectionTrace& trace, std::ostream& out) {
  nlohmann::json header;
  header["method"] = trace.method;
  header["dataset"] = trace.dataset;
  header["seed"] = trace.seed;
  header["budget"] = trace.budget;
  out << header.dump() << '\n';
  for (const TraceStep& s : trace.steps) {
    nlohmann::json j;
    j["iteration"] = s.iteration;
    j["pipeline"] = s.pipeline;
    j["observed"] = s.observed ? nlohmann::json(*s.observed) : nlohmann::json();
    j["best_so_far"] = s.best_so_far ? nlohmann::json(*s.best_so_far) : nlohmann::json();
    if (s.pred_mean) j["pred_mean"] = *s.pred_mean;
    if (s.pred_variance) j["pred_variance"] = *s.pred_variance;
    out << j.dump() << '\n';
  }
}

inline void write_traces_jsonl(const std::vector<SelectionTrace>& traces, std::ostream& out) {
  for (const SelectionTrace& t : traces) write_trace_jsonl(t, out);
}

inline std::vector<SelectionTrace> read_traces_jsonl(std::istream& in) {
  std::vector<SelectionTrace> traces;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError("trace line " + std::to_string(lineno) + ": " + e.what());
    }
    try {
      if (j.contains("method")) {
        SelectionTrace t;
        t.method = j.at("method").get<std::string>();
        t.dataset = j.at("dataset").get<std::string>();
        t.seed = j.at("seed").get<std::uint64_t>();
        t.budget = j.at("budget").get<int>();
        traces.push_back(std::move(t));
        continue;
      }
      if (traces.empty())
        throw ParseError("trace line " + std::to_string(lineno) + ": step before header");
      TraceStep s;
      s.iteration = j.at("iteration").get<int>();
      s.pipeline = j.at("pipeline").get<int>();
      if (!j.at("observed").is_null()) s.observed = j.at("observed").get<double>();
      if (!j.at("best_so_far").is_null()) s.best_so_far = j.at("best_so_far").get<double>();
      if (j.contains("pred_mean")) s.pred_mean = j.at("pred_mean").get<double>();
      if (j.contains("pred_variance")) s.pred_variance = j.at("pred_variance").get<double>();
      traces.back().steps.push_back(s);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError("trace line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  for (const SelectionTrace& t : traces) t.validate();
  return traces;
}

} // namespace amlrec
