#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <istream>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "amlrec/errors.hpp"
#include "amlrec/rng.hpp"

namespace amlrec {

struct MatrixEntry {
  int pipeline = 0;
  int dataset = 0;
  double score = 0.0;

  friend bool operator==(const MatrixEntry& a, const MatrixEntry& b) {
    return a.pipeline == b.pipeline && a.dataset == b.dataset && a.score == b.score;
  }
};

/// Sparse pipeline x dataset score matrix. Missing cells are structurally
/// absent: there is no sentinel value anywhere. Immutable after construction.
class SparsePerfMatrix {
public:
  SparsePerfMatrix(std::vector<std::string> pipeline_ids,
                   std::vector<std::string> dataset_ids,
                   const std::vector<MatrixEntry>& entries)
      : pipeline_ids_(std::move(pipeline_ids)), dataset_ids_(std::move(dataset_ids)) {
    validate_ids(pipeline_ids_, "pipeline");
    validate_ids(dataset_ids_, "dataset");
    const int n = n_pipelines();
    const int d = n_datasets();
    columns_.resize(static_cast<std::size_t>(d));
    std::set<std::pair<int, int>> seen;
    int outside_unit = 0;
    for (const MatrixEntry& e : entries) {
      if (e.pipeline < 0 || e.pipeline >= n || e.dataset < 0 || e.dataset >= d)
        throw ValidationError("entry index (" + std::to_string(e.pipeline) + "," +
                              std::to_string(e.dataset) + ") out of range");
      if (!std::isfinite(e.score))
        throw ValidationError("non-finite score at (" + std::to_string(e.pipeline) +
                              "," + std::to_string(e.dataset) + ")");
      if (!seen.insert({e.pipeline, e.dataset}).second)
        throw ValidationError("duplicate entry at (" + std::to_string(e.pipeline) +
                              "," + std::to_string(e.dataset) + ")");
      if (e.score < 0.0 || e.score > 1.0) ++outside_unit;
      columns_[static_cast<std::size_t>(e.dataset)].push_back({e.pipeline, e.score});
    }
    if (seen.empty()) throw ValidationError("matrix has no observed entries");
    n_observed_ = static_cast<std::int64_t>(seen.size());
    for (std::size_t j = 0; j < columns_.size(); ++j) {
      auto& col = columns_[j];
      std::sort(col.begin(), col.end());
      if (col.empty())
        warnings_.push_back("dataset column " + std::to_string(j) + " (" +
                            dataset_ids_[j] + ") has no observed entries");
    }
    if (outside_unit > 0)
      warnings_.push_back(std::to_string(outside_unit) +
                          " score(s) outside [0,1]; accepted as-is");
  }

  int n_pipelines() const { return static_cast<int>(pipeline_ids_.size()); }
  int n_datasets() const { return static_cast<int>(dataset_ids_.size()); }
  std::int64_t n_observed() const { return n_observed_; }

  double density() const {
    return static_cast<double>(n_observed_) /
           (static_cast<double>(n_pipelines()) * static_cast<double>(n_datasets()));
  }

  const std::vector<std::string>& pipeline_ids() const { return pipeline_ids_; }
  const std::vector<std::string>& dataset_ids() const { return dataset_ids_; }

  /// e(d): sorted pipeline indices observed on dataset column d.
  std::vector<int> observed_index(int d) const {
    const auto& col = checked_column(d);
    std::vector<int> idx;
    idx.reserve(col.size());
    for (const auto& [i, s] : col) idx.push_back(i);
    return idx;
  }

  /// Observed (pipeline, score) pairs of column d, ordered like observed_index.
  const std::vector<std::pair<int, double>>& column(int d) const {
    return checked_column(d);
  }

  std::optional<double> at(int i, int d) const {
    const auto& col = checked_column(d);
    auto it = std::lower_bound(col.begin(), col.end(), std::make_pair(i, -HUGE_VAL));
    if (it != col.end() && it->first == i) return it->second;
    return std::nullopt;
  }

  /// Row-major entry list; the canonical order for serialization.
  std::vector<MatrixEntry> entries_row_major() const {
    std::vector<MatrixEntry> out;
    out.reserve(static_cast<std::size_t>(n_observed_));
    for (int j = 0; j < n_datasets(); ++j)
      for (const auto& [i, s] : columns_[static_cast<std::size_t>(j)])
        out.push_back({i, j, s});
    std::sort(out.begin(), out.end(), [](const MatrixEntry& a, const MatrixEntry& b) {
      return std::tie(a.pipeline, a.dataset) < std::tie(b.pipeline, b.dataset);
    });
    return out;
  }

  std::vector<int> empty_columns() const {
    std::vector<int> out;
    for (int j = 0; j < n_datasets(); ++j)
      if (columns_[static_cast<std::size_t>(j)].empty()) out.push_back(j);
    return out;
  }

  /// Non-fatal findings from construction (empty columns, off-scale scores).
  const std::vector<std::string>& warnings() const { return warnings_; }

  double mean_score() const {
    double sum = 0.0;
    for (const auto& col : columns_)
      for (const auto& [i, s] : col) sum += s;
    return sum / static_cast<double>(n_observed_);
  }

  double score_variance() const {
    const double mu = mean_score();
    double sum = 0.0;
    for (const auto& col : columns_)
      for (const auto& [i, s] : col) sum += (s - mu) * (s - mu);
    return sum / static_cast<double>(n_observed_);
  }

  friend bool operator==(const SparsePerfMatrix& a, const SparsePerfMatrix& b) {
    return a.pipeline_ids_ == b.pipeline_ids_ && a.dataset_ids_ == b.dataset_ids_ &&
           a.columns_ == b.columns_;
  }

private:
  static void validate_ids(const std::vector<std::string>& ids, const char* kind) {
    if (ids.empty())
      throw ValidationError(std::string(kind) + " id list is empty");
    std::unordered_set<std::string> distinct(ids.begin(), ids.end());
    if (distinct.size() != ids.size())
      throw ValidationError(std::string("duplicate ") + kind + " id");
  }

  const std::vector<std::pair<int, double>>& checked_column(int d) const {
    if (d < 0 || d >= n_datasets())
      throw ArgumentError("dataset index " + std::to_string(d) + " out of range [0," +
                          std::to_string(n_datasets()) + ")");
    return columns_[static_cast<std::size_t>(d)];
  }

  std::vector<std::string> pipeline_ids_;
  std::vector<std::string> dataset_ids_;
  std::vector<std::vector<std::pair<int, double>>> columns_;
  std::vector<std::string> warnings_;
  std::int64_t n_observed_ = 0;
};

/// Entries removed from a matrix by mask_holdout, with the seed that chose them.
struct ObservationMask {
  std::vector<std::pair<int, int>> held_out; // sorted (pipeline, dataset)
  std::uint64_t seed = 0;
};

/// Moves floor(fraction * |entries|) uniformly chosen observed entries into a
/// holdout mask and returns the remaining training view. Deterministic in seed.
inline std::pair<SparsePerfMatrix, ObservationMask>
mask_holdout(const SparsePerfMatrix& m, double fraction, std::uint64_t seed) {
  if (!(fraction >= 0.0 && fraction < 1.0))
    throw ArgumentError("holdout fraction must lie in [0,1)");
  const std::vector<MatrixEntry> all = m.entries_row_major();
  const int total = static_cast<int>(all.size());
  const int k = static_cast<int>(std::floor(fraction * static_cast<double>(total)));
  Rng rng(mix_seed(seed, 0x686f6c646f7574ull)); // "holdout"
  std::vector<int> picked = rng.sample_without_replacement(total, k);
  std::vector<char> held(static_cast<std::size_t>(total), 0);
  for (int p : picked) held[static_cast<std::size_t>(p)] = 1;

  std::vector<MatrixEntry> train;
  ObservationMask mask;
  mask.seed = seed;
  train.reserve(all.size() - static_cast<std::size_t>(k));
  for (int t = 0; t < total; ++t) {
    const MatrixEntry& e = all[static_cast<std::size_t>(t)];
    if (held[static_cast<std::size_t>(t)])
      mask.held_out.push_back({e.pipeline, e.dataset});
    else
      train.push_back(e);
  }
  return {SparsePerfMatrix(m.pipeline_ids(), m.dataset_ids(), train), mask};
}

/// View of a matrix restricted to a subset of dataset columns, which keep
/// their relative order; pipeline rows are untouched.
inline SparsePerfMatrix select_datasets(const SparsePerfMatrix& m, const std::vector<int>& keep) {
  std::vector<int> sorted = keep;
  std::sort(sorted.begin(), sorted.end());
  sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
  for (int d : sorted)
    if (d < 0 || d >= m.n_datasets())
      throw ArgumentError("select_datasets: dataset index out of range");
  std::vector<int> remap(static_cast<std::size_t>(m.n_datasets()), -1);
  std::vector<std::string> dids;
  dids.reserve(sorted.size());
  for (std::size_t k = 0; k < sorted.size(); ++k) {
    remap[static_cast<std::size_t>(sorted[k])] = static_cast<int>(k);
    dids.push_back(m.dataset_ids()[static_cast<std::size_t>(sorted[k])]);
  }
  std::vector<MatrixEntry> entries;
  for (const MatrixEntry& e : m.entries_row_major())
    if (remap[static_cast<std::size_t>(e.dataset)] >= 0)
      entries.push_back({e.pipeline, remap[static_cast<std::size_t>(e.dataset)], e.score});
  return SparsePerfMatrix(m.pipeline_ids(), std::move(dids), entries);
}

inline SparsePerfMatrix exclude_datasets(const SparsePerfMatrix& m, const std::vector<int>& drop) {
  std::vector<char> dropped(static_cast<std::size_t>(m.n_datasets()), 0);
  for (int d : drop) {
    if (d < 0 || d >= m.n_datasets())
      throw ArgumentError("exclude_datasets: dataset index out of range");
    dropped[static_cast<std::size_t>(d)] = 1;
  }
  std::vector<int> keep;
  for (int d = 0; d < m.n_datasets(); ++d)
    if (!dropped[static_cast<std::size_t>(d)]) keep.push_back(d);
  return select_datasets(m, keep);
}

enum class MatrixFormat { csv, json };

namespace detail {

/// Shortest round-trip decimal form of a double; used everywhere a score or
/// parameter is written to text so save/load is bit-exact.
inline std::string format_double(double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      cells.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  cells.push_back(cur);
  return cells;
}

inline double parse_cell(const std::string& raw, int row_number) {
  const std::string cell = trim(raw);
  double value = 0.0;
  auto res = std::from_chars(cell.data(), cell.data() + cell.size(), value);
  if (res.ec != std::errc() || res.ptr != cell.data() + cell.size())
    throw ParseError("row " + std::to_string(row_number) + ": cell '" + cell +
                     "' is not a number");
  return value;
}

} // namespace detail

inline SparsePerfMatrix load_matrix_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw ParseError("row 1: empty CSV stream");
  std::vector<std::string> header = detail::split_csv_line(line);
  if (header.size() < 2) throw ParseError("row 1: header needs at least one dataset id");
  std::vector<std::string> dataset_ids;
  for (std::size_t j = 1; j < header.size(); ++j)
    dataset_ids.push_back(detail::trim(header[j]));

  std::vector<std::string> pipeline_ids;
  std::vector<MatrixEntry> entries;
  int row_number = 1;
  while (std::getline(in, line)) {
    ++row_number;
    if (detail::trim(line).empty()) continue;
    std::vector<std::string> cells = detail::split_csv_line(line);
    if (cells.size() != header.size())
      throw ParseError("row " + std::to_string(row_number) + ": expected " +
                       std::to_string(header.size()) + " cells, got " +
                       std::to_string(cells.size()));
    const int i = static_cast<int>(pipeline_ids.size());
    pipeline_ids.push_back(detail::trim(cells[0]));
    for (std::size_t j = 1; j < cells.size(); ++j) {
      if (detail::trim(cells[j]).empty()) continue; // missing
      entries.push_back({i, static_cast<int>(j - 1), detail::parse_cell(cells[j], row_number)});
    }
  }
  return SparsePerfMatrix(std::move(pipeline_ids), std::move(dataset_ids), entries);
}

inline SparsePerfMatrix load_matrix_json(std::istream& in) {
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("invalid matrix JSON: ") + e.what());
  }
  try {
    std::vector<std::string> pids = j.at("pipeline_ids").get<std::vector<std::string>>();
    std::vector<std::string> dids = j.at("dataset_ids").get<std::vector<std::string>>();
    std::vector<MatrixEntry> entries;
    for (const auto& t : j.at("entries")) {
      if (!t.is_array() || t.size() != 3)
        throw ParseError("matrix JSON entry is not an [i, j, score] triple");
      entries.push_back({t[0].get<int>(), t[1].get<int>(), t[2].get<double>()});
    }
    return SparsePerfMatrix(std::move(pids), std::move(dids), entries);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("invalid matrix JSON: ") + e.what());
  }
}

inline SparsePerfMatrix load_matrix(std::istream& in, MatrixFormat format) {
  return format == MatrixFormat::csv ? load_matrix_csv(in) : load_matrix_json(in);
}

inline void save_matrix_csv(const SparsePerfMatrix& m, std::ostream& out) {
  for (const std::string& id : m.dataset_ids()) out << ',' << id;
  out << '\n';
  for (int i = 0; i < m.n_pipelines(); ++i) {
    out << m.pipeline_ids()[static_cast<std::size_t>(i)];
    for (int d = 0; d < m.n_datasets(); ++d) {
      out << ',';
      if (auto v = m.at(i, d)) out << detail::format_double(*v);
    }
    out << '\n';
  }
}

inline void save_matrix_json(const SparsePerfMatrix& m, std::ostream& out) {
  nlohmann::json j;
  j["pipeline_ids"] = m.pipeline_ids();
  j["dataset_ids"] = m.dataset_ids();
  nlohmann::json entries = nlohmann::json::array();
  for (const MatrixEntry& e : m.entries_row_major())
    entries.push_back({e.pipeline, e.dataset, e.score});
  j["entries"] = std::move(entries);
  out << j.dump(2) << '\n';
}

inline void save_matrix(const SparsePerfMatrix& m, std::ostream& out, MatrixFormat format) {
  if (format == MatrixFormat::csv)
    save_matrix_csv(m, out);
  else
    save_matrix_json(m, out);
}

} // namespace amlrec
