#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <iostream>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/SVD>
#include <nlohmann/json.hpp>

#include "amlrec/errors.hpp"
#include "amlrec/kernel.hpp"
#include "amlrec/perf_matrix.hpp"
#include "amlrec/rng.hpp"

namespace amlrec {

enum class Optimizer { sgd, adam };
enum class InitMethod { pca, random };

inline std::string to_string(Optimizer o) { return o == Optimizer::sgd ? "sgd" : "adam"; }
inline std::string to_string(InitMethod i) { return i == InitMethod::pca ? "pca" : "random"; }

inline Optimizer optimizer_from_string(const std::string& s) {
  if (s == "sgd") return Optimizer::sgd;
  if (s == "adam") return Optimizer::adam;
  throw ArgumentError("unknown optimizer '" + s + "'");
}

inline InitMethod init_from_string(const std::string& s) {
  if (s == "pca") return InitMethod::pca;
  if (s == "random") return InitMethod::random;
  throw ArgumentError("unknown init method '" + s + "'");
}

struct TrainConfig {
  int q = 20;
  double learning_rate = 0.0; // 0 selects the optimizer default below
  Optimizer optimizer = Optimizer::sgd;
  int epochs = 300;
  int column_batch = 50;
  std::uint64_t seed = 0;
  InitMethod init = InitMethod::pca;
  KernelFamily kernel = KernelFamily::rbf_ard;
  double sigma_lr_scale = 1.0; // separate step-size scaling for the noise term
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;

  double resolved_learning_rate() const {
    if (learning_rate > 0.0) return learning_rate;
    return optimizer == Optimizer::adam ? 1e-2 : 1e-7;
  }

  void validate() const {
    if (q < 1) throw ArgumentError("q must be >= 1");
    if (epochs < 1) throw ArgumentError("epochs must be >= 1");
    if (column_batch < 1) throw ArgumentError("column_batch must be >= 1");
    if (!(sigma_lr_scale > 0.0)) throw ArgumentError("sigma_lr_scale must be positive");
    if (learning_rate < 0.0) throw ArgumentError("learning_rate must be positive");
  }
};

struct TrainingMeta {
  int epochs_run = 0;
  double final_nll = std::numeric_limits<double>::quiet_NaN();
  std::uint64_t seed = 0;
  std::string optimizer = "sgd";
  std::vector<double> epoch_nll;
};

struct Model {
  LatentEmbedding embedding;
  KernelParams params;
  TrainingMeta meta;
};

/// Principal-component scores of the row-mean-imputed, column-centered matrix.
/// Rows with no observations fall back to the global observed mean. Each score
/// column carries the variance of its component; per-component sign is fixed
/// by making the largest-magnitude loading positive.
inline LatentEmbedding pca_init(const SparsePerfMatrix& m, int q) {
  const int n = m.n_pipelines();
  const int d = m.n_datasets();
  if (q < 1 || q > std::min(n, d))
    throw ArgumentError("pca_init: q must lie in [1, min(N,D)]");
  if (m.n_observed() < 1)
    throw ValidationError("pca_init: matrix has no observed entries");

  Eigen::VectorXd row_sum = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd row_cnt = Eigen::VectorXd::Zero(n);
  for (int j = 0; j < d; ++j)
    for (const auto& [i, s] : m.column(j)) {
      row_sum(i) += s;
      row_cnt(i) += 1.0;
    }
  const double global_mean = m.mean_score();
  Eigen::MatrixXd A(n, d);
  for (int i = 0; i < n; ++i) {
    const double fill = row_cnt(i) > 0.0 ? row_sum(i) / row_cnt(i) : global_mean;
    A.row(i).setConstant(fill);
  }
  for (int j = 0; j < d; ++j)
    for (const auto& [i, s] : m.column(j)) A(i, j) = s;

  const Eigen::RowVectorXd col_mean = A.colwise().mean();
  A.rowwise() -= col_mean;

  Eigen::BDCSVD<Eigen::MatrixXd> svd(A, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Eigen::MatrixXd& U = svd.matrixU();
  const Eigen::MatrixXd& V = svd.matrixV();
  const Eigen::VectorXd& S = svd.singularValues();

  Eigen::MatrixXd X(n, q);
  for (int k = 0; k < q; ++k) {
    Eigen::VectorXd scores = U.col(k) * S(k);
    Eigen::Index im = 0;
    V.col(k).cwiseAbs().maxCoeff(&im);
    if (V(im, k) < 0.0) scores = -scores;
    X.col(k) = scores;
  }
  return {std::move(X)};
}

inline LatentEmbedding random_init(const SparsePerfMatrix& m, int q, std::uint64_t seed) {
  if (q < 1) throw ArgumentError("random_init: q must be >= 1");
  Rng rng(mix_seed(seed, 0x696e6974ull)); // "init"
  Eigen::MatrixXd X(m.n_pipelines(), q);
  for (Eigen::Index i = 0; i < X.rows(); ++i)
    for (Eigen::Index k = 0; k < X.cols(); ++k) X(i, k) = rng.normal();
  return {std::move(X)};
}

/// Negative log marginal likelihood of one dataset column:
///   1/2 log|C| + 1/2 y' C^-1 y + (n/2) log 2pi,  C = K(X_idx, X_idx) + sigma^2 I.
inline double nll_column(const LatentEmbedding& emb, const KernelParams& p,
                         const Eigen::VectorXd& y, const std::vector<int>& idx) {
  if (idx.empty()) throw ArgumentError("nll_column: empty observation index");
  if (static_cast<Eigen::Index>(idx.size()) != y.size())
    throw ArgumentError("nll_column: |y| and |idx| differ");
  const Eigen::MatrixXd Xe = emb.rows(idx);
  const FactoredGram fg = gram_factored(Xe, p, /*add_noise=*/true);
  const double logdet = 2.0 * fg.chol.matrixLLT().diagonal().array().log().sum();
  const Eigen::VectorXd w = fg.chol.matrixL().solve(y);
  const double n = static_cast<double>(y.size());
  return 0.5 * logdet + 0.5 * w.squaredNorm() + 0.5 * n * std::log(2.0 * M_PI);
}

/// Sum of nll_column over every dataset column with at least one observation.
inline double nll_total(const LatentEmbedding& emb, const KernelParams& p,
                        const SparsePerfMatrix& m) {
  double total = 0.0;
  for (int d = 0; d < m.n_datasets(); ++d) {
    const auto& col = m.column(d);
    if (col.empty()) continue;
    std::vector<int> idx;
    Eigen::VectorXd y(static_cast<Eigen::Index>(col.size()));
    idx.reserve(col.size());
    for (std::size_t r = 0; r < col.size(); ++r) {
      idx.push_back(col[r].first);
      y(static_cast<Eigen::Index>(r)) = col[r].second;
    }
    total += nll_column(emb, p, y, idx);
  }
  return total;
}

/// Raw-space gradients of nll_column. dX rows align with idx; rows outside idx
/// have gradient zero by construction and are simply not represented.
struct ColumnGradient {
  Eigen::MatrixXd dX;
  double dalpha = 0.0;
  Eigen::VectorXd dgamma;
  double dsigma = 0.0;
  double nll = 0.0;
};

inline ColumnGradient grad_column(const LatentEmbedding& emb, const KernelParams& p,
                                  const Eigen::VectorXd& y, const std::vector<int>& idx) {
  if (idx.empty()) throw ArgumentError("grad_column: empty observation index");
  if (static_cast<Eigen::Index>(idx.size()) != y.size())
    throw ArgumentError("grad_column: |y| and |idx| differ");
  const Eigen::MatrixXd Xe = emb.rows(idx);
  const Eigen::Index mrows = Xe.rows();
  const FactoredGram fg = gram_factored(Xe, p, /*add_noise=*/true);

  Eigen::MatrixXd Cinv = fg.chol.solve(Eigen::MatrixXd::Identity(mrows, mrows));
  Cinv = ((Cinv + Cinv.transpose()) * 0.5).eval();
  const Eigen::VectorXd a = fg.chol.solve(y);
  // dL/dC for L = 1/2 log|C| + 1/2 y'C^-1 y
  const Eigen::MatrixXd G = 0.5 * (Cinv - a * a.transpose());

  ColumnGradient g;
  const double logdet = 2.0 * fg.chol.matrixLLT().diagonal().array().log().sum();
  g.nll = 0.5 * logdet + 0.5 * y.dot(a) +
          0.5 * static_cast<double>(mrows) * std::log(2.0 * M_PI);
  g.dsigma = 2.0 * p.sigma * G.trace();

  if (p.family == KernelFamily::linear) {
    g.dX = 2.0 * G * Xe;
    g.dgamma.resize(0);
    return g;
  }

  const Eigen::MatrixXd Kpure = gram_cross(Xe, Xe, p);
  const Eigen::MatrixXd M = (G.array() * Kpure.array()).matrix();
  const Eigen::VectorXd r = M.rowwise().sum();
  g.dalpha = M.sum() / p.alpha;
  g.dgamma.resize(p.gamma.size());
  g.dX.resize(mrows, Xe.cols());
  for (Eigen::Index k = 0; k < Xe.cols(); ++k) {
    const Eigen::VectorXd xq = Xe.col(k);
    const Eigen::VectorXd Mx = M * xq;
    g.dgamma(k) = -(xq.array().square() * r.array()).sum() + xq.dot(Mx);
    g.dX.col(k) = -2.0 * p.gamma(k) * (xq.array() * r.array() - Mx.array()).matrix();
  }
  return g;
}

namespace detail {

struct ColumnCache {
  int dataset = 0;
  std::vector<int> idx;
  Eigen::VectorXd y;
};

inline std::vector<ColumnCache> cache_columns(const SparsePerfMatrix& m) {
  std::vector<ColumnCache> cols;
  for (int d = 0; d < m.n_datasets(); ++d) {
    const auto& col = m.column(d);
    if (col.empty()) continue;
    ColumnCache c;
    c.dataset = d;
    c.y.resize(static_cast<Eigen::Index>(col.size()));
    for (std::size_t r = 0; r < col.size(); ++r) {
      c.idx.push_back(col[r].first);
      c.y(static_cast<Eigen::Index>(r)) = col[r].second;
    }
    cols.push_back(std::move(c));
  }
  return cols;
}

} // namespace detail

using EpochCallback = std::function<void(int epoch, const Model&)>;

/// Fits latent positions and kernel hyperparameters by stochastic gradient
/// descent over dataset columns. Columns are visited in a seed-shuffled order,
/// grouped into batches of column_batch; each batch applies one update from
/// the batch-summed gradient. Hyperparameters move in log space. Single
/// threaded: identical seeds give bit-identical models.
inline Model train(const SparsePerfMatrix& m, const TrainConfig& cfg,
                   const EpochCallback& on_epoch = {}) {
  cfg.validate();
  const int n = m.n_pipelines();
  int q = cfg.q;
  if (cfg.init == InitMethod::pca && q > std::min(n, m.n_datasets())) {
    q = std::min(n, m.n_datasets());
    std::cerr << "[amlrec] q=" << cfg.q << " exceeds min(N,D); PCA init clamps it to "
              << q << "\n";
  }

  Model model;
  model.embedding = cfg.init == InitMethod::pca ? pca_init(m, q)
                                                : random_init(m, q, cfg.seed);
  const double score_var = std::max(m.score_variance(), 1e-8);
  model.params.family = cfg.kernel;
  model.params.alpha = score_var;
  model.params.gamma = Eigen::VectorXd::Constant(q, 1.0 / static_cast<double>(q));
  model.params.sigma = 0.1 * std::sqrt(score_var);
  model.params.jitter = 1e-8 * score_var;
  model.meta.seed = cfg.seed;
  model.meta.optimizer = to_string(cfg.optimizer);

  const bool rbf = cfg.kernel == KernelFamily::rbf_ard;
  // log-space hyperparameter vector: [log alpha, log gamma_0..q-1,] log sigma
  const int nh = rbf ? q + 2 : 1;
  const int sigma_slot = nh - 1;
  Eigen::VectorXd h(nh);
  if (rbf) {
    h(0) = std::log(model.params.alpha);
    for (int k = 0; k < q; ++k) h(1 + k) = std::log(model.params.gamma(k));
  }
  h(sigma_slot) = std::log(model.params.sigma);
  auto decode_hypers = [&](Model& mod) {
    if (rbf) {
      mod.params.alpha = std::exp(h(0));
      for (int k = 0; k < q; ++k) mod.params.gamma(k) = std::exp(h(1 + k));
      mod.params.jitter = 1e-8 * mod.params.alpha;
    }
    mod.params.sigma = std::exp(h(sigma_slot));
  };

  const std::vector<detail::ColumnCache> cols = detail::cache_columns(m);
  std::vector<int> order(cols.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);

  const double lr = cfg.resolved_learning_rate();
  Eigen::MatrixXd adam_mX, adam_vX;
  Eigen::VectorXd adam_mh, adam_vh;
  long adam_t = 0;
  if (cfg.optimizer == Optimizer::adam) {
    adam_mX = Eigen::MatrixXd::Zero(n, q);
    adam_vX = Eigen::MatrixXd::Zero(n, q);
    adam_mh = Eigen::VectorXd::Zero(nh);
    adam_vh = Eigen::VectorXd::Zero(nh);
  }

  Rng rng(mix_seed(cfg.seed, 0x747261696eull)); // "train"
  Eigen::MatrixXd gX = Eigen::MatrixXd::Zero(n, q);
  std::vector<char> touched(static_cast<std::size_t>(n), 0);
  std::vector<int> touched_rows;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    rng.shuffle(order);
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(cfg.column_batch)) {
      const std::size_t stop =
          std::min(order.size(), start + static_cast<std::size_t>(cfg.column_batch));
      Eigen::VectorXd gh = Eigen::VectorXd::Zero(nh);
      touched_rows.clear();

      for (std::size_t b = start; b < stop; ++b) {
        const detail::ColumnCache& c = cols[static_cast<std::size_t>(order[b])];
        ColumnGradient g = grad_column(model.embedding, model.params, c.y, c.idx);
        if (!std::isfinite(g.nll))
          throw TrainError("non-finite column NLL", epoch, c.dataset);
        for (std::size_t r = 0; r < c.idx.size(); ++r) {
          const int row = c.idx[r];
          gX.row(row) += g.dX.row(static_cast<Eigen::Index>(r));
          if (!touched[static_cast<std::size_t>(row)]) {
            touched[static_cast<std::size_t>(row)] = 1;
            touched_rows.push_back(row);
          }
        }
        // chain rule into log space: d/d(log v) = v * d/dv
        if (rbf) {
          gh(0) += g.dalpha * model.params.alpha;
          for (int k = 0; k < q; ++k) gh(1 + k) += g.dgamma(k) * model.params.gamma(k);
        }
        gh(sigma_slot) += g.dsigma * model.params.sigma;
      }

      if (cfg.optimizer == Optimizer::sgd) {
        for (int row : touched_rows) {
          model.embedding.X.row(row) -= lr * gX.row(row);
          gX.row(row).setZero();
          touched[static_cast<std::size_t>(row)] = 0;
        }
        for (int k = 0; k < nh; ++k) {
          const double step = k == sigma_slot ? lr * cfg.sigma_lr_scale : lr;
          h(k) -= step * gh(k);
        }
      } else {
        ++adam_t;
        const double c1 = 1.0 - std::pow(cfg.adam_beta1, static_cast<double>(adam_t));
        const double c2 = 1.0 - std::pow(cfg.adam_beta2, static_cast<double>(adam_t));
        for (int row : touched_rows) {
          for (int k = 0; k < q; ++k) {
            const double grad = gX(row, k);
            double& mm = adam_mX(row, k);
            double& vv = adam_vX(row, k);
            mm = cfg.adam_beta1 * mm + (1.0 - cfg.adam_beta1) * grad;
            vv = cfg.adam_beta2 * vv + (1.0 - cfg.adam_beta2) * grad * grad;
            model.embedding.X(row, k) -=
                lr * (mm / c1) / (std::sqrt(vv / c2) + cfg.adam_eps);
          }
          gX.row(row).setZero();
          touched[static_cast<std::size_t>(row)] = 0;
        }
        for (int k = 0; k < nh; ++k) {
          const double step = k == sigma_slot ? lr * cfg.sigma_lr_scale : lr;
          double& mm = adam_mh(k);
          double& vv = adam_vh(k);
          mm = cfg.adam_beta1 * mm + (1.0 - cfg.adam_beta1) * gh(k);
          vv = cfg.adam_beta2 * vv + (1.0 - cfg.adam_beta2) * gh(k) * gh(k);
          h(k) -= step * (mm / c1) / (std::sqrt(vv / c2) + cfg.adam_eps);
        }
      }
      decode_hypers(model);
    }

    const double nll = nll_total(model.embedding, model.params, m);
    if (!std::isfinite(nll)) throw TrainError("non-finite total NLL", epoch, -1);
    model.meta.epoch_nll.push_back(nll);
    model.meta.epochs_run = epoch;
    model.meta.final_nll = nll;
    if (on_epoch) on_epoch(epoch, model);
  }
  return model;
}

inline nlohmann::json model_to_json(const Model& model) {
  nlohmann::json j;
  j["q"] = model.embedding.q();
  nlohmann::json kernel;
  kernel["family"] = to_string(model.params.family);
  kernel["alpha"] = model.params.alpha;
  kernel["gamma"] = std::vector<double>(model.params.gamma.data(),
                                        model.params.gamma.data() + model.params.gamma.size());
  kernel["sigma"] = model.params.sigma;
  kernel["jitter"] = model.params.jitter;
  j["kernel"] = std::move(kernel);
  nlohmann::json X = nlohmann::json::array();
  for (Eigen::Index i = 0; i < model.embedding.X.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index k = 0; k < model.embedding.X.cols(); ++k)
      row.push_back(model.embedding.X(i, k));
    X.push_back(std::move(row));
  }
  j["X"] = std::move(X);
  nlohmann::json meta;
  meta["epochs_run"] = model.meta.epochs_run;
  meta["final_nll"] = model.meta.final_nll;
  meta["seed"] = model.meta.seed;
  meta["optimizer"] = model.meta.optimizer;
  meta["epoch_nll"] = model.meta.epoch_nll;
  j["meta"] = std::move(meta);
  return j;
}

inline Model model_from_json(const nlohmann::json& j) {
  try {
    Model model;
    const int q = j.at("q").get<int>();
    const auto& kernel = j.at("kernel");
    model.params.family = kernel_family_from_string(kernel.at("family").get<std::string>());
    model.params.alpha = kernel.at("alpha").get<double>();
    const std::vector<double> gamma = kernel.at("gamma").get<std::vector<double>>();
    model.params.gamma =
        Eigen::Map<const Eigen::VectorXd>(gamma.data(), static_cast<Eigen::Index>(gamma.size()));
    model.params.sigma = kernel.at("sigma").get<double>();
    model.params.jitter = kernel.value("jitter", 1e-8 * model.params.alpha);
    const auto& X = j.at("X");
    const Eigen::Index rows = static_cast<Eigen::Index>(X.size());
    model.embedding.X.resize(rows, q);
    for (Eigen::Index i = 0; i < rows; ++i) {
      const auto& row = X[static_cast<std::size_t>(i)];
      if (static_cast<int>(row.size()) != q)
        throw ValidationError("model X row has wrong dimension");
      for (int k = 0; k < q; ++k) model.embedding.X(i, k) = row[static_cast<std::size_t>(k)].get<double>();
    }
    if (j.contains("meta")) {
      const auto& meta = j.at("meta");
      model.meta.epochs_run = meta.value("epochs_run", 0);
      model.meta.final_nll = meta.value("final_nll", std::numeric_limits<double>::quiet_NaN());
      model.meta.seed = meta.value("seed", std::uint64_t{0});
      model.meta.optimizer = meta.value("optimizer", std::string("sgd"));
      model.meta.epoch_nll = meta.value("epoch_nll", std::vector<double>{});
    }
    model.params.validate(model.embedding.X.cols());
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("invalid model JSON: ") + e.what());
  }
}

inline void save_model(const Model& model, std::ostream& out) {
  out << model_to_json(model).dump(2) << '\n';
}

inline Model load_model(std::istream& in) {
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("invalid model JSON: ") + e.what());
  }
  return model_from_json(j);
}

} // namespace amlrec
