#pragma once

#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include "amlrec/errors.hpp"

namespace amlrec {

enum class KernelFamily { rbf_ard, linear };

inline std::string to_string(KernelFamily f) {
  return f == KernelFamily::rbf_ard ? "rbf_ard" : "linear";
}

inline KernelFamily kernel_family_from_string(const std::string& s) {
  if (s == "rbf_ard") return KernelFamily::rbf_ard;
  if (s == "linear") return KernelFamily::linear;
  throw ArgumentError("unknown kernel family '" + s + "'");
}

/// Covariance hyperparameters. gamma holds one inverse squared length-scale
/// per latent dimension; the linear family ignores alpha and gamma.
struct KernelParams {
  KernelFamily family = KernelFamily::rbf_ard;
  double alpha = 1.0;
  Eigen::VectorXd gamma; // size Q, each > 0
  double sigma = 0.1;
  double jitter = 1e-8;

  void validate(Eigen::Index q) const {
    if (!(alpha > 0.0)) throw ArgumentError("kernel alpha must be positive");
    if (!(sigma > 0.0)) throw ArgumentError("kernel sigma must be positive");
    if (!(jitter >= 0.0)) throw ArgumentError("kernel jitter must be nonnegative");
    if (family == KernelFamily::rbf_ard) {
      if (gamma.size() != q)
        throw ArgumentError("gamma has " + std::to_string(gamma.size()) +
                            " entries, embedding has " + std::to_string(q) +
                            " dimensions");
      if ((gamma.array() <= 0.0).any())
        throw ArgumentError("every gamma entry must be positive");
    }
  }
};

/// Latent positions, one row per pipeline.
struct LatentEmbedding {
  Eigen::MatrixXd X;

  int n() const { return static_cast<int>(X.rows()); }
  int q() const { return static_cast<int>(X.cols()); }

  Eigen::MatrixXd rows(const std::vector<int>& idx) const {
    Eigen::MatrixXd out(static_cast<Eigen::Index>(idx.size()), X.cols());
    for (std::size_t r = 0; r < idx.size(); ++r)
      out.row(static_cast<Eigen::Index>(r)) = X.row(idx[r]);
    return out;
  }
};

inline double kernel_value(const Eigen::VectorXd& xi, const Eigen::VectorXd& xj,
                           const KernelParams& p) {
  if (xi.size() != xj.size())
    throw ArgumentError("kernel_value: vectors of different dimension");
  if (p.family == KernelFamily::linear) return xi.dot(xj);
  if (p.gamma.size() != xi.size())
    throw ArgumentError("kernel_value: gamma/vector dimension mismatch");
  const double expo = (p.gamma.array() * (xi - xj).array().square()).sum();
  return p.alpha * std::exp(-0.5 * expo);
}

/// Cross-covariance K(Xa, Xb); pure kernel, no noise, no jitter.
inline Eigen::MatrixXd gram_cross(const Eigen::MatrixXd& Xa, const Eigen::MatrixXd& Xb,
                                  const KernelParams& p) {
  if (Xa.cols() != Xb.cols())
    throw ArgumentError("gram_cross: latent dimension mismatch");
  if (p.family == KernelFamily::linear) return Xa * Xb.transpose();
  if (p.gamma.size() != Xa.cols())
    throw ArgumentError("gram_cross: gamma/latent dimension mismatch");
  // ||xi - xj||^2_gamma = wi + wj - 2 xi G xj with wi = xi G xi
  const Eigen::MatrixXd Ag =
      (Xa.array().rowwise() * p.gamma.transpose().array()).matrix();
  const Eigen::VectorXd wa = (Ag.array() * Xa.array()).rowwise().sum().matrix();
  const Eigen::VectorXd wb = ((Xb.array().rowwise() * p.gamma.transpose().array()) *
                              Xb.array()).rowwise().sum().matrix();
  Eigen::MatrixXd D = -2.0 * (Ag * Xb.transpose());
  D.colwise() += wa;
  D.rowwise() += wb.transpose();
  return p.alpha * (-0.5 * D.array()).exp().matrix();
}

/// Kernel matrix plus guaranteed-SPD factorization. jitter_applied records the
/// diagonal boost that made the Cholesky succeed.
struct FactoredGram {
  Eigen::MatrixXd C;
  Eigen::LLT<Eigen::MatrixXd> chol;
  double jitter_applied = 0.0;
};

/// K(Xs, Xs) with the configured jitter on the diagonal and, if add_noise,
/// sigma^2 as well. The factorization is attempted immediately; on failure the
/// jitter escalates tenfold from max(p.jitter, 1e-8 * alpha) up to 1e-2 * alpha.
inline FactoredGram gram_factored(const Eigen::MatrixXd& Xs, const KernelParams& p,
                                  bool add_noise) {
  if (Xs.rows() < 1) throw ArgumentError("gram: need at least one row");
  p.validate(Xs.cols());
  FactoredGram out;
  out.C = gram_cross(Xs, Xs, p);
  // exact symmetry regardless of summation order inside the GEMM
  out.C = ((out.C + out.C.transpose()) * 0.5).eval();
  const double noise = add_noise ? p.sigma * p.sigma : 0.0;
  out.C.diagonal().array() += noise + p.jitter;
  out.jitter_applied = p.jitter;

  out.chol.compute(out.C);
  if (out.chol.info() == Eigen::Success) return out;

  const double cap = 1e-2 * p.alpha;
  double extra = std::max(p.jitter, 1e-8 * p.alpha);
  while (extra <= cap) {
    Eigen::MatrixXd C = out.C;
    C.diagonal().array() += extra;
    out.chol.compute(C);
    if (out.chol.info() == Eigen::Success) {
      out.C = std::move(C);
      out.jitter_applied = p.jitter + extra;
      return out;
    }
    extra *= 10.0;
  }
  throw NumericError("covariance not positive definite after jitter escalation to " +
                         std::to_string(extra / 10.0),
                     extra / 10.0);
}

inline Eigen::MatrixXd gram(const Eigen::MatrixXd& Xs, const KernelParams& p,
                            bool add_noise) {
  return gram_factored(Xs, p, add_noise).C;
}

/// Entrywise partials of the pure kernel matrix with respect to the
/// hyperparameters. The linear family has none (alpha/gamma unused).
struct KernelGradients {
  Eigen::MatrixXd dalpha;              // dK/dalpha
  std::vector<Eigen::MatrixXd> dgamma; // dK/dgamma_q, one per latent dim
};

inline KernelGradients kernel_gradients(const Eigen::MatrixXd& Xs, const KernelParams& p) {
  p.validate(Xs.cols());
  KernelGradients g;
  if (p.family == KernelFamily::linear) {
    g.dalpha = Eigen::MatrixXd::Zero(Xs.rows(), Xs.rows());
    return g;
  }
  const Eigen::MatrixXd K = gram_cross(Xs, Xs, p);
  g.dalpha = K / p.alpha;
  g.dgamma.reserve(static_cast<std::size_t>(Xs.cols()));
  for (Eigen::Index q = 0; q < Xs.cols(); ++q) {
    const Eigen::VectorXd xq = Xs.col(q);
    Eigen::MatrixXd d2 = xq.array().square().matrix().replicate(1, Xs.rows());
    d2 += d2.transpose().eval();
    d2 -= 2.0 * (xq * xq.transpose());
    g.dgamma.push_back((-0.5 * d2.array() * K.array()).matrix());
  }
  return g;
}

/// dK/dx_{i,q} as a full m x m matrix (nonzero only in row/column i).
/// Companion to kernel_gradients for derivative checks; the training path
/// contracts these partials in closed form instead of materializing them.
inline Eigen::MatrixXd dgram_dlatent(const Eigen::MatrixXd& Xs, const KernelParams& p,
                                     int i, int q) {
  p.validate(Xs.cols());
  const Eigen::Index m = Xs.rows();
  if (i < 0 || i >= m) throw ArgumentError("dgram_dlatent: row index out of range");
  if (q < 0 || q >= Xs.cols()) throw ArgumentError("dgram_dlatent: dim index out of range");
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(m, m);
  if (p.family == KernelFamily::linear) {
    for (Eigen::Index j = 0; j < m; ++j) {
      out(i, j) = Xs(j, q);
      out(j, i) = Xs(j, q);
    }
    out(i, i) = 2.0 * Xs(i, q);
    return out;
  }
  const Eigen::MatrixXd K = gram_cross(Xs, Xs, p);
  for (Eigen::Index j = 0; j < m; ++j) {
    if (j == i) continue;
    const double v = -p.gamma(q) * (Xs(i, q) - Xs(j, q)) * K(i, j);
    out(i, j) = v;
    out(j, i) = v;
  }
  return out;
}

} // namespace amlrec
