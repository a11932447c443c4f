#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <sstream>
#include <vector>

#include "amlrec/gplvm.hpp"
#include "amlrec/kernel.hpp"
#include "amlrec/rng.hpp"

using namespace amlrec;

namespace {

KernelParams rbf_params(int q, double alpha = 1.0, double gamma = 1.0,
                        double sigma = 0.1) {
  KernelParams p;
  p.family = KernelFamily::rbf_ard;
  p.alpha = alpha;
  p.gamma = Eigen::VectorXd::Constant(q, gamma);
  p.sigma = sigma;
  p.jitter = 1e-8 * alpha;
  return p;
}

KernelParams linear_params(double sigma = 0.1) {
  KernelParams p;
  p.family = KernelFamily::linear;
  p.sigma = sigma;
  p.jitter = 1e-8;
  return p;
}

Eigen::MatrixXd random_latents(int n, int q, std::uint64_t seed) {
  Rng rng(seed);
  Eigen::MatrixXd X(n, q);
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < q; ++k) X(i, k) = rng.normal();
  return X;
}

SparsePerfMatrix random_matrix(int n, int d, double missing, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<std::string> pids, dids;
  for (int i = 0; i < n; ++i) pids.push_back("p" + std::to_string(i));
  for (int j = 0; j < d; ++j) dids.push_back("d" + std::to_string(j));
  std::vector<MatrixEntry> entries;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j)
      if (rng.uniform01() >= missing) entries.push_back({i, j, rng.uniform01()});
  return SparsePerfMatrix(pids, dids, entries);
}

// Dense NLL through an explicit inverse: the reference the factored version
// must agree with. Builds C entrywise from kernel_value, no shared code path.
double nll_dense(const Eigen::MatrixXd& Xe, const KernelParams& p,
                 const Eigen::VectorXd& y) {
  const Eigen::Index m = Xe.rows();
  Eigen::MatrixXd C(m, m);
  for (Eigen::Index i = 0; i < m; ++i)
    for (Eigen::Index j = 0; j < m; ++j) {
      const Eigen::VectorXd xi = Xe.row(i).transpose();
      const Eigen::VectorXd xj = Xe.row(j).transpose();
      C(i, j) = kernel_value(xi, xj, p);
    }
  C.diagonal().array() += p.sigma * p.sigma + p.jitter;
  const Eigen::MatrixXd Cinv = C.inverse();
  const double logdet = std::log(C.determinant());
  return 0.5 * logdet + 0.5 * y.dot(Cinv * y) +
         0.5 * static_cast<double>(m) * std::log(2.0 * M_PI);
}

double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)});
}

} // namespace

// ---------------------------------------------------------------------------
// kernel

TEST_CASE("kernel value matches hand-computed cases") {
  // zero distance: k = alpha exactly
  KernelParams p = rbf_params(2, 2.0, 0.7, 0.1);
  Eigen::VectorXd x(2);
  x << 0.3, -1.2;
  CHECK(kernel_value(x, x, p) == 2.0);

  // one dimension, alpha=1, gamma=2, points 0 and 1: k = exp(-1)
  KernelParams p1 = rbf_params(1, 1.0, 2.0, 0.1);
  Eigen::VectorXd a(1), b(1);
  a << 0.0;
  b << 1.0;
  CHECK(kernel_value(a, b, p1) == Catch::Approx(std::exp(-1.0)).epsilon(1e-14));

  // linear kernel is the plain dot product, alpha/gamma ignored
  KernelParams lp = linear_params();
  Eigen::VectorXd u(2), v(2);
  u << 1.0, 2.0;
  v << 3.0, 4.0;
  CHECK(kernel_value(u, v, lp) == 11.0);
}

TEST_CASE("kernel value rejects mismatched dimensions") {
  KernelParams p = rbf_params(2);
  Eigen::VectorXd a(2), b(3);
  a.setZero();
  b.setZero();
  CHECK_THROWS_AS(kernel_value(a, b, p), ArgumentError);
  Eigen::VectorXd c(3), d(3);
  c.setZero();
  d.setZero();
  CHECK_THROWS_AS(kernel_value(c, d, p), ArgumentError); // gamma has 2 entries
}

TEST_CASE("gram of a single point is alpha + sigma^2 + jitter") {
  KernelParams p = rbf_params(3, 1.7, 0.4, 0.25);
  Eigen::MatrixXd X = random_latents(1, 3, 5);
  const Eigen::MatrixXd C = gram(X, p, /*add_noise=*/true);
  REQUIRE(C.rows() == 1);
  CHECK(C(0, 0) == Catch::Approx(1.7 + 0.25 * 0.25 + p.jitter).epsilon(1e-15));
}

TEST_CASE("gram agrees with entrywise kernel values and is exactly symmetric") {
  const Eigen::MatrixXd X = random_latents(6, 3, 11);
  for (const KernelParams& p : {rbf_params(3, 1.3, 0.8, 0.2), linear_params(0.2)}) {
    const Eigen::MatrixXd C = gram(X, p, /*add_noise=*/true);
    CHECK((C - C.transpose()).cwiseAbs().maxCoeff() == 0.0);
    for (int i = 0; i < 6; ++i)
      for (int j = 0; j < 6; ++j) {
        const Eigen::VectorXd xi = X.row(i).transpose();
        const Eigen::VectorXd xj = X.row(j).transpose();
        double want = kernel_value(xi, xj, p);
        if (i == j) want += p.sigma * p.sigma + p.jitter;
        CHECK(std::abs(C(i, j) - want) < 1e-14);
      }
  }
}

TEST_CASE("gram_cross matches gram up to the diagonal terms") {
  const Eigen::MatrixXd X = random_latents(5, 2, 17);
  const KernelParams p = rbf_params(2, 0.9, 1.4, 0.3);
  const Eigen::MatrixXd K = gram_cross(X, X, p);
  Eigen::MatrixXd C = gram(X, p, /*add_noise=*/true);
  C.diagonal().array() -= p.sigma * p.sigma + p.jitter;
  CHECK((K - C).cwiseAbs().maxCoeff() < 1e-12);

  // rectangular case transposes cleanly
  const Eigen::MatrixXd A = random_latents(4, 2, 23);
  const Eigen::MatrixXd B = random_latents(7, 2, 29);
  const Eigen::MatrixXd AB = gram_cross(A, B, p);
  const Eigen::MatrixXd BA = gram_cross(B, A, p);
  REQUIRE(AB.rows() == 4);
  REQUIRE(AB.cols() == 7);
  CHECK((AB - BA.transpose()).cwiseAbs().maxCoeff() < 1e-14);

  CHECK_THROWS_AS(gram_cross(A, random_latents(3, 4, 31), p), ArgumentError);
}

TEST_CASE("rbf kernel is translation invariant and decays with distance") {
  const KernelParams p = rbf_params(2, 1.1, 0.9, 0.1);
  const Eigen::MatrixXd X = random_latents(8, 2, 37);
  Eigen::MatrixXd Xs = X;
  Xs.array() += 3.25; // same shift on every coordinate
  const Eigen::MatrixXd K = gram_cross(X, X, p);
  const Eigen::MatrixXd Ks = gram_cross(Xs, Xs, p);
  CHECK((K - Ks).cwiseAbs().maxCoeff() < 1e-12);

  Eigen::VectorXd o = Eigen::VectorXd::Zero(2);
  double prev = p.alpha + 1.0;
  for (double dist : {0.0, 0.5, 1.0, 2.0, 4.0}) {
    Eigen::VectorXd x(2);
    x << dist, 0.0;
    const double k = kernel_value(o, x, p);
    CHECK(k < prev);
    prev = k;
  }
}

TEST_CASE("noise-augmented gram stays positive definite") {
  for (std::uint64_t seed : {1ull, 2ull, 3ull}) {
    const Eigen::MatrixXd X = random_latents(20, 4, seed);
    const KernelParams p = rbf_params(4, 2.0, 1.5, 0.2);
    const Eigen::MatrixXd C = gram(X, p, /*add_noise=*/true);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(C);
    CHECK(es.eigenvalues().minCoeff() > 0.5 * p.sigma * p.sigma);
  }
}

TEST_CASE("kernel hyperparameter gradients match finite differences") {
  const Eigen::MatrixXd X = random_latents(5, 2, 41);
  KernelParams p = rbf_params(2, 1.4, 0.0, 0.1);
  p.gamma << 0.6, 1.7;
  const KernelGradients g = kernel_gradients(X, p);
  const Eigen::MatrixXd K = gram_cross(X, X, p);

  // analytic identity dK/dalpha = K / alpha
  CHECK((g.dalpha - K / p.alpha).cwiseAbs().maxCoeff() < 1e-14);
  // zero squared distance on the diagonal: dK/dgamma vanishes there
  for (int q = 0; q < 2; ++q)
    CHECK(g.dgamma[static_cast<std::size_t>(q)].diagonal().cwiseAbs().maxCoeff() == 0.0);

  const double h = 1e-6;
  for (int q = 0; q < 2; ++q) {
    KernelParams hi = p, lo = p;
    hi.gamma(q) += h;
    lo.gamma(q) -= h;
    const Eigen::MatrixXd fd =
        (gram_cross(X, X, hi) - gram_cross(X, X, lo)) / (2.0 * h);
    const Eigen::MatrixXd& an = g.dgamma[static_cast<std::size_t>(q)];
    for (int i = 0; i < 5; ++i)
      for (int j = 0; j < 5; ++j) CHECK(rel_err(an(i, j), fd(i, j)) < 1e-5);
  }

  KernelParams hi = p, lo = p;
  hi.alpha += h;
  lo.alpha -= h;
  const Eigen::MatrixXd fda =
      (gram_cross(X, X, hi) - gram_cross(X, X, lo)) / (2.0 * h);
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 5; ++j) CHECK(rel_err(g.dalpha(i, j), fda(i, j)) < 1e-5);

  // linear family exposes no kernel hyperparameters
  const KernelGradients gl = kernel_gradients(X, linear_params());
  CHECK(gl.dalpha.cwiseAbs().maxCoeff() == 0.0);
  CHECK(gl.dgamma.empty());
}

TEST_CASE("latent gradient of the gram matrix matches finite differences") {
  const KernelParams p = rbf_params(3, 1.2, 0.8, 0.1);
  const Eigen::MatrixXd X = random_latents(6, 3, 43);
  const double h = 1e-6;
  for (int i : {0, 2, 5})
    for (int q = 0; q < 3; ++q) {
      const Eigen::MatrixXd an = dgram_dlatent(X, p, i, q);
      Eigen::MatrixXd hi = X, lo = X;
      hi(i, q) += h;
      lo(i, q) -= h;
      const Eigen::MatrixXd fd =
          (gram_cross(hi, hi, p) - gram_cross(lo, lo, p)) / (2.0 * h);
      for (int r = 0; r < 6; ++r)
        for (int c = 0; c < 6; ++c) CHECK(rel_err(an(r, c), fd(r, c)) < 1e-5);
    }
  CHECK_THROWS_AS(dgram_dlatent(X, p, 6, 0), ArgumentError);
  CHECK_THROWS_AS(dgram_dlatent(X, p, 0, 3), ArgumentError);
}

// ---------------------------------------------------------------------------
// initialization

TEST_CASE("pca init recovers a rank-one structure") {
  // scores(i,j) = u_i * v_j with zero-mean u: the first component carries
  // everything, so X.col(0) must be proportional to u and X.col(1) ~ 0.
  const int n = 8, d = 4;
  Eigen::VectorXd u(n);
  u << -0.7, -0.5, -0.3, -0.1, 0.1, 0.3, 0.5, 0.7;
  Eigen::VectorXd v(d);
  v << 0.2, 0.4, 0.6, 0.8;
  std::vector<std::string> pids, dids;
  for (int i = 0; i < n; ++i) pids.push_back("p" + std::to_string(i));
  for (int j = 0; j < d; ++j) dids.push_back("d" + std::to_string(j));
  std::vector<MatrixEntry> entries;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) entries.push_back({i, j, 0.5 + u(i) * v(j) * 0.5});
  const SparsePerfMatrix m(pids, dids, entries);

  const LatentEmbedding emb = pca_init(m, 2);
  REQUIRE(emb.n() == n);
  REQUIRE(emb.q() == 2);
  CHECK(emb.X.col(1).cwiseAbs().maxCoeff() < 1e-8);
  // projection residual of col(0) against u
  const Eigen::VectorXd x0 = emb.X.col(0);
  const Eigen::VectorXd proj = u * (u.dot(x0) / u.squaredNorm());
  CHECK((x0 - proj).norm() < 1e-10);
  // deterministic sign: the dominant loading is positive, and v > 0
  // everywhere, so scores must be positively aligned with u
  CHECK(u.dot(x0) > 0.0);
}

TEST_CASE("pca init equals a hand-rolled impute/center/svd pipeline") {
  const SparsePerfMatrix m = random_matrix(9, 5, 0.3, 47);
  const int q = 3;
  const LatentEmbedding emb = pca_init(m, q);

  const int n = m.n_pipelines(), d = m.n_datasets();
  Eigen::MatrixXd A(n, d);
  for (int i = 0; i < n; ++i) {
    double s = 0.0;
    int c = 0;
    for (int j = 0; j < d; ++j)
      if (auto val = m.at(i, j)) {
        s += *val;
        ++c;
      }
    A.row(i).setConstant(c > 0 ? s / c : m.mean_score());
  }
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j)
      if (auto val = m.at(i, j)) A(i, j) = *val;
  A.rowwise() -= Eigen::RowVectorXd(A.colwise().mean());
  Eigen::BDCSVD<Eigen::MatrixXd> svd(A, Eigen::ComputeThinU | Eigen::ComputeThinV);
  Eigen::MatrixXd want(n, q);
  for (int k = 0; k < q; ++k) {
    Eigen::VectorXd s = svd.matrixU().col(k) * svd.singularValues()(k);
    Eigen::Index im = 0;
    svd.matrixV().col(k).cwiseAbs().maxCoeff(&im);
    if (svd.matrixV()(im, k) < 0.0) s = -s;
    want.col(k) = s;
  }
  CHECK((emb.X - want).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("init rejects out-of-range latent dimension") {
  const SparsePerfMatrix m = random_matrix(5, 3, 0.0, 53);
  CHECK_THROWS_AS(pca_init(m, 0), ArgumentError);
  CHECK_THROWS_AS(pca_init(m, 4), ArgumentError); // min(N,D) = 3
  CHECK_THROWS_AS(random_init(m, 0, 1), ArgumentError);
}

TEST_CASE("random init is seed-deterministic") {
  const SparsePerfMatrix m = random_matrix(6, 4, 0.0, 59);
  const LatentEmbedding a = random_init(m, 3, 7);
  const LatentEmbedding b = random_init(m, 3, 7);
  const LatentEmbedding c = random_init(m, 3, 8);
  REQUIRE(a.n() == 6);
  REQUIRE(a.q() == 3);
  CHECK(a.X == b.X);
  CHECK(a.X != c.X);
}

// ---------------------------------------------------------------------------
// marginal likelihood

TEST_CASE("single-observation nll has a closed form") {
  const KernelParams p = rbf_params(2, 1.3, 0.6, 0.2);
  const Eigen::MatrixXd X = random_latents(4, 2, 61);
  Eigen::VectorXd y(1);
  y << 0.8;
  const double c = p.alpha + p.sigma * p.sigma + p.jitter;
  const double want = 0.5 * std::log(c) + 0.5 * y(0) * y(0) / c +
                      0.5 * std::log(2.0 * M_PI);
  LatentEmbedding emb{X};
  CHECK(nll_column(emb, p, y, {2}) == Catch::Approx(want).epsilon(1e-14));
}

TEST_CASE("factored nll matches the explicit-inverse computation") {
  Rng rng(67);
  for (const KernelParams& p : {rbf_params(2, 1.5, 0.9, 0.15), linear_params(0.15)}) {
    for (int rep = 0; rep < 5; ++rep) {
      const Eigen::MatrixXd X = random_latents(10, 2, 70 + static_cast<std::uint64_t>(rep));
      std::vector<int> idx{0, 2, 3, 6, 9};
      Eigen::VectorXd y(5);
      for (int i = 0; i < 5; ++i) y(i) = rng.uniform01();
      LatentEmbedding emb{X};
      const double got = nll_column(emb, p, y, idx);
      const double want = nll_dense(emb.rows(idx), p, y);
      CHECK(rel_err(got, want) < 1e-10);
    }
  }
}

TEST_CASE("scaling the targets moves only the quadratic term") {
  const KernelParams p = rbf_params(2, 1.5, 0.9, 0.15);
  const Eigen::MatrixXd X = random_latents(6, 2, 71);
  LatentEmbedding emb{X};
  std::vector<int> idx{0, 1, 3, 5};
  Eigen::VectorXd y(4);
  y << 0.2, 0.5, 0.7, 0.4;

  const Eigen::MatrixXd Xe = emb.rows(idx);
  Eigen::MatrixXd C = gram(Xe, p, /*add_noise=*/true);
  const double quad = y.dot(C.inverse() * y);
  const double lo = nll_column(emb, p, y, idx);
  const double hi = nll_column(emb, p, 10.0 * y, idx);
  CHECK(hi - lo == Catch::Approx(0.5 * 99.0 * quad).epsilon(1e-9));
}

TEST_CASE("total nll sums columns and skips empty ones") {
  // build a matrix with one empty column; nll_total must equal the manual
  // per-column dense sum over the observed columns only
  std::vector<std::string> pids{"p0", "p1", "p2", "p3"};
  std::vector<std::string> dids{"d0", "d1", "d2"};
  std::vector<MatrixEntry> entries{
      {0, 0, 0.1}, {1, 0, 0.9}, {3, 0, 0.4}, {0, 2, 0.6}, {2, 2, 0.3}};
  const SparsePerfMatrix m(pids, dids, entries);
  const KernelParams p = rbf_params(2, 1.2, 0.5, 0.2);
  const Eigen::MatrixXd X = random_latents(4, 2, 73);
  LatentEmbedding emb{X};

  double want = 0.0;
  for (int j : {0, 2}) {
    std::vector<int> idx;
    Eigen::VectorXd y(static_cast<Eigen::Index>(m.column(j).size()));
    Eigen::Index r = 0;
    for (const auto& [i, s] : m.column(j)) {
      idx.push_back(i);
      y(r++) = s;
    }
    want += nll_dense(emb.rows(idx), p, y);
  }
  CHECK(rel_err(nll_total(emb, p, m), want) < 1e-10);
}

// ---------------------------------------------------------------------------
// gradients

TEST_CASE("column gradient matches central finite differences") {
  const double h = 1e-6;
  const double tol = 1e-4;
  for (std::uint64_t seed : {101ull, 102ull, 103ull, 104ull, 105ull}) {
    for (bool linear : {false, true}) {
      Rng rng(seed);
      const int n = 12, q = 2, mobs = 8;
      const Eigen::MatrixXd X = random_latents(n, q, seed * 13 + linear);
      KernelParams p = linear ? linear_params(0.2) : rbf_params(q, 1.1, 0.0, 0.2);
      if (!linear) p.gamma << 0.7, 1.3;
      std::vector<int> idx;
      {
        std::vector<int> all(n);
        for (int i = 0; i < n; ++i) all[i] = i;
        rng.shuffle(all);
        idx.assign(all.begin(), all.begin() + mobs);
        std::sort(idx.begin(), idx.end());
      }
      Eigen::VectorXd y(mobs);
      for (int i = 0; i < mobs; ++i) y(i) = rng.uniform01();
      LatentEmbedding emb{X};
      const ColumnGradient g = grad_column(emb, p, y, idx);
      CHECK(g.nll == Catch::Approx(nll_column(emb, p, y, idx)).epsilon(1e-12));

      // latent coordinates of the observed rows
      for (int r : {0, 3, 7})
        for (int k = 0; k < q; ++k) {
          LatentEmbedding hi = emb, lo = emb;
          hi.X(idx[static_cast<std::size_t>(r)], k) += h;
          lo.X(idx[static_cast<std::size_t>(r)], k) -= h;
          const double fd =
              (nll_column(hi, p, y, idx) - nll_column(lo, p, y, idx)) / (2.0 * h);
          CHECK(rel_err(g.dX(r, k), fd) < tol);
        }

      // noise level (jitter held fixed, as in the optimizer)
      {
        KernelParams hi = p, lo = p;
        hi.sigma += h;
        lo.sigma -= h;
        const double fd =
            (nll_column(emb, hi, y, idx) - nll_column(emb, lo, y, idx)) / (2.0 * h);
        CHECK(rel_err(g.dsigma, fd) < tol);
      }

      if (!linear) {
        KernelParams hi = p, lo = p;
        hi.alpha += h;
        lo.alpha -= h;
        const double fd =
            (nll_column(emb, hi, y, idx) - nll_column(emb, lo, y, idx)) / (2.0 * h);
        CHECK(rel_err(g.dalpha, fd) < tol);
        for (int k = 0; k < q; ++k) {
          KernelParams ghi = p, glo = p;
          ghi.gamma(k) += h;
          glo.gamma(k) -= h;
          const double fdg =
              (nll_column(emb, ghi, y, idx) - nll_column(emb, glo, y, idx)) / (2.0 * h);
          CHECK(rel_err(g.dgamma(k), fdg) < tol);
        }
      }
    }
  }
}

TEST_CASE("zero targets push the noise level down the likelihood slope") {
  // with y = 0 the quadratic term vanishes and only log|C| remains, so the
  // nll strictly increases in sigma: its gradient must be positive
  const KernelParams p = rbf_params(2, 1.0, 1.0, 0.3);
  const Eigen::MatrixXd X = random_latents(6, 2, 79);
  LatentEmbedding emb{X};
  const Eigen::VectorXd y = Eigen::VectorXd::Zero(4);
  const ColumnGradient g = grad_column(emb, p, y, {0, 1, 2, 3});
  CHECK(g.dsigma > 0.0);
}

TEST_CASE("column gradient validates its inputs") {
  const KernelParams p = rbf_params(2);
  LatentEmbedding emb{random_latents(4, 2, 83)};
  Eigen::VectorXd y(2);
  y << 0.1, 0.2;
  CHECK_THROWS_AS(grad_column(emb, p, y, {}), ArgumentError);
  CHECK_THROWS_AS(grad_column(emb, p, y, {0, 1, 2}), ArgumentError);
}

// ---------------------------------------------------------------------------
// training

TEST_CASE("training rejects bad configuration") {
  const SparsePerfMatrix m = random_matrix(5, 3, 0.0, 89);
  TrainConfig cfg;
  cfg.epochs = 0;
  CHECK_THROWS_AS(train(m, cfg), ArgumentError);
  cfg.epochs = 1;
  cfg.q = 0;
  CHECK_THROWS_AS(train(m, cfg), ArgumentError);
}

TEST_CASE("training a small matrix yields a finite, usable model") {
  const SparsePerfMatrix m = random_matrix(5, 3, 0.2, 97);
  TrainConfig cfg;
  cfg.epochs = 4;
  cfg.optimizer = Optimizer::adam;
  cfg.seed = 3;
  const Model model = train(m, cfg); // default q=20 clamps to min(N,D)=3
  CHECK(model.embedding.n() == 5);
  CHECK(model.embedding.q() == 3);
  CHECK(model.params.gamma.size() == 3);
  CHECK(std::isfinite(model.meta.final_nll));
  CHECK(model.meta.epochs_run == 4);
  REQUIRE(model.meta.epoch_nll.size() == 4);
  CHECK(model.meta.final_nll == model.meta.epoch_nll.back());
  CHECK(model.params.sigma > 0.0);
  CHECK(model.params.alpha > 0.0);
}

TEST_CASE("adam descends the likelihood almost monotonically") {
  const SparsePerfMatrix m = random_matrix(10, 6, 0.0, 131);
  TrainConfig cfg;
  cfg.q = 2;
  cfg.optimizer = Optimizer::adam;
  cfg.learning_rate = 1e-2;
  cfg.epochs = 200;
  cfg.seed = 1;
  const Model model = train(m, cfg);
  REQUIRE(model.meta.epoch_nll.size() == 200);
  CHECK(model.meta.epoch_nll.back() < model.meta.epoch_nll.front());
  for (std::size_t t = 20; t < model.meta.epoch_nll.size(); ++t)
    CHECK(model.meta.epoch_nll[t] <= model.meta.epoch_nll[t - 1] + 1e-3);
}

TEST_CASE("training is bit-deterministic for a fixed seed") {
  const SparsePerfMatrix m = random_matrix(8, 5, 0.3, 137);
  TrainConfig cfg;
  cfg.q = 2;
  cfg.optimizer = Optimizer::adam;
  cfg.epochs = 10;
  cfg.seed = 9;
  const Model a = train(m, cfg);
  const Model b = train(m, cfg);
  CHECK(a.embedding.X == b.embedding.X);
  CHECK(a.params.alpha == b.params.alpha);
  CHECK(a.params.gamma == b.params.gamma);
  CHECK(a.params.sigma == b.params.sigma);
  CHECK(a.meta.epoch_nll == b.meta.epoch_nll);

  cfg.seed = 10;
  const Model c = train(m, cfg);
  CHECK(a.embedding.X != c.embedding.X);
}

TEST_CASE("rows without observations never move under sgd") {
  // pipeline 4 of 5 has no entries at all
  std::vector<std::string> pids{"p0", "p1", "p2", "p3", "p4"};
  std::vector<std::string> dids{"d0", "d1", "d2"};
  std::vector<MatrixEntry> entries{{0, 0, 0.2}, {1, 0, 0.8}, {2, 1, 0.5},
                                   {3, 1, 0.9}, {0, 2, 0.4}, {3, 2, 0.6}};
  const SparsePerfMatrix m(pids, dids, entries);
  TrainConfig cfg;
  cfg.q = 2;
  cfg.optimizer = Optimizer::sgd;
  cfg.epochs = 20;
  cfg.init = InitMethod::random;
  cfg.seed = 5;
  const LatentEmbedding init = random_init(m, 2, cfg.seed);
  const Model model = train(m, cfg);
  CHECK(model.embedding.X.row(4) == init.X.row(4));
  CHECK(model.embedding.X.row(0) != init.X.row(0));
}

TEST_CASE("epoch callback sees every epoch in order") {
  const SparsePerfMatrix m = random_matrix(5, 3, 0.0, 139);
  TrainConfig cfg;
  cfg.q = 2;
  cfg.epochs = 5;
  cfg.optimizer = Optimizer::adam;
  std::vector<int> seen;
  train(m, cfg, [&](int epoch, const Model& mod) {
    seen.push_back(epoch);
    CHECK(mod.meta.epochs_run == epoch);
    CHECK(mod.meta.epoch_nll.size() == static_cast<std::size_t>(epoch));
  });
  CHECK(seen == std::vector<int>{1, 2, 3, 4, 5});
}

// ---------------------------------------------------------------------------
// serialization

TEST_CASE("model json round-trips bit-exactly") {
  const SparsePerfMatrix m = random_matrix(6, 4, 0.2, 149);
  TrainConfig cfg;
  cfg.q = 2;
  cfg.epochs = 3;
  cfg.optimizer = Optimizer::adam;
  cfg.seed = 21;
  const Model a = train(m, cfg);

  std::stringstream buf;
  save_model(a, buf);
  const Model b = load_model(buf);
  CHECK(a.embedding.X == b.embedding.X);
  CHECK(a.params.family == b.params.family);
  CHECK(a.params.alpha == b.params.alpha);
  CHECK(a.params.gamma == b.params.gamma);
  CHECK(a.params.sigma == b.params.sigma);
  CHECK(a.params.jitter == b.params.jitter);
  CHECK(a.meta.epochs_run == b.meta.epochs_run);
  CHECK(a.meta.final_nll == b.meta.final_nll);
  CHECK(a.meta.seed == b.meta.seed);
  CHECK(a.meta.optimizer == b.meta.optimizer);
  CHECK(a.meta.epoch_nll == b.meta.epoch_nll);
}

TEST_CASE("malformed model files raise parse errors") {
  {
    std::stringstream buf("this is not json");
    CHECK_THROWS_AS(load_model(buf), ParseError);
  }
  {
    std::stringstream buf(R"({"q": 2, "kernel": {"family": "rbf_ard"}})");
    CHECK_THROWS_AS(load_model(buf), ParseError); // missing alpha et al.
  }
  {
    // wrong row width in X
    std::stringstream buf(R"({"q": 2,
      "kernel": {"family": "rbf_ard", "alpha": 1.0, "gamma": [1.0, 1.0],
                 "sigma": 0.1, "jitter": 1e-8},
      "X": [[0.1, 0.2], [0.3]]})");
    CHECK_THROWS_AS(load_model(buf), ValidationError);
  }
}
