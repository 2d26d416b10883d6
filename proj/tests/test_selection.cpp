#include <doctest.h>

#include <algorithm>
#include <numeric>

#include "oracles.hpp"
#include "rng.hpp"
#include "selection.hpp"
#include "toy_backend.hpp"

using namespace diffsketch;
using namespace diffsketch::selection;

namespace {

// k blobs of `per` points each, centers far apart relative to `spread`.
Eigen::MatrixXd blobs(int k, int per, int d, std::uint64_t seed, double spread = 0.3,
                      std::vector<int>* truth = nullptr) {
  NormalSampler g(seed);
  Eigen::MatrixXd centers(k, d);
  for (int c = 0; c < k; ++c)
    for (int j = 0; j < d; ++j) centers(c, j) = 20.0 * g();
  Eigen::MatrixXd x(k * per, d);
  if (truth) truth->clear();
  for (int c = 0; c < k; ++c)
    for (int i = 0; i < per; ++i) {
      for (int j = 0; j < d; ++j) x(c * per + i, j) = centers(c, j) + spread * g();
      if (truth) truth->push_back(c);
    }
  return x;
}

Eigen::MatrixXd random_points(int n, int d, std::uint64_t seed) {
  NormalSampler g(seed);
  Eigen::MatrixXd x(n, d);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) x(i, j) = g();
  return x;
}

std::vector<int> random_labels(int n, int k, std::uint64_t seed) {
  NormalSampler g(seed);
  std::vector<int> l(n);
  for (int i = 0; i < n; ++i) l[i] = i < k ? i : static_cast<int>(g.next() % static_cast<std::uint64_t>(k));
  return l;
}

toy::ToyBackend toy16(int timesteps) {
  toy::ToyBackendConfig cfg;
  cfg.image_size = 16;
  cfg.fusing_steps = 2;
  cfg.timesteps = timesteps;
  return toy::ToyBackend(cfg);
}

}  // namespace

TEST_CASE("pca at full rank preserves pairwise distances") {
  const auto x = random_points(12, 6, 1);
  const auto p = pca_project(x, 6);
  for (int i = 0; i < 12; ++i)
    for (int j = i + 1; j < 12; ++j) {
      const double a = (x.row(i) - x.row(j)).norm(), b = (p.points.row(i) - p.points.row(j)).norm();
      CHECK(std::abs(a - b) <= 1e-5 * a);
    }
  for (int i = 1; i < p.explained_variance.size(); ++i)
    CHECK(p.explained_variance(i) <= p.explained_variance(i - 1));
}

TEST_CASE("pca on data in a 2-plane leaves no residual") {
  const auto coeff = random_points(20, 2, 2);
  const auto basis = random_points(2, 7, 3);
  const Eigen::MatrixXd x = (coeff * basis).rowwise() + Eigen::RowVectorXd::Constant(7, 4.0);
  const auto p = pca_project(x, 2);
  const Eigen::MatrixXd centered = x.rowwise() - x.colwise().mean();
  const Eigen::MatrixXd recon = p.points * p.basis.transpose();
  CHECK((centered - recon).norm() < 1e-8);
  // Requests beyond the rank are clamped to it.
  const auto wide = pca_project(x, 5);
  CHECK(wide.points.cols() == 2);
  CHECK(wide.requested_dim == 5);
}

TEST_CASE("pca variance ratios on toy trajectories match an SVD oracle") {
  const auto backend = toy16(50);
  const auto gen = backend.generate(backend.sample_condition(4), 5);
  const Eigen::MatrixXd v = timestep_vectors(gen.trajectory);
  const auto p = pca_project(v, 30);
  REQUIRE(p.points.cols() == 30);
  const Eigen::MatrixXd centered = v.rowwise() - v.colwise().mean();
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(centered);
  const Eigen::VectorXd s2 = svd.singularValues().array().square();
  const double total_oracle = s2.sum();
  const double total_ours = p.explained_variance.sum() * total_oracle / s2.head(30).sum();
  for (int i = 0; i < 30; ++i) CHECK(std::abs(p.explained_variance(i) / total_ours - s2(i) / total_oracle) < 1e-6);
  CHECK(p.points.allFinite());
}

TEST_CASE("kmeans degenerate cases") {
  const auto x = random_points(15, 3, 4);
  const auto c1 = kmeans(x, 1, 1);
  CHECK((c1.centroids.row(0) - x.colwise().mean()).norm() < 1e-12);
  const double dev = (x.rowwise() - x.colwise().mean()).squaredNorm();
  CHECK(c1.wcss == doctest::Approx(dev).epsilon(1e-12));

  Eigen::MatrixXd dup(12, 2);
  for (int i = 0; i < 12; ++i) dup.row(i) << (i % 4) * 3.0, (i % 4) * -1.0;
  CHECK(kmeans_best(dup, 4, 2).wcss == 0.0);
}

TEST_CASE("kmeans clusters are non-empty and wcss is consistent") {
  for (std::uint64_t s = 0; s < 10; ++s) {
    const auto x = random_points(30, 4, 100 + s);
    const auto c = kmeans(x, 6, s);
    std::vector<int> sizes(6, 0);
    double w = 0.0;
    for (int i = 0; i < 30; ++i) {
      ++sizes[c.labels[i]];
      w += (x.row(i) - c.centroids.row(c.labels[i])).squaredNorm();
    }
    CHECK(*std::min_element(sizes.begin(), sizes.end()) > 0);
    CHECK(c.wcss == doctest::Approx(w).epsilon(1e-12));
  }
}

TEST_CASE("best-of-10 wcss does not increase with k") {
  for (std::uint64_t s = 0; s < 20; ++s) {
    const auto x = random_points(40, 3, 200 + s);
    double prev = kmeans_best(x, 1, s).wcss;
    for (int k = 2; k <= 8; ++k) {
      const double w = kmeans_best(x, k, s).wcss;
      CHECK(w <= prev + 1e-9);
      prev = w;
    }
  }
}

TEST_CASE("silhouette matches the double-loop oracle") {
  for (std::uint64_t s = 0; s < 10; ++s) {
    const auto x = random_points(50, 3, 300 + s);
    const int k = 2 + static_cast<int>(s % 5);
    const auto l = random_labels(50, k, s);
    CHECK(std::abs(silhouette(x, l) - oracle::silhouette(x, l, k)) < 1e-9);
  }
  std::vector<int> truth;
  const auto x = blobs(2, 25, 3, 7, 0.3, &truth);
  CHECK(silhouette(x, truth) > 0.9);
  for (std::uint64_t s = 0; s < 20; ++s) CHECK(std::abs(silhouette(x, random_labels(50, 2, 400 + s))) < 0.2);
}

TEST_CASE("Davies-Bouldin matches the oracle and is scale invariant") {
  for (std::uint64_t s = 0; s < 10; ++s) {
    const auto x = random_points(50, 3, 500 + s);
    const int k = 2 + static_cast<int>(s % 5);
    const auto l = random_labels(50, k, s);
    const double d = davies_bouldin(x, l);
    CHECK(std::abs(d - oracle::davies_bouldin(x, l, k)) < 1e-9);
    CHECK(std::abs(davies_bouldin(Eigen::MatrixXd(2.0 * x), l) - d) < 1e-9);
  }
  std::vector<int> truth;
  const auto x = blobs(3, 20, 4, 8, 0.3, &truth);
  CHECK(davies_bouldin(x, truth) < 0.2);
}

TEST_CASE("optimal_k follows the hand-executed rule on exhaustive tables") {
  for (std::uint64_t s = 0; s < 10; ++s) {
    const int kstar = 3 + static_cast<int>(s % 6);
    const auto x = blobs(kstar, 6, 5, 600 + s, 2.0 + 0.5 * static_cast<double>(s % 3));
    const int max_k = static_cast<int>(x.rows()) / 2;
    std::vector<double> ss, dbi;
    for (int k = 2; k <= max_k + 1; ++k) {
      const auto c = kmeans_best(x, k, derive_seed(s, static_cast<std::uint64_t>(k)));
      ss.push_back(oracle::silhouette(x, c.labels, k));
      dbi.push_back(oracle::davies_bouldin(x, c.labels, k));
    }
    CHECK(optimal_k(x, max_k, s) == oracle::agreement_k(ss, dbi));
  }
}

TEST_CASE("optimal_k recovers five separated blobs") {
  int hits = 0;
  for (std::uint64_t s = 0; s < 20; ++s) {
    const auto x = blobs(5, 10, 6, 700 + s);
    if (optimal_k(x, 25, s) == 5) ++hits;
  }
  CHECK(hits >= 18);
}

TEST_CASE("optimal_k returns immediately when both rankings agree at the top") {
  ClusterScan scan{{2, 3, 4, 5}, {0.1, 0.2, 0.9, 0.3}, {1.0, 0.8, 0.1, 0.5}};
  CHECK(optimal_k_from_scan(scan) == 4);
  // Agreement only at i = 1: sil order (2,1,...) and dbi order (1,2,...).
  ClusterScan later{{2, 3, 4}, {0.5, 0.9, 0.8}, {0.3, 0.4, 0.2}};
  CHECK(optimal_k_from_scan(later) == 4);
}

TEST_CASE("optimal_k is invariant under uniform scaling") {
  for (std::uint64_t s = 0; s < 5; ++s) {
    const auto x = random_points(20, 3, 800 + s);
    CHECK(optimal_k(x, 10, s) == optimal_k(Eigen::MatrixXd(3.5 * x), 10, s));
  }
}

TEST_CASE("global_k takes the mode with the documented tie rule") {
  CHECK(global_k({13, 13, 14, 12, 13}) == 13);
  CHECK(global_k({12, 14}) == 12);
  CHECK(global_k({12, 12, 14, 14, 13}) == 12);
  CHECK(global_k({14, 14, 16, 16, 20}) == 16);
  CHECK_THROWS(global_k({}));
}

TEST_CASE("select_timesteps edge cases") {
  const auto x = random_points(8, 3, 9);
  ProjectedTrajectory p;
  p.points = x;
  auto all = select_timesteps({p}, 8, 1);
  std::vector<int> expect(8);
  std::iota(expect.begin(), expect.end(), 0);
  CHECK(all == expect);

  // Three well-separated singletons among tight pairs: k = 5 clusters,
  // timesteps 0, 3, 6 are alone, {1,2}, {4,5} form pairs.
  Eigen::MatrixXd y(7, 2);
  y << 0, 0, 50, 0, 50, 0.001, 0, 50, 100, 100, 100, 100.001, -50, -50;
  ProjectedTrajectory q;
  q.points = y;
  const auto sel = select_timesteps({q}, 5, 3);
  CHECK(sel.size() == 5);
  CHECK(std::find(sel.begin(), sel.end(), 0) != sel.end());
  CHECK(std::find(sel.begin(), sel.end(), 3) != sel.end());
  CHECK(std::find(sel.begin(), sel.end(), 6) != sel.end());
  CHECK(std::is_sorted(sel.begin(), sel.end()));
  CHECK_THROWS(select_timesteps({}, 2, 1));
  CHECK_THROWS(select_timesteps({p}, 9, 1));
}

TEST_CASE("min_distance_score properties") {
  std::vector<ProjectedTrajectory> ts(3);
  for (int i = 0; i < 3; ++i) ts[i].points = random_points(10, 4, 900 + i);
  std::vector<int> all(10);
  std::iota(all.begin(), all.end(), 0);
  CHECK(min_distance_score(ts, all) == 0.0);
  std::vector<int> sel = {4};
  double prev = min_distance_score(ts, sel);
  for (int t : {0, 9, 2, 7, 5}) {
    sel.push_back(t);
    const double s = min_distance_score(ts, sel);
    CHECK(s <= prev);
    prev = s;
  }
}

TEST_CASE("equal-interval baseline") {
  std::vector<int> expect;
  for (int i = 0; i < 13; ++i) expect.push_back(i * 4 + 1);
  CHECK(equal_interval_timesteps(50, 13) == expect);
  const auto t = equal_interval_timesteps(10, 5);
  CHECK(t.size() == 5);
  CHECK(t.back() <= 9);
  CHECK(random_timesteps(50, 13, 4) == random_timesteps(50, 13, 4));
  const auto r = random_timesteps(50, 13, 4);
  CHECK(std::is_sorted(r.begin(), r.end()));
  CHECK(std::adjacent_find(r.begin(), r.end()) == r.end());
}

TEST_CASE("analyze on toy trajectories orders the scores and round-trips") {
  const auto backend = toy16(10);
  std::vector<store::FeatureTrajectory> trajs;
  for (std::uint64_t i = 0; i < 5; ++i) trajs.push_back(toy::make_triplet(backend, 10 + i, 20 + i).trajectory);
  AnalyzeOptions opt;
  opt.pca_dim = 8;
  const auto r = analyze(trajs, opt);
  CHECK(static_cast<int>(r.timesteps.size()) == r.k);
  CHECK(r.pca_dim == 8);
  CHECK(r.score_selected <= r.score_equal);
  CHECK(r.score_selected <= r.score_random);
  const auto back = SelectionReport::from_json(r.to_json());
  CHECK(back.to_json() == r.to_json());
  CHECK(analyze(trajs, opt).to_json() == r.to_json());
}
