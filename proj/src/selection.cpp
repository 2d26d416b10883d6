#include "selection.hpp"

#include <limits>
#include <map>
#include <numeric>

#include "autodiff.hpp"
#include "rng.hpp"

namespace diffsketch::selection {

namespace {

constexpr int kMaxLloydIterations = 300;
constexpr double kShiftTolerance = 1e-7;

int cluster_count(const std::vector<int>& labels) {
  if (labels.empty()) return 0;
  return *std::max_element(labels.begin(), labels.end()) + 1;
}

void check_labels(const Eigen::MatrixXd& points, const std::vector<int>& labels, const char* what) {
  if (static_cast<Eigen::Index>(labels.size()) != points.rows())
    throw std::invalid_argument(std::string(what) + ": label count differs from point count");
  const int k = cluster_count(labels);
  if (k < 2) throw std::invalid_argument(std::string(what) + ": needs at least 2 clusters");
  std::vector<int> sizes(k, 0);
  for (int l : labels) {
    if (l < 0) throw std::invalid_argument(std::string(what) + ": negative label");
    ++sizes[l];
  }
  for (int c = 0; c < k; ++c)
    if (sizes[c] == 0) throw std::invalid_argument(std::string(what) + ": cluster " + std::to_string(c) + " is empty");
}

Eigen::MatrixXd cluster_means(const Eigen::MatrixXd& points, const std::vector<int>& labels, int k) {
  Eigen::MatrixXd c = Eigen::MatrixXd::Zero(k, points.cols());
  std::vector<int> n(k, 0);
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    c.row(labels[i]) += points.row(i);
    ++n[labels[i]];
  }
  for (int j = 0; j < k; ++j)
    if (n[j] > 0) c.row(j) /= n[j];
  return c;
}

}  // namespace

nlohmann::json SelectionReport::to_json() const {
  return {{"k", k},
          {"per_image_k", per_image_k},
          {"timesteps", timesteps},
          {"scores", {{"selected", score_selected}, {"equal", score_equal}, {"random", score_random}}},
          {"pca_dim", pca_dim}};
}

SelectionReport SelectionReport::from_json(const nlohmann::json& j) {
  SelectionReport r;
  r.k = j.at("k").get<int>();
  r.per_image_k = j.at("per_image_k").get<std::vector<int>>();
  r.timesteps = j.at("timesteps").get<std::vector<int>>();
  const auto& s = j.at("scores");
  r.score_selected = s.at("selected").get<double>();
  r.score_equal = s.at("equal").get<double>();
  r.score_random = s.at("random").get<double>();
  r.pca_dim = j.value("pca_dim", 0);
  return r;
}

Eigen::MatrixXd timestep_vectors(const store::FeatureTrajectory& trajectory, int pool) {
  const int T = trajectory.timesteps();
  Eigen::Index dim = 0;
  for (const auto& ls : trajectory.layer_shapes()) dim += static_cast<Eigen::Index>(ls.channels) * pool * pool;
  Eigen::MatrixXd out(T, dim);
  for (int t = 0; t < T; ++t) {
    Eigen::Index off = 0;
    for (int l = 1; l <= trajectory.layers(); ++l) {
      const auto pooled =
          ad::adaptive_avg_pool(ad::Var::constant(trajectory.at(l, t).cast<double>()), pool, pool).value();
      for (std::size_t i = 0; i < pooled.size(); ++i) out(t, off + static_cast<Eigen::Index>(i)) = pooled[i];
      off += static_cast<Eigen::Index>(pooled.size());
    }
  }
  return out;
}

ProjectedTrajectory pca_project(const Eigen::MatrixXd& vectors, int d) {
  if (d <= 0) throw UsageError("pca_project: dimension must be positive");
  if (!vectors.allFinite()) throw NumericError("pca_project: non-finite input");
  const Eigen::Index n = vectors.rows();
  if (n < 2) throw InputError("pca_project: need at least two rows");

  const Eigen::MatrixXd centered = vectors.rowwise() - vectors.colwise().mean();
  // Gram-matrix route: n is the timestep count, far smaller than the feature dimension.
  const Eigen::MatrixXd gram = centered * centered.transpose();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram);
  const Eigen::VectorXd evals = eig.eigenvalues().reverse();
  const Eigen::MatrixXd evecs = eig.eigenvectors().rowwise().reverse();

  const double tol = std::max(1e-300, evals(0) * 1e-12 * static_cast<double>(n));
  int rank = 0;
  while (rank < n && evals(rank) > tol) ++rank;
  const int use = std::min(d, rank);
  if (use == 0) throw NumericError("pca_project: all rows identical");

  ProjectedTrajectory out;
  out.requested_dim = d;
  out.points.resize(n, use);
  out.basis.resize(vectors.cols(), use);
  out.explained_variance.resize(use);
  for (int k = 0; k < use; ++k) {
    Eigen::VectorXd u = evecs.col(k);
    Eigen::Index arg = 0;
    u.cwiseAbs().maxCoeff(&arg);
    if (u(arg) < 0) u = -u;
    const double s = std::sqrt(evals(k));
    out.points.col(k) = u * s;
    out.basis.col(k) = centered.transpose() * u / s;
    out.explained_variance(k) = evals(k) / static_cast<double>(n - 1);
  }
  return out;
}

ProjectedTrajectory pca_project(const store::FeatureTrajectory& trajectory, int d) {
  return pca_project(timestep_vectors(trajectory), d);
}

Clustering kmeans(const Eigen::MatrixXd& points, int k, std::uint64_t seed) {
  const Eigen::Index n = points.rows();
  if (k < 1 || k > n) throw std::invalid_argument("kmeans: need 1 <= k <= n");
  NormalSampler rng(seed);

  // k-means++ seeding.
  Eigen::MatrixXd centroids(k, points.cols());
  centroids.row(0) = points.row(static_cast<Eigen::Index>(rng.next() % static_cast<std::uint64_t>(n)));
  Eigen::VectorXd d2 = (points.rowwise() - centroids.row(0)).rowwise().squaredNorm();
  for (int c = 1; c < k; ++c) {
    const double total = d2.sum();
    Eigen::Index pick = 0;
    if (total > 0) {
      double r = rng.uniform() * total;
      pick = n - 1;
      for (Eigen::Index i = 0; i < n; ++i) {
        r -= d2(i);
        if (r < 0 && d2(i) > 0) {
          pick = i;
          break;
        }
      }
    } else {
      pick = static_cast<Eigen::Index>(rng.next() % static_cast<std::uint64_t>(n));
    }
    centroids.row(c) = points.row(pick);
    d2 = d2.cwiseMin((points.rowwise() - centroids.row(c)).rowwise().squaredNorm());
  }

  std::vector<int> labels(n, 0);
  auto assign = [&] {
    for (Eigen::Index i = 0; i < n; ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (int c = 0; c < k; ++c) {
        const double dd = (points.row(i) - centroids.row(c)).squaredNorm();
        if (dd < best) {
          best = dd;
          labels[i] = c;
        }
      }
    }
  };

  for (int iter = 0; iter < kMaxLloydIterations; ++iter) {
    assign();
    Eigen::MatrixXd next = cluster_means(points, labels, k);
    std::vector<int> sizes(k, 0);
    for (int l : labels) ++sizes[l];
    for (int c = 0; c < k; ++c) {
      if (sizes[c] > 0) continue;
      // Empty cluster: re-seed at the point farthest from its own centroid.
      Eigen::Index far = 0;
      double worst = -1.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        if (sizes[labels[i]] <= 1) continue;
        const double dd = (points.row(i) - next.row(labels[i])).squaredNorm();
        if (dd > worst) {
          worst = dd;
          far = i;
        }
      }
      --sizes[labels[far]];
      labels[far] = c;
      sizes[c] = 1;
      next = cluster_means(points, labels, k);
    }
    const double shift = (next - centroids).rowwise().norm().maxCoeff();
    centroids = std::move(next);
    if (shift < kShiftTolerance) break;
  }

  Clustering out;
  out.labels = std::move(labels);
  out.centroids = std::move(centroids);
  for (Eigen::Index i = 0; i < n; ++i) out.wcss += (points.row(i) - out.centroids.row(out.labels[i])).squaredNorm();
  return out;
}

Clustering kmeans_best(const Eigen::MatrixXd& points, int k, std::uint64_t seed, int restarts) {
  Clustering best;
  best.wcss = std::numeric_limits<double>::infinity();
  for (int r = 0; r < restarts; ++r) {
    Clustering c = kmeans(points, k, derive_seed(seed, static_cast<std::uint64_t>(r)));
    if (c.wcss < best.wcss) best = std::move(c);
  }
  return best;
}

double silhouette(const Eigen::MatrixXd& points, const std::vector<int>& labels) {
  check_labels(points, labels, "silhouette");
  const int k = cluster_count(labels);
  const Eigen::Index n = points.rows();
  std::vector<int> sizes(k, 0);
  for (int l : labels) ++sizes[l];

  double total = 0.0;
  std::vector<double> per_cluster(k);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (sizes[labels[i]] == 1) continue;
    std::fill(per_cluster.begin(), per_cluster.end(), 0.0);
    for (Eigen::Index j = 0; j < n; ++j)
      if (j != i) per_cluster[labels[j]] += (points.row(i) - points.row(j)).norm();
    const double a = per_cluster[labels[i]] / (sizes[labels[i]] - 1);
    double b = std::numeric_limits<double>::infinity();
    for (int c = 0; c < k; ++c)
      if (c != labels[i]) b = std::min(b, per_cluster[c] / sizes[c]);
    const double m = std::max(a, b);
    if (m > 0) total += (b - a) / m;
  }
  return total / static_cast<double>(n);
}

double davies_bouldin(const Eigen::MatrixXd& points, const std::vector<int>& labels) {
  check_labels(points, labels, "davies_bouldin");
  const int k = cluster_count(labels);
  const Eigen::MatrixXd c = cluster_means(points, labels, k);
  std::vector<double> sigma(k, 0.0);
  std::vector<int> sizes(k, 0);
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    sigma[labels[i]] += (points.row(i) - c.row(labels[i])).norm();
    ++sizes[labels[i]];
  }
  for (int j = 0; j < k; ++j) sigma[j] /= sizes[j];

  double total = 0.0;
  for (int i = 0; i < k; ++i) {
    double worst = 0.0;
    for (int j = 0; j < k; ++j) {
      if (i == j) continue;
      const double sep = (c.row(i) - c.row(j)).norm();
      if (sep == 0.0)
        throw NumericError("davies_bouldin: centroids " + std::to_string(i) + " and " + std::to_string(j) +
                           " coincide");
      worst = std::max(worst, (sigma[i] + sigma[j]) / sep);
    }
    total += worst;
  }
  return total / k;
}

ClusterScan scan_cluster_counts(const Eigen::MatrixXd& points, int max_k, std::uint64_t seed) {
  if (max_k < 1) throw std::invalid_argument("scan_cluster_counts: max_k must be >= 1");
  if (max_k + 1 > points.rows()) throw std::invalid_argument("scan_cluster_counts: max_k + 1 exceeds point count");
  ClusterScan scan;
  for (int k = 2; k <= max_k + 1; ++k) {
    const Clustering c = kmeans_best(points, k, derive_seed(seed, static_cast<std::uint64_t>(k)));
    scan.ks.push_back(k);
    scan.silhouette.push_back(silhouette(points, c.labels));
    double dbi = std::numeric_limits<double>::infinity();
    try {
      dbi = davies_bouldin(points, c.labels);
    } catch (const NumericError&) {
      // Coincident centroids rank last.
    }
    scan.dbi.push_back(dbi);
  }
  return scan;
}

int optimal_k_from_scan(const ClusterScan& scan) {
  const int m = static_cast<int>(scan.ks.size());
  std::vector<int> sil(m), db(m);
  std::iota(sil.begin(), sil.end(), 0);
  std::iota(db.begin(), db.end(), 0);
  std::stable_sort(sil.begin(), sil.end(), [&](int a, int b) { return scan.silhouette[a] > scan.silhouette[b]; });
  std::stable_sort(db.begin(), db.end(), [&](int a, int b) { return scan.dbi[a] < scan.dbi[b]; });
  for (int i = 0; i < m; ++i)
    if (std::find(db.begin(), db.begin() + i + 1, sil[i]) != db.begin() + i + 1) return scan.ks[sil[i]];
  throw NumericError("optimal_k: silhouette and DBI rankings never agree");
}

int optimal_k(const Eigen::MatrixXd& points, int max_k, std::uint64_t seed) {
  return optimal_k_from_scan(scan_cluster_counts(points, max_k, seed));
}

int global_k(const std::vector<int>& per_image_k) {
  if (per_image_k.empty()) throw std::invalid_argument("global_k: empty list");
  std::map<int, int> counts;
  for (int k : per_image_k) ++counts[k];
  int best = 0;
  for (const auto& [k, c] : counts) best = std::max(best, c);
  const double mean =
      std::accumulate(per_image_k.begin(), per_image_k.end(), 0.0) / static_cast<double>(per_image_k.size());
  const long target = std::lround(mean);
  int pick = 0;
  long pick_dist = std::numeric_limits<long>::max();
  for (const auto& [k, c] : counts) {
    if (c != best) continue;
    const long dist = std::labs(k - target);
    if (dist < pick_dist) {
      pick = k;
      pick_dist = dist;
    }
  }
  return pick;
}

std::vector<int> select_timesteps(const std::vector<ProjectedTrajectory>& trajectories, int k, std::uint64_t seed) {
  if (trajectories.empty()) throw InputError("select_timesteps: no trajectories");
  const int T = static_cast<int>(trajectories.front().points.rows());
  if (k < 1 || k > T) throw std::invalid_argument("select_timesteps: need 1 <= k <= T");
  std::vector<int> votes(T, 0);
  for (std::size_t img = 0; img < trajectories.size(); ++img) {
    const auto& pts = trajectories[img].points;
    if (pts.rows() != T) throw InputError("select_timesteps: trajectories disagree on T");
    const Clustering c = kmeans_best(pts, k, derive_seed(seed, img));
    for (int j = 0; j < k; ++j) {
      int nearest = 0;
      double best = std::numeric_limits<double>::infinity();
      for (int t = 0; t < T; ++t) {
        const double dd = (pts.row(t) - c.centroids.row(j)).squaredNorm();
        if (dd < best) {
          best = dd;
          nearest = t;
        }
      }
      ++votes[nearest];
    }
  }
  std::vector<int> order(T);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return votes[a] > votes[b]; });
  std::vector<int> out(order.begin(), order.begin() + k);
  std::sort(out.begin(), out.end());
  return out;
}

double min_distance_score(const std::vector<ProjectedTrajectory>& trajectories, const std::vector<int>& selected) {
  if (selected.empty()) throw std::invalid_argument("min_distance_score: empty selection");
  double total = 0.0;
  for (const auto& tr : trajectories) {
    for (Eigen::Index t = 0; t < tr.points.rows(); ++t) {
      double best = std::numeric_limits<double>::infinity();
      for (int s : selected) best = std::min(best, (tr.points.row(t) - tr.points.row(s)).norm());
      total += best;
    }
  }
  return total;
}

std::vector<int> equal_interval_timesteps(int T, int k) {
  if (k < 1 || k > T) throw std::invalid_argument("equal_interval_timesteps: need 1 <= k <= T");
  const int step = k > 1 ? std::max(1, (T - 2) / (k - 1)) : 1;
  const int start = std::max(0, std::min(1, T - 1 - (k - 1) * step));
  std::vector<int> out(k);
  for (int i = 0; i < k; ++i) out[i] = start + i * step;
  return out;
}

std::vector<int> random_timesteps(int T, int k, std::uint64_t seed) {
  if (k < 1 || k > T) throw std::invalid_argument("random_timesteps: need 1 <= k <= T");
  std::vector<int> all(T);
  std::iota(all.begin(), all.end(), 0);
  NormalSampler rng(seed);
  // Partial Fisher-Yates.
  for (int i = 0; i < k; ++i) {
    const int j = i + static_cast<int>(rng.next() % static_cast<std::uint64_t>(T - i));
    std::swap(all[i], all[j]);
  }
  std::vector<int> out(all.begin(), all.begin() + k);
  std::sort(out.begin(), out.end());
  return out;
}

SelectionReport analyze(const std::vector<store::FeatureTrajectory>& trajectories, const AnalyzeOptions& options) {
  if (trajectories.empty()) throw InputError("analyze: no trajectories");
  const int T = trajectories.front().timesteps();
  std::vector<ProjectedTrajectory> projected;
  SelectionReport report;
  for (std::size_t i = 0; i < trajectories.size(); ++i) {
    if (trajectories[i].timesteps() != T) throw InputError("analyze: trajectories disagree on T");
    projected.push_back(pca_project(trajectories[i], options.pca_dim));
    const int used = static_cast<int>(projected.back().points.cols());
    report.pca_dim = i == 0 ? used : std::min(report.pca_dim, used);
    const int max_k = std::max(1, T / 2);
    report.per_image_k.push_back(optimal_k(projected.back().points, max_k, derive_seed(options.seed, i)));
  }
  report.k = std::min(global_k(report.per_image_k), T);
  report.timesteps = select_timesteps(projected, report.k, derive_seed(options.seed, 0x5e1ec7));
  report.score_selected = min_distance_score(projected, report.timesteps);
  report.score_equal = min_distance_score(projected, equal_interval_timesteps(T, report.k));
  double rnd = 0.0;
  for (int r = 0; r < options.random_draws; ++r)
    rnd += min_distance_score(projected,
                              random_timesteps(T, report.k, derive_seed(options.seed, 0xabc0 + static_cast<std::uint64_t>(r))));
  report.score_random = rnd / std::max(1, options.random_draws);
  for (double s : {report.score_selected, report.score_equal, report.score_random})
    if (!std::isfinite(s)) throw NumericError("analyze: non-finite score");
  return report;
}

}  // namespace diffsketch::selection
