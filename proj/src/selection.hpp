#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "feature_store.hpp"

namespace diffsketch::selection {

struct ProjectedTrajectory {
  Eigen::MatrixXd points;              // T x d, row t = timestep t
  Eigen::MatrixXd basis;               // D x d principal axes
  Eigen::VectorXd explained_variance;  // d, non-increasing
  int requested_dim = 0;
};

struct Clustering {
  std::vector<int> labels;
  Eigen::MatrixXd centroids;  // k x d
  double wcss = 0.0;
};

struct SelectionReport {
  int k = 0;
  std::vector<int> per_image_k;
  std::vector<int> timesteps;
  double score_selected = 0.0;
  double score_equal = 0.0;
  double score_random = 0.0;
  int pca_dim = 0;  // smallest projection dimension actually used (rank-limited)

  nlohmann::json to_json() const;
  static SelectionReport from_json(const nlohmann::json& j);
};

// Per-timestep feature vectors: each layer adaptive-average-pooled to pool x pool,
// flattened, layers concatenated. Row t is timestep t.
Eigen::MatrixXd timestep_vectors(const store::FeatureTrajectory& trajectory, int pool = 8);

// Centers rows and projects onto the top-d variance axes. d is reduced to the
// numerical rank when it exceeds it; the result keeps the requested value.
ProjectedTrajectory pca_project(const Eigen::MatrixXd& vectors, int d);
ProjectedTrajectory pca_project(const store::FeatureTrajectory& trajectory, int d);

// Lloyd's algorithm from a k-means++ start; deterministic per seed.
Clustering kmeans(const Eigen::MatrixXd& points, int k, std::uint64_t seed);
// Lowest-WCSS result over `restarts` derived seeds.
Clustering kmeans_best(const Eigen::MatrixXd& points, int k, std::uint64_t seed, int restarts = 10);

double silhouette(const Eigen::MatrixXd& points, const std::vector<int>& labels);
double davies_bouldin(const Eigen::MatrixXd& points, const std::vector<int>& labels);

// Silhouette and DBI for each candidate k = 2 .. max_k + 1 (candidate index c <-> k = c + 2).
struct ClusterScan {
  std::vector<int> ks;
  std::vector<double> silhouette;
  std::vector<double> dbi;  // +inf where centroids coincide
};
ClusterScan scan_cluster_counts(const Eigen::MatrixXd& points, int max_k, std::uint64_t seed);

// First silhouette-ranked candidate that also appears among the equally many
// best DBI candidates; returns its cluster count.
int optimal_k_from_scan(const ClusterScan& scan);
int optimal_k(const Eigen::MatrixXd& points, int max_k, std::uint64_t seed);

// Mode; ties resolved toward the rounded mean, lower value on equal distance.
int global_k(const std::vector<int>& per_image_k);

std::vector<int> select_timesteps(const std::vector<ProjectedTrajectory>& trajectories, int k, std::uint64_t seed);

double min_distance_score(const std::vector<ProjectedTrajectory>& trajectories, const std::vector<int>& selected);

// t_i = start + i * step with step = floor((T-2)/(k-1)); start = 1 unless that overruns T-1.
std::vector<int> equal_interval_timesteps(int T, int k);
std::vector<int> random_timesteps(int T, int k, std::uint64_t seed);

struct AnalyzeOptions {
  int pca_dim = 30;
  std::uint64_t seed = 0;
  int random_draws = 10;
};

SelectionReport analyze(const std::vector<store::FeatureTrajectory>& trajectories, const AnalyzeOptions& options);

}  // namespace diffsketch::selection
