#pragma once

#include <cstdint>
#include <filesystem>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

namespace diffsketch::cdst {

struct ConditionDistribution {
  Eigen::VectorXd mean;
  Eigen::MatrixXd covariance;

  int dim() const { return static_cast<int>(mean.size()); }
  void validate() const;
};

struct CdstState {
  std::vector<double> condition;  // fixed training condition C
  ConditionDistribution dist;
  int horizon = 1000;             // S
};

struct ScheduleWeights {
  double condition;     // weight on C
  double distribution;  // weight on the distribution draw
};

// alpha = sqrt(1 - iter/S), beta = sqrt(iter/S), normalised to sum to one.
ScheduleWeights schedule(int iter, int horizon);
// Same, with iter clamped to [0, S].
ScheduleWeights schedule_clamped(int iter, int horizon);

// Draw from N(mean, covariance), deterministic per seed.
Eigen::VectorXd sample_mvn(const ConditionDistribution& dist, std::uint64_t seed);
// wC * C + wD * x with x ~ dist; iter is clamped to the horizon.
std::vector<double> sample_condition(const CdstState& state, int iter, std::uint64_t seed);

// Sample mean and (n-1)-normalised covariance with a 1e-6 diagonal ridge.
ConditionDistribution fit_condition_distribution(const Eigen::MatrixXd& samples);

void save_distribution(const ConditionDistribution& dist, const std::filesystem::path& dir);
ConditionDistribution load_distribution(const std::filesystem::path& dir);

struct ShapiroWilkResult {
  double w;
  double p;
};
// Royston's approximation, 3 <= n <= 5000.
ShapiroWilkResult shapiro_wilk(std::vector<double> x);

struct MardiaResult {
  double skewness;       // b_{1,p}
  double kurtosis;       // b_{2,p}
  double skew_stat;      // n b1 / 6 ~ chi2(p(p+1)(p+2)/6)
  double kurt_stat;      // (b2 - p(p+2)) / sqrt(8p(p+2)/n) ~ N(0,1)
  double skew_p;
  double kurt_p;         // two-sided
  bool reject;
};
// Rejects multivariate normality when either component test is significant at
// alpha/2 (Bonferroni, family-wise alpha).
MardiaResult mardia_test(const Eigen::MatrixXd& samples, double alpha = 0.05);

// Exact earth mover's distance between point sets under uniform weights and
// Euclidean ground cost.
double emd(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b);
// Exact optimal transport cost for explicit integer masses (sum(supply) == sum(demand)).
double transport_cost(const std::vector<long long>& supply, const std::vector<long long>& demand,
                      const Eigen::MatrixXd& cost);

// One image/sketch pair in embedding space.
struct EmbeddedPair {
  Eigen::VectorXd image;
  Eigen::VectorXd sketch;
};

// Mean of cos(I_X->I_Y, S_X->S_Y) and cos(I_X->S_X, I_Y->S_Y) over all ordered
// pairs of distinct items x in X, y in Y.
double pair_similarity(const std::vector<EmbeddedPair>& x, const std::vector<EmbeddedPair>& y);
// Sim(A,B) / Sim(ALL,ALL) * 100 for every ordered pair of domains; ALL is their union.
Eigen::MatrixXd confidence_matrix(const std::vector<std::vector<EmbeddedPair>>& domains);

struct NormalityReport {
  int axes = 0;
  int axes_rejecting = 0;
  MardiaResult mardia{};
  nlohmann::json to_json() const;
};
// Shapiro-Wilk on every principal axis of the samples plus a Mardia test.
NormalityReport normality_report(const Eigen::MatrixXd& samples, int axes, double alpha = 0.05);

}  // namespace diffsketch::cdst
