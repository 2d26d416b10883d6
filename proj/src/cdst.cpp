#include "cdst.hpp"

#include <fstream>

#include "feature_store.hpp"
#include "rng.hpp"
#include "tensor.hpp"

namespace diffsketch::cdst {

namespace fs = std::filesystem;

namespace {

constexpr double kRidge = 1e-6;

Eigen::MatrixXd mvn_factor(const Eigen::MatrixXd& cov) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  const Eigen::VectorXd root = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return eig.eigenvectors() * root.asDiagonal();
}

void write_f64(const fs::path& p, const double* data, std::size_t n) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError("cannot write " + p.string());
  out.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(n * sizeof(double)));
}

void read_f64(const fs::path& p, double* data, std::size_t n) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw InputError("cannot read " + p.string());
  in.seekg(0, std::ios::end);
  if (static_cast<std::size_t>(in.tellg()) != n * sizeof(double)) throw InputError("integrity error: size of " + p.string());
  in.seekg(0);
  in.read(reinterpret_cast<char*>(data), static_cast<std::streamsize>(n * sizeof(double)));
}

double cosine(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  const double na = a.norm(), nb = b.norm();
  if (na == 0.0 || nb == 0.0) return 0.0;
  return a.dot(b) / (na * nb);
}

}  // namespace

void ConditionDistribution::validate() const {
  const auto d = mean.size();
  if (covariance.rows() != d || covariance.cols() != d) throw InputError("distribution: covariance shape mismatch");
  if (!mean.allFinite() || !covariance.allFinite()) throw NumericError("distribution: non-finite parameters");
  if ((covariance - covariance.transpose()).cwiseAbs().maxCoeff() > 1e-8)
    throw NumericError("distribution: covariance not symmetric");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(covariance, Eigen::EigenvaluesOnly);
  if (d > 0 && eig.eigenvalues().minCoeff() < -1e-8) throw NumericError("distribution: covariance not PSD");
}

ScheduleWeights schedule(int iter, int horizon) {
  if (horizon < 1) throw UsageError("schedule: horizon must be >= 1");
  if (iter < 0 || iter > horizon)
    throw UsageError("schedule: iter " + std::to_string(iter) + " outside [0, " + std::to_string(horizon) + "]");
  const double ratio = static_cast<double>(iter) / horizon;
  const double alpha = std::sqrt(1.0 - ratio);
  const double beta = std::sqrt(ratio);
  return {alpha / (alpha + beta), beta / (alpha + beta)};
}

ScheduleWeights schedule_clamped(int iter, int horizon) { return schedule(std::clamp(iter, 0, horizon), horizon); }

Eigen::VectorXd sample_mvn(const ConditionDistribution& dist, std::uint64_t seed) {
  const Eigen::Index d = dist.mean.size();
  NormalSampler n(seed);
  Eigen::VectorXd z(d);
  for (Eigen::Index i = 0; i < d; ++i) z(i) = n();
  return dist.mean + mvn_factor(dist.covariance) * z;
}

std::vector<double> sample_condition(const CdstState& state, int iter, std::uint64_t seed) {
  const auto w = schedule_clamped(iter, state.horizon);
  if (static_cast<Eigen::Index>(state.condition.size()) != state.dist.mean.size())
    throw InputError("cdst: condition and distribution dimensions differ");
  std::vector<double> out(state.condition.size());
  if (w.distribution == 0.0) {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = state.condition[i];
    return out;
  }
  const Eigen::VectorXd x = sample_mvn(state.dist, seed);
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = w.condition * state.condition[i] + w.distribution * x(static_cast<Eigen::Index>(i));
  return out;
}

ConditionDistribution fit_condition_distribution(const Eigen::MatrixXd& samples) {
  if (samples.rows() < 2) throw InputError("fit_condition_distribution: need at least 2 samples");
  if (!samples.allFinite()) throw NumericError("fit_condition_distribution: non-finite sample");
  ConditionDistribution dist;
  dist.mean = samples.colwise().mean().transpose();
  const Eigen::MatrixXd centered = samples.rowwise() - dist.mean.transpose();
  dist.covariance = centered.transpose() * centered / static_cast<double>(samples.rows() - 1);
  dist.covariance = 0.5 * (dist.covariance + dist.covariance.transpose());
  dist.covariance.diagonal().array() += kRidge;
  return dist;
}

void save_distribution(const ConditionDistribution& dist, const fs::path& dir) {
  dist.validate();
  std::error_code ec;
  fs::create_directories(dir, ec);
  write_f64(dir / "mean.bin", dist.mean.data(), static_cast<std::size_t>(dist.mean.size()));
  // Eigen is column-major; the covariance is symmetric so the layout is the same either way.
  write_f64(dir / "cov.bin", dist.covariance.data(), static_cast<std::size_t>(dist.covariance.size()));
  const nlohmann::json header{{"dim", dist.dim()},       {"dtype", "f64"},       {"byte_order", "le"},
                              {"mean", "mean.bin"},      {"covariance", "cov.bin"},
                              {"checksums",
                               {{"mean", store::file_sha256(dir / "mean.bin")},
                                {"covariance", store::file_sha256(dir / "cov.bin")}}}};
  std::ofstream out(dir / "distribution.json", std::ios::trunc);
  out << header.dump(2) << "\n";
}

ConditionDistribution load_distribution(const fs::path& dir) {
  std::ifstream in(dir / "distribution.json");
  if (!in) throw InputError("no distribution.json in " + dir.string());
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("malformed distribution.json: ") + e.what());
  }
  const int d = header.at("dim").get<int>();
  ConditionDistribution dist;
  dist.mean.resize(d);
  dist.covariance.resize(d, d);
  read_f64(dir / header.at("mean").get<std::string>(), dist.mean.data(), static_cast<std::size_t>(d));
  read_f64(dir / header.at("covariance").get<std::string>(), dist.covariance.data(), static_cast<std::size_t>(d) * d);
  dist.validate();
  return dist;
}

double pair_similarity(const std::vector<EmbeddedPair>& x, const std::vector<EmbeddedPair>& y) {
  double total = 0.0;
  long long count = 0;
  for (const auto& a : x)
    for (const auto& b : y) {
      if (a.image == b.image && a.sketch == b.sketch) continue;
      total += cosine(b.image - a.image, b.sketch - a.sketch);
      total += cosine(a.sketch - a.image, b.sketch - b.image);
      count += 2;
    }
  if (count == 0) throw InputError("pair_similarity: no distinct cross pairs");
  return total / static_cast<double>(count);
}

Eigen::MatrixXd confidence_matrix(const std::vector<std::vector<EmbeddedPair>>& domains) {
  std::vector<EmbeddedPair> all;
  for (const auto& d : domains) all.insert(all.end(), d.begin(), d.end());
  const double base = pair_similarity(all, all);
  if (base == 0.0) throw NumericError("confidence: overall similarity is zero");
  const auto n = static_cast<Eigen::Index>(domains.size());
  Eigen::MatrixXd out(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) out(i, j) = pair_similarity(domains[i], domains[j]) / base * 100.0;
  return out;
}

nlohmann::json NormalityReport::to_json() const {
  return {{"axes", axes},
          {"axes_rejecting_normality", axes_rejecting},
          {"mardia",
           {{"skewness", mardia.skewness},
            {"kurtosis", mardia.kurtosis},
            {"skew_stat", mardia.skew_stat},
            {"kurt_stat", mardia.kurt_stat},
            {"skew_p", mardia.skew_p},
            {"kurt_p", mardia.kurt_p},
            {"reject", mardia.reject}}}};
}

NormalityReport normality_report(const Eigen::MatrixXd& samples, int axes, double alpha) {
  const Eigen::MatrixXd centered = samples.rowwise() - samples.colwise().mean();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(centered.transpose() * centered);
  const int d = static_cast<int>(samples.cols());
  axes = std::min(axes, d);
  // Eigenvalues ascend; take the last `axes` columns.
  const Eigen::MatrixXd scores = centered * eig.eigenvectors().rightCols(axes);
  NormalityReport r;
  r.axes = axes;
  for (int k = 0; k < axes; ++k) {
    std::vector<double> col(scores.rows());
    for (Eigen::Index i = 0; i < scores.rows(); ++i) col[i] = scores(i, k);
    if (shapiro_wilk(col).p < alpha) ++r.axes_rejecting;
  }
  r.mardia = mardia_test(scores, alpha);
  return r;
}

}  // namespace diffsketch::cdst
