#include <algorithm>
#include <cmath>

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/normal.hpp>

#include "cdst.hpp"
#include "tensor.hpp"

namespace diffsketch::cdst {

namespace {

double poly(const double* c, int n, double x) {
  double r = c[n - 1];
  for (int i = n - 2; i >= 0; --i) r = r * x + c[i];
  return r;
}

}  // namespace

// Algorithm AS R94 (Royston 1995).
ShapiroWilkResult shapiro_wilk(std::vector<double> x) {
  const int n = static_cast<int>(x.size());
  if (n < 3) throw InputError("shapiro_wilk: need at least 3 values");
  if (n > 5000) throw InputError("shapiro_wilk: more than 5000 values");
  for (double v : x)
    if (!std::isfinite(v)) throw NumericError("shapiro_wilk: non-finite value");
  std::sort(x.begin(), x.end());
  if (x.back() - x.front() < 1e-19 * std::max(1.0, std::abs(x.front())))
    throw InputError("shapiro_wilk: all values equal");

  static const double c1[] = {0.0, 0.221157, -0.147981, -2.07119, 4.434685, -2.706056};
  static const double c2[] = {0.0, 0.042981, -0.293762, -1.752461, 5.682633, -3.582633};
  static const double c3[] = {0.544, -0.39978, 0.025054, -6.714e-4};
  static const double c4[] = {1.3822, -0.77857, 0.062767, -0.0020322};
  static const double c5[] = {-1.5861, -0.31082, -0.083751, 0.0038915};
  static const double c6[] = {-0.4803, -0.082676, 0.0030302};
  static const double g[] = {-2.273, 0.459};

  const boost::math::normal stdnorm;
  const int half = n / 2;
  const double an = n;
  std::vector<double> a(static_cast<std::size_t>(half) + 1, 0.0);  // 1-based
  if (n == 3) {
    a[1] = std::sqrt(0.5);
  } else {
    std::vector<double> m(static_cast<std::size_t>(half) + 1);
    double summ2 = 0.0;
    for (int i = 1; i <= half; ++i) {
      m[i] = boost::math::quantile(stdnorm, (i - 0.375) / (an + 0.25));
      summ2 += m[i] * m[i];
    }
    summ2 *= 2.0;
    const double ssumm2 = std::sqrt(summ2);
    const double rsn = 1.0 / std::sqrt(an);
    const double a1 = poly(c1, 6, rsn) - m[1] / ssumm2;
    int first;
    double fac;
    if (n > 5) {
      first = 3;
      const double a2 = -m[2] / ssumm2 + poly(c2, 6, rsn);
      fac = std::sqrt((summ2 - 2.0 * m[1] * m[1] - 2.0 * m[2] * m[2]) / (1.0 - 2.0 * a1 * a1 - 2.0 * a2 * a2));
      a[2] = a2;
    } else {
      first = 2;
      fac = std::sqrt((summ2 - 2.0 * m[1] * m[1]) / (1.0 - 2.0 * a1 * a1));
    }
    a[1] = a1;
    for (int i = first; i <= half; ++i) a[i] = -m[i] / fac;
  }

  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= an;
  double ssq = 0.0;
  for (double v : x) ssq += (v - mean) * (v - mean);
  double num = 0.0;
  for (int i = 1; i <= half; ++i) num += a[i] * (x[n - i] - x[i - 1]);
  double w = std::min(1.0, num * num / ssq);

  ShapiroWilkResult r{w, 1.0};
  if (n == 3) {
    constexpr double pi6 = 1.90985931710274, stqr = 1.04719755119660;
    r.w = std::max(w, 0.75);
    r.p = std::max(0.0, pi6 * (std::asin(std::sqrt(r.w)) - stqr));
    return r;
  }
  const double w1 = 1.0 - w;
  if (w1 <= 0.0) return r;
  double y = std::log(w1);
  double mu, sigma;
  if (n <= 11) {
    const double gamma = poly(g, 2, an);
    if (y >= gamma) {
      r.p = 1e-99;
      return r;
    }
    y = -std::log(gamma - y);
    mu = poly(c3, 4, an);
    sigma = std::exp(poly(c4, 4, an));
  } else {
    const double xx = std::log(an);
    mu = poly(c5, 4, xx);
    sigma = std::exp(poly(c6, 3, xx));
  }
  r.p = boost::math::cdf(boost::math::complement(stdnorm, (y - mu) / sigma));
  return r;
}

MardiaResult mardia_test(const Eigen::MatrixXd& samples, double alpha) {
  const Eigen::Index n = samples.rows(), p = samples.cols();
  if (n < 3 || p < 1) throw InputError("mardia: need at least 3 samples and 1 dimension");
  if (!samples.allFinite()) throw NumericError("mardia: non-finite sample");
  const Eigen::MatrixXd d = samples.rowwise() - samples.colwise().mean();
  const Eigen::MatrixXd s = d.transpose() * d / static_cast<double>(n);
  Eigen::LDLT<Eigen::MatrixXd> ldlt(s);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(s, Eigen::EigenvaluesOnly);
  if (ldlt.info() != Eigen::Success || eig.eigenvalues().minCoeff() <= 1e-12 * std::max(1.0, eig.eigenvalues().maxCoeff()))
    throw NumericError("mardia: singular sample covariance");
  const Eigen::MatrixXd gram = d * ldlt.solve(d.transpose());

  const double nn = static_cast<double>(n), pp = static_cast<double>(p);
  MardiaResult r{};
  r.skewness = gram.array().cube().sum() / (nn * nn);
  r.kurtosis = gram.diagonal().array().square().sum() / nn;
  r.skew_stat = nn * r.skewness / 6.0;
  r.kurt_stat = (r.kurtosis - pp * (pp + 2.0)) / std::sqrt(8.0 * pp * (pp + 2.0) / nn);
  const boost::math::chi_squared chi(pp * (pp + 1.0) * (pp + 2.0) / 6.0);
  r.skew_p = boost::math::cdf(boost::math::complement(chi, r.skew_stat));
  r.kurt_p = 2.0 * boost::math::cdf(boost::math::complement(boost::math::normal(), std::abs(r.kurt_stat)));
  r.reject = r.skew_p < alpha / 2.0 || r.kurt_p < alpha / 2.0;
  return r;
}

}  // namespace diffsketch::cdst
