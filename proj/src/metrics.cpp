#include "metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <map>

#include "rng.hpp"

namespace diffsketch::metrics {

namespace {

constexpr int kWindow = 11;
constexpr double kSigma = 1.5;

std::vector<double> gaussian_taps() {
  std::vector<double> g(kWindow);
  double s = 0.0;
  for (int i = 0; i < kWindow; ++i) {
    const double d = i - kWindow / 2;
    g[i] = std::exp(-d * d / (2.0 * kSigma * kSigma));
    s += g[i];
  }
  for (auto& v : g) v /= s;
  return g;
}

// Valid separable filtering of one h x w plane.
std::vector<double> filter_valid(const std::vector<double>& x, int h, int w, const std::vector<double>& g) {
  const int oh = h - kWindow + 1, ow = w - kWindow + 1;
  std::vector<double> rows(static_cast<std::size_t>(h) * ow);
  for (int y = 0; y < h; ++y)
    for (int c = 0; c < ow; ++c) {
      double s = 0.0;
      for (int k = 0; k < kWindow; ++k) s += g[k] * x[static_cast<std::size_t>(y) * w + c + k];
      rows[static_cast<std::size_t>(y) * ow + c] = s;
    }
  std::vector<double> out(static_cast<std::size_t>(oh) * ow);
  for (int y = 0; y < oh; ++y)
    for (int c = 0; c < ow; ++c) {
      double s = 0.0;
      for (int k = 0; k < kWindow; ++k) s += g[k] * rows[static_cast<std::size_t>(y + k) * ow + c];
      out[static_cast<std::size_t>(y) * ow + c] = s;
    }
  return out;
}

double sorted_mean(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

ad::Var to_chw(const Tensor32& hwc) {
  const int h = hwc.dim(0), w = hwc.dim(1), c = hwc.dim(2);
  Tensor t({c, h, w});
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int k = 0; k < c; ++k) t.at(k, y, x) = hwc.at(y, x, k);
  return ad::Var::constant(std::move(t));
}

}  // namespace

double ssim(const Tensor32& a, const Tensor32& b) {
  if (a.shape() != b.shape())
    throw InputError("ssim: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  if (a.rank() != 3) throw InputError("ssim: expected H x W x C");
  const int h = a.dim(0), w = a.dim(1), ch = a.dim(2);
  if (h < kWindow || w < kWindow) throw InputError("ssim: image smaller than the 11x11 window");
  const auto g = gaussian_taps();
  const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  double total = 0.0;
  const std::size_t n = static_cast<std::size_t>(h) * w;
  for (int k = 0; k < ch; ++k) {
    std::vector<double> x(n), y(n), xx(n), yy(n), xy(n);
    for (int r = 0; r < h; ++r)
      for (int c = 0; c < w; ++c) {
        const std::size_t i = static_cast<std::size_t>(r) * w + c;
        x[i] = a.at(r, c, k);
        y[i] = b.at(r, c, k);
        xx[i] = x[i] * x[i];
        yy[i] = y[i] * y[i];
        xy[i] = x[i] * y[i];
      }
    const auto mx = filter_valid(x, h, w, g), my = filter_valid(y, h, w, g);
    const auto sxx = filter_valid(xx, h, w, g), syy = filter_valid(yy, h, w, g), sxy = filter_valid(xy, h, w, g);
    double acc = 0.0;
    for (std::size_t i = 0; i < mx.size(); ++i) {
      const double vx = sxx[i] - mx[i] * mx[i];
      const double vy = syy[i] - my[i] * my[i];
      const double cov = sxy[i] - mx[i] * my[i];
      acc += ((2.0 * mx[i] * my[i] + c1) * (2.0 * cov + c2)) /
             ((mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2));
    }
    total += acc / static_cast<double>(mx.size());
  }
  return total / ch;
}

double ssim(const store::Sketch& a, const store::Sketch& b) { return ssim(a.pixels, b.pixels); }

double perceptual(const Tensor32& a, const Tensor32& b, const objectives::PerceptualMetric& adapter) {
  if (a.shape() != b.shape())
    throw InputError("perceptual: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  const double d = adapter.distance(to_chw(a), to_chw(b)).item();
  if (!std::isfinite(d)) throw NumericError("perceptual: non-finite distance");
  return d;
}

std::vector<EvalRecord> evaluate(const std::string& variant, const std::vector<SketchPair>& pairs,
                                 const objectives::PerceptualMetric& adapter) {
  std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> by_style;
  std::vector<std::string> order;
  for (const auto& p : pairs) {
    if (!by_style.count(p.style)) order.push_back(p.style);
    auto& [lp, ss] = by_style[p.style];
    lp.push_back(perceptual(p.pred.pixels, p.gt.pixels, adapter));
    ss.push_back(ssim(p.pred, p.gt));
  }
  std::sort(order.begin(), order.end());
  std::vector<EvalRecord> out;
  for (const auto& style : order) {
    const auto& [lp, ss] = by_style[style];
    const int n = static_cast<int>(lp.size());
    out.push_back({style, variant, "lpips", sorted_mean(lp), n});
    out.push_back({style, variant, "ssim", sorted_mean(ss), n});
  }
  return out;
}

std::vector<EvalRecord> run_ablation(const std::vector<Variant>& variants, const std::vector<EvalPair>& pairs,
                                     const objectives::PerceptualMetric& adapter) {
  std::vector<EvalRecord> out;
  for (const auto& v : variants) {
    std::vector<SketchPair> preds;
    preds.reserve(pairs.size());
    for (const auto& p : pairs)
      preds.push_back({p.style,
                       v.model->generate_sketch(p.generation.trajectory, p.generation.pyramid, p.generation.image),
                       p.gt});
    auto recs = evaluate(v.name, preds, adapter);
    out.insert(out.end(), recs.begin(), recs.end());
  }
  return out;
}

const std::vector<std::string>& ablation_variant_names() {
  static const std::vector<std::string> names = {
      "Ours", "Non-representative 1", "Non-representative 2", "One timestep (t=0)", "W/O CDST", "W/O L1",
      "FFD W/O VAE features"};
  return names;
}

std::vector<std::pair<std::string, AblationSetup>> ablation_setups(const generator::GeneratorConfig& base,
                                                                  const trainer::TrainConfig& train,
                                                                  const selection::SelectionReport& report,
                                                                  std::uint64_t seed) {
  const auto& names = ablation_variant_names();
  std::vector<std::pair<std::string, AblationSetup>> out;
  for (const auto& name : names) out.push_back({name, {base, train}});
  const int T = base.timesteps;
  const int k = std::max(1, static_cast<int>(report.timesteps.size()));
  out[0].second.config.aggregator.selected_timesteps = report.timesteps;
  out[1].second.config.aggregator.selected_timesteps = selection::random_timesteps(T, k, derive_seed(seed, 1));
  out[2].second.config.aggregator.selected_timesteps = selection::random_timesteps(T, k, derive_seed(seed, 2));
  out[3].second.config.aggregator.selected_timesteps = {0};
  for (int i = 4; i < 7; ++i) out[i].second.config.aggregator.selected_timesteps = report.timesteps;
  out[4].second.train.use_cdst = false;
  out[5].second.train.pixel = objectives::PixelLoss::Squared;
  out[6].second.config.ffd.use_vae_features = false;
  return out;
}

void write_csv(std::ostream& out, const std::vector<EvalRecord>& records) {
  out << "style,variant,lpips,ssim,n\n";
  std::vector<std::pair<std::string, std::string>> keys;
  std::map<std::pair<std::string, std::string>, std::pair<double, double>> values;
  std::map<std::pair<std::string, std::string>, int> counts;
  for (const auto& r : records) {
    const auto key = std::make_pair(r.style, r.variant);
    if (!values.count(key)) keys.push_back(key);
    auto& v = values[key];
    if (r.metric == "lpips") v.first = r.value;
    else if (r.metric == "ssim") v.second = r.value;
    counts[key] = r.n_pairs;
  }
  const auto flags = out.flags();
  out << std::setprecision(17);
  for (const auto& key : keys) {
    const auto& [lp, ss] = values[key];
    auto quote = [](const std::string& s) {
      return s.find_first_of(",\"") == std::string::npos ? s : "\"" + s + "\"";
    };
    out << quote(key.first) << ',' << quote(key.second) << ',' << lp << ',' << ss << ',' << counts[key] << '\n';
  }
  out.flags(flags);
}

}  // namespace diffsketch::metrics
