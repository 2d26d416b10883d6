#include "toy_backend.hpp"

#include "autodiff.hpp"
#include "rng.hpp"

namespace diffsketch::toy {

using ad::Var;

namespace {

constexpr int kLatentChannels = 4;
constexpr int kHidden = 8;

// sqrt(1 - alpha_bar) under a cosine schedule: flat near both ends, fast in between.
double noise_level(int t, int T) {
  const double s = 0.008;
  const double u = (static_cast<double>(t) / std::max(1, T - 1) + s) / (1.0 + s);
  const double c = std::cos(u * M_PI / 2.0);
  return std::sqrt(std::max(0.0, 1.0 - c * c));
}

Tensor he_init(Shape shape, std::uint64_t seed) {
  std::size_t fan_in = 1;
  for (std::size_t i = 1; i < shape.size(); ++i) fan_in *= shape[i];
  return randn(shape, seed, std::sqrt(2.0 / static_cast<double>(fan_in)));
}

int group_resolution(int group, int latent) {
  switch (group) {
    case 0: return std::max(1, latent / 4);
    case 1:
    case 2: return std::max(1, latent / 2);
    default: return latent;
  }
}

int group_channels(int group) {
  static constexpr int kChannels[] = {16, 12, 8, 8};
  return kChannels[group];
}

int vae_channels(int level) {
  static constexpr int kChannels[] = {16, 12, 8, 8};
  return kChannels[std::min(level, 3)];
}

Tensor32 to_f32(const Tensor& t) { return t.cast<float>(); }

}  // namespace

ToyBackend::ToyBackend(ToyBackendConfig cfg) : cfg_(cfg) {
  if (cfg_.layers < 2 || cfg_.timesteps < 2 || cfg_.fusing_steps < 1 || cfg_.condition_dim < 1)
    throw UsageError("toy backend: invalid configuration");
  latent_ = cfg_.image_size >> cfg_.fusing_steps;
  if (latent_ < 1 || (latent_ << cfg_.fusing_steps) != cfg_.image_size)
    throw UsageError("toy backend: image_size must be a multiple of 2^fusing_steps");

  std::uint64_t stream = 0;
  auto next = [&] { return derive_seed(cfg_.weight_seed, stream++); };
  for (int l = 0; l < cfg_.layers; ++l) {
    const int g = l * 4 / cfg_.layers;
    const int res = group_resolution(g, latent_);
    layer_shapes_.push_back({group_channels(g), res, res});
  }
  const int coarse = std::max(1, latent_ / 2);
  cond_proj_ = randn({kLatentChannels * coarse * coarse, cfg_.condition_dim}, next(),
                     1.5 / std::sqrt(static_cast<double>(cfg_.condition_dim)));
  denoise_w_ = he_init({kHidden, kLatentChannels, 3, 3}, next());
  denoise_cond_ = randn({kHidden, cfg_.condition_dim}, next(), 1.0 / std::sqrt(static_cast<double>(cfg_.condition_dim)));
  refine_w_ = he_init({kLatentChannels, kLatentChannels, 3, 3}, next());
  for (const auto& ls : layer_shapes_) {
    layer_w_.push_back(he_init({ls.channels, kHidden, 1, 1}, next()));
    NormalSampler ph(next());
    Tensor phase({ls.channels});
    for (auto& v : phase.raw()) v = ph.uniform() * 2.0 * M_PI;
    layer_phase_.push_back(std::move(phase));
  }
  int prev = kLatentChannels;
  for (int i = 0; i <= cfg_.fusing_steps; ++i) {
    std::vector<Tensor> blocks;
    const int c = vae_channels(i);
    blocks.push_back(he_init({c, prev, 3, 3}, next()));
    blocks.push_back(he_init({c, c, 3, 3}, next()));
    prev = c;
    vae_w_.push_back(std::move(blocks));
  }
  rgb_w_ = he_init({3, prev, 3, 3}, next());

  const int d = cfg_.condition_dim;
  NormalSampler mix(next());
  corpus_mix_.resize(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) corpus_mix_(i, j) = mix() / std::sqrt(static_cast<double>(d));
  corpus_mean_.resize(d);
  for (int i = 0; i < d; ++i) corpus_mean_(i) = 0.3 * mix();
}

std::vector<double> ToyBackend::sample_condition(std::uint64_t seed) const {
  const int d = cfg_.condition_dim;
  NormalSampler n(seed);
  Eigen::VectorXd z(d);
  // Mildly skewed marginals on odd axes so the corpus is not exactly Gaussian.
  for (int k = 0; k < d; ++k) {
    const double g = n();
    z(k) = (k % 2 == 0) ? g : (std::exp(0.5 * g) - std::exp(0.125)) / 0.6;
  }
  const Eigen::VectorXd x = corpus_mean_ + corpus_mix_ * z;
  // Rounded to float so conditions survive the f32 archive format unchanged.
  std::vector<double> out(d);
  for (int k = 0; k < d; ++k) out[k] = static_cast<float>(x(k));
  return out;
}

Eigen::MatrixXd ToyBackend::condition_corpus(int n, std::uint64_t seed) const {
  Eigen::MatrixXd out(n, cfg_.condition_dim);
  for (int i = 0; i < n; ++i) {
    const auto row = sample_condition(derive_seed(seed, static_cast<std::uint64_t>(i)));
    for (int k = 0; k < cfg_.condition_dim; ++k) out(i, k) = row[k];
  }
  return out;
}

store::Generation ToyBackend::generate(std::span<const double> condition, std::uint64_t seed) const {
  if (static_cast<int>(condition.size()) != cfg_.condition_dim)
    throw InputError("toy backend: condition has " + std::to_string(condition.size()) + " entries, expected " +
                     std::to_string(cfg_.condition_dim));
  for (double v : condition)
    if (!std::isfinite(v)) throw NumericError("toy backend: non-finite condition");

  const int r = latent_;
  const int coarse = std::max(1, r / 2);
  const int d = cfg_.condition_dim;
  const int T = cfg_.timesteps;
  Tensor cond({d});
  std::copy(condition.begin(), condition.end(), cond.raw().begin());
  const Var cvar = Var::constant(cond);

  // Clean latent implied by the condition.
  Var clean = ad::reshape(ad::matvec(Var::constant(cond_proj_), cvar), {kLatentChannels, coarse, coarse});
  clean = ad::resize_bilinear(clean, r, r);
  Tensor clean_t = clean.value();
  for (auto& v : clean_t.raw()) v = std::tanh(v);

  const Tensor cond_bias = ad::matvec(Var::constant(denoise_cond_), cvar).value();
  Var z = Var::constant(randn({kLatentChannels, r, r}, derive_seed(seed, 0x7a)));

  store::Generation gen;
  gen.trajectory = store::FeatureTrajectory(layer_shapes_, T);
  const Var no_bias;
  for (int t = T - 1; t >= 0; --t) {
    const double phase = noise_level(t, T);
    Tensor hb({kHidden});
    for (int k = 0; k < kHidden; ++k) hb[k] = cond_bias[k] + std::sin(M_PI * phase * (k + 1) * 0.5);
    const Var h = ad::leaky_relu(ad::conv2d(z, Var::constant(denoise_w_), Var::constant(hb)), 0.2);
    for (int l = 0; l < cfg_.layers; ++l) {
      const auto& ls = layer_shapes_[l];
      Var f = ad::conv2d(ad::adaptive_avg_pool(h, ls.height, ls.width), Var::constant(layer_w_[l]), no_bias);
      Tensor ft = f.value();
      const std::size_t plane = static_cast<std::size_t>(ls.height) * ls.width;
      for (int c = 0; c < ls.channels; ++c) {
        const double temb = 0.5 * std::sin(2.0 * M_PI * phase * (1 + c % 3) + layer_phase_[l][c]);
        for (std::size_t i = 0; i < plane; ++i) ft[c * plane + i] = std::tanh(ft[c * plane + i] + temb);
      }
      gen.trajectory.set(l + 1, t, to_f32(ft));
    }
    // Move toward the refined clean estimate; the final step lands on it.
    const double gamma = 1.0 / (t + 1);
    Tensor x0 = ad::conv2d(z, Var::constant(refine_w_), no_bias).value();
    for (std::size_t i = 0; i < x0.size(); ++i) x0[i] = std::tanh(clean_t[i] + 0.3 * x0[i]);
    Tensor zn = z.value();
    for (std::size_t i = 0; i < zn.size(); ++i) zn[i] = (1.0 - gamma) * zn[i] + gamma * x0[i];
    z = Var::constant(std::move(zn));
  }

  // VAE decoder: two residual-style blocks per level, resolution doubling between levels.
  Var x = z;
  for (int i = 0; i <= cfg_.fusing_steps; ++i) {
    if (i > 0) x = ad::upsample_nearest(x, 2);
    std::vector<Tensor32> blocks;
    for (const auto& w : vae_w_[i]) {
      x = ad::leaky_relu(ad::conv2d(x, Var::constant(w), no_bias), 0.2);
      blocks.push_back(to_f32(x.value()));
    }
    gen.pyramid.levels.push_back(std::move(blocks));
  }
  Tensor rgb = ad::conv2d(x, Var::constant(rgb_w_), no_bias).value();
  for (auto& v : rgb.raw()) v = 1.0 / (1.0 + std::exp(-2.0 * v));
  gen.image = store::image_from_chw(rgb);
  return gen;
}

store::Sketch style_sketch(const store::Image& image) {
  const int H = image.height(), W = image.width();
  std::vector<double> lum(static_cast<std::size_t>(H) * W);
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x)
      lum[y * W + x] = 0.299 * image.pixels.at(y, x, 0) + 0.587 * image.pixels.at(y, x, 1) +
                       0.114 * image.pixels.at(y, x, 2);
  auto L = [&](int y, int x) {
    y = std::clamp(y, 0, H - 1);
    x = std::clamp(x, 0, W - 1);
    return lum[y * W + x];
  };
  std::vector<double> mag(lum.size());
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      const double gx = (L(y - 1, x + 1) + 2 * L(y, x + 1) + L(y + 1, x + 1)) -
                        (L(y - 1, x - 1) + 2 * L(y, x - 1) + L(y + 1, x - 1));
      const double gy = (L(y + 1, x - 1) + 2 * L(y + 1, x) + L(y + 1, x + 1)) -
                        (L(y - 1, x - 1) + 2 * L(y - 1, x) + L(y - 1, x + 1));
      mag[y * W + x] = std::sqrt(gx * gx + gy * gy);
    }
  // Strokes saturate at the 90th-percentile gradient.
  std::vector<double> sorted = mag;
  std::nth_element(sorted.begin(), sorted.begin() + sorted.size() * 9 / 10, sorted.end());
  const double ref = std::max(sorted[sorted.size() * 9 / 10], 1e-6);
  store::Sketch s{Tensor32({H, W, 1})};
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x)
      s.pixels.at(y, x, 0) = static_cast<float>(std::clamp(1.0 - mag[y * W + x] / ref, 0.0, 1.0));
  return s;
}

store::TripletDatum make_triplet(const ToyBackend& backend, std::uint64_t condition_seed, std::uint64_t noise_seed) {
  store::TripletDatum d;
  d.condition = backend.sample_condition(condition_seed);
  d.seed = noise_seed;
  auto gen = backend.generate(d.condition, noise_seed);
  d.sketch = style_sketch(gen.image);
  d.source = std::move(gen.image);
  d.trajectory = std::move(gen.trajectory);
  d.pyramid = std::move(gen.pyramid);
  return d;
}

}  // namespace diffsketch::toy
