#include "generator.hpp"

#include <fstream>
#include <set>

#include "rng.hpp"

namespace diffsketch::generator {

using ad::Var;
namespace fs = std::filesystem;

namespace {

constexpr double kSlope = 0.2;

Tensor he_normal(Shape shape, std::uint64_t seed) {
  std::size_t fan_in = 1;
  for (std::size_t i = 1; i < shape.size(); ++i) fan_in *= shape[i];
  return randn(shape, seed, std::sqrt(2.0 / static_cast<double>(fan_in)));
}

Var feature_var(const Tensor32& t) { return Var::constant(t.cast<double>()); }

std::string layer_key(int l) { return std::to_string(l); }

}  // namespace

void AggregatorConfig::validate(int timesteps) const {
  if (mid_layer < 1 || mid_layer >= layers) throw UsageError("aggregator: need 1 <= mid_layer < layers");
  if (selected_timesteps.empty()) throw UsageError("aggregator: empty timestep gate");
  std::set<int> seen;
  for (int t : selected_timesteps) {
    if (t < 0 || t >= timesteps) throw UsageError("aggregator: gated timestep " + std::to_string(t) + " out of range");
    if (!seen.insert(t).second) throw UsageError("aggregator: duplicate gated timestep " + std::to_string(t));
  }
  auto pow2 = [](int r) { return r > 0 && (r & (r - 1)) == 0; };
  if (!pow2(mid_resolution) || !pow2(top_resolution)) throw UsageError("aggregator: resolutions must be powers of two");
  if (bottleneck_channels < 1) throw UsageError("aggregator: bottleneck_channels must be positive");
}

nlohmann::json GeneratorConfig::to_json() const {
  nlohmann::json shapes = nlohmann::json::array();
  for (const auto& s : layer_shapes) shapes.push_back({s.channels, s.height, s.width});
  return {{"aggregator",
           {{"L", aggregator.layers},
            {"l_md", aggregator.mid_layer},
            {"selected_timesteps", aggregator.selected_timesteps},
            {"mid_resolution", aggregator.mid_resolution},
            {"top_resolution", aggregator.top_resolution},
            {"bottleneck_channels", aggregator.bottleneck_channels},
            {"bottleneck_bias", aggregator.bottleneck_bias}}},
          {"ffd",
           {{"reduce_channels", ffd.reduce_channels},
            {"fuse_channels", ffd.fuse_channels},
            {"use_vae_features", ffd.use_vae_features},
            {"vae_channels", vae_channels}}},
          {"T", timesteps},
          {"image_size", image_size},
          {"layer_shapes", shapes}};
}

GeneratorConfig GeneratorConfig::from_json(const nlohmann::json& j) {
  GeneratorConfig c;
  const auto& a = j.at("aggregator");
  c.aggregator.layers = a.at("L");
  c.aggregator.mid_layer = a.at("l_md");
  c.aggregator.selected_timesteps = a.at("selected_timesteps").get<std::vector<int>>();
  c.aggregator.mid_resolution = a.at("mid_resolution");
  c.aggregator.top_resolution = a.at("top_resolution");
  c.aggregator.bottleneck_channels = a.at("bottleneck_channels");
  c.aggregator.bottleneck_bias = a.at("bottleneck_bias");
  const auto& f = j.at("ffd");
  c.ffd.reduce_channels = f.at("reduce_channels");
  c.ffd.fuse_channels = f.at("fuse_channels").get<std::vector<int>>();
  c.ffd.use_vae_features = f.at("use_vae_features");
  c.vae_channels = f.at("vae_channels").get<std::vector<std::vector<int>>>();
  c.timesteps = j.at("T");
  c.image_size = j.at("image_size");
  for (const auto& s : j.at("layer_shapes")) c.layer_shapes.push_back({s.at(0), s.at(1), s.at(2)});
  return c;
}

GeneratorConfig default_config(const store::DiffusionBackend& backend, std::vector<int> selected_timesteps,
                               int bottleneck_channels) {
  GeneratorConfig c;
  c.timesteps = backend.timesteps();
  c.image_size = backend.image_size();
  c.layer_shapes = backend.layer_shapes();
  c.aggregator.layers = backend.layers();
  c.aggregator.mid_layer = std::min(9, backend.layers() - 1);
  c.aggregator.selected_timesteps = std::move(selected_timesteps);
  c.aggregator.bottleneck_channels = bottleneck_channels;
  const int top = backend.image_size() >> backend.fusing_steps();
  c.aggregator.top_resolution = top;
  c.aggregator.mid_resolution = std::max(1, top / 2);

  const std::vector<double> probe(backend.condition_dim(), 0.0);
  const auto gen = backend.generate(probe, 0);
  for (const auto& level : gen.pyramid.levels) {
    std::vector<int> ch;
    for (const auto& b : level) ch.push_back(b.dim(0));
    c.vae_channels.push_back(std::move(ch));
  }
  const int M = c.fusing_steps();
  c.ffd.fuse_channels.assign(M, 16);
  if (M > 0) c.ffd.fuse_channels.back() = 8;
  return c;
}

SketchGenerator::SketchGenerator(GeneratorConfig config, std::uint64_t init_seed) : config_(std::move(config)) {
  const auto& a = config_.aggregator;
  a.validate(config_.timesteps);
  if (static_cast<int>(config_.layer_shapes.size()) != a.layers) throw UsageError("generator: layer table size != L");
  const int M = config_.fusing_steps();
  if (M < 0 || static_cast<int>(config_.ffd.fuse_channels.size()) != M)
    throw UsageError("generator: fuse_channels must have one entry per fusing step");
  if ((a.top_resolution << M) != config_.image_size)
    throw UsageError("generator: top_resolution * 2^M must equal image_size");

  std::uint64_t stream = 0;
  auto next = [&] { return derive_seed(init_seed, stream++); };
  const int nsel = static_cast<int>(a.selected_timesteps.size());
  const int cb = a.bottleneck_channels;
  auto add_conv = [&](const std::string& prefix, int out, int in, int k, bool bias) {
    params_.add(prefix + ".w", he_normal({out, in, k, k}, next()));
    if (bias) params_.add(prefix + ".b", Tensor({out}));
  };

  for (int l = 1; l <= a.layers; ++l)
    add_conv("agg.B" + layer_key(l), cb, config_.layer_shapes[l - 1].channels, 1, a.bottleneck_bias);
  for (int l = a.mid_layer + 1; l <= a.layers; ++l) add_conv("agg.skipB" + layer_key(l), cb, cb, 1, a.bottleneck_bias);
  params_.add("agg.mix_first", Tensor({a.mid_layer * nsel}));
  params_.add("agg.mix_final", Tensor({(a.layers - a.mid_layer) * nsel}));
  params_.add("agg.skip_logits", Tensor({a.layers - a.mid_layer}));

  const int r = config_.ffd.reduce_channels;
  int xc = cb;
  for (int i = 0; i <= M; ++i) {
    const std::string s = "ffd.s" + std::to_string(i);
    int in = xc;
    if (config_.ffd.use_vae_features) {
      for (std::size_t n = 0; n < config_.vae_channels[i].size(); ++n) {
        add_conv(s + ".CH" + std::to_string(n), r, config_.vae_channels[i][n], 1, true);
        add_conv(s + ".Conv" + std::to_string(n), r, r, 3, true);
        in += r;
      }
    }
    if (i < M) {
      add_conv(s + ".FUSE", config_.ffd.fuse_channels[i], in, 3, true);
      xc = config_.ffd.fuse_channels[i];
    } else {
      add_conv("ffd.OUT", 1, in + 3, 3, true);
    }
  }
}

Var SketchGenerator::conv(const std::string& prefix, const Var& x) const {
  const std::string bias = prefix + ".b";
  return ad::conv2d(x, params_.get(prefix + ".w"), params_.contains(bias) ? params_.get(bias) : Var());
}

Var SketchGenerator::aggregate_first(const store::FeatureTrajectory& trajectory) const {
  const auto& a = config_.aggregator;
  const int mid = a.mid_resolution;
  std::vector<Var> terms;
  for (int l = 1; l <= a.mid_layer; ++l)
    for (int t : a.selected_timesteps) {
      const Tensor32& f = trajectory.at(l, t);
      if (f.empty()) throw InputError("aggregate_first: missing feature (l=" + std::to_string(l) + ", t=" + std::to_string(t) + ")");
      if (f.dim(1) > mid || f.dim(2) > mid)
        throw InputError("aggregate_first: layer " + std::to_string(l) + " resolution " + std::to_string(f.dim(1)) +
                         " exceeds mid resolution " + std::to_string(mid));
      terms.push_back(conv("agg.B" + layer_key(l), ad::resize_bilinear(feature_var(f), mid, mid)));
    }
  return ad::weighted_sum(terms, ad::softmax(params_.get("agg.mix_first")));
}

Var SketchGenerator::aggregate_final(const store::FeatureTrajectory& trajectory, const Var& first,
                                     bool use_upper_features) const {
  const auto& a = config_.aggregator;
  const int top = a.top_resolution;
  if (first.dim(1) > top) throw InputError("aggregate_final: first-level features exceed top resolution");
  const Var up_first = ad::resize_bilinear(first, top, top);
  std::vector<Var> skip;
  for (int l = a.mid_layer + 1; l <= a.layers; ++l) skip.push_back(conv("agg.skipB" + layer_key(l), up_first));
  Var out = ad::weighted_sum(skip, ad::softmax(params_.get("agg.skip_logits")));
  if (!use_upper_features) return out;

  std::vector<Var> terms;
  for (int l = a.mid_layer + 1; l <= a.layers; ++l)
    for (int t : a.selected_timesteps) {
      const Tensor32& f = trajectory.at(l, t);
      if (f.empty()) throw InputError("aggregate_final: missing feature (l=" + std::to_string(l) + ", t=" + std::to_string(t) + ")");
      if (f.dim(1) > top || f.dim(2) > top)
        throw InputError("aggregate_final: layer " + std::to_string(l) + " resolution " + std::to_string(f.dim(1)) +
                         " exceeds top resolution " + std::to_string(top));
      terms.push_back(conv("agg.B" + layer_key(l), ad::resize_bilinear(feature_var(f), top, top)));
    }
  return ad::add(ad::weighted_sum(terms, ad::softmax(params_.get("agg.mix_final"))), out);
}

std::vector<Var> SketchGenerator::vae_branch(int level, const std::vector<Var>& blocks, int resolution) const {
  std::vector<Var> out;
  if (!config_.ffd.use_vae_features) return out;
  if (blocks.size() != config_.vae_channels.at(level).size())
    throw InputError("ffd: level " + std::to_string(level) + " has " + std::to_string(blocks.size()) +
                     " blocks, expected " + std::to_string(config_.vae_channels[level].size()));
  const std::string s = "ffd.s" + std::to_string(level);
  for (std::size_t n = 0; n < blocks.size(); ++n) {
    if (blocks[n].dim(1) != resolution || blocks[n].dim(2) != resolution)
      throw InputError("ffd: resolution mismatch at (i=" + std::to_string(level) + ", n=" + std::to_string(n) +
                       "): block is " + std::to_string(blocks[n].dim(1)) + ", fused feature is " +
                       std::to_string(resolution));
    const Var reduced = conv(s + ".CH" + std::to_string(n), blocks[n]);
    out.push_back(ad::leaky_relu(conv(s + ".Conv" + std::to_string(n), reduced), kSlope));
  }
  return out;
}

Var SketchGenerator::ffd_step(int step, const Var& x, const std::vector<Var>& vae_blocks) const {
  if (step < 0 || step >= config_.fusing_steps()) throw std::out_of_range("ffd_step: no fusing step " + std::to_string(step));
  std::vector<Var> parts = vae_branch(step, vae_blocks, x.dim(1));
  parts.push_back(x);
  const Var fused = ad::leaky_relu(conv("ffd.s" + std::to_string(step) + ".FUSE", ad::concat_channels(parts)), kSlope);
  return ad::upsample_nearest(fused, 2);
}

Var SketchGenerator::output_head(const Var& x, const std::vector<Var>& vae_blocks, const Var& source) const {
  if (source.dim(1) != x.dim(1) || source.dim(2) != x.dim(2))
    throw InputError("output head: source image " + shape_str(source.shape()) + " does not match fused features " +
                     shape_str(x.shape()));
  std::vector<Var> parts = vae_branch(config_.fusing_steps(), vae_blocks, x.dim(1));
  parts.push_back(x);
  parts.push_back(source);
  return ad::sigmoid(conv("ffd.OUT", ad::concat_channels(parts)));
}

std::vector<Var> pyramid_level(const store::VaePyramid& pyramid, int level) {
  std::vector<Var> out;
  for (const auto& b : pyramid.levels.at(level)) out.push_back(feature_var(b));
  return out;
}

Var SketchGenerator::forward(const store::FeatureTrajectory& trajectory, const store::VaePyramid& pyramid,
                             const Var& source_chw) const {
  const int M = config_.fusing_steps();
  if (pyramid.fusing_steps() != M)
    throw InputError("generator: pyramid has " + std::to_string(pyramid.levels.size()) + " levels, expected " +
                     std::to_string(M + 1));
  const bool vae = config_.ffd.use_vae_features;
  Var x = aggregate_final(trajectory, aggregate_first(trajectory));
  for (int i = 0; i < M; ++i) x = ffd_step(i, x, vae ? pyramid_level(pyramid, i) : std::vector<Var>{});
  return output_head(x, vae ? pyramid_level(pyramid, M) : std::vector<Var>{}, source_chw);
}

store::Sketch SketchGenerator::generate_sketch(const store::FeatureTrajectory& trajectory,
                                               const store::VaePyramid& pyramid, const store::Image& source) const {
  const Var out = forward(trajectory, pyramid, Var::constant(store::image_to_chw(source)));
  if (!out.value().all_finite()) throw NumericError("generator produced non-finite output");
  return store::sketch_from_chw(out.value());
}

void SketchGenerator::save(const fs::path& dir) const {
  std::error_code ec;
  fs::create_directories(dir, ec);
  save_tensors(dir / "weights.bin", params_.snapshot());
  std::ofstream out(dir / "generator.json", std::ios::trunc);
  if (!out) throw InputError("cannot write " + (dir / "generator.json").string());
  out << config_.to_json().dump(2) << "\n";
}

SketchGenerator SketchGenerator::load(const fs::path& dir) {
  std::ifstream in(dir / "generator.json");
  if (!in) throw InputError("no generator.json in " + dir.string());
  GeneratorConfig cfg;
  try {
    cfg = GeneratorConfig::from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("malformed generator.json: ") + e.what());
  }
  SketchGenerator g(std::move(cfg), 0);
  g.params_.restore(load_tensors(dir / "weights.bin"));
  return g;
}

}  // namespace diffsketch::generator
