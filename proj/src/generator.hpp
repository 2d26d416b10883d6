#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include <json.hpp>

#include "checkpoint.hpp"
#include "feature_store.hpp"

namespace diffsketch::generator {

struct AggregatorConfig {
  int layers = 12;
  int mid_layer = 9;  // layers 1..mid_layer mix at mid resolution
  std::vector<int> selected_timesteps;
  int mid_resolution = 4;
  int top_resolution = 8;
  int bottleneck_channels = 32;
  bool bottleneck_bias = true;

  void validate(int timesteps) const;
};

struct FfdConfig {
  int reduce_channels = 8;
  std::vector<int> fuse_channels;  // output channels of each fusing step, size M
  bool use_vae_features = true;
};

struct GeneratorConfig {
  AggregatorConfig aggregator;
  FfdConfig ffd;
  int timesteps = 0;
  int image_size = 0;
  std::vector<store::LayerShape> layer_shapes;
  std::vector<std::vector<int>> vae_channels;  // per pyramid level, per block

  int fusing_steps() const { return static_cast<int>(vae_channels.size()) - 1; }
  nlohmann::json to_json() const;
  static GeneratorConfig from_json(const nlohmann::json& j);
};

// Generator topology matched to a backend: mid/top resolutions at latent/2 and
// latent, VAE block channels probed from one generation.
GeneratorConfig default_config(const store::DiffusionBackend& backend, std::vector<int> selected_timesteps,
                               int bottleneck_channels = 32);

// Two-level feature aggregation followed by the feature-fusing decoder.
// Only features at the selected timesteps are ever read.
class SketchGenerator {
 public:
  SketchGenerator(GeneratorConfig config, std::uint64_t init_seed);

  const GeneratorConfig& config() const { return config_; }
  ParameterSet& params() { return params_; }
  const ParameterSet& params() const { return params_; }

  // First-level mix over layers 1..mid_layer at mid resolution.
  ad::Var aggregate_first(const store::FeatureTrajectory& trajectory) const;
  // Second-level mix over the upper layers plus the first-level skip terms, at top resolution.
  // With use_upper_features = false only the skip terms contribute.
  ad::Var aggregate_final(const store::FeatureTrajectory& trajectory, const ad::Var& first,
                          bool use_upper_features = true) const;
  // Fusing step i: x_i (C x r x r) and level-i VAE blocks -> x_{i+1} at 2r.
  ad::Var ffd_step(int step, const ad::Var& x, const std::vector<ad::Var>& vae_blocks) const;
  // Output head over level-M VAE blocks, x_M and the source image (3 x H x W) -> 1 x H x W in (0,1).
  ad::Var output_head(const ad::Var& x, const std::vector<ad::Var>& vae_blocks, const ad::Var& source) const;

  ad::Var forward(const store::FeatureTrajectory& trajectory, const store::VaePyramid& pyramid,
                  const ad::Var& source_chw) const;
  store::Sketch generate_sketch(const store::FeatureTrajectory& trajectory, const store::VaePyramid& pyramid,
                                const store::Image& source) const;

  // Writes weights.bin and generator.json into dir.
  void save(const std::filesystem::path& dir) const;
  static SketchGenerator load(const std::filesystem::path& dir);

 private:
  ad::Var conv(const std::string& prefix, const ad::Var& x) const;
  std::vector<ad::Var> vae_branch(int level, const std::vector<ad::Var>& blocks, int resolution) const;

  GeneratorConfig config_;
  ParameterSet params_;
};

std::vector<ad::Var> pyramid_level(const store::VaePyramid& pyramid, int level);

}  // namespace diffsketch::generator
