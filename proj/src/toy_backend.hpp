#pragma once

#include <cstdint>

#include "feature_store.hpp"

namespace diffsketch::toy {

struct ToyBackendConfig {
  int layers = 12;
  int timesteps = 10;
  int fusing_steps = 3;
  int image_size = 64;
  int condition_dim = 16;
  std::uint64_t weight_seed = 0x5eedULL;
};

// A small fixed-weight convolutional denoiser standing in for a pretrained
// latent diffusion model. Latent resolution is image_size / 2^fusing_steps.
// Decoder layers fall into four resolution groups (latent/4, latent/2,
// latent/2, latent); the VAE decoder doubles resolution once per level.
class ToyBackend final : public store::DiffusionBackend {
 public:
  explicit ToyBackend(ToyBackendConfig cfg = {});

  std::string name() const override { return "toy"; }
  int layers() const override { return cfg_.layers; }
  int timesteps() const override { return cfg_.timesteps; }
  int fusing_steps() const override { return cfg_.fusing_steps; }
  int image_size() const override { return cfg_.image_size; }
  int condition_dim() const override { return cfg_.condition_dim; }
  std::vector<store::LayerShape> layer_shapes() const override { return layer_shapes_; }

  int latent_size() const { return latent_; }
  const ToyBackendConfig& config() const { return cfg_; }

  store::Generation generate(std::span<const double> condition, std::uint64_t seed) const override;
  Eigen::MatrixXd condition_corpus(int n, std::uint64_t seed) const override;

  // One draw from the conditioning corpus; corpus row i is draw(derive_seed(seed, i)).
  std::vector<double> sample_condition(std::uint64_t seed) const;

 private:
  ToyBackendConfig cfg_;
  int latent_ = 0;
  std::vector<store::LayerShape> layer_shapes_;

  Tensor cond_proj_;      // (4*c*c) x d, c = coarse latent size
  Tensor denoise_w_;      // 8 x 4 x 3 x 3
  Tensor denoise_cond_;   // 8 x d
  Tensor refine_w_;       // 4 x 4 x 3 x 3
  std::vector<Tensor> layer_w_;     // C_l x 8 x 1 x 1
  std::vector<Tensor> layer_phase_; // C_l
  std::vector<std::vector<Tensor>> vae_w_;  // per level, per block
  Tensor rgb_w_;          // 3 x C_M x 3 x 3
  Eigen::MatrixXd corpus_mix_;
  Eigen::VectorXd corpus_mean_;
};

// Deterministic edge-based line drawing standing in for a hand-drawn exemplar:
// dark strokes where the luminance gradient is strong, white elsewhere.
store::Sketch style_sketch(const store::Image& image);

// Generates a complete triplet (features, image, styled sketch) for condition seed / noise seed.
store::TripletDatum make_triplet(const ToyBackend& backend, std::uint64_t condition_seed, std::uint64_t noise_seed);

}  // namespace diffsketch::toy
