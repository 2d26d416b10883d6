#pragma once

#include <cstdint>
#include <string>

#include <json.hpp>

#include "autodiff.hpp"

namespace diffsketch::objectives {

// Maps an image (3 x H x W) or sketch (1 x H x W) to a unit-norm embedding.
// Implementations resize/normalize inputs themselves and must be safe for concurrent const use.
class SemanticEmbedder {
 public:
  virtual ~SemanticEmbedder() = default;
  virtual ad::Var embed(const ad::Var& chw) const = 0;
  virtual int dim() const = 0;
};

// Perceptual distance with d(x,x) = 0, symmetric and deterministic.
class PerceptualMetric {
 public:
  virtual ~PerceptualMetric() = default;
  virtual ad::Var distance(const ad::Var& a, const ad::Var& b) const = 0;
};

// Fixed-seed random projection of a pooled, centered thumbnail. Sketches are
// replicated to three channels first.
class RandomProjectionEmbedder final : public SemanticEmbedder {
 public:
  explicit RandomProjectionEmbedder(int dim = 32, int grid = 8, std::uint64_t seed = 0xc11bULL);
  ad::Var embed(const ad::Var& chw) const override;
  int dim() const override { return dim_; }

 private:
  int dim_;
  int grid_;
  ad::Var projection_;
};

// Multi-scale squared feature distance through a fixed random convolution stack
// (full and half resolution, two conv layers each).
class RandomConvPerceptual final : public PerceptualMetric {
 public:
  explicit RandomConvPerceptual(std::uint64_t seed = 0x1b1bULL, int width = 8);
  ad::Var distance(const ad::Var& a, const ad::Var& b) const override;

 private:
  ad::Var w1_, w2_;
};

struct LossWeights {
  double across = 1.0;
  double within = 1.0;
  double l1 = 30.0;
  double lpips = 15.0;
  double clipsim = 30.0;

  bool all_zero() const { return across == 0 && within == 0 && l1 == 0 && lpips == 0 && clipsim == 0; }
};

enum class PixelLoss { L1, Squared };

// 1 - cos(a1 - a2, b1 - b2); 0 when either difference has norm below 1e-8.
ad::Var directional_loss(const ad::Var& a1, const ad::Var& a2, const ad::Var& b1, const ad::Var& b2);

ad::Var loss_within(const ad::Var& image_sample, const ad::Var& image_source, const ad::Var& sketch_sample,
                    const ad::Var& sketch_gt, const SemanticEmbedder& embedder);
ad::Var loss_across(const ad::Var& image_sample, const ad::Var& image_source, const ad::Var& sketch_sample,
                    const ad::Var& sketch_gt, const SemanticEmbedder& embedder);

struct ReconstructionTerms {
  ad::Var pixel;       // mean |pred - gt| (or squared)
  ad::Var perceptual;
  ad::Var similarity;  // 1 - cos(E(pred), E(gt))
};

ReconstructionTerms reconstruction_terms(const ad::Var& pred, const ad::Var& gt, const SemanticEmbedder& embedder,
                                         const PerceptualMetric& perceptual, PixelLoss pixel = PixelLoss::L1);
ad::Var loss_rec(const ad::Var& pred, const ad::Var& gt, const SemanticEmbedder& embedder,
                 const PerceptualMetric& perceptual, const LossWeights& weights, PixelLoss pixel = PixelLoss::L1);

struct LossInputs {
  ad::Var pred;           // generator output for the training triplet
  ad::Var sketch_gt;      // exemplar sketch
  ad::Var image_source;   // exemplar image
  ad::Var image_sample;   // image sampled this iteration
  ad::Var sketch_sample;  // generator output for the sampled image
};

struct LossBreakdown {
  ad::Var total;
  double rec_l1 = 0, rec_perc = 0, rec_sim = 0, within = 0, across = 0;

  double total_value() const { return total.item(); }
  nlohmann::json to_json(int iter) const;
};

LossBreakdown loss_total(const LossInputs& in, const SemanticEmbedder& embedder, const PerceptualMetric& perceptual,
                         const LossWeights& weights, PixelLoss pixel = PixelLoss::L1);

}  // namespace diffsketch::objectives
