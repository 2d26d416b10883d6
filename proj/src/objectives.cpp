#include "objectives.hpp"

#include "rng.hpp"

namespace diffsketch::objectives {

using ad::Var;

namespace {

Var as_rgb(const Var& chw) {
  if (chw.value().rank() != 3) throw std::invalid_argument("expected C x H x W input");
  if (chw.dim(0) == 3) return chw;
  if (chw.dim(0) == 1) return ad::concat_channels({chw, chw, chw});
  throw std::invalid_argument("expected 1 or 3 channels, got " + std::to_string(chw.dim(0)));
}

Var resize_to(const Var& x, int size) {
  if (x.dim(1) >= size && x.dim(2) >= size) return ad::adaptive_avg_pool(x, size, size);
  return ad::resize_bilinear(x, size, size);
}

double norm_of(const Tensor& t) {
  double s = 0.0;
  for (double v : t.raw()) s += v * v;
  return std::sqrt(s);
}

}  // namespace

RandomProjectionEmbedder::RandomProjectionEmbedder(int dim, int grid, std::uint64_t seed)
    : dim_(dim), grid_(grid) {
  const int n = 3 * grid * grid;
  projection_ = Var::constant(randn({dim, n}, seed, 1.0 / std::sqrt(static_cast<double>(n))));
}

Var RandomProjectionEmbedder::embed(const Var& chw) const {
  const Var thumb = ad::add_scalar(resize_to(as_rgb(chw), grid_), -0.5);
  return ad::l2_normalize(ad::matvec(projection_, thumb));
}

RandomConvPerceptual::RandomConvPerceptual(std::uint64_t seed, int width) {
  w1_ = Var::constant(randn({width, 3, 3, 3}, derive_seed(seed, 1), std::sqrt(2.0 / 27.0)));
  w2_ = Var::constant(randn({width, width, 3, 3}, derive_seed(seed, 2), std::sqrt(2.0 / (9.0 * width))));
}

Var RandomConvPerceptual::distance(const Var& a, const Var& b) const {
  if (a.shape() != b.shape())
    throw std::invalid_argument("perceptual: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  Var xa = as_rgb(a), xb = as_rgb(b);
  Var total = Var::scalar(0.0);
  const Var none;
  for (int scale = 0; scale < 2; ++scale) {
    if (scale == 1) {
      if (xa.dim(1) < 2) break;
      xa = ad::adaptive_avg_pool(xa, xa.dim(1) / 2, xa.dim(2) / 2);
      xb = ad::adaptive_avg_pool(xb, xb.dim(1) / 2, xb.dim(2) / 2);
    }
    const Var fa1 = ad::leaky_relu(ad::conv2d(xa, w1_, none), 0.2);
    const Var fb1 = ad::leaky_relu(ad::conv2d(xb, w1_, none), 0.2);
    const Var fa2 = ad::leaky_relu(ad::conv2d(fa1, w2_, none), 0.2);
    const Var fb2 = ad::leaky_relu(ad::conv2d(fb1, w2_, none), 0.2);
    total = total + ad::mean(ad::square(fa1 - fb1)) + ad::mean(ad::square(fa2 - fb2));
  }
  return total;
}

Var directional_loss(const Var& a1, const Var& a2, const Var& b1, const Var& b2) {
  const Var da = a1 - a2;
  const Var db = b1 - b2;
  if (norm_of(da.value()) < 1e-8 || norm_of(db.value()) < 1e-8) return Var::scalar(0.0);
  return ad::add_scalar(ad::scale(ad::cosine(da, db), -1.0), 1.0);
}

Var loss_within(const Var& image_sample, const Var& image_source, const Var& sketch_sample, const Var& sketch_gt,
                const SemanticEmbedder& embedder) {
  return directional_loss(embedder.embed(image_sample), embedder.embed(image_source), embedder.embed(sketch_sample),
                          embedder.embed(sketch_gt));
}

Var loss_across(const Var& image_sample, const Var& image_source, const Var& sketch_sample, const Var& sketch_gt,
                const SemanticEmbedder& embedder) {
  return directional_loss(embedder.embed(sketch_sample), embedder.embed(image_sample), embedder.embed(sketch_gt),
                          embedder.embed(image_source));
}

ReconstructionTerms reconstruction_terms(const Var& pred, const Var& gt, const SemanticEmbedder& embedder,
                                         const PerceptualMetric& perceptual, PixelLoss pixel) {
  if (pred.shape() != gt.shape())
    throw std::invalid_argument("loss_rec: shape mismatch " + shape_str(pred.shape()) + " vs " + shape_str(gt.shape()));
  ReconstructionTerms t;
  const Var diff = pred - gt;
  t.pixel = pixel == PixelLoss::L1 ? ad::mean(ad::abs(diff)) : ad::mean(ad::square(diff));
  t.perceptual = perceptual.distance(pred, gt);
  t.similarity = ad::add_scalar(ad::scale(ad::dot(embedder.embed(pred), embedder.embed(gt)), -1.0), 1.0);
  return t;
}

Var loss_rec(const Var& pred, const Var& gt, const SemanticEmbedder& embedder, const PerceptualMetric& perceptual,
             const LossWeights& w, PixelLoss pixel) {
  const auto t = reconstruction_terms(pred, gt, embedder, perceptual, pixel);
  return w.l1 * t.pixel + w.lpips * t.perceptual + w.clipsim * t.similarity;
}

nlohmann::json LossBreakdown::to_json(int iter) const {
  return {{"iter", iter},         {"rec_l1", rec_l1}, {"rec_perc", rec_perc}, {"rec_sim", rec_sim},
          {"within", within},     {"across", across}, {"total", total_value()}};
}

LossBreakdown loss_total(const LossInputs& in, const SemanticEmbedder& embedder, const PerceptualMetric& perceptual,
                         const LossWeights& w, PixelLoss pixel) {
  const auto rec = reconstruction_terms(in.pred, in.sketch_gt, embedder, perceptual, pixel);
  const Var within = loss_within(in.image_sample, in.image_source, in.sketch_sample, in.sketch_gt, embedder);
  const Var across = loss_across(in.image_sample, in.image_source, in.sketch_sample, in.sketch_gt, embedder);
  LossBreakdown out;
  out.rec_l1 = rec.pixel.item();
  out.rec_perc = rec.perceptual.item();
  out.rec_sim = rec.similarity.item();
  out.within = within.item();
  out.across = across.item();
  out.total = w.l1 * rec.pixel + w.lpips * rec.perceptual + w.clipsim * rec.similarity + w.across * across +
              w.within * within;
  return out;
}

}  // namespace diffsketch::objectives
