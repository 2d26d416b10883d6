#pragma once

#include "generator.hpp"
#include "gradcheck.hpp"
#include "objectives.hpp"
#include "toy_backend.hpp"

// Full training loss through a 16x16 toy generator, checked against central
// differences over every generator parameter.
inline gradcheck::Result composite_gradcheck(int probes, std::uint64_t seed) {
  using namespace diffsketch;
  toy::ToyBackendConfig bc;
  bc.image_size = 16;
  bc.fusing_steps = 2;
  const toy::ToyBackend backend(bc);
  const auto triplet = toy::make_triplet(backend, derive_seed(seed, 1), derive_seed(seed, 2));
  const auto sample = backend.generate(backend.sample_condition(derive_seed(seed, 3)), derive_seed(seed, 4));
  generator::SketchGenerator g(generator::default_config(backend, {1, 5, 8}, 6), derive_seed(seed, 5));
  const objectives::RandomProjectionEmbedder embedder;
  const objectives::RandomConvPerceptual perceptual;
  const objectives::LossWeights weights;

  const ad::Var source = ad::Var::constant(store::image_to_chw(triplet.source));
  const ad::Var gt = ad::Var::constant(store::sketch_to_chw(triplet.sketch));
  const ad::Var image_sample = ad::Var::constant(store::image_to_chw(sample.image));
  std::vector<ad::Var> params;
  for (const auto& entry : g.params()) params.push_back(entry.second);
  return gradcheck::check(
      [&] {
        objectives::LossInputs in;
        in.pred = g.forward(triplet.trajectory, triplet.pyramid, source);
        in.sketch_gt = gt;
        in.image_source = source;
        in.image_sample = image_sample;
        in.sketch_sample = g.forward(sample.trajectory, sample.pyramid, image_sample);
        return objectives::loss_total(in, embedder, perceptual, weights).total;
      },
      params, probes, derive_seed(seed, 6));
}
