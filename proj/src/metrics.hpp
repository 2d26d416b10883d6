#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "feature_store.hpp"
#include "generator.hpp"
#include "objectives.hpp"
#include "selection.hpp"
#include "trainer.hpp"

namespace diffsketch::metrics {

// Single-scale SSIM on H x W x C tensors in [0,1]: 11x11 Gaussian window
// (sigma 1.5), K1 = 0.01, K2 = 0.03, valid windows only, channels averaged.
double ssim(const Tensor32& a, const Tensor32& b);
double ssim(const store::Sketch& a, const store::Sketch& b);

// Adapter distance between two H x W x C tensors.
double perceptual(const Tensor32& a, const Tensor32& b, const objectives::PerceptualMetric& adapter);

struct EvalRecord {
  std::string style;
  std::string variant;
  std::string metric;  // "lpips" or "ssim"
  double value = 0.0;
  int n_pairs = 0;
};

struct EvalPair {
  std::string style;
  store::Generation generation;  // image plus its features
  store::Sketch gt;
};

struct SketchPair {
  std::string style;
  store::Sketch pred;
  store::Sketch gt;
};

// Mean lpips/ssim per style; values are summed in sorted order so the result
// does not depend on pair order.
std::vector<EvalRecord> evaluate(const std::string& variant, const std::vector<SketchPair>& pairs,
                                 const objectives::PerceptualMetric& adapter);

struct Variant {
  std::string name;
  const generator::SketchGenerator* model;
};

std::vector<EvalRecord> run_ablation(const std::vector<Variant>& variants, const std::vector<EvalPair>& pairs,
                                     const objectives::PerceptualMetric& adapter);

// Names of the seven compared configurations in table order.
const std::vector<std::string>& ablation_variant_names();

struct AblationSetup {
  generator::GeneratorConfig config;
  trainer::TrainConfig train;
};

// Generator and training configuration for each ablation row, derived from the
// full-method configuration and the selection report.
std::vector<std::pair<std::string, AblationSetup>> ablation_setups(const generator::GeneratorConfig& base,
                                                                  const trainer::TrainConfig& train,
                                                                  const selection::SelectionReport& report,
                                                                  std::uint64_t seed);

// CSV with columns style,variant,lpips,ssim,n (one row per style and variant, input order).
void write_csv(std::ostream& out, const std::vector<EvalRecord>& records);

}  // namespace diffsketch::metrics
