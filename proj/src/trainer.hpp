#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "cdst.hpp"
#include "feature_store.hpp"
#include "generator.hpp"
#include "objectives.hpp"
#include "optim.hpp"

namespace diffsketch::trainer {

struct TrainConfig {
  int iterations = 1200;
  double learning_rate = 1e-4;
  int cdst_horizon = 1000;
  objectives::LossWeights weights;
  objectives::PixelLoss pixel = objectives::PixelLoss::L1;
  std::uint64_t seed = 0;
  int checkpoint_every = 0;  // 0: only the final checkpoint
  bool use_cdst = true;      // false: every iteration draws purely from the distribution

  void validate() const;
  nlohmann::json to_json() const;
  // Missing keys keep their defaults; unknown keys are rejected.
  static TrainConfig from_json(const nlohmann::json& j);
};

// Seed for iteration i under the run seed.
std::uint64_t iteration_seed(std::uint64_t run_seed, int iter);

// One-shot training of a sketch generator on a single triplet. Each iteration
// draws a condition under the diffusion-sampling schedule, generates a sample
// through the backend and steps on the combined loss.
class Trainer {
 public:
  Trainer(const store::DiffusionBackend& backend, const store::TripletDatum& triplet, cdst::CdstState state,
          generator::SketchGenerator& model, const objectives::SemanticEmbedder& embedder,
          const objectives::PerceptualMetric& perceptual, TrainConfig config);

  int iteration() const { return iter_; }
  const std::vector<nlohmann::json>& log() const { return log_; }
  const TrainConfig& config() const { return config_; }
  const cdst::CdstState& cdst_state() const { return state_; }

  // Runs one iteration and returns its loss record. Throws NumericError on a
  // non-finite loss, naming the iteration and each term.
  const nlohmann::json& step();
  // Steps until `config.iterations`, checkpointing into dir when non-empty.
  void run(const std::filesystem::path& checkpoint_dir = {},
           const std::function<void(const nlohmann::json&)>& on_step = {});

  // Checkpoint layout: generator/, optimizer.bin, distribution/, state.json, loss_log.jsonl.
  void save_checkpoint(const std::filesystem::path& dir) const;
  // Restores optimizer state, iteration counter and log. The model must already
  // hold the checkpoint's weights (see load_teacher).
  void resume(const std::filesystem::path& dir);

 private:
  const store::DiffusionBackend& backend_;
  const store::TripletDatum& triplet_;
  cdst::CdstState state_;
  generator::SketchGenerator& model_;
  const objectives::SemanticEmbedder& embedder_;
  const objectives::PerceptualMetric& perceptual_;
  TrainConfig config_;
  Adam adam_;
  int iter_ = 0;
  std::vector<nlohmann::json> log_;
  ad::Var source_, sketch_gt_;
};

struct Teacher {
  generator::SketchGenerator model;
  cdst::CdstState state;
  TrainConfig config;
  int iteration = 0;
  std::string digest;  // sha256 over state.json and the weight file
};

Teacher load_teacher(const std::filesystem::path& dir);
std::vector<nlohmann::json> read_loss_log(const std::filesystem::path& path);

}  // namespace diffsketch::trainer
