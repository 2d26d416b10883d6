#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "cdst.hpp"
#include "checkpoint.hpp"
#include "feature_store.hpp"
#include "generator.hpp"

namespace diffsketch::distiller {

struct PairEntry {
  int index = 0;                   // position in the requested sequence
  std::uint64_t seed = 0;          // backend noise seed
  std::vector<double> condition;
  store::Image image;
  store::Sketch sketch;
};

struct Provenance {
  std::string teacher_digest;
  int horizon = 0;  // S used for the schedule
  std::uint64_t seed = 0;
  int requested = 0;
  std::vector<nlohmann::json> skipped;  // {index, error}

  nlohmann::json to_json() const;
  static Provenance from_json(const nlohmann::json& j);
};

struct PairDataset {
  std::vector<PairEntry> entries;
  Provenance provenance;
};

// Seed and condition of pair i; shared by generation and regeneration.
std::uint64_t pair_seed(std::uint64_t run_seed, int index);
std::vector<double> pair_condition(const cdst::CdstState& state, int horizon, std::uint64_t run_seed, int index);

// Pair i uses the schedule at iteration i with horizon S. Backend failures are
// recorded in provenance.skipped (and reported through `log`) instead of
// shrinking the index space.
PairDataset generate_dataset(const generator::SketchGenerator& teacher, const cdst::CdstState& state,
                             const store::DiffusionBackend& backend, int n, int horizon, std::uint64_t seed,
                             const std::string& teacher_digest,
                             const std::function<void(const std::string&)>& log = {});
PairEntry regenerate_pair(const generator::SketchGenerator& teacher, const cdst::CdstState& state,
                          const store::DiffusionBackend& backend, const Provenance& provenance, int index);

// Layout: manifest.json + pairs/{i}_img.bin, pairs/{i}_sketch.bin (f32 LE, HWC).
void save_dataset(const PairDataset& dataset, const std::filesystem::path& dir);
PairDataset load_dataset(const std::filesystem::path& dir);

// Image-to-sketch network: 3 x H x W in, 1 x H x W in (0,1) out.
class StudentModel {
 public:
  virtual ~StudentModel() = default;
  virtual ad::Var apply(const ad::Var& image_chw) const = 0;
  virtual ParameterSet& params() = 0;
  virtual const ParameterSet& params() const = 0;
  virtual std::string kind() const = 0;

  store::Sketch extract(const store::Image& image) const;
};

// Small two-scale encoder-decoder with a skip connection. H and W must be even.
class ConvStudent final : public StudentModel {
 public:
  explicit ConvStudent(std::uint64_t init_seed, int width = 8);
  ad::Var apply(const ad::Var& image_chw) const override;
  ParameterSet& params() override { return params_; }
  const ParameterSet& params() const override { return params_; }
  std::string kind() const override { return "conv_student"; }
  int width() const { return width_; }

 private:
  int width_;
  ParameterSet params_;
};

struct StudentConfig {
  int epochs = 5;
  double learning_rate = 1e-3;
  int reg_every = 16;
  std::uint64_t seed = 0;

  void validate() const;
  nlohmann::json to_json() const;
};

struct GroundTruthPair {
  store::Image image;
  store::Sketch sketch;
};

struct StudentReport {
  int iterations = 0;
  std::vector<int> injected;  // iterations whose batch contained the ground-truth pair
  std::vector<double> loss;   // per-iteration mean L1 over the batch
};

// One dataset pair per iteration, order reshuffled each epoch; every
// reg_every-th iteration the ground-truth pair joins the batch.
StudentReport train_student(StudentModel& student, const PairDataset& dataset, const GroundTruthPair& gt,
                            const StudentConfig& config);

// Mean absolute difference between student outputs and the dataset sketches.
double student_l1(const StudentModel& student, const std::vector<PairEntry>& pairs);

void save_student(const ConvStudent& student, const std::filesystem::path& dir);
ConvStudent load_student(const std::filesystem::path& dir);

}  // namespace diffsketch::distiller
