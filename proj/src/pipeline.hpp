#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "feature_store.hpp"

namespace diffsketch::pipeline {

using Logger = std::function<void(const std::string&)>;

// "toy" (64 px), "toy:<size>" with size in {16, 32, 64, 128}, or "production"
// (not bundled; throws InputError).
std::unique_ptr<store::DiffusionBackend> make_backend(const std::string& spec);

struct Context {
  const store::DiffusionBackend* backend = nullptr;
  std::string backend_spec;
  Logger log;
};

// Written as run.json next to every command's outputs. Timestamps come from
// SOURCE_DATE_EPOCH when set and are null otherwise, so reruns are byte-identical.
struct RunManifest {
  std::string command;
  nlohmann::json args;
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;
  std::uint64_t seed = 0;
  std::string backend;
  nlohmann::json extra = nlohmann::json::object();

  nlohmann::json to_json() const;
  void write(const std::filesystem::path& path) const;
};

struct MakeTripletOptions {
  std::filesystem::path out;
  std::uint64_t seed = 0;
};
void make_triplet(const Context& ctx, const MakeTripletOptions& o);

struct AnalyzeOptions {
  std::vector<std::filesystem::path> archives;
  int pca_dim = 30;
  std::filesystem::path out;
  std::uint64_t seed = 0;
};
void analyze(const Context& ctx, const AnalyzeOptions& o);

struct TrainOptions {
  std::filesystem::path triplet;
  std::filesystem::path selection;
  std::optional<std::filesystem::path> config;
  std::filesystem::path out;
  std::uint64_t seed = 0;
  std::optional<int> checkpoint_every;
  bool resume = false;
};
void train(const Context& ctx, const TrainOptions& o);

struct SamplePairsOptions {
  std::filesystem::path ckpt;
  int n = 0;
  int S = 30000;
  std::filesystem::path out;
  std::uint64_t seed = 0;
};
void sample_pairs(const Context& ctx, const SamplePairsOptions& o);

struct DistillOptions {
  std::filesystem::path pairs;
  std::filesystem::path gt;  // triplet archive, or a directory with source.png and sketch.png
  std::filesystem::path out;
  std::uint64_t seed = 0;
  int epochs = 5;
  int reg_every = 16;
  double learning_rate = 1e-3;
};
void distill(const Context& ctx, const DistillOptions& o);

struct ExtractOptions {
  std::filesystem::path ckpt;
  std::filesystem::path image;
  std::filesystem::path out;
};
void extract(const Context& ctx, const ExtractOptions& o);

struct EvalOptions {
  std::filesystem::path pred;
  std::filesystem::path gt;
  std::filesystem::path out;
  std::string style = "default";
};
void eval(const Context& ctx, const EvalOptions& o);

struct AblateOptions {
  std::filesystem::path triplet;
  std::filesystem::path selection;
  std::optional<std::filesystem::path> config;
  std::filesystem::path out;
  std::uint64_t seed = 0;
  int eval_pairs = 8;
};
void ablate(const Context& ctx, const AblateOptions& o);

}  // namespace diffsketch::pipeline
