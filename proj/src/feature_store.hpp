#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "tensor.hpp"

namespace diffsketch::store {

// H x W x 3, values in [0,1].
struct Image {
  Tensor32 pixels;

  int height() const { return pixels.dim(0); }
  int width() const { return pixels.dim(1); }
  void validate() const;
};

// H x W x 1, values in [0,1].
struct Sketch {
  Tensor32 pixels;

  int height() const { return pixels.dim(0); }
  int width() const { return pixels.dim(1); }
  void validate() const;
};

struct LayerShape {
  int channels = 0;
  int height = 0;
  int width = 0;

  Shape shape() const { return {channels, height, width}; }
  friend bool operator==(const LayerShape&, const LayerShape&) = default;
};

// One decoder feature f_{l,t}: C x h x w. Layers are 1-based, t = 0 is the final denoising step.
struct FeatureMap {
  Tensor32 data;
  int layer = 0;
  int timestep = 0;
};

// All decoder features of one generation, on a complete (layer, timestep) grid.
class FeatureTrajectory {
 public:
  FeatureTrajectory() = default;
  FeatureTrajectory(std::vector<LayerShape> layer_shapes, int timesteps);

  int layers() const { return static_cast<int>(layer_shapes_.size()); }
  int timesteps() const { return timesteps_; }
  const std::vector<LayerShape>& layer_shapes() const { return layer_shapes_; }

  bool has(int layer, int t) const;
  const Tensor32& at(int layer, int t) const;
  Tensor32& at(int layer, int t);
  FeatureMap map(int layer, int t) const { return {at(layer, t), layer, t}; }
  void set(int layer, int t, Tensor32 data);

  // Throws InputError naming the first missing or mis-shaped cell.
  void validate() const;

  friend bool operator==(const FeatureTrajectory&, const FeatureTrajectory&) = default;

 private:
  std::size_t index(int layer, int t) const;

  std::vector<LayerShape> layer_shapes_;
  int timesteps_ = 0;
  std::vector<Tensor32> maps_;
};

// VAE-decoder residual-block features. Level i = 0..M; levels 0..M-1 feed the
// fusing steps, level M feeds the output head. Resolution doubles per level.
struct VaePyramid {
  std::vector<std::vector<Tensor32>> levels;

  int fusing_steps() const { return static_cast<int>(levels.size()) - 1; }
  int resolution(int level) const;
  void validate() const;

  friend bool operator==(const VaePyramid&, const VaePyramid&) = default;
};

struct TripletDatum {
  FeatureTrajectory trajectory;
  VaePyramid pyramid;
  Image source;
  Sketch sketch;
  // Condition vector and seed the generation came from, when known.
  std::vector<double> condition;
  std::uint64_t seed = 0;
};

struct Generation {
  Image image;
  FeatureTrajectory trajectory;
  VaePyramid pyramid;
};

// A text-to-image diffusion model exposing its denoising features.
// generate() must be deterministic in (condition, seed) and free of shared mutable state.
class DiffusionBackend {
 public:
  virtual ~DiffusionBackend() = default;

  virtual std::string name() const = 0;
  virtual int layers() const = 0;
  virtual int timesteps() const = 0;
  virtual int fusing_steps() const = 0;
  virtual int image_size() const = 0;
  virtual int condition_dim() const = 0;
  virtual std::vector<LayerShape> layer_shapes() const = 0;

  virtual Generation generate(std::span<const double> condition, std::uint64_t seed) const = 0;

  // Draws n condition embeddings from the backend's conditioning corpus (n x d).
  virtual Eigen::MatrixXd condition_corpus(int n, std::uint64_t seed) const = 0;
};

// Raw little-endian float32 blob helpers shared by every on-disk format here.
void write_f32_blob(const std::filesystem::path& path, std::span<const float> values);
std::vector<float> read_f32_blob(const std::filesystem::path& path);
std::string file_sha256(const std::filesystem::path& path);

// Writes manifest.json plus one blob per tensor. Returns the manifest digest.
std::string save_archive(const TripletDatum& datum, const std::filesystem::path& dir);
TripletDatum load_archive(const std::filesystem::path& dir);
// Digest of an existing archive's manifest.
std::string archive_digest(const std::filesystem::path& dir);

std::string trajectory_blob_name(int layer, int t);
std::string vae_blob_name(int level, int block);

Image image_from_chw(const Tensor& chw);
Tensor image_to_chw(const Image& img);
Sketch sketch_from_chw(const Tensor& chw);
Tensor sketch_to_chw(const Sketch& s);

}  // namespace diffsketch::store
