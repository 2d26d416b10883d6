#include "feature_store.hpp"

#include <bit>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "digest.hpp"

namespace diffsketch::store {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kArchiveVersion = 1;

void check_pixels(const Tensor32& t, int channels, const char* what) {
  if (t.rank() != 3 || t.dim(2) != channels)
    throw InputError(std::string(what) + ": expected H x W x " + std::to_string(channels) + ", got " +
                     shape_str(t.shape()));
  if (t.dim(0) < 8 || t.dim(1) < 8) throw InputError(std::string(what) + ": height and width must be >= 8");
  if (!t.all_finite()) throw NumericError(std::string(what) + ": non-finite pixel");
}

std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw InputError("cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError("cannot write " + p.string());
  out << text;
  if (!out) throw InputError("write failed: " + p.string());
}

json blob_entry(const std::string& key, const Shape& shape, const std::string& file, const std::string& checksum) {
  return json{{"key", key},   {"shape", shape},     {"dtype", "f32"}, {"byte_order", "le"},
              {"file", file}, {"checksum", checksum}};
}

// Writes one tensor blob, refusing non-finite data, and returns its manifest entry.
json put_blob(const fs::path& dir, const std::string& key, const std::string& file, const Tensor32& t) {
  if (!t.all_finite()) throw NumericError("refusing to write non-finite tensor " + key);
  write_f32_blob(dir / file, t.values());
  return blob_entry(key, t.shape(), file, file_sha256(dir / file));
}

}  // namespace

void Image::validate() const { check_pixels(pixels, 3, "image"); }
void Sketch::validate() const { check_pixels(pixels, 1, "sketch"); }

FeatureTrajectory::FeatureTrajectory(std::vector<LayerShape> layer_shapes, int timesteps)
    : layer_shapes_(std::move(layer_shapes)), timesteps_(timesteps), maps_(layer_shapes_.size() * timesteps) {}

std::size_t FeatureTrajectory::index(int layer, int t) const {
  if (layer < 1 || layer > layers() || t < 0 || t >= timesteps_)
    throw std::out_of_range("trajectory cell (l=" + std::to_string(layer) + ", t=" + std::to_string(t) +
                            ") out of range");
  return static_cast<std::size_t>(layer - 1) * timesteps_ + t;
}

bool FeatureTrajectory::has(int layer, int t) const { return !maps_[index(layer, t)].empty(); }
const Tensor32& FeatureTrajectory::at(int layer, int t) const { return maps_[index(layer, t)]; }
Tensor32& FeatureTrajectory::at(int layer, int t) { return maps_[index(layer, t)]; }

void FeatureTrajectory::set(int layer, int t, Tensor32 data) {
  const auto& ls = layer_shapes_.at(layer - 1);
  if (data.shape() != ls.shape())
    throw InputError("feature (l=" + std::to_string(layer) + ", t=" + std::to_string(t) + ") has shape " +
                     shape_str(data.shape()) + ", layer table says " + shape_str(ls.shape()));
  maps_[index(layer, t)] = std::move(data);
}

void FeatureTrajectory::validate() const {
  for (int l = 1; l <= layers(); ++l)
    for (int t = 0; t < timesteps_; ++t) {
      const auto& m = at(l, t);
      const std::string cell = "(l=" + std::to_string(l) + ", t=" + std::to_string(t) + ")";
      if (m.empty()) throw InputError("incomplete grid: missing " + cell);
      if (m.shape() != layer_shapes_[l - 1].shape()) throw InputError("shape mismatch at " + cell);
      if (!m.all_finite()) throw NumericError("non-finite feature at " + cell);
    }
}

int VaePyramid::resolution(int level) const {
  const auto& blocks = levels.at(level);
  return blocks.empty() ? -1 : blocks.front().dim(1);
}

void VaePyramid::validate() const {
  if (levels.empty()) throw InputError("vae pyramid has no levels");
  int prev = 0;
  for (std::size_t i = 0; i < levels.size(); ++i) {
    int res = -1;
    for (std::size_t n = 0; n < levels[i].size(); ++n) {
      const auto& b = levels[i][n];
      if (b.rank() != 3) throw InputError("vae block (" + std::to_string(i) + "," + std::to_string(n) + ") not C x h x w");
      if (res < 0) res = b.dim(1);
      if (b.dim(1) != res || b.dim(2) != res)
        throw InputError("vae level " + std::to_string(i) + " mixes resolutions");
    }
    if (res >= 0) {
      if (res <= prev) throw InputError("vae level resolutions must strictly increase");
      prev = res;
    }
  }
}

void write_f32_blob(const fs::path& path, std::span<const float> values) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError("cannot write " + path.string());
  if constexpr (std::endian::native == std::endian::little) {
    out.write(reinterpret_cast<const char*>(values.data()), static_cast<std::streamsize>(values.size_bytes()));
  } else {
    for (float v : values) {
      auto bits = std::bit_cast<std::uint32_t>(v);
      bits = (bits >> 24) | ((bits >> 8) & 0xff00) | ((bits << 8) & 0xff0000) | (bits << 24);
      out.write(reinterpret_cast<const char*>(&bits), 4);
    }
  }
  if (!out) throw InputError("write failed: " + path.string());
}

std::vector<float> read_f32_blob(const fs::path& path) {
  const std::string bytes = read_text(path);
  if (bytes.size() % 4 != 0)
    throw InputError("integrity error: " + path.filename().string() + " has " + std::to_string(bytes.size()) +
                     " bytes, not a multiple of 4");
  std::vector<float> out(bytes.size() / 4);
  std::memcpy(out.data(), bytes.data(), bytes.size());
  if constexpr (std::endian::native != std::endian::little) {
    for (auto& v : out) {
      auto bits = std::bit_cast<std::uint32_t>(v);
      bits = (bits >> 24) | ((bits >> 8) & 0xff00) | ((bits << 8) & 0xff0000) | (bits << 24);
      v = std::bit_cast<float>(bits);
    }
  }
  return out;
}

std::string file_sha256(const fs::path& path) { return sha256_hex(read_text(path)); }

std::string trajectory_blob_name(int layer, int t) {
  return "traj_l" + std::to_string(layer) + "_t" + std::to_string(t) + ".bin";
}

std::string vae_blob_name(int level, int block) {
  return "vae_s" + std::to_string(level) + "_b" + std::to_string(block) + ".bin";
}

std::string save_archive(const TripletDatum& datum, const fs::path& dir) {
  datum.trajectory.validate();
  datum.pyramid.validate();
  datum.source.validate();
  datum.sketch.validate();
  if (datum.sketch.height() != datum.source.height() || datum.sketch.width() != datum.source.width())
    throw InputError("sketch and source image sizes differ");

  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw InputError("cannot create archive directory " + dir.string());

  const auto& traj = datum.trajectory;
  json blobs = json::array();
  for (int l = 1; l <= traj.layers(); ++l)
    for (int t = 0; t < traj.timesteps(); ++t)
      blobs.push_back(put_blob(dir, "traj/l" + std::to_string(l) + "/t" + std::to_string(t),
                               trajectory_blob_name(l, t), traj.at(l, t)));
  json vae_counts = json::array();
  for (std::size_t i = 0; i < datum.pyramid.levels.size(); ++i) {
    vae_counts.push_back(datum.pyramid.levels[i].size());
    for (std::size_t n = 0; n < datum.pyramid.levels[i].size(); ++n)
      blobs.push_back(put_blob(dir, "vae/s" + std::to_string(i) + "/b" + std::to_string(n),
                               vae_blob_name(static_cast<int>(i), static_cast<int>(n)),
                               datum.pyramid.levels[i][n]));
  }
  blobs.push_back(put_blob(dir, "source", "source.bin", datum.source.pixels));
  blobs.push_back(put_blob(dir, "sketch", "sketch.bin", datum.sketch.pixels));
  if (!datum.condition.empty()) {
    Tensor32 cond({static_cast<int>(datum.condition.size())});
    for (std::size_t i = 0; i < datum.condition.size(); ++i) cond[i] = static_cast<float>(datum.condition[i]);
    blobs.push_back(put_blob(dir, "condition", "condition.bin", cond));
  }

  json layer_shapes = json::array();
  for (const auto& ls : traj.layer_shapes()) layer_shapes.push_back({ls.channels, ls.height, ls.width});

  json manifest{{"version", kArchiveVersion},
                {"L", traj.layers()},
                {"T", traj.timesteps()},
                {"M", datum.pyramid.fusing_steps()},
                {"vae_counts", vae_counts},
                {"layer_shapes", layer_shapes},
                {"seed", datum.seed},
                {"blobs", blobs}};
  const std::string text = manifest.dump(2) + "\n";
  write_text(dir / "manifest.json", text);
  return sha256_hex(text);
}

std::string archive_digest(const fs::path& dir) { return sha256_hex(read_text(dir / "manifest.json")); }

TripletDatum load_archive(const fs::path& dir) {
  if (!fs::exists(dir / "manifest.json")) throw InputError("no manifest.json in " + dir.string());
  json manifest;
  try {
    manifest = json::parse(read_text(dir / "manifest.json"));
  } catch (const json::exception& e) {
    throw InputError(std::string("malformed manifest: ") + e.what());
  }

  try {
    const int L = manifest.at("L").get<int>();
    const int T = manifest.at("T").get<int>();
    std::vector<LayerShape> shapes;
    for (const auto& s : manifest.at("layer_shapes")) shapes.push_back({s.at(0), s.at(1), s.at(2)});
    if (static_cast<int>(shapes.size()) != L) throw InputError("layer_shapes has " + std::to_string(shapes.size()) +
                                                               " entries, L = " + std::to_string(L));

    std::map<std::string, json> by_key;
    for (const auto& b : manifest.at("blobs")) by_key[b.at("key").get<std::string>()] = b;

    auto load = [&](const std::string& key) -> Tensor32 {
      auto it = by_key.find(key);
      if (it == by_key.end()) throw InputError("manifest has no blob " + key);
      const json& b = it->second;
      if (b.at("dtype") != "f32" || b.at("byte_order") != "le")
        throw InputError("blob " + key + ": unsupported dtype/byte order");
      const fs::path file = dir / b.at("file").get<std::string>();
      if (!fs::exists(file)) throw InputError("missing blob " + key + " (" + file.filename().string() + ")");
      const Shape shape = b.at("shape").get<Shape>();
      const auto bytes = fs::file_size(file);
      if (bytes != shape_numel(shape) * 4)
        throw InputError("integrity error: blob " + key + " has " + std::to_string(bytes) + " bytes, manifest implies " +
                         std::to_string(shape_numel(shape) * 4));
      if (file_sha256(file) != b.at("checksum").get<std::string>())
        throw InputError("integrity error: checksum mismatch for blob " + key);
      return Tensor32(shape, read_f32_blob(file));
    };

    TripletDatum d;
    d.trajectory = FeatureTrajectory(shapes, T);
    for (int l = 1; l <= L; ++l)
      for (int t = 0; t < T; ++t) {
        const std::string key = "traj/l" + std::to_string(l) + "/t" + std::to_string(t);
        if (!by_key.count(key))
          throw InputError("incomplete grid: missing (l=" + std::to_string(l) + ", t=" + std::to_string(t) + ")");
        d.trajectory.set(l, t, load(key));
      }
    for (const auto& count : manifest.at("vae_counts")) {
      const int i = static_cast<int>(d.pyramid.levels.size());
      std::vector<Tensor32> blocks;
      for (int n = 0; n < count.get<int>(); ++n)
        blocks.push_back(load("vae/s" + std::to_string(i) + "/b" + std::to_string(n)));
      d.pyramid.levels.push_back(std::move(blocks));
    }
    d.source.pixels = load("source");
    d.sketch.pixels = load("sketch");
    if (by_key.count("condition")) {
      const Tensor32 c = load("condition");
      d.condition.assign(c.raw().begin(), c.raw().end());
    }
    d.seed = manifest.value("seed", std::uint64_t{0});

    d.trajectory.validate();
    d.pyramid.validate();
    d.source.validate();
    d.sketch.validate();
    if (d.pyramid.fusing_steps() != manifest.at("M").get<int>()) throw InputError("vae level count disagrees with M");
    return d;
  } catch (const json::exception& e) {
    throw InputError(std::string("malformed manifest: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw InputError(std::string("malformed archive: ") + e.what());
  }
}

Image image_from_chw(const Tensor& chw) {
  const int C = chw.dim(0), H = chw.dim(1), W = chw.dim(2);
  Image img{Tensor32({H, W, C})};
  for (int c = 0; c < C; ++c)
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) img.pixels.at(y, x, c) = static_cast<float>(chw.at(c, y, x));
  return img;
}

Tensor image_to_chw(const Image& img) {
  const int H = img.pixels.dim(0), W = img.pixels.dim(1), C = img.pixels.dim(2);
  Tensor out({C, H, W});
  for (int c = 0; c < C; ++c)
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) out.at(c, y, x) = img.pixels.at(y, x, c);
  return out;
}

Sketch sketch_from_chw(const Tensor& chw) { return Sketch{image_from_chw(chw).pixels}; }
Tensor sketch_to_chw(const Sketch& s) { return image_to_chw(Image{s.pixels}); }

}  // namespace diffsketch::store
