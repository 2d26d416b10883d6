#include "distiller.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "optim.hpp"
#include "rng.hpp"

namespace diffsketch::distiller {

namespace fs = std::filesystem;
using ad::Var;

namespace {

constexpr double kSlope = 0.2;

Tensor he_normal(Shape shape, std::uint64_t seed) {
  std::size_t fan_in = 1;
  for (std::size_t i = 1; i < shape.size(); ++i) fan_in *= shape[i];
  return randn(shape, seed, std::sqrt(2.0 / static_cast<double>(fan_in)));
}

std::string img_name(int i) { return std::to_string(i) + "_img.bin"; }
std::string sketch_name(int i) { return std::to_string(i) + "_sketch.bin"; }

Tensor32 read_hwc(const fs::path& path, const Shape& shape) {
  auto values = store::read_f32_blob(path);
  if (values.size() != shape_numel(shape))
    throw InputError("integrity error: " + path.string() + " holds " + std::to_string(values.size()) +
                     " values, expected " + std::to_string(shape_numel(shape)));
  Tensor32 t(shape);
  std::copy(values.begin(), values.end(), t.raw().begin());
  return t;
}

}  // namespace

nlohmann::json Provenance::to_json() const {
  return {{"teacher_digest", teacher_digest},
          {"S", horizon},
          {"seed", seed},
          {"requested", requested},
          {"skipped", skipped}};
}

Provenance Provenance::from_json(const nlohmann::json& j) {
  Provenance p;
  p.teacher_digest = j.at("teacher_digest").get<std::string>();
  p.horizon = j.at("S").get<int>();
  p.seed = j.at("seed").get<std::uint64_t>();
  p.requested = j.at("requested").get<int>();
  p.skipped = j.at("skipped").get<std::vector<nlohmann::json>>();
  return p;
}

std::uint64_t pair_seed(std::uint64_t run_seed, int index) {
  return derive_seed(run_seed, static_cast<std::uint64_t>(index));
}

std::vector<double> pair_condition(const cdst::CdstState& state, int horizon, std::uint64_t run_seed, int index) {
  cdst::CdstState s = state;
  s.horizon = horizon;
  return cdst::sample_condition(s, index, derive_seed(pair_seed(run_seed, index), 1));
}

PairEntry regenerate_pair(const generator::SketchGenerator& teacher, const cdst::CdstState& state,
                          const store::DiffusionBackend& backend, const Provenance& provenance, int index) {
  PairEntry e;
  e.index = index;
  e.seed = pair_seed(provenance.seed, index);
  e.condition = pair_condition(state, provenance.horizon, provenance.seed, index);
  auto gen = backend.generate(e.condition, e.seed);
  e.sketch = teacher.generate_sketch(gen.trajectory, gen.pyramid, gen.image);
  e.image = std::move(gen.image);
  return e;
}

PairDataset generate_dataset(const generator::SketchGenerator& teacher, const cdst::CdstState& state,
                             const store::DiffusionBackend& backend, int n, int horizon, std::uint64_t seed,
                             const std::string& teacher_digest, const std::function<void(const std::string&)>& log) {
  if (n < 0) throw UsageError("generate_dataset: n must be >= 0");
  if (horizon < 1) throw UsageError("generate_dataset: S must be >= 1");
  PairDataset ds;
  ds.provenance.teacher_digest = teacher_digest;
  ds.provenance.horizon = horizon;
  ds.provenance.seed = seed;
  ds.provenance.requested = n;
  for (int i = 0; i < n; ++i) {
    try {
      ds.entries.push_back(regenerate_pair(teacher, state, backend, ds.provenance, i));
    } catch (const std::exception& e) {
      ds.provenance.skipped.push_back({{"index", i}, {"error", e.what()}});
      if (log) log("pair " + std::to_string(i) + " skipped: " + e.what());
    }
  }
  return ds;
}

void save_dataset(const PairDataset& dataset, const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir / "pairs", ec);
  nlohmann::json entries = nlohmann::json::array();
  for (const auto& e : dataset.entries) {
    const auto img = dir / "pairs" / img_name(e.index);
    const auto sk = dir / "pairs" / sketch_name(e.index);
    store::write_f32_blob(img, e.image.pixels.raw());
    store::write_f32_blob(sk, e.sketch.pixels.raw());
    entries.push_back({{"index", e.index},
                       {"seed", e.seed},
                       {"condition", e.condition},
                       {"height", e.image.height()},
                       {"width", e.image.width()},
                       {"image", "pairs/" + img_name(e.index)},
                       {"sketch", "pairs/" + sketch_name(e.index)},
                       {"image_checksum", store::file_sha256(img)},
                       {"sketch_checksum", store::file_sha256(sk)}});
  }
  const nlohmann::json manifest{{"format", "diffsketch-pairs"},
                                {"version", 1},
                                {"count", dataset.entries.size()},
                                {"provenance", dataset.provenance.to_json()},
                                {"entries", entries}};
  std::ofstream out(dir / "manifest.json", std::ios::trunc);
  if (!out) throw InputError("cannot write " + (dir / "manifest.json").string());
  out << manifest.dump(2) << "\n";
}

PairDataset load_dataset(const fs::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw InputError("no manifest.json in " + dir.string());
  PairDataset ds;
  try {
    const auto m = nlohmann::json::parse(in);
    ds.provenance = Provenance::from_json(m.at("provenance"));
    for (const auto& j : m.at("entries")) {
      PairEntry e;
      e.index = j.at("index").get<int>();
      e.seed = j.at("seed").get<std::uint64_t>();
      e.condition = j.at("condition").get<std::vector<double>>();
      const int h = j.at("height").get<int>(), w = j.at("width").get<int>();
      const auto img = dir / j.at("image").get<std::string>();
      const auto sk = dir / j.at("sketch").get<std::string>();
      if (!fs::exists(img) || !fs::exists(sk)) throw InputError("missing blob for pair " + std::to_string(e.index));
      if (store::file_sha256(img) != j.at("image_checksum").get<std::string>() ||
          store::file_sha256(sk) != j.at("sketch_checksum").get<std::string>())
        throw InputError("integrity error: checksum mismatch for pair " + std::to_string(e.index));
      e.image.pixels = read_hwc(img, {h, w, 3});
      e.sketch.pixels = read_hwc(sk, {h, w, 1});
      e.image.validate();
      e.sketch.validate();
      ds.entries.push_back(std::move(e));
    }
    if (m.at("count").get<std::size_t>() != ds.entries.size()) throw InputError("pair count does not match manifest");
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("malformed pair manifest: ") + e.what());
  }
  return ds;
}

store::Sketch StudentModel::extract(const store::Image& image) const {
  const Var out = apply(Var::constant(store::image_to_chw(image)));
  if (!out.value().all_finite()) throw NumericError("student produced non-finite output");
  return store::sketch_from_chw(out.value());
}

ConvStudent::ConvStudent(std::uint64_t init_seed, int width) : width_(width) {
  if (width < 1) throw UsageError("student width must be positive");
  const int w = width, w2 = 2 * width;
  params_.add("enc1.w", he_normal({w, 3, 3, 3}, derive_seed(init_seed, 1)));
  params_.add("enc1.b", Tensor({w}));
  params_.add("enc2.w", he_normal({w2, w, 3, 3}, derive_seed(init_seed, 2)));
  params_.add("enc2.b", Tensor({w2}));
  params_.add("dec1.w", he_normal({w, w + w2, 3, 3}, derive_seed(init_seed, 3)));
  params_.add("dec1.b", Tensor({w}));
  params_.add("out.w", he_normal({1, w, 3, 3}, derive_seed(init_seed, 4)));
  params_.add("out.b", Tensor({1}));
}

Var ConvStudent::apply(const Var& x) const {
  if (x.value().rank() != 3 || x.dim(0) != 3) throw InputError("student expects a 3 x H x W image");
  if (x.dim(1) % 2 || x.dim(2) % 2) throw InputError("student needs even image sides");
  const auto& p = params_;
  const Var e1 = ad::leaky_relu(ad::conv2d(x, p.get("enc1.w"), p.get("enc1.b")), kSlope);
  const Var down = ad::adaptive_avg_pool(e1, x.dim(1) / 2, x.dim(2) / 2);
  const Var e2 = ad::leaky_relu(ad::conv2d(down, p.get("enc2.w"), p.get("enc2.b")), kSlope);
  const Var up = ad::upsample_nearest(e2, 2);
  const Var d1 = ad::leaky_relu(ad::conv2d(ad::concat_channels({e1, up}), p.get("dec1.w"), p.get("dec1.b")), kSlope);
  return ad::sigmoid(ad::conv2d(d1, p.get("out.w"), p.get("out.b")));
}

void StudentConfig::validate() const {
  if (epochs < 1) throw UsageError("student: epochs must be positive");
  if (!(learning_rate > 0.0)) throw UsageError("student: learning_rate must be positive");
  if (reg_every < 1) throw UsageError("student: reg_every must be >= 1");
}

nlohmann::json StudentConfig::to_json() const {
  return {{"epochs", epochs}, {"learning_rate", learning_rate}, {"reg_every", reg_every}, {"seed", seed}};
}

StudentReport train_student(StudentModel& student, const PairDataset& dataset, const GroundTruthPair& gt,
                            const StudentConfig& config) {
  config.validate();
  if (dataset.entries.empty()) throw InputError("train_student: empty dataset");
  const Var gt_image = Var::constant(store::image_to_chw(gt.image));
  const Var gt_sketch = Var::constant(store::sketch_to_chw(gt.sketch));
  Adam adam(config.learning_rate);
  StudentReport report;
  const int n = static_cast<int>(dataset.entries.size());
  std::vector<int> order(n);
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    Rng rng(derive_seed(config.seed, static_cast<std::uint64_t>(epoch)));
    for (int i = n - 1; i > 0; --i) std::swap(order[i], order[rng() % static_cast<std::uint64_t>(i + 1)]);
    for (int k = 0; k < n; ++k) {
      const int iter = report.iterations;
      const auto& e = dataset.entries[order[k]];
      Var loss = ad::mean(ad::abs(student.apply(Var::constant(store::image_to_chw(e.image))) -
                                  Var::constant(store::sketch_to_chw(e.sketch))));
      int batch = 1;
      if ((iter + 1) % config.reg_every == 0) {
        loss = loss + ad::mean(ad::abs(student.apply(gt_image) - gt_sketch));
        batch = 2;
        report.injected.push_back(iter);
      }
      loss = ad::scale(loss, 1.0 / batch);
      if (!std::isfinite(loss.item()))
        throw NumericError("student: non-finite loss at iteration " + std::to_string(iter));
      student.params().zero_grad();
      ad::backward(loss);
      adam.step(student.params());
      report.loss.push_back(loss.item());
      ++report.iterations;
    }
  }
  return report;
}

double student_l1(const StudentModel& student, const std::vector<PairEntry>& pairs) {
  if (pairs.empty()) throw InputError("student_l1: no pairs");
  double total = 0.0;
  for (const auto& e : pairs) {
    const auto s = student.extract(e.image);
    double acc = 0.0;
    for (std::size_t i = 0; i < s.pixels.size(); ++i)
      acc += std::abs(static_cast<double>(s.pixels.raw()[i]) - e.sketch.pixels.raw()[i]);
    total += acc / static_cast<double>(s.pixels.size());
  }
  return total / static_cast<double>(pairs.size());
}

void save_student(const ConvStudent& student, const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  save_tensors(dir / "student.bin", student.params().snapshot());
  std::ofstream out(dir / "student.json", std::ios::trunc);
  if (!out) throw InputError("cannot write " + (dir / "student.json").string());
  out << nlohmann::json{{"kind", student.kind()}, {"width", student.width()}}.dump(2) << "\n";
}

ConvStudent load_student(const fs::path& dir) {
  std::ifstream in(dir / "student.json");
  if (!in) throw InputError("no student.json in " + dir.string());
  int width = 0;
  try {
    const auto j = nlohmann::json::parse(in);
    if (j.at("kind").get<std::string>() != "conv_student") throw InputError("unsupported student kind");
    width = j.at("width").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("malformed student.json: ") + e.what());
  }
  ConvStudent s(0, width);
  s.params().restore(load_tensors(dir / "student.bin"));
  return s;
}

}  // namespace diffsketch::distiller
