#include "pipeline.hpp"

#include <cstdlib>
#include <ctime>
#include <fstream>
#include <sstream>

#include "cdst.hpp"
#include "digest.hpp"
#include "distiller.hpp"
#include "generator.hpp"
#include "image_io.hpp"
#include "metrics.hpp"
#include "objectives.hpp"
#include "rng.hpp"
#include "selection.hpp"
#include "toy_backend.hpp"
#include "trainer.hpp"

namespace diffsketch::pipeline {

namespace fs = std::filesystem;

namespace {

// Stream ids under the run seed.
constexpr std::uint64_t kInitStream = 0x696e6974;
constexpr std::uint64_t kCorpusStream = 0x636f7270;
constexpr std::uint64_t kEvalStream = 0x6576616c;
constexpr int kCorpusSize = 1000;

void info(const Context& ctx, const std::string& msg) {
  if (ctx.log) ctx.log(msg);
}

const store::DiffusionBackend& backend_of(const Context& ctx) {
  if (!ctx.backend) throw UsageError("no diffusion backend configured");
  return *ctx.backend;
}

std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw InputError("cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& p, const std::string& text) {
  if (p.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(p.parent_path(), ec);
  }
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError("cannot write " + p.string());
  out << text;
}

nlohmann::json read_json(const fs::path& p) {
  const auto text = read_text(p);
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw InputError("malformed JSON in " + p.string() + ": " + e.what());
  }
}

fs::path manifest_path_for_file(const fs::path& out) { return fs::path(out.string() + ".run.json"); }

selection::SelectionReport load_report(const fs::path& p) {
  try {
    return selection::SelectionReport::from_json(read_json(p));
  } catch (const nlohmann::json::exception& e) {
    throw InputError("malformed selection report " + p.string() + ": " + e.what());
  }
}

trainer::TrainConfig load_train_config(const std::optional<fs::path>& p) {
  if (!p) return {};
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_text(*p));
  } catch (const nlohmann::json::exception& e) {
    throw UsageError("malformed train config " + p->string() + ": " + e.what());
  }
  return trainer::TrainConfig::from_json(j);
}

void check_triplet_matches(const store::TripletDatum& t, const store::DiffusionBackend& b) {
  if (t.trajectory.layer_shapes() != b.layer_shapes() || t.trajectory.timesteps() != b.timesteps())
    throw InputError("triplet features do not match the " + b.name() + " backend's layer grid");
  if (t.source.height() != b.image_size()) throw InputError("triplet image size does not match the backend");
  if (t.condition.empty()) throw InputError("triplet archive carries no condition vector");
}

cdst::ConditionDistribution fit_backend_distribution(const store::DiffusionBackend& b, std::uint64_t seed) {
  return cdst::fit_condition_distribution(b.condition_corpus(kCorpusSize, derive_seed(seed, kCorpusStream)));
}

std::string timestamp() {
  const char* env = std::getenv("SOURCE_DATE_EPOCH");
  if (!env || !*env) return {};
  char* end = nullptr;
  const long long v = std::strtoll(env, &end, 10);
  if (*end != '\0') return {};
  const std::time_t t = static_cast<std::time_t>(v);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

store::TripletDatum load_gt_pair(const fs::path& dir) {
  if (fs::exists(dir / "manifest.json")) return store::load_archive(dir);
  store::TripletDatum t;
  t.source = image_io::read_png_rgb(dir / "source.png");
  t.sketch = image_io::read_png_gray(dir / "sketch.png");
  return t;
}

}  // namespace

std::unique_ptr<store::DiffusionBackend> make_backend(const std::string& spec) {
  if (spec == "production")
    throw InputError("the production backend adapter is not bundled with this build; use DIFFSKETCH_BACKEND=toy");
  if (spec == "toy" || spec.empty()) return std::make_unique<toy::ToyBackend>();
  if (spec.rfind("toy:", 0) == 0) {
    const std::string size = spec.substr(4);
    toy::ToyBackendConfig cfg;
    if (size == "16") cfg.image_size = 16, cfg.fusing_steps = 2;
    else if (size == "32") cfg.image_size = 32, cfg.fusing_steps = 2;
    else if (size == "64") cfg.image_size = 64;
    else if (size == "128") cfg.image_size = 128;
    else throw UsageError("unsupported toy backend size '" + size + "'");
    return std::make_unique<toy::ToyBackend>(cfg);
  }
  throw UsageError("unknown backend '" + spec + "' (expected toy, toy:<size> or production)");
}

nlohmann::json RunManifest::to_json() const {
  const auto ts = timestamp();
  const nlohmann::json stamp = ts.empty() ? nlohmann::json(nullptr) : nlohmann::json(ts);
  nlohmann::json out_digests = nlohmann::json::object();
  for (const auto& o : outputs)
    if (fs::is_regular_file(o)) out_digests[o] = store::file_sha256(o);
  return {{"command", command},
          {"args", args},
          {"config_digest", sha256_hex(args.dump())},
          {"inputs", inputs},
          {"outputs", outputs},
          {"output_digests", out_digests},
          {"seed", seed},
          {"backend", backend},
          {"timestamps", {{"started", stamp}, {"finished", stamp}}},
          {"extra", extra}};
}

void RunManifest::write(const fs::path& path) const { write_text(path, to_json().dump(2) + "\n"); }

void make_triplet(const Context& ctx, const MakeTripletOptions& o) {
  const auto* toy_backend = dynamic_cast<const toy::ToyBackend*>(&backend_of(ctx));
  if (!toy_backend) throw UsageError("make-triplet needs the toy backend");
  const auto datum = toy::make_triplet(*toy_backend, derive_seed(o.seed, 1), derive_seed(o.seed, 2));
  const auto digest = store::save_archive(datum, o.out);
  image_io::write_png(o.out / "source.png", datum.source.pixels);
  image_io::write_png(o.out / "sketch.png", datum.sketch.pixels);
  RunManifest m{"make-triplet", {{"out", o.out.string()}, {"seed", o.seed}}, {}, {o.out.string()}, o.seed,
                ctx.backend_spec};
  m.extra["archive_digest"] = digest;
  m.write(o.out / "run.json");
  info(ctx, "wrote triplet archive " + o.out.string());
}

void analyze(const Context& ctx, const AnalyzeOptions& o) {
  if (o.pca_dim <= 0) throw UsageError("--pca-dim must be positive");
  if (o.archives.empty()) throw UsageError("analyze needs at least one archive");
  std::vector<store::FeatureTrajectory> trajectories;
  nlohmann::json archive_args = nlohmann::json::array();
  for (const auto& a : o.archives) {
    trajectories.push_back(store::load_archive(a).trajectory);
    archive_args.push_back(a.string());
  }
  selection::AnalyzeOptions opts;
  opts.pca_dim = o.pca_dim;
  opts.seed = o.seed;
  const auto report = selection::analyze(trajectories, opts);
  if (report.pca_dim < o.pca_dim)
    info(ctx, "warning: pca dimension " + std::to_string(o.pca_dim) + " exceeds trajectory rank; using " +
                  std::to_string(report.pca_dim));
  write_text(o.out, report.to_json().dump(2) + "\n");
  RunManifest m{"analyze",
                {{"archives", archive_args}, {"pca_dim", o.pca_dim}, {"out", o.out.string()}, {"seed", o.seed}},
                archive_args.get<std::vector<std::string>>(),
                {o.out.string()},
                o.seed,
                ctx.backend_spec};
  m.write(manifest_path_for_file(o.out));
  info(ctx, "k = " + std::to_string(report.k));
}

void train(const Context& ctx, const TrainOptions& o) {
  const auto& backend = backend_of(ctx);
  auto config = load_train_config(o.config);
  config.seed = o.seed;
  if (o.checkpoint_every) config.checkpoint_every = *o.checkpoint_every;
  config.validate();
  if (!fs::exists(o.triplet / "manifest.json")) throw InputError("missing triplet archive " + o.triplet.string());
  const auto triplet = store::load_archive(o.triplet);
  check_triplet_matches(triplet, backend);
  const auto report = load_report(o.selection);

  cdst::CdstState state;
  state.condition = triplet.condition;
  state.dist = fit_backend_distribution(backend, o.seed);
  state.horizon = config.cdst_horizon;

  const bool resuming = o.resume && fs::exists(o.out / "state.json");
  generator::SketchGenerator model =
      resuming ? generator::SketchGenerator::load(o.out / "generator")
               : generator::SketchGenerator(generator::default_config(backend, report.timesteps),
                                            derive_seed(o.seed, kInitStream));
  if (model.config().aggregator.selected_timesteps != report.timesteps)
    throw InputError("checkpoint was trained with a different timestep selection");
  const objectives::RandomProjectionEmbedder embedder;
  const objectives::RandomConvPerceptual perceptual;
  trainer::Trainer tr(backend, triplet, state, model, embedder, perceptual, config);
  if (resuming) {
    tr.resume(o.out);
    info(ctx, "resuming at iteration " + std::to_string(tr.iteration()));
  }
  tr.run(o.out, [&](const nlohmann::json& rec) {
    const int it = rec.at("iter").get<int>();
    if (it % 50 == 0 || it + 1 == config.iterations) info(ctx, rec.dump());
  });
  RunManifest m{"train",
                {{"triplet", o.triplet.string()},
                 {"selection", o.selection.string()},
                 {"config", o.config ? o.config->string() : ""},
                 {"out", o.out.string()},
                 {"seed", o.seed},
                 {"resume", o.resume},
                 {"train_config", config.to_json()}},
                {o.triplet.string(), o.selection.string()},
                {(o.out / "generator" / "weights.bin").string(), (o.out / "optimizer.bin").string(),
                 (o.out / "loss_log.jsonl").string(), (o.out / "state.json").string()},
                o.seed,
                ctx.backend_spec};
  m.extra["triplet_digest"] = store::archive_digest(o.triplet);
  m.write(o.out / "run.json");
}

void sample_pairs(const Context& ctx, const SamplePairsOptions& o) {
  const auto& backend = backend_of(ctx);
  if (o.n < 0) throw UsageError("--n must be >= 0");
  if (o.S < 1) throw UsageError("--S must be >= 1");
  const auto teacher = trainer::load_teacher(o.ckpt);
  if (teacher.model.config().image_size != backend.image_size())
    throw InputError("teacher checkpoint does not match the backend image size");
  const auto ds = distiller::generate_dataset(teacher.model, teacher.state, backend, o.n, o.S, o.seed, teacher.digest,
                                              [&](const std::string& s) { info(ctx, s); });
  distiller::save_dataset(ds, o.out);
  RunManifest m{"sample-pairs",
                {{"ckpt", o.ckpt.string()}, {"n", o.n}, {"S", o.S}, {"out", o.out.string()}, {"seed", o.seed}},
                {o.ckpt.string()},
                {(o.out / "manifest.json").string()},
                o.seed,
                ctx.backend_spec};
  m.extra["pairs"] = ds.entries.size();
  m.extra["skipped"] = ds.provenance.skipped.size();
  m.write(o.out / "run.json");
  info(ctx, "wrote " + std::to_string(ds.entries.size()) + " pairs");
}

void distill(const Context& ctx, const DistillOptions& o) {
  const auto ds = distiller::load_dataset(o.pairs);
  if (ds.entries.empty()) throw InputError("pair dataset " + o.pairs.string() + " is empty");
  const auto gt_datum = load_gt_pair(o.gt);
  distiller::StudentConfig cfg;
  cfg.epochs = o.epochs;
  cfg.reg_every = o.reg_every;
  cfg.learning_rate = o.learning_rate;
  cfg.seed = derive_seed(o.seed, 2);
  distiller::ConvStudent student(derive_seed(o.seed, 1));
  const auto report = distiller::train_student(student, ds, {gt_datum.source, gt_datum.sketch}, cfg);
  distiller::save_student(student, o.out);
  const nlohmann::json summary{{"iterations", report.iterations},
                               {"injections", report.injected.size()},
                               {"config", cfg.to_json()},
                               {"final_loss", report.loss.empty() ? 0.0 : report.loss.back()}};
  write_text(o.out / "train_report.json", summary.dump(2) + "\n");
  RunManifest m{"distill",
                {{"pairs", o.pairs.string()},
                 {"gt", o.gt.string()},
                 {"out", o.out.string()},
                 {"seed", o.seed},
                 {"epochs", o.epochs},
                 {"reg_every", o.reg_every},
                 {"learning_rate", o.learning_rate}},
                {o.pairs.string(), o.gt.string()},
                {(o.out / "student.bin").string(), (o.out / "student.json").string(),
                 (o.out / "train_report.json").string()},
                o.seed,
                ctx.backend_spec};
  m.write(o.out / "run.json");
  info(ctx, "student trained for " + std::to_string(report.iterations) + " iterations");
}

void extract(const Context& ctx, const ExtractOptions& o) {
  const auto student = distiller::load_student(o.ckpt);
  const auto image = image_io::read_png_rgb(o.image);
  const auto sketch = student.extract(image);
  image_io::write_png(o.out, sketch.pixels);
  RunManifest m{"extract",
                {{"ckpt", o.ckpt.string()}, {"image", o.image.string()}, {"out", o.out.string()}},
                {o.ckpt.string(), o.image.string()},
                {o.out.string()},
                0,
                ctx.backend_spec};
  m.write(manifest_path_for_file(o.out));
}

void eval(const Context& ctx, const EvalOptions& o) {
  if (!fs::is_directory(o.gt)) throw InputError("missing ground-truth directory " + o.gt.string());
  if (!fs::is_directory(o.pred)) throw InputError("missing prediction directory " + o.pred.string());
  std::vector<std::string> names;
  for (const auto& e : fs::directory_iterator(o.gt))
    if (e.is_regular_file() && e.path().extension() == ".png") names.push_back(e.path().filename().string());
  std::sort(names.begin(), names.end());
  if (names.empty()) throw InputError("no PNG files in " + o.gt.string());
  std::vector<metrics::SketchPair> pairs;
  for (const auto& n : names) {
    if (!fs::exists(o.pred / n)) throw InputError("prediction missing for " + n);
    pairs.push_back({o.style, image_io::read_png_gray(o.pred / n), image_io::read_png_gray(o.gt / n)});
  }
  const objectives::RandomConvPerceptual adapter;
  auto variant = fs::path(o.pred).lexically_normal().filename().string();
  if (variant.empty()) variant = fs::path(o.pred).lexically_normal().parent_path().filename().string();
  const auto records = metrics::evaluate(variant, pairs, adapter);
  std::ostringstream csv;
  metrics::write_csv(csv, records);
  write_text(o.out, csv.str());
  RunManifest m{"eval",
                {{"pred", o.pred.string()}, {"gt", o.gt.string()}, {"out", o.out.string()}, {"style", o.style}},
                {o.pred.string(), o.gt.string()},
                {o.out.string()},
                0,
                ctx.backend_spec};
  m.extra["pairs"] = pairs.size();
  m.write(manifest_path_for_file(o.out));
}

void ablate(const Context& ctx, const AblateOptions& o) {
  const auto& backend = backend_of(ctx);
  const auto* toy_backend = dynamic_cast<const toy::ToyBackend*>(&backend);
  if (!toy_backend) throw UsageError("ablate builds its evaluation set with the toy backend");
  if (o.eval_pairs < 1) throw UsageError("--eval-pairs must be positive");
  auto config = load_train_config(o.config);
  config.seed = o.seed;
  const auto triplet = store::load_archive(o.triplet);
  check_triplet_matches(triplet, backend);
  const auto report = load_report(o.selection);

  cdst::CdstState state;
  state.condition = triplet.condition;
  state.dist = fit_backend_distribution(backend, o.seed);
  const objectives::RandomProjectionEmbedder embedder;
  const objectives::RandomConvPerceptual perceptual;

  const auto base = generator::default_config(backend, report.timesteps);
  const auto setups = metrics::ablation_setups(base, config, report, o.seed);
  std::vector<generator::SketchGenerator> models;
  models.reserve(setups.size());
  for (const auto& [name, setup] : setups) {
    info(ctx, "training variant " + name);
    models.emplace_back(setup.config, derive_seed(o.seed, kInitStream));
    trainer::Trainer tr(backend, triplet, state, models.back(), embedder, perceptual, setup.train);
    tr.run();
  }
  std::vector<metrics::EvalPair> pairs;
  for (int i = 0; i < o.eval_pairs; ++i) {
    const auto seed = derive_seed(derive_seed(o.seed, kEvalStream), static_cast<std::uint64_t>(i));
    auto d = toy::make_triplet(*toy_backend, derive_seed(seed, 1), derive_seed(seed, 2));
    pairs.push_back({"toy-edges", {std::move(d.source), std::move(d.trajectory), std::move(d.pyramid)}, d.sketch});
  }
  std::vector<metrics::Variant> variants;
  for (std::size_t i = 0; i < setups.size(); ++i) variants.push_back({setups[i].first, &models[i]});
  const auto records = metrics::run_ablation(variants, pairs, perceptual);
  std::ostringstream csv;
  metrics::write_csv(csv, records);
  write_text(o.out, csv.str());
  RunManifest m{"ablate",
                {{"triplet", o.triplet.string()},
                 {"selection", o.selection.string()},
                 {"config", o.config ? o.config->string() : ""},
                 {"out", o.out.string()},
                 {"seed", o.seed},
                 {"eval_pairs", o.eval_pairs},
                 {"train_config", config.to_json()}},
                {o.triplet.string(), o.selection.string()},
                {o.out.string()},
                o.seed,
                ctx.backend_spec};
  m.write(manifest_path_for_file(o.out));
}

}  // namespace diffsketch::pipeline
