#include "trainer.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "digest.hpp"
#include "rng.hpp"

namespace diffsketch::trainer {

namespace fs = std::filesystem;
using ad::Var;

namespace {

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
}

nlohmann::json parse_json(const fs::path& p) {
  try {
    return nlohmann::json::parse(read_text(p));
  } catch (const nlohmann::json::exception& e) {
    throw InputError("malformed " + p.string() + ": " + e.what());
  }
}

std::string teacher_digest(const fs::path& dir) {
  return sha256_hex(read_text(dir / "state.json") + store::file_sha256(dir / "generator" / "weights.bin"));
}

}  // namespace

void TrainConfig::validate() const {
  if (iterations < 1) throw UsageError("train config: iterations must be positive");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate))
    throw UsageError("train config: learning_rate must be positive");
  if (cdst_horizon < 1) throw UsageError("train config: cdst_S must be >= 1");
  if (checkpoint_every < 0) throw UsageError("train config: checkpoint_every must be >= 0");
  for (double w : {weights.across, weights.within, weights.l1, weights.lpips, weights.clipsim})
    if (!(w >= 0.0) || !std::isfinite(w)) throw UsageError("train config: loss weights must be finite and >= 0");
}

nlohmann::json TrainConfig::to_json() const {
  return {{"iterations", iterations},
          {"learning_rate", learning_rate},
          {"cdst_S", cdst_horizon},
          {"lambda",
           {{"across", weights.across},
            {"within", weights.within},
            {"l1", weights.l1},
            {"lpips", weights.lpips},
            {"clipsim", weights.clipsim}}},
          {"pixel_loss", pixel == objectives::PixelLoss::L1 ? "l1" : "squared"},
          {"seed", seed},
          {"checkpoint_every", checkpoint_every},
          {"use_cdst", use_cdst}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw UsageError("train config must be a JSON object");
  TrainConfig c;
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "iterations") c.iterations = value.get<int>();
      else if (key == "learning_rate") c.learning_rate = value.get<double>();
      else if (key == "cdst_S") c.cdst_horizon = value.get<int>();
      else if (key == "seed") c.seed = value.get<std::uint64_t>();
      else if (key == "checkpoint_every") c.checkpoint_every = value.get<int>();
      else if (key == "use_cdst") c.use_cdst = value.get<bool>();
      else if (key == "pixel_loss") {
        const auto s = value.get<std::string>();
        if (s == "l1") c.pixel = objectives::PixelLoss::L1;
        else if (s == "squared") c.pixel = objectives::PixelLoss::Squared;
        else throw UsageError("train config: pixel_loss must be l1 or squared");
      } else if (key == "lambda") {
        for (const auto& [k, w] : value.items()) {
          if (k == "across") c.weights.across = w.get<double>();
          else if (k == "within") c.weights.within = w.get<double>();
          else if (k == "l1") c.weights.l1 = w.get<double>();
          else if (k == "lpips") c.weights.lpips = w.get<double>();
          else if (k == "clipsim") c.weights.clipsim = w.get<double>();
          else throw UsageError("train config: unknown loss weight " + k);
        }
      } else {
        throw UsageError("train config: unknown key " + key);
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw UsageError(std::string("train config: ") + e.what());
  }
  c.validate();
  return c;
}

std::uint64_t iteration_seed(std::uint64_t run_seed, int iter) {
  return derive_seed(run_seed, static_cast<std::uint64_t>(iter));
}

Trainer::Trainer(const store::DiffusionBackend& backend, const store::TripletDatum& triplet, cdst::CdstState state,
                 generator::SketchGenerator& model, const objectives::SemanticEmbedder& embedder,
                 const objectives::PerceptualMetric& perceptual, TrainConfig config)
    : backend_(backend),
      triplet_(triplet),
      state_(std::move(state)),
      model_(model),
      embedder_(embedder),
      perceptual_(perceptual),
      config_(config),
      adam_(config.learning_rate) {
  config_.validate();
  state_.horizon = config_.cdst_horizon;
  if (static_cast<int>(state_.condition.size()) != backend.condition_dim())
    throw InputError("trainer: triplet condition has " + std::to_string(state_.condition.size()) +
                     " entries, backend expects " + std::to_string(backend.condition_dim()));
  if (state_.dist.dim() != backend.condition_dim()) throw InputError("trainer: distribution dimension mismatch");
  triplet.trajectory.validate();
  triplet.pyramid.validate();
  source_ = Var::constant(store::image_to_chw(triplet.source));
  sketch_gt_ = Var::constant(store::sketch_to_chw(triplet.sketch));
}

const nlohmann::json& Trainer::step() {
  const std::uint64_t seed = iteration_seed(config_.seed, iter_);
  std::vector<double> condition;
  if (config_.use_cdst) {
    condition = cdst::sample_condition(state_, iter_, derive_seed(seed, 1));
  } else {
    const Eigen::VectorXd x = cdst::sample_mvn(state_.dist, derive_seed(seed, 1));
    condition.assign(x.data(), x.data() + x.size());
  }
  const store::Generation sample = backend_.generate(condition, seed);

  const Var image_sample = Var::constant(store::image_to_chw(sample.image));
  objectives::LossInputs in;
  in.pred = model_.forward(triplet_.trajectory, triplet_.pyramid, source_);
  in.sketch_gt = sketch_gt_;
  in.image_source = source_;
  in.image_sample = image_sample;
  in.sketch_sample = model_.forward(sample.trajectory, sample.pyramid, image_sample);
  const auto losses = objectives::loss_total(in, embedder_, perceptual_, config_.weights, config_.pixel);

  nlohmann::json record = losses.to_json(iter_);
  if (!std::isfinite(losses.total_value())) {
    throw NumericError("non-finite loss at iteration " + std::to_string(iter_) + ": " + record.dump());
  }
  if (!config_.weights.all_zero()) {
    model_.params().zero_grad();
    ad::backward(losses.total);
    adam_.step(model_.params());
  }
  log_.push_back(std::move(record));
  ++iter_;
  return log_.back();
}

void Trainer::run(const fs::path& checkpoint_dir, const std::function<void(const nlohmann::json&)>& on_step) {
  while (iter_ < config_.iterations) {
    const auto& rec = step();
    if (on_step) on_step(rec);
    if (!checkpoint_dir.empty() && config_.checkpoint_every > 0 && iter_ % config_.checkpoint_every == 0 &&
        iter_ < config_.iterations)
      save_checkpoint(checkpoint_dir);
  }
  if (!checkpoint_dir.empty()) save_checkpoint(checkpoint_dir);
}

void Trainer::save_checkpoint(const fs::path& dir) const {
  std::error_code ec;
  fs::create_directories(dir, ec);
  model_.save(dir / "generator");
  save_tensors(dir / "optimizer.bin", adam_.state(model_.params()));
  cdst::save_distribution(state_.dist, dir / "distribution");
  std::string log_text;
  for (const auto& r : log_) log_text += r.dump() + "\n";
  write_text(dir / "loss_log.jsonl", log_text);
  const nlohmann::json st{{"iteration", iter_},
                          {"config", config_.to_json()},
                          {"condition", state_.condition},
                          {"backend", backend_.name()},
                          {"triplet_seed", triplet_.seed}};
  write_text(dir / "state.json", st.dump(2) + "\n");
}

void Trainer::resume(const fs::path& dir) {
  const auto st = parse_json(dir / "state.json");
  const int iter = st.at("iteration").get<int>();
  if (iter > config_.iterations) throw UsageError("resume: checkpoint is past the configured iteration count");
  auto log = read_loss_log(dir / "loss_log.jsonl");
  if (static_cast<int>(log.size()) != iter) throw InputError("resume: loss log length does not match iteration");
  adam_.load_state(model_.params(), load_tensors(dir / "optimizer.bin"));
  iter_ = iter;
  log_ = std::move(log);
}

std::vector<nlohmann::json> read_loss_log(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot read " + path.string());
  std::vector<nlohmann::json> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      out.push_back(nlohmann::json::parse(line));
    } catch (const nlohmann::json::exception& e) {
      throw InputError("malformed loss log line in " + path.string());
    }
  }
  return out;
}

Teacher load_teacher(const fs::path& dir) {
  const auto st = parse_json(dir / "state.json");
  Teacher t{generator::SketchGenerator::load(dir / "generator"), {}, {}, 0, {}};
  try {
    t.config = TrainConfig::from_json(st.at("config"));
    t.iteration = st.at("iteration").get<int>();
    t.state.condition = st.at("condition").get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("malformed state.json: ") + e.what());
  }
  t.state.dist = cdst::load_distribution(dir / "distribution");
  t.state.horizon = t.config.cdst_horizon;
  t.digest = teacher_digest(dir);
  return t;
}

}  // namespace diffsketch::trainer
