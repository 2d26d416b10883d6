#include <doctest.h>

#include <cmath>
#include <limits>
#include <numeric>

#include "tempdir.hpp"
#include "toy_backend.hpp"
#include "trainer.hpp"

using namespace diffsketch;
using namespace diffsketch::trainer;

namespace {

struct Setup {
  toy::ToyBackend backend{[] {
    toy::ToyBackendConfig c;
    c.image_size = 16;
    c.fusing_steps = 2;
    return c;
  }()};
  store::TripletDatum triplet = toy::make_triplet(backend, 11, 12);
  cdst::CdstState state;
  objectives::RandomProjectionEmbedder embedder;
  objectives::RandomConvPerceptual perceptual;

  Setup() {
    state.condition = triplet.condition;
    state.dist = cdst::fit_condition_distribution(backend.condition_corpus(200, 13));
  }

  generator::SketchGenerator model(std::uint64_t seed = 14) const {
    return generator::SketchGenerator(generator::default_config(backend, {1, 4, 7}), seed);
  }

  TrainConfig config(int iterations, double lr = 1e-3) const {
    TrainConfig c;
    c.iterations = iterations;
    c.learning_rate = lr;
    c.cdst_horizon = 20;
    c.seed = 5;
    return c;
  }
};

bool same_weights(const generator::SketchGenerator& a, const generator::SketchGenerator& b) {
  const auto sa = a.params().snapshot(), sb = b.params().snapshot();
  if (sa.size() != sb.size()) return false;
  for (std::size_t i = 0; i < sa.size(); ++i)
    if (sa[i].first != sb[i].first || !bit_equal(sa[i].second, sb[i].second)) return false;
  return true;
}

double mean_total(const std::vector<nlohmann::json>& log, std::size_t from, std::size_t to) {
  double s = 0.0;
  for (std::size_t i = from; i < to; ++i) s += log[i].at("total").get<double>();
  return s / static_cast<double>(to - from);
}

}  // namespace

TEST_CASE("config defaults and JSON round-trip") {
  const TrainConfig d;
  CHECK(d.iterations == 1200);
  CHECK(d.learning_rate == 1e-4);
  CHECK(d.cdst_horizon == 1000);
  CHECK(d.weights.l1 == 30.0);
  CHECK(d.use_cdst);

  TrainConfig c;
  c.iterations = 77;
  c.learning_rate = 3e-3;
  c.cdst_horizon = 40;
  c.weights.within = 0.5;
  c.pixel = objectives::PixelLoss::Squared;
  c.seed = 99;
  c.use_cdst = false;
  CHECK(TrainConfig::from_json(c.to_json()).to_json() == c.to_json());
  CHECK(TrainConfig::from_json(nlohmann::json::object()).to_json() == d.to_json());

  // Horizon beyond the iteration count is allowed.
  CHECK_NOTHROW(TrainConfig::from_json({{"iterations", 10}, {"cdst_S", 1000}}));
  CHECK_THROWS_AS(TrainConfig::from_json({{"iteratons", 10}}), UsageError);
  CHECK_THROWS_AS(TrainConfig::from_json({{"lambda", {{"l2", 1.0}}}}), UsageError);
  CHECK_THROWS_AS(TrainConfig::from_json({{"iterations", 0}}), UsageError);
  CHECK_THROWS_AS(TrainConfig::from_json({{"learning_rate", -1.0}}), UsageError);
  CHECK_THROWS_AS(TrainConfig::from_json({{"pixel_loss", "l3"}}), UsageError);
  CHECK_THROWS_AS(TrainConfig::from_json({{"iterations", "ten"}}), UsageError);
  CHECK_THROWS_AS(TrainConfig::from_json(nlohmann::json::array()), UsageError);
}

TEST_CASE("iteration seeds are distinct and stable") {
  CHECK(iteration_seed(1, 0) == iteration_seed(1, 0));
  CHECK(iteration_seed(1, 0) != iteration_seed(1, 1));
  CHECK(iteration_seed(1, 0) != iteration_seed(2, 0));
}

TEST_CASE("training is bit-reproducible") {
  Setup s;
  auto m1 = s.model(), m2 = s.model();
  Trainer t1(s.backend, s.triplet, s.state, m1, s.embedder, s.perceptual, s.config(4));
  Trainer t2(s.backend, s.triplet, s.state, m2, s.embedder, s.perceptual, s.config(4));
  t1.run();
  t2.run();
  CHECK(t1.log() == t2.log());
  CHECK(same_weights(m1, m2));
  CHECK_FALSE(same_weights(m1, s.model()));
}

TEST_CASE("all-zero loss weights leave parameters unchanged") {
  Setup s;
  auto m = s.model();
  auto cfg = s.config(3);
  cfg.weights = {0, 0, 0, 0, 0};
  Trainer t(s.backend, s.triplet, s.state, m, s.embedder, s.perceptual, cfg);
  t.run();
  CHECK(t.log().size() == 3);
  CHECK(same_weights(m, s.model()));
}

TEST_CASE("resume continues an interrupted run exactly") {
  Setup s;
  auto full = s.model();
  Trainer tf(s.backend, s.triplet, s.state, full, s.embedder, s.perceptual, s.config(6));
  tf.run();

  TempDir dir("resume");
  {
    auto part = s.model();
    Trainer tp(s.backend, s.triplet, s.state, part, s.embedder, s.perceptual, s.config(6));
    for (int i = 0; i < 3; ++i) tp.step();
    tp.save_checkpoint(dir.path());
  }
  const auto teacher = load_teacher(dir.path());
  CHECK(teacher.iteration == 3);
  CHECK(teacher.state.condition == s.triplet.condition);
  CHECK(teacher.digest.size() == 64);
  auto resumed = generator::SketchGenerator::load(dir / "generator");
  Trainer tr(s.backend, s.triplet, s.state, resumed, s.embedder, s.perceptual, s.config(6));
  tr.resume(dir.path());
  CHECK(tr.iteration() == 3);
  tr.run();
  CHECK(tr.log() == tf.log());
  CHECK(same_weights(resumed, full));
  CHECK(read_loss_log(dir / "loss_log.jsonl").size() == 3);

  Trainer tshort(s.backend, s.triplet, s.state, resumed, s.embedder, s.perceptual, s.config(2));
  CHECK_THROWS_AS(tshort.resume(dir.path()), UsageError);
}

TEST_CASE("non-finite loss aborts with the iteration index") {
  Setup s;
  auto m = s.model();
  m.params().get("ffd.OUT.w").mutable_value()[0] = std::numeric_limits<double>::quiet_NaN();
  Trainer t(s.backend, s.triplet, s.state, m, s.embedder, s.perceptual, s.config(3));
  try {
    t.step();
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("iteration 0") != std::string::npos);
    CHECK(msg.find("rec_l1") != std::string::npos);
  }
}

TEST_CASE("condition size mismatch is rejected") {
  Setup s;
  auto m = s.model();
  auto bad = s.state;
  bad.condition.pop_back();
  CHECK_THROWS_AS(Trainer(s.backend, s.triplet, bad, m, s.embedder, s.perceptual, s.config(1)), InputError);
}

TEST_CASE("short toy run reduces the loss") {
  Setup s;
  auto m = s.model();
  Trainer t(s.backend, s.triplet, s.state, m, s.embedder, s.perceptual, s.config(40));
  t.run();
  const auto& log = t.log();
  CHECK(mean_total(log, 30, 40) < mean_total(log, 0, 10));
}
