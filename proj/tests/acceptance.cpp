// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 on any failure.
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <sstream>
#include <string>

#include "cdst.hpp"
#include "cli_chain.hpp"
#include "composite.hpp"
#include "data/shapiro_reference.hpp"
#include "distiller.hpp"
#include "metrics.hpp"
#include "oracles.hpp"
#include "selection.hpp"
#include "trainer.hpp"

using namespace diffsketch;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

Eigen::MatrixXd blobs(int k, int per, int d, std::uint64_t seed, double spread) {
  NormalSampler g(seed);
  Eigen::MatrixXd centers(k, d);
  for (int c = 0; c < k; ++c)
    for (int j = 0; j < d; ++j) centers(c, j) = 20.0 * g();
  Eigen::MatrixXd x(k * per, d);
  for (int c = 0; c < k; ++c)
    for (int i = 0; i < per; ++i)
      for (int j = 0; j < d; ++j) x(c * per + i, j) = centers(c, j) + spread * g();
  return x;
}

Eigen::MatrixXd gaussian(int n, int d, std::uint64_t seed) {
  NormalSampler g(seed);
  Eigen::MatrixXd x(n, d);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) x(i, j) = g();
  return x;
}

Tensor32 random_image(Shape s, std::uint64_t seed) {
  Tensor32 t(s);
  NormalSampler n(seed);
  for (auto& v : t.raw()) v = static_cast<float>(n.uniform());
  return t;
}

double sketch_l1(const store::Sketch& a, const store::Sketch& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.pixels.size(); ++i) s += std::abs(a.pixels[i] - b.pixels[i]);
  return s / static_cast<double>(a.pixels.size());
}

// State shared by the selection, training and gate criteria.
struct ToyRun {
  toy::ToyBackend backend;
  selection::SelectionReport report;
  std::vector<store::TripletDatum> triplets;
  std::vector<generator::SketchGenerator> trained;
};
ToyRun& toy_run() {
  static ToyRun r;
  return r;
}

Outcome c1_cluster_count() {
  const auto t0 = std::chrono::steady_clock::now();
  int match = 0, exact = 0;
  for (std::uint64_t s = 0; s < 20; ++s) {
    const int kstar = 3 + static_cast<int>(s % 6);
    const auto x = blobs(kstar, 8, 5, 9000 + s, 0.4);
    const int max_k = static_cast<int>(x.rows()) / 2;
    std::vector<double> ss, dbi;
    for (int k = 2; k <= max_k + 1; ++k) {
      const auto c = selection::kmeans_best(x, k, derive_seed(s, static_cast<std::uint64_t>(k)));
      ss.push_back(oracle::silhouette(x, c.labels, k));
      dbi.push_back(oracle::davies_bouldin(x, c.labels, k));
    }
    const int got = selection::optimal_k(x, max_k, s);
    if (got == oracle::agreement_k(ss, dbi)) ++match;
    if (got == kstar) ++exact;
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return {match == 20 && exact >= 18 && secs < 30.0,
          "oracle " + std::to_string(match) + "/20, k* " + std::to_string(exact) + "/20, " + fmt("%.1f s", secs)};
}

Outcome c2_selection_order() {
  auto& r = toy_run();
  std::vector<store::FeatureTrajectory> trajs;
  for (std::uint64_t i = 0; i < 20; ++i) {
    r.triplets.push_back(toy::make_triplet(r.backend, derive_seed(i, 1), derive_seed(i, 2)));
    trajs.push_back(r.triplets.back().trajectory);
  }
  selection::AnalyzeOptions opt;
  opt.seed = 1;
  r.report = selection::analyze(trajs, opt);
  std::ostringstream d;
  d << "n=20 k=" << r.report.k << " selected " << fmt("%.1f", r.report.score_selected) << ", equal "
    << fmt("%.1f", r.report.score_equal) << ", random mean " << fmt("%.1f", r.report.score_random);
  return {r.report.score_selected <= r.report.score_equal && r.report.score_selected <= r.report.score_random,
          d.str()};
}

Outcome c3_schedule() {
  double worst = 0.0;
  NormalSampler g(3);
  for (int S : {1, 2, 1000}) {
    const auto a = cdst::schedule(0, S), b = cdst::schedule(S, S);
    worst = std::max({worst, std::abs(a.condition - 1.0), std::abs(a.distribution),
                      std::abs(b.condition), std::abs(b.distribution - 1.0)});
    for (int i = 0; i <= S; ++i) {
      const auto w = cdst::schedule(i, S);
      worst = std::max(worst, std::abs(w.condition + w.distribution - 1.0));
    }
    for (int n = 0; n < 1000; ++n) {
      const int i = static_cast<int>(g.next() % static_cast<std::uint64_t>(S + 1));
      const auto w = cdst::schedule(i, S);
      worst = std::max(worst, std::abs(w.condition + w.distribution - 1.0));
      if (w.condition < 0.0 || w.distribution < 0.0) worst = 1.0;
    }
  }
  return {worst <= 1e-12, "max deviation " + fmt("%.2e", worst)};
}

Outcome c4_emd() {
  const auto a = gaussian(40, 5, 1);
  const bool zero = cdst::emd(a, a) == 0.0;
  double single = 0.0;
  for (std::uint64_t s = 0; s < 20; ++s) {
    const auto p = gaussian(1, 6, 100 + s), q = gaussian(1, 6, 200 + s);
    single = std::max(single, std::abs(cdst::emd(p, q) - (p - q).norm()));
  }
  const toy::ToyBackend backend;
  int wins = 0;
  double fit_sum = 0.0, box_sum = 0.0;
  for (std::uint64_t s = 0; s < 20; ++s) {
    const Eigen::MatrixXd train = backend.condition_corpus(300, derive_seed(s, 1));
    const Eigen::MatrixXd held = backend.condition_corpus(100, derive_seed(s, 2));
    const auto dist = cdst::fit_condition_distribution(train);
    const Eigen::VectorXd lo = train.colwise().minCoeff(), hi = train.colwise().maxCoeff();
    Eigen::MatrixXd fit(100, train.cols()), box(100, train.cols());
    NormalSampler u(derive_seed(s, 3));
    for (int i = 0; i < 100; ++i) {
      fit.row(i) = cdst::sample_mvn(dist, derive_seed(derive_seed(s, 4), static_cast<std::uint64_t>(i))).transpose();
      for (int j = 0; j < train.cols(); ++j) box(i, j) = lo(j) + (hi(j) - lo(j)) * u.uniform();
    }
    const double ef = cdst::emd(fit, held), eb = cdst::emd(box, held);
    fit_sum += ef;
    box_sum += eb;
    if (ef < eb) ++wins;
  }
  return {zero && single <= 1e-9 && wins == 20,
          std::string(zero ? "A=A 0" : "A=A nonzero") + ", singleton err " + fmt("%.1e", single) + ", fit<box " +
              std::to_string(wins) + "/20 (mean " + fmt("%.3f", fit_sum / 20) + " vs " + fmt("%.3f", box_sum / 20) +
              ")"};
}

Outcome c5_statistics() {
  double sil = 0.0, dbi = 0.0, mar = 0.0, sw = 0.0;
  for (std::uint64_t s = 0; s < 10; ++s) {
    const int n = 30 + 7 * static_cast<int>(s);
    const auto x = gaussian(n, 3, 500 + s);
    const int k = 2 + static_cast<int>(s % 5);
    std::vector<int> l(n);
    NormalSampler g(600 + s);
    for (int i = 0; i < n; ++i) l[i] = i < k ? i : static_cast<int>(g.next() % static_cast<std::uint64_t>(k));
    sil = std::max(sil, std::abs(selection::silhouette(x, l) - oracle::silhouette(x, l, k)));
    dbi = std::max(dbi, std::abs(selection::davies_bouldin(x, l) - oracle::davies_bouldin(x, l, k)));
    Eigen::MatrixXd y = gaussian(100, 3 + static_cast<int>(s % 3), 700 + s);
    y.col(0) = y.col(0).array().cube();
    const auto r = cdst::mardia_test(y);
    const auto o = oracle::mardia(y);
    mar = std::max({mar, std::abs(r.skewness - o.b1) / std::max(1.0, o.b1),
                    std::abs(r.kurtosis - o.b2) / std::max(1.0, o.b2)});
  }
  for (const auto& ref : shapiro_references()) sw = std::max(sw, std::abs(cdst::shapiro_wilk(ref.x).w - ref.w));
  std::ostringstream d;
  d << "silhouette " << fmt("%.1e", sil) << ", DBI " << fmt("%.1e", dbi) << ", Mardia " << fmt("%.1e", mar)
    << ", SW W " << fmt("%.1e", sw) << " over " << shapiro_references().size() << " refs";
  return {sil <= 1e-8 && dbi <= 1e-8 && mar <= 1e-8 && sw <= 1e-4 && shapiro_references().size() == 10, d.str()};
}

Outcome c6_gradient() {
  const auto r = composite_gradcheck(50, 42);
  return {r.probes == 50 && r.max_rel_err < 1e-3,
          std::to_string(r.probes) + " probes, max rel err " + fmt("%.2e", r.max_rel_err)};
}

Outcome c7_training() {
  auto& r = toy_run();
  const objectives::RandomProjectionEmbedder embedder;
  const objectives::RandomConvPerceptual perceptual;
  bool ok = true;
  std::ostringstream d;
  const auto t0 = std::chrono::steady_clock::now();
  for (std::uint64_t s = 0; s < 3; ++s) {
    const auto& trip = r.triplets[s];
    generator::SketchGenerator g(generator::default_config(r.backend, r.report.timesteps), derive_seed(s, 7));
    cdst::CdstState st;
    st.condition = trip.condition;
    st.dist = cdst::fit_condition_distribution(r.backend.condition_corpus(1000, s));
    trainer::TrainConfig tc;
    tc.iterations = 200;
    tc.learning_rate = 1e-3;
    tc.seed = s;
    trainer::Trainer tr(r.backend, trip, st, g, embedder, perceptual, tc);
    const double before = sketch_l1(g.generate_sketch(trip.trajectory, trip.pyramid, trip.source), trip.sketch);
    tr.run();
    const double after = sketch_l1(g.generate_sketch(trip.trajectory, trip.pyramid, trip.source), trip.sketch);
    double lead = 0.0, trail = 0.0;
    for (int i = 0; i < 50; ++i) lead += tr.log()[i].at("total").get<double>() / 50;
    for (int i = 150; i < 200; ++i) trail += tr.log()[i].at("total").get<double>() / 50;
    ok = ok && trail < lead && after <= 0.5 * before;
    d << "seed " << s << ": loss " << fmt("%.2f", lead) << "->" << fmt("%.2f", trail) << ", L1 x"
      << fmt("%.3f", after / before) << "; ";
    r.trained.push_back(std::move(g));
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  d << fmt("%.0f s", secs);
  return {ok && secs < 300.0, d.str()};
}

Outcome c8_gate() {
  auto& r = toy_run();
  if (r.trained.empty()) return {false, "no trained generators"};
  int equal = 0;
  for (std::size_t m = 0; m < r.trained.size(); ++m) {
    const auto& g = r.trained[m];
    const auto& gate = g.config().aggregator.selected_timesteps;
    const auto& trip = r.triplets[m];
    const auto ref = g.generate_sketch(trip.trajectory, trip.pyramid, trip.source);
    auto traj = trip.trajectory;
    NormalSampler n(derive_seed(m, 8));
    for (int l = 1; l <= traj.layers(); ++l)
      for (int t = 0; t < traj.timesteps(); ++t) {
        if (std::find(gate.begin(), gate.end(), t) != gate.end()) continue;
        Tensor32 f = traj.at(l, t);
        for (auto& v : f.raw()) v += static_cast<float>(3.0 * n());
        traj.set(l, t, std::move(f));
      }
    if (bit_equal(g.generate_sketch(traj, trip.pyramid, trip.source).pixels, ref.pixels)) ++equal;
  }
  return {equal == static_cast<int>(r.trained.size()),
          "bit-equal " + std::to_string(equal) + "/" + std::to_string(r.trained.size()) + " trained generators"};
}

Outcome c9_distillation() {
  toy::ToyBackendConfig bc;
  bc.image_size = 16;
  bc.fusing_steps = 2;
  const toy::ToyBackend backend(bc);
  const auto trip = toy::make_triplet(backend, 31, 32);
  cdst::CdstState st;
  st.condition = trip.condition;
  st.dist = cdst::fit_condition_distribution(backend.condition_corpus(1000, 33));
  generator::SketchGenerator teacher(generator::default_config(backend, {1, 4, 7}), 34);
  const objectives::RandomProjectionEmbedder embedder;
  const objectives::RandomConvPerceptual perceptual;
  trainer::TrainConfig tc;
  tc.iterations = 60;
  tc.learning_rate = 1e-3;
  trainer::Trainer(backend, trip, st, teacher, embedder, perceptual, tc).run();

  int wins = 0;
  double trained_sum = 0.0, untrained_sum = 0.0;
  for (std::uint64_t s = 0; s < 20; ++s) {
    const auto train = distiller::generate_dataset(teacher, st, backend, 200, 30000, derive_seed(s, 1), "t");
    const auto held = distiller::generate_dataset(teacher, st, backend, 50, 30000, derive_seed(s, 2), "t");
    distiller::ConvStudent untrained(derive_seed(s, 3)), student(derive_seed(s, 3));
    distiller::StudentConfig sc;
    sc.reg_every = 16;
    sc.seed = s;
    distiller::train_student(student, train, {trip.source, trip.sketch}, sc);
    const double a = distiller::student_l1(student, held.entries), b = distiller::student_l1(untrained, held.entries);
    trained_sum += a;
    untrained_sum += b;
    if (a < b) ++wins;
  }
  return {wins >= 18, std::to_string(wins) + "/20 seeds, mean held-out L1 " + fmt("%.4f", trained_sum / 20) +
                          " vs untrained " + fmt("%.4f", untrained_sum / 20)};
}

Outcome c10_confidence() {
  auto domain = [](const Eigen::VectorXd& offset, std::uint64_t seed) {
    NormalSampler g(seed);
    std::vector<cdst::EmbeddedPair> d;
    for (int i = 0; i < 12; ++i) {
      Eigen::VectorXd img(8), noise(8);
      for (auto& v : img) v = g();
      for (auto& v : noise) v = 0.05 * g();
      d.push_back({img, img + offset + noise});
    }
    return d;
  };
  int ok = 0;
  double worst_all = 0.0;
  for (std::uint64_t s = 0; s < 10; ++s) {
    Eigen::VectorXd oa = Eigen::VectorXd::Zero(8), ob = Eigen::VectorXd::Zero(8);
    oa(static_cast<int>(s % 8)) = 2.0;
    ob(static_cast<int>((s + 3) % 8)) = 2.0;
    const auto a = domain(oa, 2 * s), b = domain(ob, 2 * s + 1);
    const auto m = cdst::confidence_matrix({a, b});
    auto all = a;
    all.insert(all.end(), b.begin(), b.end());
    worst_all = std::max(worst_all, std::abs(cdst::confidence_matrix({all})(0, 0) - 100.0));
    if (m(0, 0) > m(0, 1) && m(1, 1) > m(1, 0)) ++ok;
  }
  return {ok == 10 && worst_all <= 1e-9,
          "within > cross on " + std::to_string(ok) + "/10 constructions, |ALL-100| " + fmt("%.1e", worst_all)};
}

Outcome c11_metrics() {
  const objectives::RandomConvPerceptual adapter;
  double id = 0.0, sym = 0.0, perc = 0.0, orc = 0.0;
  for (std::uint64_t s = 0; s < 10; ++s) {
    const auto a = random_image({32, 32, 1}, 2 * s), b = random_image({32, 32, 1}, 2 * s + 1);
    id = std::max(id, std::abs(metrics::ssim(a, a) - 1.0));
    sym = std::max({sym, std::abs(metrics::ssim(a, b) - metrics::ssim(b, a)),
                    std::abs(metrics::perceptual(a, b, adapter) - metrics::perceptual(b, a, adapter))});
    perc = std::max(perc, metrics::perceptual(a, a, adapter));
    std::vector<double> pa(a.raw().begin(), a.raw().end()), pb(b.raw().begin(), b.raw().end());
    orc = std::max(orc, std::abs(metrics::ssim(a, b) - oracle::ssim(pa, pb, 32, 32)));
  }
  std::ostringstream d;
  d << "|ssim(x,x)-1| " << fmt("%.1e", id) << ", perceptual(x,x) " << fmt("%.1e", perc) << ", asymmetry "
    << fmt("%.1e", sym) << ", oracle " << fmt("%.1e", orc);
  return {id <= 1e-12 && perc == 0.0 && sym <= 1e-9 && orc <= 1e-6, d.str()};
}

Outcome c12_reproducible() {
  setenv("DIFFSKETCH_BACKEND", "toy:16", 1);
  setenv("SOURCE_DATE_EPOCH", "1700000000", 1);
  TempDir root("accept_cli");
  const auto dir = root / "run";
  const std::string f1 = cli::run_chain(DS_CLI_PATH, dir);
  if (!f1.empty()) return {false, "command failed: " + f1};
  const auto first = cli::snapshot(dir);
  const std::string f2 = cli::run_chain(DS_CLI_PATH, dir);
  if (!f2.empty()) return {false, "command failed on rerun: " + f2};
  const auto second = cli::snapshot(dir);
  int differ = 0;
  for (const auto& [path, bytes] : first)
    if (!second.count(path) || second.at(path) != bytes) ++differ;
  return {differ == 0 && first.size() == second.size(),
          std::to_string(cli::chain().size()) + " commands, " + std::to_string(first.size()) + " files, " +
              std::to_string(differ) + " differ"};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"cluster-count rule oracle equivalence", c1_cluster_count},
      {"selection ordering", c2_selection_order},
      {"schedule exactness", c3_schedule},
      {"EMD", c4_emd},
      {"statistical oracles", c5_statistics},
      {"gradient correctness", c6_gradient},
      {"one-shot training sanity", c7_training},
      {"gate invariance", c8_gate},
      {"distillation benefit", c9_distillation},
      {"confidence-score direction", c10_confidence},
      {"metric identities", c11_metrics},
      {"reproducibility", c12_reproducible},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.pass) ++failed;
    std::printf("%s %2zu %s: %s\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first.c_str(), o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed ? 1 : 0;
}
