#include <cstdio>
#include <cstdlib>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "diffsketch/diffsketch.h"

namespace {

void log_line(const char* msg, void*) { std::fprintf(stderr, "%s\n", msg); }

int report(ds_status s) {
  if (s != DS_OK) std::fprintf(stderr, "error: %s\n", ds_last_error());
  return static_cast<int>(s);
}

struct Backend {
  ds_backend* h = nullptr;
  ~Backend() { ds_backend_destroy(h); }
};

// Backend choice comes from DIFFSKETCH_BACKEND only.
ds_status open_backend(Backend& b) { return ds_backend_create(nullptr, &b.h); }

const char* opt(const std::string& s) { return s.empty() ? nullptr : s.c_str(); }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"One-shot sketch extraction from diffusion features"};
  app.require_subcommand(1);
  app.set_version_flag("--version", ds_version());

  std::uint64_t seed = 0;
  bool quiet = false;
  app.add_option("--seed", seed, "Seed for every random choice")->capture_default_str();
  app.add_flag("-q,--quiet", quiet, "Suppress progress output");

  std::string out, triplet, selection, config, ckpt, pairs, gt, image, pred, style = "default";
  std::vector<std::string> archives;
  int pca_dim = 30, n = 0, S = 30000, checkpoint_every = -1, epochs = 5, reg_every = 16, eval_pairs = 8;
  double lr = 1e-3;
  bool resume = false;

  auto* mk = app.add_subcommand("make-triplet", "Build a toy triplet archive (image, condition, sketch)");
  mk->add_option("--out", out, "Archive directory")->required();

  auto* an = app.add_subcommand("analyze", "Select representative timesteps from feature archives");
  an->add_option("--archives", archives, "Feature archive directories")->required()->expected(1, -1);
  an->add_option("--pca-dim", pca_dim, "PCA dimensions")->capture_default_str();
  an->add_option("--out", out, "Selection report (JSON)")->required();

  auto* tr = app.add_subcommand("train", "Train the sketch generator on one triplet");
  tr->add_option("--triplet", triplet, "Triplet archive")->required();
  tr->add_option("--selection", selection, "Selection report")->required();
  tr->add_option("--config", config, "Training config (JSON)");
  tr->add_option("--out", out, "Checkpoint directory")->required();
  tr->add_option("--checkpoint-every", checkpoint_every, "Checkpoint interval in iterations");
  tr->add_flag("--resume", resume, "Continue from the checkpoint in --out");

  auto* sp = app.add_subcommand("sample-pairs", "Generate image/sketch pairs from a trained generator");
  sp->add_option("--ckpt", ckpt, "Generator checkpoint")->required();
  sp->add_option("--n", n, "Number of pairs")->required();
  sp->add_option("--S", S, "Condition schedule horizon")->capture_default_str();
  sp->add_option("--out", out, "Dataset directory")->required();

  auto* di = app.add_subcommand("distill", "Train the student network on sampled pairs");
  di->add_option("--pairs", pairs, "Pair dataset")->required();
  di->add_option("--gt", gt, "Ground-truth triplet archive or directory with source.png and sketch.png")->required();
  di->add_option("--out", out, "Student checkpoint directory")->required();
  di->add_option("--epochs", epochs)->capture_default_str();
  di->add_option("--reg-every", reg_every, "Inject the ground-truth pair every N iterations")->capture_default_str();
  di->add_option("--lr", lr)->capture_default_str();

  auto* ex = app.add_subcommand("extract", "Extract a sketch with a distilled student");
  ex->add_option("--ckpt", ckpt, "Student checkpoint")->required();
  ex->add_option("--image", image, "Input PNG")->required();
  ex->add_option("--out", out, "Output PNG")->required();

  auto* ev = app.add_subcommand("eval", "Score predicted sketches against ground truth");
  ev->add_option("--pred", pred, "Directory of predicted PNGs")->required();
  ev->add_option("--gt", gt, "Directory of ground-truth PNGs")->required();
  ev->add_option("--out", out, "Output CSV")->required();
  ev->add_option("--style", style)->capture_default_str();

  auto* ab = app.add_subcommand("ablate", "Train and score the ablation variants");
  ab->add_option("--triplet", triplet, "Triplet archive")->required();
  ab->add_option("--selection", selection, "Selection report")->required();
  ab->add_option("--config", config, "Training config (JSON)");
  ab->add_option("--out", out, "Output CSV")->required();
  ab->add_option("--eval-pairs", eval_pairs)->capture_default_str();

  for (auto* sub : app.get_subcommands([](const CLI::App*) { return true; })) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return DS_ERR_USAGE;
  }

  if (!quiet) ds_set_log_callback(log_line, nullptr);

  Backend b;
  if (*mk || *tr || *sp || *ab)
    if (ds_status s = open_backend(b); s != DS_OK) return report(s);

  if (*mk) return report(ds_make_triplet(b.h, out.c_str(), seed));
  if (*an) {
    std::vector<const char*> ptrs;
    for (const auto& a : archives) ptrs.push_back(a.c_str());
    return report(ds_analyze(nullptr, ptrs.data(), ptrs.size(), pca_dim, seed, out.c_str()));
  }
  if (*tr)
    return report(ds_train(b.h, triplet.c_str(), selection.c_str(), opt(config), out.c_str(), seed, checkpoint_every,
                           resume ? 1 : 0));
  if (*sp) return report(ds_sample_pairs(b.h, ckpt.c_str(), n, S, out.c_str(), seed));
  if (*di) return report(ds_distill(pairs.c_str(), gt.c_str(), out.c_str(), seed, epochs, reg_every, lr));
  if (*ex) return report(ds_extract(ckpt.c_str(), image.c_str(), out.c_str()));
  if (*ev) return report(ds_eval(pred.c_str(), gt.c_str(), out.c_str(), style.c_str()));
  if (*ab)
    return report(
        ds_ablate(b.h, triplet.c_str(), selection.c_str(), opt(config), out.c_str(), seed, eval_pairs));
  return DS_ERR_USAGE;
}
