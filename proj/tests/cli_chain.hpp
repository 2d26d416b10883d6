// Drives the command-line tool through every subcommand.
#pragma once

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "tempdir.hpp"

namespace cli {

inline int run(const std::string& exe, const std::filesystem::path& cwd, const std::string& args) {
  const std::string cmd = "cd '" + cwd.string() + "' && '" + exe + "' -q " + args + " >/dev/null 2>&1";
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

// Relative path -> file bytes for every regular file under dir.
inline std::map<std::string, std::string> snapshot(const std::filesystem::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : std::filesystem::recursive_directory_iterator(dir))
    if (e.is_regular_file()) out[std::filesystem::relative(e.path(), dir).string()] = slurp(e.path());
  return out;
}

struct Step {
  std::string name;
  std::string args;
};

// Full pipeline at toy scale. The ground-truth directory for eval is prepared
// from the first triplet's sketch before the eval step runs.
inline std::vector<Step> chain() {
  return {
      {"make-triplet", "--seed 1 make-triplet --out t0"},
      {"make-triplet", "--seed 2 make-triplet --out t1"},
      {"analyze", "--seed 3 analyze --archives t0 t1 --pca-dim 8 --out sel.json"},
      {"train", "--seed 4 train --triplet t0 --selection sel.json --config train.json --out ckpt"},
      {"sample-pairs", "--seed 5 sample-pairs --ckpt ckpt --n 12 --S 100 --out pairs"},
      {"distill", "--seed 6 distill --pairs pairs --gt t0 --out student --epochs 2"},
      {"extract", "extract --ckpt student --image t0/source.png --out pred/sketch.png"},
      {"eval", "eval --pred pred --gt gt --out eval.csv --style toy"},
      {"ablate", "--seed 7 ablate --triplet t0 --selection sel.json --config train.json --out ablation.csv "
                 "--eval-pairs 2"},
  };
}

// Runs the chain in a fresh dir. Returns the first failing step name, or "".
inline std::string run_chain(const std::string& exe, const std::filesystem::path& dir) {
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir / "gt");
  std::ofstream(dir / "train.json") << R"({"iterations": 5, "learning_rate": 0.001, "cdst_S": 4})";
  for (const auto& s : chain()) {
    if (s.name == "eval") std::filesystem::copy_file(dir / "t0" / "sketch.png", dir / "gt" / "sketch.png");
    if (run(exe, dir, s.args) != 0) return s.name;
  }
  return "";
}

}  // namespace cli
