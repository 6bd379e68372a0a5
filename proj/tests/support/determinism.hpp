#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "cli.hpp"
#include "fixtures.hpp"

namespace ream::testing {

// Runs synth -> augment-data -> train -> auto-annotate in `dir` and returns
// the produced files (relative name, bytes). Empty on a non-zero exit.
inline std::vector<std::pair<std::string, std::string>> run_pipeline(
    const std::filesystem::path& dir, const std::string& seed, const std::string& jobs = "1") {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  const auto p = [&](const char* n) { return (dir / n).string(); };
  const std::vector<std::vector<std::string>> cmds{
      {"ream", "synth", "--queries", "12", "--pool", "16", "--seed", seed, "--out", p("c.jsonl"),
       "--quiet"},
      {"ream", "augment-data", "--corpus", p("c.jsonl"), "--ks", "2,4", "--per-k", "2", "--seed",
       seed, "--out", p("i.jsonl"), "--quiet"},
      {"ream", "train", "--corpus", p("c.jsonl"), "--instances", p("i.jsonl"), "--provider",
       "hash", "--dim", "16", "--epochs", "3", "--batch-size", "8", "--seed", seed, "--jobs",
       jobs, "--out", p("m.ckpt"), "--quiet"},
      {"ream", "auto-annotate", "--model", p("m.ckpt"), "--corpus", p("c.jsonl"), "--seed", seed,
       "--out", p("a.json"), "--quiet"},
  };
  for (const auto& c : cmds)
    if (cli::run(c) != 0) return {};
  std::vector<std::pair<std::string, std::string>> out;
  for (const char* n : {"c.jsonl", "i.jsonl", "m.ckpt", "m.ckpt.json", "m.ckpt.history.json",
                        "a.json"})
    out.emplace_back(n, read_file(dir / n));
  return out;
}

}  // namespace ream::testing
