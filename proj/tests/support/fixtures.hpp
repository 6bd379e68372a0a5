#pragma once

#include <atomic>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <unistd.h>

#include "ream/corpus.hpp"

namespace ream::testing {

// Removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("ream_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline EvalSample make_sample(const std::string& id, const std::string& query,
                              std::vector<std::string> refs,
                              std::vector<std::pair<std::string, double>> responses) {
  EvalSample s;
  s.query.id = id;
  s.query.text = query;
  for (auto& r : refs) s.references.push_back({std::move(r), std::nullopt, {}});
  int i = 0;
  for (auto& [text, h] : responses)
    s.model_responses.push_back({text, h, "sys" + std::to_string(i++), {}});
  tokenize_sample(s, Tokenizer{});
  return s;
}

inline Corpus small_corpus(int queries = 6, std::uint64_t seed = 3, int pool = 12) {
  SynthConfig cfg;
  cfg.num_queries = queries;
  cfg.pool_size_per_query = pool;
  cfg.num_model_responses = 12;
  cfg.seed = seed;
  return synth_generate(cfg);
}

}  // namespace ream::testing
