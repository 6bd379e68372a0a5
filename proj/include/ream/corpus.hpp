#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ream/text.hpp"

namespace ream {

struct Query {
  std::string id;
  std::string text;
  Tokens tokens;
};

struct ReferenceResponse {
  std::string text;
  std::optional<double> quality;  // human quality score in [1,5]
  Tokens tokens;
};

struct ModelResponse {
  std::string text;
  double human_score = 1.0;  // [1,5]
  std::string system_tag;
  Tokens tokens;
};

// One query with its reference pool, the model responses and their human
// scores. The unit of labeling and evaluation.
struct EvalSample {
  Query query;
  std::vector<ReferenceResponse> references;
  std::vector<ModelResponse> model_responses;

  // Throws ValidationError when an invariant does not hold.
  void validate() const;

  std::vector<double> human_scores() const;
  std::vector<std::string> reference_texts(std::span<const std::size_t> indices) const;
};

// A k-combination of a sample's reference pool.
struct RefSetInstance {
  std::string sample_id;
  std::vector<std::size_t> member_indices;  // sorted, distinct

  std::size_t k() const { return member_indices.size(); }
  void validate(const EvalSample& sample) const;
};

using Corpus = std::vector<EvalSample>;

// Re-tokenizes every text of the sample in place.
void tokenize_sample(EvalSample& sample, const Tokenizer& tokenizer);

// JSONL, one sample per line. Blank lines are skipped.
Corpus load_corpus(const std::filesystem::path& path, const Tokenizer& tokenizer = {});
Corpus parse_corpus(std::string_view jsonl, const Tokenizer& tokenizer = {});
void save_corpus(const std::filesystem::path& path, const Corpus& corpus);
std::string dump_sample(const EvalSample& sample);

std::vector<RefSetInstance> load_instances(const std::filesystem::path& path);
void save_instances(const std::filesystem::path& path, std::span<const RefSetInstance> instances);

// C(n, k), saturating at uint64 max.
std::uint64_t binomial(std::uint64_t n, std::uint64_t k);

// For every k <= n, samples min(per_k, C(n,k)) distinct k-combinations of the
// sample's reference pool uniformly without replacement. Deterministic in
// (sample id, seed).
std::vector<RefSetInstance> augment_combinations(const EvalSample& sample,
                                                 std::span<const int> ks, int per_k,
                                                 std::uint64_t seed);

struct SynthConfig {
  int num_queries = 50;
  int pool_size_per_query = 40;
  int num_model_responses = 30;
  int latent_dim = 16;
  double noise_std = 0.1;
  std::uint64_t seed = 0;
  // Seeds the filler vocabulary shared by all queries. Corpora generated with
  // the same world_seed and different seeds share that vocabulary.
  std::uint64_t world_seed = 0;
  // Generator shape. Not part of the on-disk corpus.
  int aspects_per_query = 2;
  double high_quality_fraction = 0.7;
  // When > 0 each query draws its own high-quality fraction uniformly from
  // high_quality_fraction +/- high_quality_spread (clamped to [0,1]).
  double high_quality_spread = 0.0;

  void validate() const;
};

// Synthetic benchmark. Every query owns a few latent "aspects" (unit vectors
// with their own phrase vocabulary). Texts are sequences of aspect phrases and
// generic filler phrases shared across the corpus; a text's latent vector is
// the normalized sum of its word vectors. High-quality references are mostly
// aspect phrases, low-quality ones are pure filler. Human scores are an affine
// map of the max cosine to the query's aspects plus Gaussian noise, clamped
// to [1,5].
Corpus synth_generate(const SynthConfig& config);

struct RetrievalCandidate {
  std::size_t pool_index;
  std::string query_text;
  std::string response_text;
  double similarity;
};

struct PoolEntry {
  std::string query_text;
  std::string response_text;
};

// Ranks pool entries by Jaccard similarity between the token sets of the
// input query and each pool query. Ties keep pool order.
std::vector<RetrievalCandidate> jaccard_retrieve(const Query& query,
                                                 std::span<const PoolEntry> pool, int top_k,
                                                 const Tokenizer& tokenizer = {});

double jaccard_similarity(const Tokens& a, const Tokens& b);

// Pool of (query, reference) pairs built from a corpus, skipping the sample
// whose id equals `exclude_id`.
std::vector<PoolEntry> pool_from_corpus(const Corpus& corpus, std::string_view exclude_id = {});

}  // namespace ream
