#pragma once

#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "ream/corpus.hpp"
#include "ream/embeddings.hpp"

namespace ream::metrics {

enum class MetricKind { sentence_bleu, corpus_bleu_multi, embed_f1 };
enum class Smoothing { none, add_epsilon };

inline constexpr double kSmoothingEpsilon = 1e-9;

struct MetricConfig {
  MetricKind kind = MetricKind::sentence_bleu;
  int max_n = 4;
  Smoothing smoothing = Smoothing::add_epsilon;
  std::vector<double> weights;  // empty means uniform 1/max_n

  void validate() const;
  std::vector<double> effective_weights() const;
  // CLI spelling: "bleu-star", "corpus-bleu" or "embed".
  std::string name() const;
  static MetricConfig from_name(std::string_view name);
};

// Smoothed sentence BLEU against one reference. Orders longer than the
// candidate are dropped and the remaining weights renormalized, so a
// candidate identical to its reference always scores 1. A zero unigram
// precision gives 0. With add_epsilon smoothing, a zero match count at order
// n >= 2 becomes epsilon / (number of candidate n-grams); without smoothing
// any zero precision gives 0.
double sentence_bleu(const Tokens& candidate, const Tokens& reference,
                     const MetricConfig& config = {});

using SingleRefMetric = std::function<double(const Tokens&, const Tokens&)>;

// max over r in refs of base(candidate, r).
double multi_ref_score(const Tokens& candidate, std::span<const Tokens> refs,
                       const SingleRefMetric& base);

// Corpus-level multi-reference BLEU. Clipped n-gram counts (clip = max count
// over the sample's references) and candidate n-gram totals are summed over
// the corpus before the precisions are formed; the brevity penalty uses the
// closest reference length per sample (shorter wins ties), summed.
double corpus_bleu_multi(std::span<const Tokens> candidates,
                         std::span<const std::vector<Tokens>> refsets,
                         const MetricConfig& config = {});

using TokenVectors = std::vector<EmbeddingVector>;

// Greedy-matching F1 over token vectors: precision averages each candidate
// token's best cosine against the reference tokens, recall the reverse.
double embed_f1(const TokenVectors& candidate, const TokenVectors& reference);
double embed_f1(std::string_view candidate, std::string_view reference,
                const EmbeddingProvider& encoder);

struct Correlation {
  double value = 0.0;
  bool degenerate = false;  // zero variance (or all ties) in an input
};

// Product-moment correlation. Requires equal lengths >= 3.
Correlation pearson(std::span<const double> xs, std::span<const double> ys);
// Kendall tau-b in O(n log n).
Correlation kendall(std::span<const double> xs, std::span<const double> ys);

// Scores a sample's model responses against a reference set with a fixed
// metric configuration. Thread-safe; token vectors for the embedding metric
// are memoized per text.
class Metric {
 public:
  explicit Metric(MetricConfig config, std::shared_ptr<const EmbeddingProvider> encoder = nullptr,
                  Tokenizer tokenizer = {});

  const MetricConfig& config() const { return cfg_; }
  std::string name() const { return cfg_.name(); }

  std::vector<double> score_responses(const EvalSample& sample,
                                      std::span<const std::string> reference_texts) const;
  // Single response against a reference set (max over references for
  // sentence_bleu and embed_f1; pooled multi-reference BLEU for corpus_bleu_multi).
  double score(const Tokens& response_tokens, std::string_view response_text,
               std::span<const Tokens> ref_tokens, std::span<const std::string> ref_texts) const;

 private:
  const TokenVectors& vectors(const std::string& text) const;

  MetricConfig cfg_;
  std::shared_ptr<const EmbeddingProvider> encoder_;
  Tokenizer tokenizer_;
  mutable std::mutex mu_;
  mutable std::unordered_map<std::string, std::unique_ptr<TokenVectors>> memo_;
};

// Pearson correlation between the metric's scores of the model responses
// (against `reference_texts`) and their human scores.
Correlation reliability(const EvalSample& sample, std::span<const std::string> reference_texts,
                        const Metric& metric);
Correlation label_reliability(const EvalSample& sample, const RefSetInstance& instance,
                              const Metric& metric);

struct ScoreRecord {
  std::string sample_id;
  std::size_t k = 0;
  std::string metric;
  double c = 0.0;
  bool degenerate = false;
};

void save_score_report(const std::filesystem::path& path, std::span<const ScoreRecord> records);
std::vector<ScoreRecord> load_score_report(const std::filesystem::path& path);

}  // namespace ream::metrics
