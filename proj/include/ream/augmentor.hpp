#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "ream/corpus.hpp"
#include "ream/embeddings.hpp"
#include "ream/model.hpp"
#include "ream/training.hpp"

namespace ream::augment {

// Predicted (or gold) reliability of a reference set for a query.
using SetScorer = std::function<double(std::string_view query, std::span<const std::string> refs)>;

// Scores with a trained model. Pair encodings are memoized per (query, text),
// so repeated tentative additions only encode the new candidate. Copies share
// the memo; safe for concurrent use.
SetScorer model_scorer(std::shared_ptr<const EmbeddingProvider> provider,
                       std::shared_ptr<const model::ModelParams> params);

// Scores with the gold labeler of `sample` (the query argument is ignored).
SetScorer oracle_scorer(std::shared_ptr<const EvalSample> sample, model::Labeler labeler);

struct AugmentStep {
  std::string candidate;
  double score_before = 0.0;
  double score_after = 0.0;
  bool kept = false;
};

struct AugmentTrace {
  std::vector<AugmentStep> steps;
  bool incomplete = false;  // the scorer failed; steps stop before the failure
  std::string error;
};

struct AugmentResult {
  std::vector<std::string> final_set;  // init set followed by kept candidates in visit order
  AugmentTrace trace;
  double initial_score = 0.0;
};

// Visits every candidate once in a seed-determined order, tentatively adds it
// to the current set and keeps it iff the score strictly increases. A scorer
// exception ends the loop and returns the set so far with the trace flagged.
AugmentResult auto_augment(std::string_view query, std::span<const std::string> init_set,
                           std::span<const std::string> candidates, const SetScorer& scorer,
                           std::uint64_t seed);

// Visit order used by auto_augment for `n` candidates.
std::vector<std::size_t> visit_order(std::size_t n, std::uint64_t seed);

nlohmann::json to_json(const AugmentResult& result);

enum class CandidateStatus { pending, retained, edited_retained, abandoned };
std::string to_string(CandidateStatus status);

enum class DecisionKind { retain, edit, skip };
std::string to_string(DecisionKind kind);
DecisionKind decision_from_string(std::string_view name);

struct Decision {
  DecisionKind kind = DecisionKind::retain;
  std::string text;  // edit only
};

enum class Outcome {
  retained,         // candidate added as is
  edited_retained,  // edited text added
  retain_rejected,  // retain without improvement; nothing changed, edit instead
  edit_failed,      // edit did not improve; attempt counted
  abandoned,        // edit failed with no attempts left
  skipped,
};
std::string to_string(Outcome outcome);

struct Feedback {
  Outcome outcome = Outcome::retained;
  double score = 0.0;  // score of the evaluated set (current score when nothing was evaluated)
  double delta = 0.0;  // score - current score before the decision
  std::string message;
};

struct SessionCandidate {
  std::string text;
  CandidateStatus status = CandidateStatus::pending;
  int attempts = 0;  // failed edits
  std::optional<std::string> accepted_text;
};

struct DecisionRecord {
  std::size_t candidate = 0;
  DecisionKind kind = DecisionKind::retain;
  std::string text;
  Outcome outcome = Outcome::retained;
  double score_before = 0.0;
  double score_after = 0.0;
};

// Interactive annotation state. Candidates are offered in the given order;
// at most one is pending at a time. `history` starts with the initial score
// and gains one entry per change to the reference set.
class AnnotationSession {
 public:
  static constexpr int kDefaultMaxAttempts = 3;

  AnnotationSession(std::string id, std::string query, std::vector<std::string> init_set,
                    std::vector<std::string> candidates, SetScorer scorer,
                    int max_attempts = kDefaultMaxAttempts);

  // Throws StateError when finished, ValidationError on an empty edit.
  Feedback decide(const Decision& decision);

  const std::string& id() const { return id_; }
  const std::string& query() const { return query_; }
  const std::vector<std::string>& references() const { return refs_; }
  const std::vector<SessionCandidate>& candidates() const { return candidates_; }
  const std::vector<double>& history() const { return history_; }
  const std::vector<DecisionRecord>& decisions() const { return log_; }
  int max_attempts() const { return max_attempts_; }
  bool finished() const { return cursor_ >= candidates_.size(); }
  std::optional<std::size_t> pending_index() const;
  double current_score() const { return history_.back(); }
  // Score of the current set plus the pending candidate as offered.
  std::optional<double> tentative_score() const { return tentative_; }

  nlohmann::json view() const;
  nlohmann::json export_json() const;

 private:
  double score_with(std::string_view extra) const;
  void advance();

  std::string id_;
  std::string query_;
  std::vector<std::string> refs_;
  std::vector<SessionCandidate> candidates_;
  SetScorer scorer_;
  int max_attempts_;
  std::size_t cursor_ = 0;
  std::vector<double> history_;
  std::optional<double> tentative_;
  std::vector<DecisionRecord> log_;
};

// Owns sessions by id; each session has its own lock so decisions on one
// session serialize while distinct sessions proceed concurrently.
class SessionStore {
 public:
  struct Entry {
    std::mutex mu;
    std::unique_ptr<AnnotationSession> session;
  };

  // Assigns the next id ("s1", "s2", ...) and constructs the session.
  std::shared_ptr<Entry> create(std::string query, std::vector<std::string> init_set,
                                std::vector<std::string> candidates, SetScorer scorer,
                                int max_attempts);
  std::shared_ptr<Entry> find(const std::string& id) const;
  std::size_t size() const;
  // Ids in creation order.
  std::vector<std::string> ids() const;

 private:
  mutable std::mutex mu_;
  std::vector<std::string> order_;
  std::unordered_map<std::string, std::shared_ptr<Entry>> sessions_;
  std::uint64_t next_id_ = 1;
};

}  // namespace ream::augment
