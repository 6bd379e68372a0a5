#include "ream/augmentor.hpp"

#include <numeric>
#include <random>

#include "ream/errors.hpp"

namespace ream::augment {

namespace {

class EncodingMemo {
 public:
  EncodingMemo(std::shared_ptr<const EmbeddingProvider> provider,
               std::shared_ptr<const model::ModelParams> params)
      : provider_(std::move(provider)), params_(std::move(params)) {}

  double score(std::string_view query, std::span<const std::string> refs) {
    if (refs.empty()) throw ValidationError("cannot score an empty reference set");
    model::Matrix nodes(static_cast<Eigen::Index>(refs.size()),
                        static_cast<Eigen::Index>(provider_->dimension()));
    for (std::size_t i = 0; i < refs.size(); ++i) {
      const auto& v = encoding(query, refs[i]);
      for (std::size_t d = 0; d < v.size(); ++d)
        nodes(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(d)) = v[d];
    }
    return model::forward(nodes, *params_);
  }

 private:
  const EmbeddingVector& encoding(std::string_view query, const std::string& text) {
    std::string key(query);
    key += '\x1f';
    key += text;
    {
      std::lock_guard lock(mu_);
      if (auto it = memo_.find(key); it != memo_.end()) return it->second;
    }
    auto v = provider_->encode_pair(query, text);
    std::lock_guard lock(mu_);
    return memo_.try_emplace(std::move(key), std::move(v)).first->second;
  }

  std::shared_ptr<const EmbeddingProvider> provider_;
  std::shared_ptr<const model::ModelParams> params_;
  std::mutex mu_;
  std::unordered_map<std::string, EmbeddingVector> memo_;
};

}  // namespace

SetScorer model_scorer(std::shared_ptr<const EmbeddingProvider> provider,
                       std::shared_ptr<const model::ModelParams> params) {
  if (!provider || !params) throw ValidationError("model_scorer needs a provider and parameters");
  if (provider->dimension() != params->input_dim())
    throw ValidationError("provider dimension " + std::to_string(provider->dimension()) +
                          " does not match model input dimension " +
                          std::to_string(params->input_dim()));
  auto memo = std::make_shared<EncodingMemo>(std::move(provider), std::move(params));
  return [memo](std::string_view query, std::span<const std::string> refs) {
    return memo->score(query, refs);
  };
}

SetScorer oracle_scorer(std::shared_ptr<const EvalSample> sample, model::Labeler labeler) {
  if (!sample) throw ValidationError("oracle_scorer needs a sample");
  return [sample = std::move(sample), labeler = std::move(labeler)](
             std::string_view, std::span<const std::string> refs) {
    return labeler(*sample, refs);
  };
}

std::vector<std::size_t> visit_order(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(stable_hash("auto_augment", seed));
  std::shuffle(order.begin(), order.end(), rng);
  return order;
}

AugmentResult auto_augment(std::string_view query, std::span<const std::string> init_set,
                           std::span<const std::string> candidates, const SetScorer& scorer,
                           std::uint64_t seed) {
  if (init_set.empty()) throw ValidationError("auto_augment: empty initial set");
  AugmentResult out;
  out.final_set.assign(init_set.begin(), init_set.end());
  double current = 0.0;
  try {
    current = scorer(query, out.final_set);
  } catch (const std::exception& e) {
    out.trace.incomplete = true;
    out.trace.error = e.what();
    return out;
  }
  out.initial_score = current;
  for (std::size_t i : visit_order(candidates.size(), seed)) {
    out.final_set.push_back(candidates[i]);
    double after = 0.0;
    try {
      after = scorer(query, out.final_set);
    } catch (const std::exception& e) {
      out.final_set.pop_back();
      out.trace.incomplete = true;
      out.trace.error = e.what();
      break;
    }
    AugmentStep step{candidates[i], current, after, after > current};
    if (step.kept)
      current = after;
    else
      out.final_set.pop_back();
    out.trace.steps.push_back(std::move(step));
  }
  return out;
}

nlohmann::json to_json(const AugmentResult& result) {
  auto steps = nlohmann::json::array();
  for (const auto& s : result.trace.steps)
    steps.push_back({{"candidate", s.candidate},
                     {"score_before", s.score_before},
                     {"score_after", s.score_after},
                     {"kept", s.kept}});
  nlohmann::json j{{"final_set", result.final_set},
                   {"initial_score", result.initial_score},
                   {"steps", steps},
                   {"incomplete", result.trace.incomplete}};
  if (result.trace.incomplete) j["error"] = result.trace.error;
  return j;
}

std::string to_string(CandidateStatus status) {
  switch (status) {
    case CandidateStatus::pending: return "pending";
    case CandidateStatus::retained: return "retained";
    case CandidateStatus::edited_retained: return "edited_retained";
    case CandidateStatus::abandoned: return "abandoned";
  }
  return "?";
}

std::string to_string(DecisionKind kind) {
  switch (kind) {
    case DecisionKind::retain: return "retain";
    case DecisionKind::edit: return "edit";
    case DecisionKind::skip: return "skip";
  }
  return "?";
}

DecisionKind decision_from_string(std::string_view name) {
  if (name == "retain") return DecisionKind::retain;
  if (name == "edit") return DecisionKind::edit;
  if (name == "skip") return DecisionKind::skip;
  throw ValidationError("unknown action '" + std::string(name) + "' (retain, edit or skip)");
}

std::string to_string(Outcome outcome) {
  switch (outcome) {
    case Outcome::retained: return "retained";
    case Outcome::edited_retained: return "edited_retained";
    case Outcome::retain_rejected: return "retain_rejected";
    case Outcome::edit_failed: return "edit_failed";
    case Outcome::abandoned: return "abandoned";
    case Outcome::skipped: return "skipped";
  }
  return "?";
}

AnnotationSession::AnnotationSession(std::string id, std::string query,
                                     std::vector<std::string> init_set,
                                     std::vector<std::string> candidates, SetScorer scorer,
                                     int max_attempts)
    : id_(std::move(id)),
      query_(std::move(query)),
      refs_(std::move(init_set)),
      scorer_(std::move(scorer)),
      max_attempts_(max_attempts) {
  if (refs_.empty()) throw ValidationError("session needs a non-empty initial reference set");
  if (max_attempts_ < 0) throw ValidationError("max_attempts must be >= 0");
  if (!scorer_) throw ValidationError("session needs a scorer");
  for (auto& c : candidates) {
    if (c.empty()) throw ValidationError("empty candidate text");
    candidates_.push_back({std::move(c), CandidateStatus::pending, 0, std::nullopt});
  }
  history_.push_back(scorer_(query_, refs_));
  if (!finished()) tentative_ = score_with(candidates_[cursor_].text);
}

std::optional<std::size_t> AnnotationSession::pending_index() const {
  if (finished()) return std::nullopt;
  return cursor_;
}

double AnnotationSession::score_with(std::string_view extra) const {
  std::vector<std::string> set = refs_;
  set.emplace_back(extra);
  return scorer_(query_, set);
}

void AnnotationSession::advance() {
  ++cursor_;
  tentative_.reset();
  if (!finished()) tentative_ = score_with(candidates_[cursor_].text);
}

Feedback AnnotationSession::decide(const Decision& decision) {
  if (finished()) throw StateError("session " + id_ + " is finished");
  if (decision.kind == DecisionKind::edit && decision.text.empty())
    throw ValidationError("edit requires non-empty text");
  if (!tentative_) tentative_ = score_with(candidates_[cursor_].text);

  SessionCandidate& cand = candidates_[cursor_];
  const double before = current_score();
  DecisionRecord rec{cursor_, decision.kind, decision.text, Outcome::retained, before, before};
  Feedback fb;

  switch (decision.kind) {
    case DecisionKind::retain: {
      const double after = *tentative_;
      rec.score_after = after;
      if (after > before) {
        rec.outcome = Outcome::retained;
        cand.status = CandidateStatus::retained;
        cand.accepted_text = cand.text;
        refs_.push_back(cand.text);
        history_.push_back(after);
        fb.message = "candidate retained";
      } else {
        rec.outcome = Outcome::retain_rejected;
        fb.message = "the candidate does not improve the reference set; edit it or skip";
      }
      break;
    }
    case DecisionKind::edit: {
      const double after = score_with(decision.text);
      rec.score_after = after;
      if (after > before) {
        rec.outcome = Outcome::edited_retained;
        cand.status = CandidateStatus::edited_retained;
        cand.accepted_text = decision.text;
        refs_.push_back(decision.text);
        history_.push_back(after);
        fb.message = "edited candidate retained";
      } else if (cand.attempts < max_attempts_) {
        rec.outcome = Outcome::edit_failed;
        ++cand.attempts;
        fb.message = "edit did not improve the score (" + std::to_string(cand.attempts) + "/" +
                     std::to_string(max_attempts_) + " attempts used)";
      } else {
        rec.outcome = Outcome::abandoned;
        cand.status = CandidateStatus::abandoned;
        fb.message = "no attempts left; candidate abandoned";
      }
      break;
    }
    case DecisionKind::skip:
      rec.outcome = Outcome::skipped;
      cand.status = CandidateStatus::abandoned;
      fb.message = "candidate skipped";
      break;
  }

  fb.outcome = rec.outcome;
  fb.score = rec.score_after;
  fb.delta = rec.score_after - before;
  log_.push_back(rec);
  if (cand.status != CandidateStatus::pending) advance();
  return fb;
}

nlohmann::json AnnotationSession::view() const {
  nlohmann::json pending = nullptr;
  if (auto i = pending_index())
    pending = {{"index", *i},
               {"text", candidates_[*i].text},
               {"attempts_used", candidates_[*i].attempts}};
  nlohmann::json tentative = nullptr, delta = nullptr;
  if (tentative_) {
    tentative = *tentative_;
    delta = *tentative_ - current_score();
  }
  return {{"id", id_},
          {"query", query_},
          {"references", refs_},
          {"pending", pending},
          {"current_score", current_score()},
          {"tentative_score", tentative},
          {"delta", delta},
          {"attempts_used", pending.is_null() ? 0 : candidates_[cursor_].attempts},
          {"max_attempts", max_attempts_},
          {"history", history_},
          {"remaining", candidates_.size() - std::min(cursor_, candidates_.size())},
          {"finished", finished()}};
}

nlohmann::json AnnotationSession::export_json() const {
  auto cands = nlohmann::json::array();
  for (const auto& c : candidates_) {
    nlohmann::json j{{"text", c.text}, {"status", to_string(c.status)}, {"attempts", c.attempts}};
    j["accepted_text"] = c.accepted_text ? nlohmann::json(*c.accepted_text) : nlohmann::json();
    cands.push_back(std::move(j));
  }
  auto decisions = nlohmann::json::array();
  for (const auto& d : log_) {
    nlohmann::json j{{"candidate", d.candidate},
                     {"action", to_string(d.kind)},
                     {"outcome", to_string(d.outcome)},
                     {"score_before", d.score_before},
                     {"score_after", d.score_after}};
    if (d.kind == DecisionKind::edit) j["text"] = d.text;
    decisions.push_back(std::move(j));
  }
  return {{"id", id_},
          {"query", query_},
          {"references", refs_},
          {"candidates", cands},
          {"max_attempts", max_attempts_},
          {"history", history_},
          {"decisions", decisions},
          {"finished", finished()}};
}

std::shared_ptr<SessionStore::Entry> SessionStore::create(std::string query,
                                                         std::vector<std::string> init_set,
                                                         std::vector<std::string> candidates,
                                                         SetScorer scorer, int max_attempts) {
  std::string id;
  {
    std::lock_guard lock(mu_);
    id = "s" + std::to_string(next_id_++);
  }
  auto entry = std::make_shared<Entry>();
  entry->session = std::make_unique<AnnotationSession>(id, std::move(query), std::move(init_set),
                                                       std::move(candidates), std::move(scorer),
                                                       max_attempts);
  std::lock_guard lock(mu_);
  sessions_.emplace(id, entry);
  order_.push_back(id);
  return entry;
}

std::shared_ptr<SessionStore::Entry> SessionStore::find(const std::string& id) const {
  std::lock_guard lock(mu_);
  auto it = sessions_.find(id);
  return it == sessions_.end() ? nullptr : it->second;
}

std::vector<std::string> SessionStore::ids() const {
  std::lock_guard lock(mu_);
  return order_;
}

std::size_t SessionStore::size() const {
  std::lock_guard lock(mu_);
  return sessions_.size();
}

}  // namespace ream::augment
