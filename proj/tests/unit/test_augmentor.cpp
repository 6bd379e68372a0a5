#include <gtest/gtest.h>

#include <random>
#include <set>
#include <thread>

#include "fixtures.hpp"
#include "ream/augmentor.hpp"
#include "ream/errors.hpp"
#include "session_replay.hpp"

using namespace ream;
using namespace ream::augment;
namespace t = ream::testing;

namespace {

std::vector<std::string> texts(int n, const std::string& prefix = "c") {
  std::vector<std::string> v;
  for (int i = 0; i < n; ++i) v.push_back(prefix + std::to_string(i));
  return v;
}

// Score = number of distinct refs whose name ends in an even digit, so
// "odd" candidates never improve.
SetScorer parity_scorer() {
  return [](std::string_view, std::span<const std::string> refs) {
    double s = 0;
    for (const auto& r : refs) s += (r.back() - '0') % 2 == 0 ? 1 : 0;
    return s;
  };
}

}  // namespace

TEST(AutoAugment, KeepsExactlyImprovingCandidatesInVisitOrder) {
  const auto cands = texts(10);
  const std::vector<std::string> init{"i1"};
  const auto r = auto_augment("q", init, cands, parity_scorer(), 5);
  const auto order = visit_order(cands.size(), 5);
  std::vector<std::string> expected = init;
  for (auto i : order)
    if (i % 2 == 0) expected.push_back(cands[i]);
  EXPECT_EQ(r.final_set, expected);
  ASSERT_EQ(r.trace.steps.size(), cands.size());
  for (const auto& s : r.trace.steps) EXPECT_EQ(s.kept, s.score_after > s.score_before);
  EXPECT_FALSE(r.trace.incomplete);
  EXPECT_EQ(r.initial_score, 0.0);
}

TEST(AutoAugment, VisitOrderIsSeededPermutation) {
  const auto a = visit_order(20, 1), b = visit_order(20, 1), c = visit_order(20, 2);
  EXPECT_EQ(a, b);
  EXPECT_NE(a, c);
  EXPECT_EQ(std::set<std::size_t>(a.begin(), a.end()).size(), 20u);
}

TEST(AutoAugment, ScorerFailureFlagsTrace) {
  int calls = 0;
  SetScorer flaky = [&](std::string_view, std::span<const std::string> refs) -> double {
    if (++calls == 4) throw TransportError("down");
    return static_cast<double>(refs.size());
  };
  const auto cands = texts(6);
  const std::vector<std::string> init{"x"};
  const auto r = auto_augment("q", init, cands, flaky, 0);
  EXPECT_TRUE(r.trace.incomplete);
  EXPECT_EQ(r.trace.steps.size(), 2u);
  EXPECT_EQ(r.final_set.size(), 3u);
  EXPECT_NE(r.trace.error.find("down"), std::string::npos);
  EXPECT_TRUE(to_json(r).at("incomplete").get<bool>());
}

TEST(Scorers, ModelScorerMatchesPredict) {
  ProviderConfig cfg;
  cfg.dimension = 8;
  auto prov = std::make_shared<const HashProvider>(cfg);
  auto params = std::make_shared<const model::ModelParams>(model::ModelParams::init(8, 8, 1));
  const auto scorer = model_scorer(prov, params);
  const std::vector<std::string> refs{"a b", "c d e"};
  EXPECT_EQ(scorer("q", refs), model::predict(*prov, *params, "q", refs));
  EXPECT_EQ(scorer("q", refs), scorer("q", refs));
  auto wrong = std::make_shared<const model::ModelParams>(model::ModelParams::init(4, 4, 1));
  EXPECT_THROW(model_scorer(prov, wrong), ValidationError);
}

TEST(Scorers, OracleScorerUsesLabeler) {
  auto sample = std::make_shared<const EvalSample>(t::small_corpus(1)[0]);
  metrics::Metric m{metrics::MetricConfig{}};
  const auto labeler = model::metric_labeler(m);
  const auto scorer = oracle_scorer(sample, labeler);
  const std::vector<std::string> refs{sample->references[0].text};
  EXPECT_EQ(scorer("ignored", refs), labeler(*sample, refs));
}

TEST(Session, RetainRejectedLeavesStateUnchanged) {
  AnnotationSession s("s", "q", {"i1"}, {"c1", "c2"}, parity_scorer());
  EXPECT_EQ(*s.tentative_score(), 0.0);
  const auto fb = s.decide({DecisionKind::retain, {}});
  EXPECT_EQ(fb.outcome, Outcome::retain_rejected);
  EXPECT_EQ(s.pending_index(), 0u);
  EXPECT_EQ(s.references().size(), 1u);
  EXPECT_EQ(s.history().size(), 1u);
}

TEST(Session, RetainAndEditRetain) {
  AnnotationSession s("s", "q", {"i1"}, {"c2", "c3"}, parity_scorer());
  auto fb = s.decide({DecisionKind::retain, {}});
  EXPECT_EQ(fb.outcome, Outcome::retained);
  EXPECT_EQ(fb.delta, 1.0);
  fb = s.decide({DecisionKind::edit, "e4"});
  EXPECT_EQ(fb.outcome, Outcome::edited_retained);
  EXPECT_TRUE(s.finished());
  EXPECT_EQ(s.references(), (std::vector<std::string>{"i1", "c2", "e4"}));
  EXPECT_EQ(s.history(), (std::vector<double>{0, 1, 2}));
  EXPECT_EQ(s.candidates()[1].status, CandidateStatus::edited_retained);
  EXPECT_EQ(*s.candidates()[1].accepted_text, "e4");
  EXPECT_THROW(s.decide({DecisionKind::skip, {}}), StateError);
}

TEST(Session, EditAttemptsExhaustThenAbandon) {
  AnnotationSession s("s", "q", {"i1"}, {"c1"}, parity_scorer(), 3);
  for (int i = 1; i <= 3; ++i) {
    const auto fb = s.decide({DecisionKind::edit, "e1"});
    EXPECT_EQ(fb.outcome, Outcome::edit_failed);
    EXPECT_EQ(s.candidates()[0].attempts, i);
  }
  EXPECT_EQ(s.decide({DecisionKind::edit, "e3"}).outcome, Outcome::abandoned);
  EXPECT_TRUE(s.finished());
  EXPECT_EQ(s.candidates()[0].status, CandidateStatus::abandoned);
  EXPECT_EQ(s.references().size(), 1u);
}

TEST(Session, ZeroAttemptsAbandonsOnFirstFailure) {
  AnnotationSession s("s", "q", {"i1"}, {"c1"}, parity_scorer(), 0);
  EXPECT_EQ(s.decide({DecisionKind::edit, "e1"}).outcome, Outcome::abandoned);
}

TEST(Session, SkipAndValidation) {
  AnnotationSession s("s", "q", {"i1"}, {"c1", "c2"}, parity_scorer());
  EXPECT_THROW(s.decide({DecisionKind::edit, ""}), ValidationError);
  EXPECT_EQ(s.decide({DecisionKind::skip, {}}).outcome, Outcome::skipped);
  EXPECT_EQ(s.pending_index(), 1u);
  EXPECT_THROW(AnnotationSession("s", "q", {}, {"c"}, parity_scorer()), ValidationError);
  EXPECT_THROW(AnnotationSession("s", "q", {"i"}, {"c"}, parity_scorer(), -1), ValidationError);
  EXPECT_EQ(decision_from_string("edit"), DecisionKind::edit);
  EXPECT_THROW(decision_from_string("maybe"), ValidationError);
}

TEST(Session, ViewAndExport) {
  AnnotationSession s("s7", "q", {"i1"}, {"c2"}, parity_scorer());
  auto v = s.view();
  EXPECT_EQ(v["id"], "s7");
  EXPECT_EQ(v["pending"]["text"], "c2");
  EXPECT_EQ(v["delta"].get<double>(), 1.0);
  s.decide({DecisionKind::retain, {}});
  v = s.view();
  EXPECT_TRUE(v["finished"].get<bool>());
  EXPECT_TRUE(v["pending"].is_null());
  const auto e = s.export_json();
  EXPECT_EQ(e["decisions"].size(), 1u);
  EXPECT_EQ(e["candidates"][0]["status"], "retained");
}

TEST(Session, ReplayOracleAgrees) {
  std::mt19937_64 rng(11);
  for (int script = 0; script < 50; ++script) {
    const auto cands = texts(2 + static_cast<int>(rng() % 8), "cand" + std::to_string(script) + "_");
    const std::vector<std::string> init{"init" + std::to_string(script)};
    const int max_attempts = static_cast<int>(rng() % 4);
    AnnotationSession s("s", "q", init, cands, t::toy_scorer(), max_attempts);
    std::vector<t::ScriptStep> steps;
    while (!s.finished()) {
      steps.push_back(t::choose(rng, s.view()));
      s.decide({steps.back().kind, steps.back().text});
    }
    const auto oracle = t::replay(init, cands, max_attempts, steps);
    EXPECT_EQ(s.references(), oracle.final_set);
    EXPECT_EQ(s.history(), oracle.history);
    EXPECT_EQ(s.history().size(), 1 + oracle.mutations);
    for (const auto& a : oracle.abandoned)
      EXPECT_EQ(std::count(s.references().begin(), s.references().end(), a), 0);
  }
}

TEST(SessionStore, IdsAndConcurrentDecisions) {
  SessionStore store;
  auto a = store.create("q", {"i"}, texts(200), t::toy_scorer(), 3);
  auto b = store.create("q", {"i"}, texts(5), t::toy_scorer(), 3);
  EXPECT_EQ(a->session->id(), "s1");
  EXPECT_EQ(b->session->id(), "s2");
  EXPECT_EQ(store.ids(), (std::vector<std::string>{"s1", "s2"}));
  EXPECT_EQ(store.find("s3"), nullptr);
  std::vector<std::thread> threads;
  for (int i = 0; i < 4; ++i)
    threads.emplace_back([&] {
      for (;;) {
        std::lock_guard lock(a->mu);
        if (a->session->finished()) return;
        a->session->decide({DecisionKind::skip, {}});
      }
    });
  for (auto& th : threads) th.join();
  EXPECT_EQ(a->session->decisions().size(), 200u);
}
