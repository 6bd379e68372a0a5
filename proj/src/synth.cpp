#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <unordered_map>

#include "ream/corpus.hpp"
#include "ream/errors.hpp"

namespace ream {

void SynthConfig::validate() const {
  if (num_queries < 0) throw ValidationError("num_queries must be >= 0");
  if (pool_size_per_query < 1) throw ValidationError("pool_size_per_query must be positive");
  if (num_model_responses < 3) throw ValidationError("num_model_responses must be >= 3");
  if (latent_dim < 2) throw ValidationError("latent_dim must be >= 2");
  if (!(noise_std >= 0.0)) throw ValidationError("noise_std must be >= 0");
  if (aspects_per_query < 1) throw ValidationError("aspects_per_query must be positive");
  if (high_quality_fraction < 0.0 || high_quality_fraction > 1.0)
    throw ValidationError("high_quality_fraction must lie in [0,1]");
  if (!(high_quality_spread >= 0.0)) throw ValidationError("high_quality_spread must be >= 0");
}

namespace {

using Vec = std::vector<double>;
using Phrase = std::vector<std::string>;

constexpr int kGenericWords = 30;
constexpr int kGenericPhrases = 6;
constexpr int kPhrasesPerAspect = 6;
constexpr int kWordsPerAspect = 8;
constexpr int kPhraseLen = 3;
constexpr int kMinChunks = 6;
constexpr int kMaxChunks = 10;
constexpr double kAspectWordSpread = 0.35;

void normalize(Vec& v) {
  double n = 0;
  for (double x : v) n += x * x;
  n = std::sqrt(n);
  if (n > 0)
    for (double& x : v) x /= n;
}

double dot(const Vec& a, const Vec& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

class Generator {
 public:
  explicit Generator(const SynthConfig& cfg) : cfg_(cfg), rng_(cfg.world_seed) {
    for (int i = 0; i < kGenericWords; ++i) {
      std::string w = fresh_word(1);
      latent_[w] = random_unit();
      generic_words_.push_back(w);
    }
    std::uniform_int_distribution<int> len(2, 3);
    std::uniform_int_distribution<int> pick(0, kGenericWords - 1);
    for (int i = 0; i < kGenericPhrases; ++i) {
      Phrase p;
      for (int j = len(rng_); j > 0; --j) p.push_back(generic_words_[pick(rng_)]);
      generic_phrases_.push_back(std::move(p));
    }
    rng_.seed(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  }

  EvalSample sample(int index) {
    struct Aspect {
      Vec gold;
      std::vector<Phrase> phrases;
      std::vector<std::string> words;
    };
    std::vector<Aspect> aspects(cfg_.aspects_per_query);
    for (auto& a : aspects) {
      a.gold = random_unit();
      for (int i = 0; i < kWordsPerAspect; ++i) {
        std::string w = fresh_word(2);
        Vec v = random_unit();
        for (std::size_t d = 0; d < v.size(); ++d) v[d] = a.gold[d] + kAspectWordSpread * v[d];
        normalize(v);
        latent_[w] = std::move(v);
        a.words.push_back(std::move(w));
      }
      std::uniform_int_distribution<int> pick(0, kWordsPerAspect - 1);
      for (int i = 0; i < kPhrasesPerAspect; ++i) {
        Phrase p;
        for (int j = 0; j < kPhraseLen; ++j) p.push_back(a.words[pick(rng_)]);
        a.phrases.push_back(std::move(p));
      }
    }

    auto max_cos = [&](const Tokens& toks) {
      Vec v(cfg_.latent_dim, 0.0);
      for (const auto& t : toks) {
        const Vec& w = latent_.at(t);
        for (std::size_t d = 0; d < v.size(); ++d) v[d] += w[d];
      }
      normalize(v);
      double best = -1.0;
      for (const auto& a : aspects) best = std::max(best, dot(v, a.gold));
      return best;
    };

    // p_aspect: probability that each chunk is an aspect phrase (else generic).
    auto make_text = [&](const Aspect& a, double p_aspect) {
      std::uniform_int_distribution<int> chunks(kMinChunks, kMaxChunks);
      std::uniform_int_distribution<int> ap(0, kPhrasesPerAspect - 1);
      std::uniform_int_distribution<int> gp(0, kGenericPhrases - 1);
      std::bernoulli_distribution use_aspect(p_aspect);
      Tokens toks;
      for (int c = chunks(rng_); c > 0; --c) {
        const Phrase& p = use_aspect(rng_) ? a.phrases[ap(rng_)] : generic_phrases_[gp(rng_)];
        toks.insert(toks.end(), p.begin(), p.end());
      }
      return toks;
    };

    std::uniform_int_distribution<int> pick_aspect(0, cfg_.aspects_per_query - 1);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    auto clamp01 = [](double x) { return std::clamp(x, 0.0, 1.0); };

    EvalSample s;
    s.query.id = "q" + std::to_string(index);
    {
      Tokens q;
      for (const auto& a : aspects) q.push_back(a.words[0]);
      const Phrase& g = generic_phrases_[std::uniform_int_distribution<int>(
          0, kGenericPhrases - 1)(rng_)];
      q.insert(q.begin(), g.begin(), g.end());
      s.query.text = join(q);
      s.query.tokens = std::move(q);
    }

    double hq = cfg_.high_quality_fraction;
    if (cfg_.high_quality_spread > 0)
      hq = std::clamp(hq + cfg_.high_quality_spread * (2.0 * unit(rng_) - 1.0), 0.0, 1.0);
    std::bernoulli_distribution high(hq);
    for (int i = 0; i < cfg_.pool_size_per_query; ++i) {
      ReferenceResponse r;
      const bool good = high(rng_);
      const Aspect& a = aspects[pick_aspect(rng_)];
      r.tokens = make_text(a, good ? 0.75 + 0.25 * unit(rng_) : 0.0);
      const double sim = clamp01(max_cos(r.tokens));
      r.quality = good ? 4.05 + 0.95 * sim : 1.0 + 2.0 * sim;
      r.text = join(r.tokens);
      s.references.push_back(std::move(r));
    }

    // Responses are stratified over aspects and over aspect-phrase density so
    // every query sees the full quality range.
    std::normal_distribution<double> noise(0.0, 1.0);
    const int nresp = cfg_.num_model_responses;
    std::vector<int> strata(nresp);
    for (int i = 0; i < nresp; ++i) strata[i] = i;
    std::shuffle(strata.begin(), strata.end(), rng_);
    for (int i = 0; i < nresp; ++i) {
      ModelResponse m;
      const Aspect& a = aspects[i % cfg_.aspects_per_query];
      m.tokens = make_text(a, (strata[i] + unit(rng_)) / nresp);
      const double eps = cfg_.noise_std > 0 ? cfg_.noise_std * noise(rng_) : 0.0;
      m.human_score = 1.0 + 4.0 * clamp01(max_cos(m.tokens) + eps);
      m.text = join(m.tokens);
      m.system_tag = "sys" + std::to_string(i);
      s.model_responses.push_back(std::move(m));
    }
    return s;
  }

 private:
  Vec random_unit() {
    std::normal_distribution<double> n(0.0, 1.0);
    Vec v(cfg_.latent_dim);
    for (double& x : v) x = n(rng_);
    normalize(v);
    return v;
  }

  // Pronounceable pseudo-word, unique across the corpus.
  std::string fresh_word(int min_syllables) {
    static constexpr const char* kOnsets[] = {"b", "d", "f", "g", "k", "l", "m", "n",
                                              "p", "r", "s", "t", "v", "z", "sh", "ch"};
    static constexpr const char* kVowels[] = {"a", "e", "i", "o", "u", "ai", "ou"};
    std::uniform_int_distribution<int> on(0, 15), vo(0, 6), extra(0, 1);
    for (int attempt = 0;; ++attempt) {
      std::string w;
      int syl = min_syllables + extra(rng_) + attempt / 32;
      for (int i = 0; i < syl; ++i) (w += kOnsets[on(rng_)]) += kVowels[vo(rng_)];
      if (used_.insert(w).second) return w;
    }
  }

  const SynthConfig& cfg_;
  std::mt19937_64 rng_;
  std::set<std::string> used_;
  std::unordered_map<std::string, Vec> latent_;
  std::vector<std::string> generic_words_;
  std::vector<Phrase> generic_phrases_;
};

}  // namespace

Corpus synth_generate(const SynthConfig& config) {
  config.validate();
  Generator gen(config);
  Corpus out;
  out.reserve(config.num_queries);
  for (int i = 0; i < config.num_queries; ++i) out.push_back(gen.sample(i));
  return out;
}

}  // namespace ream
