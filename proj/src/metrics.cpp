#include "ream/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>

#include <nlohmann/json.hpp>

#include "ream/errors.hpp"

namespace ream::metrics {

void MetricConfig::validate() const {
  if (max_n < 1) throw ValidationError("max_n must be >= 1");
  if (!weights.empty()) {
    if (weights.size() != static_cast<std::size_t>(max_n))
      throw ValidationError("BLEU weights must have max_n entries");
    double s = 0;
    for (double w : weights) {
      if (w < 0) throw ValidationError("BLEU weights must be non-negative");
      s += w;
    }
    if (std::abs(s - 1.0) > 1e-9) throw ValidationError("BLEU weights must sum to 1");
  }
}

std::vector<double> MetricConfig::effective_weights() const {
  if (!weights.empty()) return weights;
  return std::vector<double>(max_n, 1.0 / max_n);
}

std::string MetricConfig::name() const {
  switch (kind) {
    case MetricKind::sentence_bleu: return "bleu-star";
    case MetricKind::corpus_bleu_multi: return "corpus-bleu";
    case MetricKind::embed_f1: return "embed";
  }
  return "?";
}

MetricConfig MetricConfig::from_name(std::string_view name) {
  MetricConfig c;
  if (name == "bleu-star" || name == "bleu*") {
    c.kind = MetricKind::sentence_bleu;
  } else if (name == "corpus-bleu") {
    c.kind = MetricKind::corpus_bleu_multi;
  } else if (name == "embed") {
    c.kind = MetricKind::embed_f1;
  } else {
    throw ValidationError("unknown metric '" + std::string(name) +
                          "' (expected bleu-star, corpus-bleu or embed)");
  }
  return c;
}

namespace {

using NgramCounts = std::map<std::string, int>;

NgramCounts count_ngrams(const Tokens& toks, std::size_t n) {
  NgramCounts out;
  std::string key;
  for (std::size_t i = 0; i + n <= toks.size(); ++i) {
    key.clear();
    for (std::size_t j = 0; j < n; ++j) {
      if (j) key.push_back('\x1e');
      key += toks[i + j];
    }
    ++out[key];
  }
  return out;
}

// Combines per-order (matches, totals) and lengths into a BLEU value.
double combine(std::span<const double> matches, std::span<const double> totals,
               double cand_len, double ref_len, const MetricConfig& cfg) {
  const auto w = cfg.effective_weights();
  double wsum = 0.0;
  for (std::size_t n = 0; n < totals.size(); ++n)
    if (totals[n] > 0) wsum += w[n];
  if (totals.empty() || totals[0] <= 0 || matches[0] <= 0 || wsum <= 0) return 0.0;
  double log_p = 0.0;
  for (std::size_t n = 0; n < totals.size(); ++n) {
    if (totals[n] <= 0) continue;  // order longer than the candidate
    double m = matches[n];
    if (m <= 0) {
      if (cfg.smoothing == Smoothing::none) return 0.0;
      m = kSmoothingEpsilon;
    }
    log_p += (w[n] / wsum) * std::log(m / totals[n]);
  }
  const double bp = cand_len > ref_len ? 1.0 : std::exp(1.0 - ref_len / cand_len);
  return bp * std::exp(log_p);
}

}  // namespace

double sentence_bleu(const Tokens& candidate, const Tokens& reference, const MetricConfig& cfg) {
  if (candidate.empty()) throw ValidationError("sentence_bleu: empty candidate");
  if (reference.empty()) throw ValidationError("sentence_bleu: empty reference");
  const auto max_n = static_cast<std::size_t>(cfg.max_n);
  std::vector<double> matches(max_n, 0.0), totals(max_n, 0.0);
  for (std::size_t n = 1; n <= max_n && n <= candidate.size(); ++n) {
    const auto c = count_ngrams(candidate, n);
    const auto r = count_ngrams(reference, n);
    double m = 0;
    for (const auto& [g, cnt] : c) {
      auto it = r.find(g);
      if (it != r.end()) m += std::min(cnt, it->second);
    }
    matches[n - 1] = m;
    totals[n - 1] = static_cast<double>(candidate.size() - n + 1);
  }
  return combine(matches, totals, static_cast<double>(candidate.size()),
                 static_cast<double>(reference.size()), cfg);
}

double multi_ref_score(const Tokens& candidate, std::span<const Tokens> refs,
                       const SingleRefMetric& base) {
  if (refs.empty()) throw ValidationError("multi_ref_score: empty reference set");
  double best = -std::numeric_limits<double>::infinity();
  for (const auto& r : refs) best = std::max(best, base(candidate, r));
  return best;
}

double corpus_bleu_multi(std::span<const Tokens> candidates,
                         std::span<const std::vector<Tokens>> refsets, const MetricConfig& cfg) {
  if (candidates.size() != refsets.size())
    throw ValidationError("corpus_bleu_multi: candidates and reference sets differ in length");
  if (candidates.empty()) throw ValidationError("corpus_bleu_multi: empty corpus");
  const auto max_n = static_cast<std::size_t>(cfg.max_n);
  std::vector<double> matches(max_n, 0.0), totals(max_n, 0.0);
  double cand_len = 0, ref_len = 0;
  for (std::size_t s = 0; s < candidates.size(); ++s) {
    const Tokens& cand = candidates[s];
    const auto& refs = refsets[s];
    if (cand.empty()) throw ValidationError("corpus_bleu_multi: empty candidate");
    if (refs.empty()) throw ValidationError("corpus_bleu_multi: empty reference set");
    for (std::size_t n = 1; n <= max_n && n <= cand.size(); ++n) {
      const auto c = count_ngrams(cand, n);
      NgramCounts clip;
      for (const auto& r : refs)
        for (const auto& [g, cnt] : count_ngrams(r, n)) clip[g] = std::max(clip[g], cnt);
      for (const auto& [g, cnt] : c) {
        auto it = clip.find(g);
        if (it != clip.end()) matches[n - 1] += std::min(cnt, it->second);
      }
      totals[n - 1] += static_cast<double>(cand.size() - n + 1);
    }
    cand_len += static_cast<double>(cand.size());
    std::size_t best = refs.front().size();
    for (const auto& r : refs) {
      const auto d = [&](std::size_t len) {
        return len > cand.size() ? len - cand.size() : cand.size() - len;
      };
      if (r.empty()) throw ValidationError("corpus_bleu_multi: empty reference");
      if (d(r.size()) < d(best) || (d(r.size()) == d(best) && r.size() < best)) best = r.size();
    }
    ref_len += static_cast<double>(best);
  }
  return combine(matches, totals, cand_len, ref_len, cfg);
}

double embed_f1(const TokenVectors& candidate, const TokenVectors& reference) {
  if (candidate.empty() || reference.empty())
    throw ValidationError("embed_f1: both texts need at least one token");
  const std::size_t nc = candidate.size(), nr = reference.size();
  auto norm = [](const EmbeddingVector& v) {
    double s = 0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
  };
  std::vector<double> cn(nc), rn(nr);
  for (std::size_t i = 0; i < nc; ++i) cn[i] = norm(candidate[i]);
  for (std::size_t j = 0; j < nr; ++j) rn[j] = norm(reference[j]);
  std::vector<double> best_c(nc, -1.0), best_r(nr, -1.0);
  for (std::size_t i = 0; i < nc; ++i) {
    for (std::size_t j = 0; j < nr; ++j) {
      if (candidate[i].size() != reference[j].size())
        throw ValidationError("embed_f1: token vectors differ in dimension");
      double dot = 0;
      for (std::size_t d = 0; d < candidate[i].size(); ++d) dot += candidate[i][d] * reference[j][d];
      const double denom = cn[i] * rn[j];
      const double cos = denom > 0 ? dot / denom : 0.0;
      best_c[i] = std::max(best_c[i], cos);
      best_r[j] = std::max(best_r[j], cos);
    }
  }
  const double p = std::accumulate(best_c.begin(), best_c.end(), 0.0) / static_cast<double>(nc);
  const double r = std::accumulate(best_r.begin(), best_r.end(), 0.0) / static_cast<double>(nr);
  if (p + r == 0.0) return 0.0;
  return 2.0 * p * r / (p + r);
}

double embed_f1(std::string_view candidate, std::string_view reference,
                const EmbeddingProvider& encoder) {
  return embed_f1(encoder.encode_tokens(candidate), encoder.encode_tokens(reference));
}

namespace {

void check_lengths(std::span<const double> xs, std::span<const double> ys, const char* who) {
  if (xs.size() != ys.size())
    throw ValidationError(std::string(who) + ": score vectors differ in length");
  if (xs.size() < 3) throw ValidationError(std::string(who) + ": need at least 3 points");
}

}  // namespace

Correlation pearson(std::span<const double> xs, std::span<const double> ys) {
  check_lengths(xs, ys, "pearson");
  // Welford-style running co-moments.
  double mx = 0, my = 0, sxx = 0, syy = 0, sxy = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double n = static_cast<double>(i + 1);
    const double dx = xs[i] - mx, dy = ys[i] - my;
    mx += dx / n;
    my += dy / n;
    sxx += dx * (xs[i] - mx);
    syy += dy * (ys[i] - my);
    sxy += dx * (ys[i] - my);
  }
  if (!(sxx > 0) || !(syy > 0)) return {0.0, true};
  return {std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0), false};
}

Correlation kendall(std::span<const double> xs, std::span<const double> ys) {
  check_lengths(xs, ys, "kendall");
  const std::size_t n = xs.size();
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](auto a, auto b) {
    return xs[a] != xs[b] ? xs[a] < xs[b] : ys[a] < ys[b];
  });

  auto pairs = [](double t) { return t * (t - 1) / 2; };
  double tied_x = 0, tied_xy = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && xs[idx[j]] == xs[idx[i]]) ++j;
    tied_x += pairs(static_cast<double>(j - i));
    for (std::size_t a = i; a < j;) {
      std::size_t b = a;
      while (b < j && ys[idx[b]] == ys[idx[a]]) ++b;
      tied_xy += pairs(static_cast<double>(b - a));
      a = b;
    }
    i = j;
  }

  // Merge sort the y sequence, counting inversions (discordant pairs).
  std::vector<double> y(n), buf(n);
  for (std::size_t i = 0; i < n; ++i) y[i] = ys[idx[i]];
  double swaps = 0;
  for (std::size_t width = 1; width < n; width *= 2) {
    for (std::size_t lo = 0; lo < n; lo += 2 * width) {
      const std::size_t mid = std::min(lo + width, n), hi = std::min(lo + 2 * width, n);
      std::size_t a = lo, b = mid, k = lo;
      while (a < mid && b < hi) {
        if (y[b] < y[a]) {
          swaps += static_cast<double>(mid - a);
          buf[k++] = y[b++];
        } else {
          buf[k++] = y[a++];
        }
      }
      while (a < mid) buf[k++] = y[a++];
      while (b < hi) buf[k++] = y[b++];
    }
    std::swap(y, buf);
  }
  double tied_y = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && y[j] == y[i]) ++j;
    tied_y += pairs(static_cast<double>(j - i));
    i = j;
  }

  const double n0 = pairs(static_cast<double>(n));
  const double denom = (n0 - tied_x) * (n0 - tied_y);
  if (!(denom > 0)) return {0.0, true};
  const double num = n0 - tied_x - tied_y + tied_xy - 2.0 * swaps;
  return {std::clamp(num / std::sqrt(denom), -1.0, 1.0), false};
}

Metric::Metric(MetricConfig config, std::shared_ptr<const EmbeddingProvider> encoder,
               Tokenizer tokenizer)
    : cfg_(std::move(config)), encoder_(std::move(encoder)), tokenizer_(tokenizer) {
  cfg_.validate();
  if (cfg_.kind == MetricKind::embed_f1 && !encoder_)
    throw ValidationError("the embedding metric needs an embedding provider");
}

const TokenVectors& Metric::vectors(const std::string& text) const {
  {
    std::lock_guard lock(mu_);
    if (auto it = memo_.find(text); it != memo_.end()) return *it->second;
  }
  auto vecs = std::make_unique<TokenVectors>(encoder_->encode_tokens(text));
  std::lock_guard lock(mu_);
  auto [it, inserted] = memo_.try_emplace(text, std::move(vecs));
  return *it->second;
}

double Metric::score(const Tokens& response_tokens, std::string_view response_text,
                     std::span<const Tokens> ref_tokens,
                     std::span<const std::string> ref_texts) const {
  switch (cfg_.kind) {
    case MetricKind::sentence_bleu:
      return multi_ref_score(response_tokens, ref_tokens, [this](const Tokens& c, const Tokens& r) {
        return sentence_bleu(c, r, cfg_);
      });
    case MetricKind::corpus_bleu_multi: {
      std::vector<Tokens> refs(ref_tokens.begin(), ref_tokens.end());
      return corpus_bleu_multi(std::span<const Tokens>(&response_tokens, 1),
                               std::span<const std::vector<Tokens>>(&refs, 1), cfg_);
    }
    case MetricKind::embed_f1: {
      if (ref_texts.empty()) throw ValidationError("multi_ref_score: empty reference set");
      const auto& cand = vectors(std::string(response_text));
      double best = -std::numeric_limits<double>::infinity();
      for (const auto& r : ref_texts) best = std::max(best, embed_f1(cand, vectors(r)));
      return best;
    }
  }
  return 0.0;
}

std::vector<double> Metric::score_responses(const EvalSample& sample,
                                            std::span<const std::string> reference_texts) const {
  if (reference_texts.empty()) throw ValidationError("cannot score against an empty reference set");
  std::vector<Tokens> ref_tokens;
  ref_tokens.reserve(reference_texts.size());
  for (const auto& r : reference_texts) {
    ref_tokens.push_back(tokenizer_(r));
    if (ref_tokens.back().empty()) throw ValidationError("reference is empty after tokenization");
  }
  std::vector<double> out;
  out.reserve(sample.model_responses.size());
  for (const auto& m : sample.model_responses) {
    const Tokens toks = m.tokens.empty() ? tokenizer_(m.text) : m.tokens;
    out.push_back(score(toks, m.text, ref_tokens, reference_texts));
  }
  return out;
}

Correlation reliability(const EvalSample& sample, std::span<const std::string> reference_texts,
                        const Metric& metric) {
  const auto scores = metric.score_responses(sample, reference_texts);
  const auto human = sample.human_scores();
  return pearson(scores, human);
}

Correlation label_reliability(const EvalSample& sample, const RefSetInstance& instance,
                              const Metric& metric) {
  instance.validate(sample);
  const auto refs = sample.reference_texts(instance.member_indices);
  return reliability(sample, refs, metric);
}

void save_score_report(const std::filesystem::path& path, std::span<const ScoreRecord> records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  for (const auto& r : records)
    out << nlohmann::json{{"sample_id", r.sample_id}, {"k", r.k},           {"metric", r.metric},
                          {"c", r.c},                 {"degenerate", r.degenerate}}
               .dump()
        << '\n';
}

std::vector<ScoreRecord> load_score_report(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open score report " + path.string());
  std::vector<ScoreRecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      auto j = nlohmann::json::parse(line);
      out.push_back({j.at("sample_id").get<std::string>(), j.at("k").get<std::size_t>(),
                     j.at("metric").get<std::string>(), j.at("c").get<double>(),
                     j.at("degenerate").get<bool>()});
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(e.what(), lineno);
    }
  }
  return out;
}

}  // namespace ream::metrics
