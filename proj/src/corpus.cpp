#include "ream/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "ream/errors.hpp"
#include "ream/log.hpp"

namespace ream {

using json = nlohmann::json;

void EvalSample::validate() const {
  if (query.id.empty()) throw ValidationError("sample has an empty id");
  const std::string where = "sample '" + query.id + "': ";
  if (query.text.empty() || query.tokens.empty())
    throw ValidationError(where + "query text is empty");
  if (references.empty()) throw ValidationError(where + "needs at least one reference");
  if (model_responses.size() < 3)
    throw ValidationError(where + "needs at least 3 model responses, got " +
                          std::to_string(model_responses.size()));
  for (const auto& r : references) {
    if (r.text.empty()) throw ValidationError(where + "empty reference text");
    if (r.quality && (*r.quality < 1.0 || *r.quality > 5.0))
      throw ValidationError(where + "reference quality outside [1,5]");
  }
  for (const auto& m : model_responses) {
    if (!(m.human_score >= 1.0 && m.human_score <= 5.0))
      throw ValidationError(where + "human score outside [1,5]");
  }
}

std::vector<double> EvalSample::human_scores() const {
  std::vector<double> out;
  out.reserve(model_responses.size());
  for (const auto& m : model_responses) out.push_back(m.human_score);
  return out;
}

std::vector<std::string> EvalSample::reference_texts(std::span<const std::size_t> indices) const {
  std::vector<std::string> out;
  out.reserve(indices.size());
  for (auto i : indices) out.push_back(references.at(i).text);
  return out;
}

void RefSetInstance::validate(const EvalSample& sample) const {
  if (member_indices.empty()) throw ValidationError("reference set instance is empty");
  for (std::size_t i = 0; i < member_indices.size(); ++i) {
    if (member_indices[i] >= sample.references.size())
      throw ValidationError("member index " + std::to_string(member_indices[i]) +
                            " out of range for sample '" + sample.query.id + "'");
    if (i && member_indices[i] <= member_indices[i - 1])
      throw ValidationError("member indices must be sorted and distinct");
  }
}

void tokenize_sample(EvalSample& sample, const Tokenizer& tokenizer) {
  sample.query.tokens = tokenizer(sample.query.text);
  for (auto& r : sample.references) r.tokens = tokenizer(r.text);
  for (auto& m : sample.model_responses) m.tokens = tokenizer(m.text);
}

namespace {

EvalSample sample_from_json(const json& j, const Tokenizer& tokenizer) {
  EvalSample s;
  s.query.id = j.at("id").get<std::string>();
  s.query.text = j.at("query").get<std::string>();
  for (const auto& r : j.at("references")) {
    ReferenceResponse ref;
    ref.text = r.at("text").get<std::string>();
    if (auto it = r.find("quality"); it != r.end() && !it->is_null())
      ref.quality = it->get<double>();
    s.references.push_back(std::move(ref));
  }
  for (const auto& m : j.at("model_responses")) {
    ModelResponse resp;
    resp.text = m.at("text").get<std::string>();
    resp.human_score = m.at("human_score").get<double>();
    resp.system_tag = m.value("system_tag", std::string{});
    s.model_responses.push_back(std::move(resp));
  }
  tokenize_sample(s, tokenizer);
  return s;
}

json sample_to_json(const EvalSample& s) {
  json refs = json::array();
  for (const auto& r : s.references) {
    json q = r.quality ? json(*r.quality) : json(nullptr);
    refs.push_back(json{{"text", r.text}, {"quality", q}});
  }
  json resps = json::array();
  for (const auto& m : s.model_responses)
    resps.push_back(
        json{{"text", m.text}, {"human_score", m.human_score}, {"system_tag", m.system_tag}});
  return json{{"id", s.query.id},
              {"query", s.query.text},
              {"references", std::move(refs)},
              {"model_responses", std::move(resps)}};
}

template <typename Fn>
void for_each_line(std::istream& in, Fn&& fn) {
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError(e.what(), lineno);
    }
    try {
      fn(j, lineno);
    } catch (const json::exception& e) {
      throw ParseError(e.what(), lineno);
    }
  }
}

Corpus parse_corpus_stream(std::istream& in, const Tokenizer& tokenizer) {
  Corpus out;
  std::unordered_set<std::string> ids;
  for_each_line(in, [&](const json& j, std::size_t lineno) {
    EvalSample s = sample_from_json(j, tokenizer);
    try {
      s.validate();
    } catch (const ValidationError& e) {
      throw ValidationError("line " + std::to_string(lineno) + ": " + e.what());
    }
    if (!ids.insert(s.query.id).second)
      throw ValidationError("line " + std::to_string(lineno) + ": duplicate sample id '" +
                            s.query.id + "'");
    out.push_back(std::move(s));
  });
  return out;
}

}  // namespace

Corpus load_corpus(const std::filesystem::path& path, const Tokenizer& tokenizer) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open corpus file " + path.string());
  return parse_corpus_stream(in, tokenizer);
}

Corpus parse_corpus(std::string_view jsonl, const Tokenizer& tokenizer) {
  std::istringstream in{std::string(jsonl)};
  return parse_corpus_stream(in, tokenizer);
}

std::string dump_sample(const EvalSample& sample) { return sample_to_json(sample).dump(); }

void save_corpus(const std::filesystem::path& path, const Corpus& corpus) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  for (const auto& s : corpus) out << dump_sample(s) << '\n';
}

std::vector<RefSetInstance> load_instances(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open instance file " + path.string());
  std::vector<RefSetInstance> out;
  for_each_line(in, [&](const json& j, std::size_t lineno) {
    RefSetInstance inst;
    inst.sample_id = j.at("sample_id").get<std::string>();
    inst.member_indices = j.at("member_indices").get<std::vector<std::size_t>>();
    if (j.at("k").get<std::size_t>() != inst.k())
      throw ValidationError("line " + std::to_string(lineno) + ": k does not match member count");
    out.push_back(std::move(inst));
  });
  return out;
}

void save_instances(const std::filesystem::path& path, std::span<const RefSetInstance> instances) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  for (const auto& inst : instances)
    out << json{{"sample_id", inst.sample_id}, {"k", inst.k()},
                {"member_indices", inst.member_indices}}
               .dump()
        << '\n';
}

std::uint64_t binomial(std::uint64_t n, std::uint64_t k) {
  if (k > n) return 0;
  k = std::min(k, n - k);
  constexpr auto kMax = std::numeric_limits<std::uint64_t>::max();
  std::uint64_t r = 1;
  for (std::uint64_t i = 1; i <= k; ++i) {
    // r * (n - k + i) / i is always integral; guard the multiplication.
    std::uint64_t num = n - k + i;
    std::uint64_t g = std::gcd(r, i);
    std::uint64_t rr = r / g, ii = i / g;
    std::uint64_t nn = num / ii;  // ii divides num once r's share is removed
    if (rr != 0 && nn > kMax / rr) return kMax;
    r = rr * nn;
  }
  return r;
}

namespace {

// All k-combinations of {0..n-1} in lexicographic order.
std::vector<std::vector<std::size_t>> enumerate_combinations(std::size_t n, std::size_t k) {
  std::vector<std::vector<std::size_t>> out;
  std::vector<std::size_t> cur(k);
  std::iota(cur.begin(), cur.end(), 0);
  while (true) {
    out.push_back(cur);
    std::size_t i = k;
    while (i > 0 && cur[i - 1] == n - k + i - 1) --i;
    if (i == 0) break;
    ++cur[i - 1];
    for (std::size_t j = i; j < k; ++j) cur[j] = cur[j - 1] + 1;
  }
  return out;
}

}  // namespace

std::vector<RefSetInstance> augment_combinations(const EvalSample& sample,
                                                 std::span<const int> ks, int per_k,
                                                 std::uint64_t seed) {
  if (per_k < 1) throw ValidationError("per_k must be >= 1");
  const std::size_t n = sample.references.size();
  std::mt19937_64 rng(stable_hash(sample.query.id, seed));
  std::vector<RefSetInstance> out;
  for (int k_signed : ks) {
    if (k_signed < 1) throw ValidationError("combination size k must be >= 1");
    const auto k = static_cast<std::size_t>(k_signed);
    if (k > n) {
      log::warning("sample '" + sample.query.id + "': k=" + std::to_string(k) +
                   " exceeds pool size " + std::to_string(n) + ", skipped");
      continue;
    }
    const std::uint64_t total = binomial(n, k);
    const auto want = static_cast<std::size_t>(std::min<std::uint64_t>(per_k, total));
    std::vector<std::vector<std::size_t>> picked;
    if (total <= static_cast<std::uint64_t>(per_k)) {
      picked = enumerate_combinations(n, k);
    } else {
      std::set<std::vector<std::size_t>> seen;
      std::vector<std::size_t> perm(n);
      while (picked.size() < want) {
        std::iota(perm.begin(), perm.end(), 0);
        for (std::size_t i = 0; i < k; ++i) {
          std::uniform_int_distribution<std::size_t> d(i, n - 1);
          std::swap(perm[i], perm[d(rng)]);
        }
        std::vector<std::size_t> combo(perm.begin(), perm.begin() + k);
        std::sort(combo.begin(), combo.end());
        if (seen.insert(combo).second) picked.push_back(std::move(combo));
      }
    }
    for (auto& c : picked) out.push_back(RefSetInstance{sample.query.id, std::move(c)});
  }
  return out;
}

double jaccard_similarity(const Tokens& a, const Tokens& b) {
  std::set<std::string_view> sa(a.begin(), a.end()), sb(b.begin(), b.end());
  if (sa.empty() && sb.empty()) return 0.0;
  std::size_t inter = 0;
  for (auto t : sa) inter += sb.count(t);
  return static_cast<double>(inter) / static_cast<double>(sa.size() + sb.size() - inter);
}

std::vector<RetrievalCandidate> jaccard_retrieve(const Query& query,
                                                 std::span<const PoolEntry> pool, int top_k,
                                                 const Tokenizer& tokenizer) {
  if (top_k < 1) throw ValidationError("top_k must be >= 1");
  const Tokens qtok = query.tokens.empty() ? tokenizer(query.text) : query.tokens;
  std::vector<RetrievalCandidate> all;
  all.reserve(pool.size());
  for (std::size_t i = 0; i < pool.size(); ++i)
    all.push_back({i, pool[i].query_text, pool[i].response_text,
                   jaccard_similarity(qtok, tokenizer(pool[i].query_text))});
  std::stable_sort(all.begin(), all.end(),
                   [](const auto& a, const auto& b) { return a.similarity > b.similarity; });
  all.resize(std::min(all.size(), static_cast<std::size_t>(top_k)));
  return all;
}

std::vector<PoolEntry> pool_from_corpus(const Corpus& corpus, std::string_view exclude_id) {
  std::vector<PoolEntry> pool;
  for (const auto& s : corpus) {
    if (!exclude_id.empty() && s.query.id == exclude_id) continue;
    for (const auto& r : s.references) pool.push_back({s.query.text, r.text});
  }
  return pool;
}

}  // namespace ream
