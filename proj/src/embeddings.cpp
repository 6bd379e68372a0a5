#include "ream/embeddings.hpp"

#include <openssl/evp.h>

#include <bit>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <sstream>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "ream/errors.hpp"

namespace ream {

using json = nlohmann::json;

namespace {

constexpr double kPositionWeight = 0.25;
constexpr int kTokenProbes = 4;
constexpr char kGramJoin = '\x1e';

void l2_normalize(EmbeddingVector& v) {
  double n = 0.0;
  for (double x : v) n += x * x;
  if (n == 0.0) {
    // Only reachable when every hashed feature cancels out.
    std::fill(v.begin(), v.end(), 1.0 / std::sqrt(static_cast<double>(v.size())));
    return;
  }
  n = std::sqrt(n);
  for (double& x : v) x /= n;
}

std::string join_ints(const std::vector<int>& xs) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) out += (i ? "," : "") + std::to_string(xs[i]);
  return out;
}

}  // namespace

void ProviderConfig::validate() const {
  switch (backend) {
    case Backend::hash:
      if (dimension < 8) throw ValidationError("hash backend needs dimension >= 8");
      if (ngram_orders.empty()) throw ValidationError("hash backend needs n-gram orders");
      for (int n : ngram_orders)
        if (n < 1) throw ValidationError("n-gram orders must be >= 1");
      if (positional_buckets && bucket_width == 0)
        throw ValidationError("bucket_width must be positive");
      break;
    case Backend::file:
      if (cache_path.empty()) throw ValidationError("file backend needs a cache path");
      break;
    case Backend::remote:
      if (endpoint.empty() && !std::getenv("REAM_ENCODER_URL"))
        throw ValidationError("remote backend needs an endpoint");
      if (dimension == 0) throw ValidationError("remote backend needs a dimension");
      break;
  }
}

std::string ProviderConfig::backend_name() const {
  switch (backend) {
    case Backend::hash: return "hash";
    case Backend::file: return "file";
    case Backend::remote: return "remote";
  }
  return "?";
}

std::unique_ptr<EmbeddingProvider> make_provider(ProviderConfig config) {
  config.validate();
  switch (config.backend) {
    case ProviderConfig::Backend::hash: return std::make_unique<HashProvider>(std::move(config));
    case ProviderConfig::Backend::file: return std::make_unique<FileProvider>(config);
    case ProviderConfig::Backend::remote:
      return std::make_unique<RemoteProvider>(std::move(config));
  }
  throw ValidationError("unknown backend");
}

// ---------------------------------------------------------------------------
// hash backend

HashProvider::HashProvider(ProviderConfig config) : cfg_(std::move(config)) {
  cfg_.backend = ProviderConfig::Backend::hash;
  cfg_.validate();
}

EmbeddingVector HashProvider::encode_pair(std::string_view query,
                                          std::string_view response) const {
  Tokens seq = cfg_.tokenizer(query);
  if (seq.empty()) throw ValidationError("encode_pair: query is empty after tokenization");
  Tokens rtok = cfg_.tokenizer(response);
  if (rtok.empty()) throw ValidationError("encode_pair: response is empty after tokenization");
  seq.emplace_back(kSeparatorToken);
  seq.insert(seq.end(), rtok.begin(), rtok.end());

  EmbeddingVector v(cfg_.dimension, 0.0);
  std::string gram;
  for (int n : cfg_.ngram_orders) {
    const auto order = static_cast<std::size_t>(n);
    for (std::size_t i = 0; i + order <= seq.size(); ++i) {
      gram.clear();
      for (std::size_t j = 0; j < order; ++j) {
        if (j) gram.push_back(kGramJoin);
        gram += seq[i + j];
      }
      const std::uint64_t h = stable_hash(gram, cfg_.seed);
      v[h % cfg_.dimension] += (h >> 63) ? 1.0 : -1.0;
    }
  }
  l2_normalize(v);
  return v;
}

std::vector<EmbeddingVector> HashProvider::encode_tokens(std::string_view text) const {
  const Tokens toks = cfg_.tokenizer(text);
  if (toks.empty()) throw ValidationError("encode_tokens: text is empty after tokenization");
  std::vector<EmbeddingVector> out;
  out.reserve(toks.size());
  for (std::size_t i = 0; i < toks.size(); ++i) {
    EmbeddingVector v(cfg_.dimension, 0.0);
    for (int p = 0; p < kTokenProbes; ++p)
      v[stable_hash(toks[i], cfg_.seed + 1 + p) % cfg_.dimension] += 1.0;
    if (cfg_.positional_buckets) {
      const std::string bucket = "\x1dpos" + std::to_string(i / cfg_.bucket_width);
      v[stable_hash(bucket, cfg_.seed) % cfg_.dimension] += kPositionWeight;
    }
    l2_normalize(v);
    out.push_back(std::move(v));
  }
  return out;
}

std::string HashProvider::fingerprint() const {
  return "hash:d=" + std::to_string(cfg_.dimension) + ":tok=" + cfg_.tokenizer.name() +
         ":orders=" + join_ints(cfg_.ngram_orders) + ":seed=" + std::to_string(cfg_.seed) +
         ":pos=" + std::to_string(cfg_.positional_buckets ? cfg_.bucket_width : 0);
}

ProviderConfig parse_hash_fingerprint(std::string_view fp) {
  if (!fp.starts_with("hash:")) throw ValidationError("not a hash provider fingerprint");
  ProviderConfig cfg;
  std::istringstream in{std::string(fp.substr(5))};
  std::string field;
  while (std::getline(in, field, ':')) {
    auto eq = field.find('=');
    if (eq == std::string::npos) throw ValidationError("bad fingerprint field " + field);
    std::string key = field.substr(0, eq), val = field.substr(eq + 1);
    if (key == "d") {
      cfg.dimension = std::stoul(val);
    } else if (key == "tok") {
      cfg.tokenizer = Tokenizer::from_name(val);
    } else if (key == "orders") {
      cfg.ngram_orders.clear();
      std::istringstream os(val);
      std::string o;
      while (std::getline(os, o, ',')) cfg.ngram_orders.push_back(std::stoi(o));
    } else if (key == "seed") {
      cfg.seed = std::stoull(val);
    } else if (key == "pos") {
      cfg.bucket_width = std::stoul(val);
      cfg.positional_buckets = cfg.bucket_width > 0;
      if (!cfg.positional_buckets) cfg.bucket_width = 4;
    } else {
      throw ValidationError("unknown fingerprint field " + key);
    }
  }
  cfg.validate();
  return cfg;
}

// ---------------------------------------------------------------------------
// file backend

namespace {

CacheKey md5_key(std::string_view bytes) {
  CacheKey key{};
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_md5(), nullptr);
  std::memcpy(key.data(), digest, key.size());
  return key;
}

constexpr char kMagic[8] = {'R', 'E', 'A', 'M', 'E', 'M', 'B', '1'};

void write_u32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t read_u32(std::istream& in) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) throw ParseError("truncated embedding cache");
  return std::uint32_t{b[0]} | std::uint32_t{b[1]} << 8 | std::uint32_t{b[2]} << 16 |
         std::uint32_t{b[3]} << 24;
}

}  // namespace

CacheKey pair_key(std::string_view query, std::string_view response) {
  std::string buf = "pair";
  buf += kSeparatorToken;
  buf += query;
  buf += kSeparatorToken;
  buf += response;
  return md5_key(buf);
}

CacheKey token_key(std::string_view text, std::size_t position) {
  std::string buf = "tok";
  buf += kSeparatorToken;
  buf += std::to_string(position);
  buf += kSeparatorToken;
  buf += text;
  return md5_key(buf);
}

std::string key_hex(const CacheKey& key) {
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  for (auto b : key) {
    out.push_back(kHex[b >> 4]);
    out.push_back(kHex[b & 0xf]);
  }
  return out;
}

EmbeddingCache EmbeddingCache::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open embedding cache " + path.string());
  char magic[8];
  if (!in.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0)
    throw ParseError("bad embedding cache magic in " + path.string());
  const std::uint32_t version = read_u32(in);
  if (version != kFormatVersion)
    throw ParseError("unsupported embedding cache version " + std::to_string(version));
  const std::uint32_t d = read_u32(in);
  if (d == 0) throw ParseError("embedding cache declares dimension 0");
  EmbeddingCache cache(d);
  CacheKey key;
  while (in.read(reinterpret_cast<char*>(key.data()), key.size())) {
    std::vector<float> vals(d);
    for (auto& f : vals) f = std::bit_cast<float>(read_u32(in));
    cache.entries_[key] = std::move(vals);
  }
  if (in.gcount() != 0) throw ParseError("truncated embedding cache record");
  return cache;
}

void EmbeddingCache::save(const std::filesystem::path& path) const {
  std::lock_guard lock(mu_);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(kMagic, 8);
  write_u32(out, kFormatVersion);
  write_u32(out, static_cast<std::uint32_t>(dim_));
  for (const auto& [key, vals] : entries_) {
    out.write(reinterpret_cast<const char*>(key.data()), key.size());
    for (float f : vals) write_u32(out, std::bit_cast<std::uint32_t>(f));
  }
}

void EmbeddingCache::put(const CacheKey& key, std::span<const double> values) {
  if (values.size() != dim_)
    throw ValidationError("cache vector has length " + std::to_string(values.size()) +
                          ", expected " + std::to_string(dim_));
  std::vector<float> vals(values.begin(), values.end());
  for (float f : vals)
    if (!std::isfinite(f)) throw ValidationError("non-finite embedding value");
  std::lock_guard lock(mu_);
  entries_[key] = std::move(vals);
}

EmbeddingVector EmbeddingCache::get(const CacheKey& key) const {
  std::lock_guard lock(mu_);
  auto it = entries_.find(key);
  if (it == entries_.end()) throw MissingEmbeddingError(key_hex(key));
  return EmbeddingVector(it->second.begin(), it->second.end());
}

bool EmbeddingCache::contains(const CacheKey& key) const {
  std::lock_guard lock(mu_);
  return entries_.count(key) > 0;
}

std::size_t EmbeddingCache::size() const {
  std::lock_guard lock(mu_);
  return entries_.size();
}

FileProvider::FileProvider(std::shared_ptr<const EmbeddingCache> cache, Tokenizer tokenizer)
    : cache_(std::move(cache)), tokenizer_(tokenizer), origin_("memory") {}

FileProvider::FileProvider(const ProviderConfig& config)
    : cache_(std::make_shared<const EmbeddingCache>(EmbeddingCache::load(config.cache_path))),
      tokenizer_(config.tokenizer),
      origin_(config.cache_path.filename().string()) {}

EmbeddingVector FileProvider::encode_pair(std::string_view query,
                                          std::string_view response) const {
  return cache_->get(pair_key(query, response));
}

std::vector<EmbeddingVector> FileProvider::encode_tokens(std::string_view text) const {
  const std::size_t n = tokenizer_(text).size();
  if (n == 0) throw ValidationError("encode_tokens: text is empty after tokenization");
  std::vector<EmbeddingVector> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(cache_->get(token_key(text, i)));
  return out;
}

std::string FileProvider::fingerprint() const {
  return "file:d=" + std::to_string(dimension()) + ":src=" + origin_;
}

void populate_cache(EmbeddingCache& cache, const EmbeddingProvider& source,
                    std::span<const std::pair<std::string, std::string>> pairs,
                    std::span<const std::string> texts) {
  if (source.dimension() != cache.dimension())
    throw ValidationError("provider and cache dimensions differ");
  for (const auto& [q, r] : pairs) cache.put(pair_key(q, r), source.encode_pair(q, r));
  for (const auto& t : texts) {
    auto vecs = source.encode_tokens(t);
    for (std::size_t i = 0; i < vecs.size(); ++i) cache.put(token_key(t, i), vecs[i]);
  }
}

// ---------------------------------------------------------------------------
// remote backend

RemoteProvider::RemoteProvider(ProviderConfig config) : cfg_(std::move(config)) {
  cfg_.backend = ProviderConfig::Backend::remote;
  if (const char* env = std::getenv("REAM_ENCODER_URL"); env && *env) cfg_.endpoint = env;
  cfg_.validate();
  const auto scheme = cfg_.endpoint.find("://");
  if (scheme == std::string::npos)
    throw ValidationError("encoder endpoint must look like http://host:port/path");
  const auto slash = cfg_.endpoint.find('/', scheme + 3);
  base_ = cfg_.endpoint.substr(0, slash);
  path_ = slash == std::string::npos ? "/" : cfg_.endpoint.substr(slash);
}

std::vector<EmbeddingVector> RemoteProvider::encode_texts(std::span<const std::string> texts) const {
  std::vector<EmbeddingVector> out;
  out.reserve(texts.size());
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(cfg_.timeout);
  const auto usecs =
      std::chrono::duration_cast<std::chrono::microseconds>(cfg_.timeout - secs);
  for (std::size_t start = 0; start < texts.size(); start += kBatchSize) {
    const std::size_t end = std::min(texts.size(), start + kBatchSize);
    json body{{"texts", json::array()}};
    for (std::size_t i = start; i < end; ++i) body["texts"].push_back(texts[i]);

    httplib::Client cli(base_);
    cli.set_connection_timeout(secs.count(), usecs.count());
    cli.set_read_timeout(secs.count(), usecs.count());
    cli.set_write_timeout(secs.count(), usecs.count());
    auto res = cli.Post(path_, body.dump(), "application/json");
    if (!res)
      throw TransportError("encoder request to " + cfg_.endpoint + " failed: " +
                           httplib::to_string(res.error()));
    if (res->status != 200)
      throw TransportError("encoder returned HTTP " + std::to_string(res->status));
    json reply;
    try {
      reply = json::parse(res->body);
      const auto& vecs = reply.at("vectors");
      if (vecs.size() != end - start)
        throw TransportError("encoder returned " + std::to_string(vecs.size()) +
                             " vectors for " + std::to_string(end - start) + " texts");
      for (const auto& v : vecs) {
        auto values = v.get<EmbeddingVector>();
        if (values.size() != cfg_.dimension)
          throw TransportError("encoder vector has dimension " + std::to_string(values.size()) +
                               ", expected " + std::to_string(cfg_.dimension));
        out.push_back(std::move(values));
      }
    } catch (const json::exception& e) {
      throw TransportError(std::string("malformed encoder reply: ") + e.what());
    }
  }
  return out;
}

EmbeddingVector RemoteProvider::encode_pair(std::string_view query,
                                            std::string_view response) const {
  if (query.empty() || response.empty()) throw ValidationError("encode_pair: empty text");
  std::string joined = std::string(query) + " ||| " + std::string(response);
  return encode_texts(std::span<const std::string>(&joined, 1)).front();
}

std::vector<EmbeddingVector> RemoteProvider::encode_tokens(std::string_view text) const {
  const Tokens toks = cfg_.tokenizer(text);
  if (toks.empty()) throw ValidationError("encode_tokens: text is empty after tokenization");
  return encode_texts(toks);
}

std::string RemoteProvider::fingerprint() const {
  return "remote:d=" + std::to_string(cfg_.dimension) + ":url=" + cfg_.endpoint;
}

}  // namespace ream
