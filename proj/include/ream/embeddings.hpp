#pragma once

#include <array>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ream/text.hpp"

namespace ream {

using EmbeddingVector = std::vector<double>;

// Produces fixed-length query-response pair encodings (model input) and
// per-token vectors (embedding metric input). Implementations are immutable
// after construction and safe for concurrent reads.
class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;

  virtual std::size_t dimension() const = 0;
  virtual EmbeddingVector encode_pair(std::string_view query, std::string_view response) const = 0;
  virtual std::vector<EmbeddingVector> encode_tokens(std::string_view text) const = 0;
  // Identifies the mapping, e.g. "hash:d=64:orders=1,2:seed=0:pos=1".
  virtual std::string fingerprint() const = 0;
  virtual const Tokenizer& tokenizer() const = 0;
};

struct ProviderConfig {
  enum class Backend { hash, file, remote };

  Backend backend = Backend::hash;
  std::size_t dimension = 64;
  Tokenizer tokenizer;
  // hash
  std::vector<int> ngram_orders{1, 2};
  std::uint64_t seed = 0;
  bool positional_buckets = true;
  std::size_t bucket_width = 4;
  // file
  std::filesystem::path cache_path;
  // remote; REAM_ENCODER_URL overrides `endpoint` when set
  std::string endpoint;
  std::chrono::milliseconds timeout{10000};

  void validate() const;
  std::string backend_name() const;
};

std::unique_ptr<EmbeddingProvider> make_provider(ProviderConfig config);

// Inverse of HashProvider::fingerprint(); throws ValidationError on anything
// that is not a hash fingerprint.
ProviderConfig parse_hash_fingerprint(std::string_view fingerprint);

class HashProvider final : public EmbeddingProvider {
 public:
  explicit HashProvider(ProviderConfig config);

  std::size_t dimension() const override { return cfg_.dimension; }
  EmbeddingVector encode_pair(std::string_view query, std::string_view response) const override;
  std::vector<EmbeddingVector> encode_tokens(std::string_view text) const override;
  std::string fingerprint() const override;
  const Tokenizer& tokenizer() const override { return cfg_.tokenizer; }

 private:
  ProviderConfig cfg_;
};

// 16-byte content hash identifying one cached vector.
using CacheKey = std::array<std::uint8_t, 16>;

CacheKey pair_key(std::string_view query, std::string_view response);
CacheKey token_key(std::string_view text, std::size_t position);
std::string key_hex(const CacheKey& key);

// On-disk layout (little endian):
//   magic "REAMEMB1" (8 bytes) | u32 format version | u32 d |
//   repeated { 16-byte key | d x f32 }
// Vectors are stored as 32-bit floats, so `get` returns the float-rounded
// values of what was `put`.
class EmbeddingCache {
 public:
  static constexpr std::uint32_t kFormatVersion = 1;

  explicit EmbeddingCache(std::size_t dimension) : dim_(dimension) {}
  EmbeddingCache(EmbeddingCache&& other) noexcept
      : dim_(other.dim_), entries_(std::move(other.entries_)) {}

  static EmbeddingCache load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  void put(const CacheKey& key, std::span<const double> values);
  // Throws MissingEmbeddingError when absent.
  EmbeddingVector get(const CacheKey& key) const;
  bool contains(const CacheKey& key) const;
  std::size_t size() const;
  std::size_t dimension() const { return dim_; }

 private:
  std::size_t dim_;
  mutable std::mutex mu_;
  std::map<CacheKey, std::vector<float>> entries_;
};

// Serves vectors from a precomputed EmbeddingCache.
class FileProvider final : public EmbeddingProvider {
 public:
  FileProvider(std::shared_ptr<const EmbeddingCache> cache, Tokenizer tokenizer = {});
  explicit FileProvider(const ProviderConfig& config);

  std::size_t dimension() const override { return cache_->dimension(); }
  EmbeddingVector encode_pair(std::string_view query, std::string_view response) const override;
  std::vector<EmbeddingVector> encode_tokens(std::string_view text) const override;
  std::string fingerprint() const override;
  const Tokenizer& tokenizer() const override { return tokenizer_; }

 private:
  std::shared_ptr<const EmbeddingCache> cache_;
  Tokenizer tokenizer_;
  std::string origin_;
};

// Fills `cache` with the pair encodings and per-token vectors `source`
// produces for the given texts.
void populate_cache(EmbeddingCache& cache, const EmbeddingProvider& source,
                    std::span<const std::pair<std::string, std::string>> pairs,
                    std::span<const std::string> texts);

// Client for an external encoder service speaking
//   POST <endpoint> {"texts": [str]} -> {"vectors": [[number]]}
// Texts are sent in batches of at most 64. A pair is sent as
// "<query> ||| <response>"; per-token vectors are requested one text per
// token.
class RemoteProvider final : public EmbeddingProvider {
 public:
  static constexpr std::size_t kBatchSize = 64;

  explicit RemoteProvider(ProviderConfig config);

  std::size_t dimension() const override { return cfg_.dimension; }
  EmbeddingVector encode_pair(std::string_view query, std::string_view response) const override;
  std::vector<EmbeddingVector> encode_tokens(std::string_view text) const override;
  std::string fingerprint() const override;
  const Tokenizer& tokenizer() const override { return cfg_.tokenizer; }

  std::vector<EmbeddingVector> encode_texts(std::span<const std::string> texts) const;
  const std::string& endpoint() const { return cfg_.endpoint; }

 private:
  ProviderConfig cfg_;
  std::string base_;  // scheme://host[:port]
  std::string path_;
};

}  // namespace ream
