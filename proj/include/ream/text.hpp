#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace ream {

using Tokens = std::vector<std::string>;

// Splits text into tokens. Whitespace mode lowercases ASCII and splits on
// whitespace; character mode emits one token per UTF-8 code point. ASCII
// control characters always act as delimiters, so the reserved separator
// token below can never be produced from user text.
struct Tokenizer {
  enum class Mode { whitespace, character };

  Mode mode = Mode::whitespace;
  bool lowercase = true;

  Tokens operator()(std::string_view text) const;

  std::string name() const;
  static Tokenizer from_name(std::string_view name);
};

// Placed between query and response when a pair is encoded.
inline constexpr std::string_view kSeparatorToken = "\x1fSEP\x1f";

// Stable 64-bit string hash (FNV-1a followed by a splitmix64 finalizer).
std::uint64_t stable_hash(std::string_view bytes, std::uint64_t seed = 0);

// 16-byte MD5 digest of the input, hex encoded (32 chars).
std::string content_hash_hex(std::string_view bytes);

std::string join(const Tokens& tokens, std::string_view sep = " ");

}  // namespace ream
