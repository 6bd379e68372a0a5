#include "ream/text.hpp"

#include <openssl/evp.h>

#include <array>
#include <cctype>

#include "ream/errors.hpp"

namespace ream {
namespace {

bool is_delimiter(unsigned char c) { return c <= 0x20 || c == 0x7f; }

std::size_t utf8_length(unsigned char lead) {
  if (lead < 0x80) return 1;
  if ((lead >> 5) == 0x6) return 2;
  if ((lead >> 4) == 0xe) return 3;
  if ((lead >> 3) == 0x1e) return 4;
  return 1;  // stray continuation byte, treat as its own unit
}

}  // namespace

Tokens Tokenizer::operator()(std::string_view text) const {
  Tokens out;
  if (mode == Mode::whitespace) {
    std::string cur;
    for (unsigned char c : text) {
      if (is_delimiter(c)) {
        if (!cur.empty()) out.push_back(std::move(cur)), cur.clear();
        continue;
      }
      cur.push_back(lowercase && c < 0x80 ? static_cast<char>(std::tolower(c))
                                          : static_cast<char>(c));
    }
    if (!cur.empty()) out.push_back(std::move(cur));
    return out;
  }
  for (std::size_t i = 0; i < text.size();) {
    auto c = static_cast<unsigned char>(text[i]);
    if (is_delimiter(c)) {
      ++i;
      continue;
    }
    std::size_t len = std::min(utf8_length(c), text.size() - i);
    std::string tok(text.substr(i, len));
    if (lowercase && len == 1) tok[0] = static_cast<char>(std::tolower(c));
    out.push_back(std::move(tok));
    i += len;
  }
  return out;
}

std::string Tokenizer::name() const {
  std::string n = mode == Mode::whitespace ? "whitespace" : "character";
  if (!lowercase) n += "-cased";
  return n;
}

Tokenizer Tokenizer::from_name(std::string_view name) {
  Tokenizer t;
  std::string_view base = name;
  if (base.ends_with("-cased")) {
    t.lowercase = false;
    base.remove_suffix(6);
  }
  if (base == "whitespace") {
    t.mode = Mode::whitespace;
  } else if (base == "character" || base == "char") {
    t.mode = Mode::character;
  } else {
    throw ValidationError("unknown tokenizer '" + std::string(name) + "'");
  }
  return t;
}

std::uint64_t stable_hash(std::string_view bytes, std::uint64_t seed) {
  std::uint64_t h = 0xcbf29ce484222325ULL ^ (seed * 0x9e3779b97f4a7c15ULL);
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  h ^= h >> 30;
  h *= 0xbf58476d1ce4e5b9ULL;
  h ^= h >> 27;
  h *= 0x94d049bb133111ebULL;
  h ^= h >> 31;
  return h;
}

std::string content_hash_hex(std::string_view bytes) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
  unsigned int len = 0;
  EVP_Digest(bytes.data(), bytes.size(), digest.data(), &len, EVP_md5(), nullptr);
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned i = 0; i < len; ++i) {
    out.push_back(kHex[digest[i] >> 4]);
    out.push_back(kHex[digest[i] & 0xf]);
  }
  return out;
}

std::string join(const Tokens& tokens, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += sep;
    out += tokens[i];
  }
  return out;
}

}  // namespace ream
