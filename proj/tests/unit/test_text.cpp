#include <gtest/gtest.h>

#include "ream/errors.hpp"
#include "ream/text.hpp"

using namespace ream;

TEST(Tokenizer, WhitespaceLowercasesAndSplits) {
  Tokenizer t;
  EXPECT_EQ(t("  Hello   WORLD\tfoo\n"), (Tokens{"hello", "world", "foo"}));
  EXPECT_TRUE(t("   ").empty());
}

TEST(Tokenizer, CasedKeepsCase) {
  auto t = Tokenizer::from_name("whitespace-cased");
  EXPECT_EQ(t("Hello World"), (Tokens{"Hello", "World"}));
  EXPECT_EQ(Tokenizer::from_name(t.name()).name(), t.name());
}

TEST(Tokenizer, CharacterModeSplitsCodePoints) {
  auto t = Tokenizer::from_name("character");
  EXPECT_EQ(t("ab c"), (Tokens{"a", "b", "c"}));
  EXPECT_EQ(t("\xc3\xa9t\xc3\xa9"), (Tokens{"\xc3\xa9", "t", "\xc3\xa9"}));
}

TEST(Tokenizer, ControlCharactersDelimit) {
  Tokenizer t;
  const auto toks = t(std::string("a") + std::string(kSeparatorToken) + "b");
  for (const auto& s : toks) EXPECT_NE(s, std::string(kSeparatorToken));
}

TEST(Tokenizer, UnknownNameThrows) { EXPECT_THROW(Tokenizer::from_name("bpe"), ValidationError); }

TEST(Hash, StableAndSeeded) {
  EXPECT_EQ(stable_hash("abc"), stable_hash("abc"));
  EXPECT_NE(stable_hash("abc"), stable_hash("abd"));
  EXPECT_NE(stable_hash("abc", 1), stable_hash("abc", 2));
}

TEST(Hash, Md5KnownVector) {
  EXPECT_EQ(content_hash_hex(""), "d41d8cd98f00b204e9800998ecf8427e");
  EXPECT_EQ(content_hash_hex("abc"), "900150983cd24fb0d6963f7d28e17f72");
}

TEST(Join, Separator) {
  EXPECT_EQ(join({"a", "b", "c"}), "a b c");
  EXPECT_EQ(join({"a", "b"}, ","), "a,b");
  EXPECT_EQ(join({}), "");
}
