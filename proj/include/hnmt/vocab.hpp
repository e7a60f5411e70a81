#pragma once

#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "hnmt/error.hpp"

namespace hnmt {

enum class VocabKind { kWord, kChar };

// Splits a UTF-8 string into Unicode scalar values, each kept as a UTF-8
// substring. Malformed bytes are passed through one byte at a time.
std::vector<std::string> utf8_chars(std::string_view text);

// Bidirectional token↔id map with reserved symbols at fixed ids:
//   0 <unk>   1 <s>   2 </s>   3 <pad>   (char kind additionally: 4 _)
class Vocabulary {
 public:
  static constexpr int kUnk = 0;
  static constexpr int kBos = 1;
  static constexpr int kEos = 2;
  static constexpr int kPad = 3;
  static constexpr int kBoundary = 4;  // char kind only

  static const char* unk_token() { return "<unk>"; }
  static const char* bos_token() { return "<s>"; }
  static const char* eos_token() { return "</s>"; }
  static const char* pad_token() { return "<pad>"; }
  static const char* boundary_token() { return "_"; }

  Vocabulary() : kind_(VocabKind::kWord) { init_reserved(); }
  Vocabulary(VocabKind kind, std::vector<std::string> tokens);

  // Top `size` tokens by frequency over the corpus, ties broken
  // lexicographically. Throws DataError on an empty corpus.
  static Vocabulary build_words(const std::vector<std::vector<std::string>>& corpus, int size);

  // The `size` most frequent characters over the distinct word types of
  // `word_vocab` (each type counted once). Throws DataError when the word
  // vocabulary has no regular tokens.
  static Vocabulary build_chars(const Vocabulary& word_vocab, int size);

  VocabKind kind() const { return kind_; }
  int size() const { return static_cast<int>(tokens_.size()); }
  int reserved() const { return kind_ == VocabKind::kChar ? 5 : 4; }

  // Token lookup; unknown tokens map to kUnk.
  int id(std::string_view token) const;
  bool contains(std::string_view token) const { return lookup(token) >= 0; }
  const std::string& token(int id) const;

  // Non-reserved tokens in id order.
  std::vector<std::string> regular_tokens() const;

  // Keeps the first `size` regular tokens (they are stored most-frequent
  // first), for vocabulary-size sweeps from one vocab file.
  Vocabulary truncated(int size) const;

  void save(const std::string& path) const;
  static Vocabulary load(const std::string& path);

 private:
  void init_reserved();
  int lookup(std::string_view token) const;

  VocabKind kind_;
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

// Per-character ids of `word` followed by the boundary id. Unlisted
// characters map to the char-level <unk>.
std::vector<int> encode_word_chars(const std::string& word, const Vocabulary& char_vocab);

// Fraction of `word_vocab`'s regular types whose every character is listed
// in `char_vocab` (the coverage statistic printed by build-vocab).
double char_coverage(const Vocabulary& word_vocab, const Vocabulary& char_vocab);

}  // namespace hnmt
