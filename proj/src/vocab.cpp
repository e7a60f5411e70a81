#include "hnmt/vocab.hpp"

#include <algorithm>
#include <fstream>
#include <map>

namespace hnmt {

std::vector<std::string> utf8_chars(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    const unsigned char lead = static_cast<unsigned char>(text[i]);
    std::size_t len = 1;
    if (lead >= 0xF0) {
      len = 4;
    } else if (lead >= 0xE0) {
      len = 3;
    } else if (lead >= 0xC0) {
      len = 2;
    }
    if (i + len > text.size()) len = 1;
    // Continuation bytes must match, otherwise treat the lead as a lone byte.
    for (std::size_t k = 1; k < len; ++k) {
      if ((static_cast<unsigned char>(text[i + k]) & 0xC0) != 0x80) {
        len = 1;
        break;
      }
    }
    out.emplace_back(text.substr(i, len));
    i += len;
  }
  return out;
}

Vocabulary::Vocabulary(VocabKind kind, std::vector<std::string> tokens) : kind_(kind) {
  init_reserved();
  for (auto& t : tokens) {
    if (index_.count(t)) continue;  // reserved symbols in the list are already present
    index_.emplace(t, static_cast<int>(tokens_.size()));
    tokens_.push_back(std::move(t));
  }
}

void Vocabulary::init_reserved() {
  tokens_ = {unk_token(), bos_token(), eos_token(), pad_token()};
  if (kind_ == VocabKind::kChar) tokens_.push_back(boundary_token());
  index_.clear();
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    index_.emplace(tokens_[i], static_cast<int>(i));
  }
}

Vocabulary Vocabulary::build_words(const std::vector<std::vector<std::string>>& corpus,
                                   int size) {
  if (size < 1) throw ContractError("build_words: size must be >= 1");
  std::map<std::string, std::int64_t> counts;  // ordered map makes ties lexicographic
  for (const auto& sentence : corpus) {
    for (const auto& tok : sentence) counts[tok] += 1;
  }
  if (counts.empty()) throw DataError("build_words: empty corpus");
  std::vector<std::pair<std::string, std::int64_t>> ranked(counts.begin(), counts.end());
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> kept;
  for (const auto& [tok, n] : ranked) {
    if (static_cast<int>(kept.size()) >= size) break;
    kept.push_back(tok);
  }
  return Vocabulary(VocabKind::kWord, std::move(kept));
}

Vocabulary Vocabulary::build_chars(const Vocabulary& word_vocab, int size) {
  if (size < 1) throw ContractError("build_chars: size must be >= 1");
  const auto types = word_vocab.regular_tokens();
  if (types.empty()) throw DataError("build_chars: word vocabulary has no regular tokens");
  std::map<std::string, std::int64_t> counts;
  for (const auto& word : types) {
    for (auto& ch : utf8_chars(word)) {
      if (ch == boundary_token()) continue;  // reserved glyph, always present
      counts[ch] += 1;
    }
  }
  std::vector<std::pair<std::string, std::int64_t>> ranked(counts.begin(), counts.end());
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> kept;
  for (const auto& [ch, n] : ranked) {
    if (static_cast<int>(kept.size()) >= size) break;
    kept.push_back(ch);
  }
  return Vocabulary(VocabKind::kChar, std::move(kept));
}

int Vocabulary::lookup(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? -1 : it->second;
}

int Vocabulary::id(std::string_view token) const {
  int i = lookup(token);
  return i < 0 ? kUnk : i;
}

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || id >= size()) {
    throw VocabError("token: id " + std::to_string(id) + " outside vocabulary of " +
                     std::to_string(size()));
  }
  return tokens_[static_cast<std::size_t>(id)];
}

std::vector<std::string> Vocabulary::regular_tokens() const {
  return {tokens_.begin() + reserved(), tokens_.end()};
}

Vocabulary Vocabulary::truncated(int size) const {
  auto regular = regular_tokens();
  if (size < static_cast<int>(regular.size())) regular.resize(static_cast<std::size_t>(size));
  return Vocabulary(kind_, std::move(regular));
}

void Vocabulary::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write vocabulary file " + path);
  out << "#hnmt-vocab v1 kind=" << (kind_ == VocabKind::kChar ? "char" : "word") << "\n";
  for (int i = reserved(); i < size(); ++i) out << tokens_[static_cast<std::size_t>(i)] << "\n";
  if (!out) throw IoError("failed writing vocabulary file " + path);
}

Vocabulary Vocabulary::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read vocabulary file " + path);
  std::string header;
  std::getline(in, header);
  VocabKind kind;
  if (header == "#hnmt-vocab v1 kind=word") {
    kind = VocabKind::kWord;
  } else if (header == "#hnmt-vocab v1 kind=char") {
    kind = VocabKind::kChar;
  } else {
    throw FormatError("bad vocabulary header in " + path + ": " + header);
  }
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    tokens.push_back(line);
  }
  return Vocabulary(kind, std::move(tokens));
}

std::vector<int> encode_word_chars(const std::string& word, const Vocabulary& char_vocab) {
  if (word.empty()) throw ContractError("encode_word_chars: empty word");
  std::vector<int> ids;
  for (const auto& ch : utf8_chars(word)) ids.push_back(char_vocab.id(ch));
  ids.push_back(Vocabulary::kBoundary);
  return ids;
}

double char_coverage(const Vocabulary& word_vocab, const Vocabulary& char_vocab) {
  const auto types = word_vocab.regular_tokens();
  if (types.empty()) return 0.0;
  std::int64_t covered = 0;
  for (const auto& word : types) {
    bool ok = true;
    for (const auto& ch : utf8_chars(word)) {
      if (!char_vocab.contains(ch)) {
        ok = false;
        break;
      }
    }
    covered += ok ? 1 : 0;
  }
  return static_cast<double>(covered) / static_cast<double>(types.size());
}

}  // namespace hnmt
