#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "hnmt/model.hpp"

namespace hnmt {

// UTF-8 TSV `source<TAB>target`, first match wins.
class Dictionary {
 public:
  static Dictionary load(const std::string& path);
  void insert(const std::string& source, const std::string& target);
  std::optional<std::string> lookup(const std::string& source) const;
  std::size_t size() const { return entries_.size(); }

 private:
  std::map<std::string, std::string> entries_;
};

enum class UnkStrategy { kChar, kUnkReplace, kNone };
std::string to_string(UnkStrategy s);
UnkStrategy parse_strategy(const std::string& s);

struct Hypothesis {
  std::vector<int> tokens;             // emitted ids, </s> included when finished
  double score = 0.0;                  // sum of chosen-token log-probabilities
  LstmState state;
  std::vector<int> alignments;         // per-step argmax attention index
  std::map<int, Tensor> unk_seeds;     // step → char-decoder seed, for steps emitting <unk>
  bool complete = false;
  int completion_step = -1;
};

struct CharBeamResult {
  std::string surface;
  double score = 0.0;
  bool complete = false;
};

enum class OutputMechanism { kModel, kCharGenerated, kDictionary, kCopy, kUnk };

struct Translation {
  std::vector<std::string> tokens;
  std::vector<OutputMechanism> mechanism;  // per token
  double word_score = 0.0;
  std::vector<std::pair<int, double>> char_scores;  // (position, char beam score)
  bool used_copy_fallback_warning = false;

  std::string text() const;
};

struct DecodeOptions {
  int beam = 4;
  int char_beam = 5;
  int max_len = 50;
  int max_chars = 50;
  bool length_norm = false;
  UnkStrategy strategy = UnkStrategy::kChar;
  const Dictionary* dictionary = nullptr;
};

// Encodes one raw sentence the way training does (char substitution included).
EncodedSentence encode_tokens(const HybridModel& model,
                              const std::vector<std::string>& source_tokens, int max_len);

// Length-capped word-level beam search over the backbone distributions.
// Completed hypotheses compete by total log-probability.
std::vector<Hypothesis> beam_search_word(const HybridModel& model,
                                         const std::vector<std::string>& source_tokens,
                                         int beam, int max_len, int nbest,
                                         bool length_norm = false);

// Char-level beam search from a seeded first-layer state. Terminates on the
// boundary symbol or after max_chars; reserved char ids are never emitted.
CharBeamResult beam_search_char(const HybridModel& model, const Tensor& seed, int beam,
                                int max_chars);

// Word beam search plus per-<unk> recovery by the configured strategy.
Translation translate(const HybridModel& model, const std::vector<std::string>& source_tokens,
                      const DecodeOptions& opts);

// Translates many sentences, optionally in parallel; output order matches
// input order. Empty sources yield empty translations.
std::vector<Translation> translate_corpus(const HybridModel& model,
                                          const std::vector<std::vector<std::string>>& sources,
                                          const DecodeOptions& opts, int threads = 1);

}  // namespace hnmt
