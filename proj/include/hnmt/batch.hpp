#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hnmt/rng.hpp"
#include "hnmt/vocab.hpp"

namespace hnmt {

struct SentencePair {
  std::vector<std::string> source;
  std::vector<std::string> target;
};

using ParallelCorpus = std::vector<SentencePair>;

// Reads a UTF-8 file with one sentence per line, tokens space-separated.
std::vector<std::vector<std::string>> read_corpus(const std::string& path);
ParallelCorpus zip_corpus(const std::string& src_path, const std::string& tgt_path);

struct RareSlot {
  int sentence = 0;
  int position = 0;
  bool operator==(const RareSlot&) const = default;
};

// One entry per distinct rare source surface form in the batch.
struct SourceRareType {
  std::string surface;
  std::vector<int> char_ids;  // chars + boundary
  std::vector<RareSlot> slots;
};

// One entry per rare target token occurrence.
struct TargetRareToken {
  std::string surface;
  std::vector<int> char_ids;  // chars + boundary
  RareSlot slot;              // position indexes target_output
};

struct Batch {
  std::vector<std::vector<int>> source;         // [B × n], padded with <pad>
  std::vector<std::vector<std::uint8_t>> source_mask;
  std::vector<std::vector<int>> target_input;   // <s> + tokens, padded
  std::vector<std::vector<int>> target_output;  // tokens + </s>, padded
  std::vector<std::vector<std::uint8_t>> target_mask;
  std::vector<SourceRareType> source_rare;
  std::vector<TargetRareToken> target_rare;

  int size() const { return static_cast<int>(source.size()); }
  int source_len(int s) const;
  int target_len(int s) const;  // true length of target_output incl. </s>
};

struct BatchingOptions {
  int batch_size = 128;
  int max_len = 50;       // tokens kept per side; the rest are ignored
  bool char_stream = false;  // split sentences into characters with `_` separators
  bool rare_bookkeeping = true;
};

// Turns each sentence into the token stream the model consumes. In char-stream
// mode words are split into characters joined by the boundary symbol.
std::vector<std::string> stream_tokens(const std::vector<std::string>& words, bool char_stream);

// Deterministically shuffles (by seed), truncates at max_len, encodes, pads,
// and fills the per-type source / per-token target rare lists.
std::vector<Batch> make_batches(const ParallelCorpus& pairs, const Vocabulary& src_vocab,
                                const Vocabulary& tgt_vocab, const Vocabulary* src_chars,
                                const Vocabulary* tgt_chars, const BatchingOptions& opts,
                                std::uint64_t seed);

}  // namespace hnmt
