#pragma once

#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "hnmt/attention.hpp"
#include "hnmt/batch.hpp"
#include "hnmt/nn.hpp"

namespace hnmt {

enum class ModelMode { kWord, kChar, kHybrid };
enum class SeedPath { kSame, kSeparate };

std::string to_string(ModelMode mode);
std::string to_string(SeedPath path);
ModelMode parse_mode(const std::string& s);
SeedPath parse_path(const std::string& s);

struct ModelConfig {
  ModelMode mode = ModelMode::kHybrid;
  SeedPath path = SeedPath::kSeparate;
  std::int64_t dim = 64;       // hidden size of the word backbone
  std::int64_t embed_dim = 0;  // word embedding size; 0 means dim
  std::int64_t char_dim = 0;   // 0 means dim; must equal dim in hybrid mode
  int word_layers = 2;
  int char_layers = 2;
  double alpha = 1.0;
  double dropout = 0.2;
  double init_range = 0.1;
  std::uint64_t seed = 1;

  std::int64_t effective_char_dim() const { return char_dim == 0 ? dim : char_dim; }
  std::int64_t effective_embed_dim() const { return embed_dim == 0 ? dim : embed_dim; }
};

struct LossBreakdown {
  double j_word = 0.0;
  double j_char = 0.0;
  double alpha = 1.0;
  std::int64_t word_tokens = 0;
  std::int64_t char_tokens = 0;

  double total() const { return j_word + alpha * j_char; }
};

struct EncodedSentence {
  Tensor states;         // [n × h] top-layer hidden states
  LstmState final_state;
};

struct TeacherForcedResult {
  Tensor j_word;  // [1 × 1]
  std::int64_t tokens = 0;
  // One seed per batch.target_rare entry (same order); h̃ₜ on the same path,
  // ĥₜ on the separate path. Empty in word/char modes.
  std::vector<Tensor> rare_seeds;
};

struct ForwardResult {
  Tensor j_word;
  Tensor j_char;
  Tensor j_total;
  std::int64_t word_tokens = 0;
  std::int64_t char_tokens = 0;

  LossBreakdown breakdown(double alpha) const;
};

// The full architecture: word-level attentional encoder-decoder backbone plus
// character-level source encoder and target decoder for rare words. Word and
// char modes run the same backbone over word or character streams.
class HybridModel {
 public:
  HybridModel(ModelConfig cfg, std::shared_ptr<const Vocabulary> src_words,
              std::shared_ptr<const Vocabulary> tgt_words,
              std::shared_ptr<const Vocabulary> src_chars,
              std::shared_ptr<const Vocabulary> tgt_chars);

  const ModelConfig& config() const { return cfg_; }
  // Vocabularies the backbone operates on (char vocabs in char mode).
  const Vocabulary& source_vocab() const;
  const Vocabulary& target_vocab() const;
  const Vocabulary& source_char_vocab() const { return *src_chars_; }
  const Vocabulary& target_char_vocab() const { return *tgt_chars_; }
  std::shared_ptr<const Vocabulary> source_words_ptr() const { return src_words_; }
  std::shared_ptr<const Vocabulary> target_words_ptr() const { return tgt_words_; }
  std::shared_ptr<const Vocabulary> source_chars_ptr() const { return src_chars_; }
  std::shared_ptr<const Vocabulary> target_chars_ptr() const { return tgt_chars_; }

  bool has_char_components() const { return cfg_.mode == ModelMode::kHybrid; }

  // Stable (name, tensor) list; order matches initialization draws and the
  // checkpoint layout.
  std::vector<std::pair<std::string, Tensor>> named_parameters() const;
  Tensor parameter(const std::string& name) const;

  // Runs the deep char-LSTM from zero states over each sequence and returns
  // the top-layer final hidden states stacked into [#types × d]. Computed
  // once per surface form.
  Tensor char_source_reps(const std::vector<std::vector<int>>& char_types, bool training,
                          Rng* rng) const;

  // Embeds every source row, substituting the per-type char representation at
  // rare slots, and runs the encoder stack. `rare_reps` may be undefined when
  // the batch has no rare source words.
  std::vector<EncodedSentence> encode_source(const Batch& batch, const Tensor& rare_reps,
                                             bool training, Rng* rng) const;

  // Teacher-forced decoder pass: attention at every step, word cross-entropy
  // masked by padding, and char-decoder seeds collected for rare tokens.
  TeacherForcedResult decode_teacher_forced(const Batch& batch,
                                            const std::vector<EncodedSentence>& encoded,
                                            bool training, Rng* rng) const;

  // Char decoder loss over rare target occurrences. Seeds initialize the
  // first layer's hidden state only; everything else starts at zero.
  Tensor char_target_loss(const std::vector<TargetRareToken>& entries,
                          const std::vector<Tensor>& seeds, bool training, Rng* rng,
                          std::int64_t* char_tokens) const;

  // J = J_w + α·J_c, differentiable end to end.
  ForwardResult total_loss(const Batch& batch, bool training, Rng* rng) const;

  // Word backbone.
  EmbeddingTable src_embed;
  std::vector<LstmLayerParams> encoder;
  EmbeddingTable tgt_embed;
  std::vector<LstmLayerParams> decoder;
  AttentionParams attention;
  Tensor w_project;  // [d × |V_tgt|]

  // Char components (hybrid mode only).
  EmbeddingTable char_src_embed;
  std::vector<LstmLayerParams> char_encoder;
  EmbeddingTable char_tgt_embed;
  std::vector<LstmLayerParams> char_decoder;
  Tensor w_char_project;  // [d × |C_tgt|]

 private:
  ModelConfig cfg_;
  std::shared_ptr<const Vocabulary> src_words_;
  std::shared_ptr<const Vocabulary> tgt_words_;
  std::shared_ptr<const Vocabulary> src_chars_;
  std::shared_ptr<const Vocabulary> tgt_chars_;
};

}  // namespace hnmt
