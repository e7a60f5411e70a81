#include "hnmt/model.hpp"

#include <algorithm>
#include <map>
#include <numeric>

namespace hnmt {

std::string to_string(ModelMode mode) {
  switch (mode) {
    case ModelMode::kWord: return "word";
    case ModelMode::kChar: return "char";
    case ModelMode::kHybrid: return "hybrid";
  }
  return "hybrid";
}

std::string to_string(SeedPath path) {
  return path == SeedPath::kSame ? "same" : "separate";
}

ModelMode parse_mode(const std::string& s) {
  if (s == "word") return ModelMode::kWord;
  if (s == "char") return ModelMode::kChar;
  if (s == "hybrid") return ModelMode::kHybrid;
  throw ConfigError("unknown mode '" + s + "' (expected word|char|hybrid)");
}

SeedPath parse_path(const std::string& s) {
  if (s == "same") return SeedPath::kSame;
  if (s == "separate") return SeedPath::kSeparate;
  throw ConfigError("unknown path '" + s + "' (expected same|separate)");
}

LossBreakdown ForwardResult::breakdown(double alpha) const {
  LossBreakdown b;
  b.j_word = j_word.item();
  b.j_char = j_char.item();
  b.alpha = alpha;
  b.word_tokens = word_tokens;
  b.char_tokens = char_tokens;
  return b;
}

HybridModel::HybridModel(ModelConfig cfg, std::shared_ptr<const Vocabulary> src_words,
                         std::shared_ptr<const Vocabulary> tgt_words,
                         std::shared_ptr<const Vocabulary> src_chars,
                         std::shared_ptr<const Vocabulary> tgt_chars)
    : cfg_(cfg),
      src_words_(std::move(src_words)),
      tgt_words_(std::move(tgt_words)),
      src_chars_(std::move(src_chars)),
      tgt_chars_(std::move(tgt_chars)) {
  if (cfg_.dim < 1 || cfg_.word_layers < 1) throw ConfigError("model dims/layers must be >= 1");
  if (cfg_.alpha < 0.0) throw ConfigError("alpha must be >= 0");
  const std::int64_t cdim = cfg_.effective_char_dim();
  if (cfg_.mode == ModelMode::kChar) {
    if (!src_chars_ || !tgt_chars_) throw ConfigError("char mode requires char vocabularies");
  } else if (!src_words_ || !tgt_words_) {
    throw ConfigError("word/hybrid modes require word vocabularies");
  }
  if (cfg_.mode == ModelMode::kHybrid) {
    if (!src_chars_ || !tgt_chars_) throw ConfigError("hybrid mode requires char vocabularies");
    if (cfg_.char_layers < 1) throw ConfigError("char_layers must be >= 1");
    // h̃ₜ seeds the char decoder's first layer directly, so the sizes must
    // agree; an adapter is deliberately not provided.
    if (cdim != cfg_.dim) {
      throw ConfigError("char hidden size " + std::to_string(cdim) +
                        " must equal word hidden size " + std::to_string(cfg_.dim));
    }
  }
  Rng rng(cfg_.seed);
  const double r = cfg_.init_range;
  const std::int64_t d = cfg_.dim;
  const std::int64_t e = cfg_.effective_embed_dim();
  if (cfg_.mode == ModelMode::kHybrid && e != d) {
    // Rare source slots splice char representations (size d) into the
    // embedded input sequence, so the embedding size cannot differ.
    throw ConfigError("hybrid mode requires embed_dim == dim");
  }
  // Backbone draws come first so that a word-mode model and a hybrid model
  // with the same seed share bitwise-identical backbone parameters.
  src_embed = EmbeddingTable::create(source_vocab().size(), e, r, rng);
  for (int l = 0; l < cfg_.word_layers; ++l) {
    encoder.push_back(LstmLayerParams::create(l == 0 ? e : d, d, r, rng));
  }
  tgt_embed = EmbeddingTable::create(target_vocab().size(), e, r, rng);
  for (int l = 0; l < cfg_.word_layers; ++l) {
    decoder.push_back(LstmLayerParams::create(l == 0 ? e : d, d, r, rng));
  }
  attention = AttentionParams::create(d, /*with_counterpart=*/false, r, rng);
  w_project = Tensor::uniform({d, target_vocab().size()}, -r, r, rng).require_grad();
  if (cfg_.mode == ModelMode::kHybrid) {
    char_src_embed = EmbeddingTable::create(src_chars_->size(), cdim, r, rng);
    for (int l = 0; l < cfg_.char_layers; ++l) {
      char_encoder.push_back(LstmLayerParams::create(cdim, cdim, r, rng));
    }
    char_tgt_embed = EmbeddingTable::create(tgt_chars_->size(), cdim, r, rng);
    for (int l = 0; l < cfg_.char_layers; ++l) {
      char_decoder.push_back(LstmLayerParams::create(cdim, cdim, r, rng));
    }
    w_char_project = Tensor::uniform({cdim, tgt_chars_->size()}, -r, r, rng).require_grad();
    attention.w_counterpart = Tensor::uniform({d, 2 * d}, -r, r, rng).require_grad();
  }
}

const Vocabulary& HybridModel::source_vocab() const {
  return cfg_.mode == ModelMode::kChar ? *src_chars_ : *src_words_;
}

const Vocabulary& HybridModel::target_vocab() const {
  return cfg_.mode == ModelMode::kChar ? *tgt_chars_ : *tgt_words_;
}

std::vector<std::pair<std::string, Tensor>> HybridModel::named_parameters() const {
  std::vector<std::pair<std::string, Tensor>> out;
  auto add_stack = [&out](const std::string& prefix, const std::vector<LstmLayerParams>& stack) {
    for (std::size_t l = 0; l < stack.size(); ++l) {
      const std::string base = prefix + "." + std::to_string(l) + ".";
      out.emplace_back(base + "w_input", stack[l].w_input);
      out.emplace_back(base + "w_hidden", stack[l].w_hidden);
      out.emplace_back(base + "bias", stack[l].bias);
    }
  };
  out.emplace_back("src_embed.weight", src_embed.weight);
  add_stack("encoder", encoder);
  out.emplace_back("tgt_embed.weight", tgt_embed.weight);
  add_stack("decoder", decoder);
  out.emplace_back("attention.w_align", attention.w_align);
  out.emplace_back("attention.w_combine", attention.w_combine);
  out.emplace_back("project.weight", w_project);
  if (cfg_.mode == ModelMode::kHybrid) {
    out.emplace_back("char_src_embed.weight", char_src_embed.weight);
    add_stack("char_encoder", char_encoder);
    out.emplace_back("char_tgt_embed.weight", char_tgt_embed.weight);
    add_stack("char_decoder", char_decoder);
    out.emplace_back("char_project.weight", w_char_project);
    out.emplace_back("attention.w_counterpart", attention.w_counterpart);
  }
  return out;
}

Tensor HybridModel::parameter(const std::string& name) const {
  for (auto& [n, t] : named_parameters()) {
    if (n == name) return t;
  }
  throw ConfigError("no parameter named " + name);
}

Tensor HybridModel::char_source_reps(const std::vector<std::vector<int>>& char_types,
                                     bool training, Rng* rng) const {
  if (cfg_.mode != ModelMode::kHybrid) {
    throw ContractError("char_source_reps: model has no char components");
  }
  std::vector<Tensor> reps;
  reps.reserve(char_types.size());
  for (const auto& ids : char_types) {
    if (ids.empty()) throw ContractError("char_source_reps: empty character sequence");
    auto inputs = embed(char_src_embed, ids);
    auto run = lstm_forward(char_encoder, inputs,
                            LstmState::zeros(cfg_.char_layers, cfg_.effective_char_dim()),
                            cfg_.dropout, training, rng);
    reps.push_back(run.top_states.back());
  }
  if (reps.empty()) return Tensor();
  return concat_rows(reps);
}

std::vector<EncodedSentence> HybridModel::encode_source(const Batch& batch,
                                                        const Tensor& rare_reps, bool training,
                                                        Rng* rng) const {
  // (sentence, position) → index into batch.source_rare.
  std::map<std::pair<int, int>, std::size_t> rare_at;
  if (cfg_.mode == ModelMode::kHybrid) {
    for (std::size_t t = 0; t < batch.source_rare.size(); ++t) {
      for (const auto& slot : batch.source_rare[t].slots) {
        rare_at[{slot.sentence, slot.position}] = t;
      }
    }
  }
  std::vector<EncodedSentence> out;
  for (int s = 0; s < batch.size(); ++s) {
    const int len = batch.source_len(s);
    if (len == 0) throw ContractError("encode_source: empty source sentence in batch");
    std::vector<Tensor> inputs;
    inputs.reserve(static_cast<std::size_t>(len));
    for (int p = 0; p < len; ++p) {
      auto it = rare_at.find({s, p});
      if (it != rare_at.end()) {
        inputs.push_back(row(rare_reps, static_cast<std::int64_t>(it->second)));
      } else {
        const int id = batch.source[static_cast<std::size_t>(s)][static_cast<std::size_t>(p)];
        inputs.push_back(embed(src_embed, std::span<const int>(&id, 1)).front());
      }
    }
    auto run = lstm_forward(encoder, inputs, LstmState::zeros(cfg_.word_layers, cfg_.dim),
                            cfg_.dropout, training, rng);
    out.push_back({concat_rows(run.top_states), std::move(run.final_state)});
  }
  return out;
}

TeacherForcedResult HybridModel::decode_teacher_forced(const Batch& batch,
                                                       const std::vector<EncodedSentence>& encoded,
                                                       bool training, Rng* rng) const {
  const bool collect_seeds = cfg_.mode == ModelMode::kHybrid;
  std::map<std::pair<int, int>, std::size_t> rare_at;
  if (collect_seeds) {
    for (std::size_t t = 0; t < batch.target_rare.size(); ++t) {
      const auto& slot = batch.target_rare[t].slot;
      rare_at[{slot.sentence, slot.position}] = t;
    }
  }
  TeacherForcedResult result;
  result.rare_seeds.resize(batch.target_rare.size());
  std::vector<Tensor> step_losses;
  for (int s = 0; s < batch.size(); ++s) {
    const int len = batch.target_len(s);
    LstmState state = encoded[static_cast<std::size_t>(s)].final_state;
    for (int p = 0; p < len; ++p) {
      const int input_id =
          batch.target_input[static_cast<std::size_t>(s)][static_cast<std::size_t>(p)];
      const int output_id =
          batch.target_output[static_cast<std::size_t>(s)][static_cast<std::size_t>(p)];
      Tensor x = embed(tgt_embed, std::span<const int>(&input_id, 1)).front();
      auto run = lstm_forward(decoder, {x}, state, cfg_.dropout, training, rng);
      state = std::move(run.final_state);
      const Tensor& ht = run.top_states.front();
      AttentionOutput att = attend(ht, encoded[static_cast<std::size_t>(s)].states, attention);
      Tensor logits = project_logits(w_project, att.attentional);
      step_losses.push_back(cross_entropy_row(logits, output_id));
      result.tokens += 1;
      if (collect_seeds && output_id == Vocabulary::kUnk) {
        auto it = rare_at.find({s, p});
        if (it != rare_at.end()) {
          result.rare_seeds[it->second] =
              cfg_.path == SeedPath::kSeparate
                  ? counterpart_state(att.context, ht, attention.w_counterpart)
                  : att.attentional;
        }
      }
    }
  }
  result.j_word = step_losses.empty() ? Tensor::scalar(0.0) : add_n(step_losses);
  return result;
}

Tensor HybridModel::char_target_loss(const std::vector<TargetRareToken>& entries,
                                     const std::vector<Tensor>& seeds, bool training, Rng* rng,
                                     std::int64_t* char_tokens) const {
  if (cfg_.mode != ModelMode::kHybrid) {
    throw ContractError("char_target_loss: model has no char components");
  }
  if (entries.size() != seeds.size()) {
    throw ContractError("char_target_loss: " + std::to_string(seeds.size()) + " seeds for " +
                        std::to_string(entries.size()) + " entries");
  }
  const std::int64_t cdim = cfg_.effective_char_dim();
  // Canonical (sentence, position) order keeps the summed loss bitwise
  // independent of the entry order handed in.
  std::vector<std::size_t> order(entries.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&entries](std::size_t a, std::size_t b) {
    const auto& sa = entries[a].slot;
    const auto& sb = entries[b].slot;
    return std::pair(sa.sentence, sa.position) < std::pair(sb.sentence, sb.position);
  });
  std::vector<Tensor> entry_losses;
  for (std::size_t idx : order) {
    const auto& entry = entries[idx];
    const Tensor& seed = seeds[idx];
    if (!seed.defined()) throw ContractError("char_target_loss: missing seed for rare token");
    if (seed.cols() != cdim) {
      throw ConfigError("char_target_loss: seed dim " + std::to_string(seed.cols()) +
                        " != char hidden dim " + std::to_string(cdim));
    }
    // First-layer hidden state only; cells and higher layers start at zero.
    LstmState init = LstmState::zeros(cfg_.char_layers, cdim);
    init.h[0] = seed;
    std::vector<int> input_ids;
    input_ids.push_back(Vocabulary::kBos);
    input_ids.insert(input_ids.end(), entry.char_ids.begin(), entry.char_ids.end() - 1);
    auto inputs = embed(char_tgt_embed, input_ids);
    auto run = lstm_forward(char_decoder, inputs, init, cfg_.dropout, training, rng);
    std::vector<Tensor> losses;
    for (std::size_t p = 0; p < entry.char_ids.size(); ++p) {
      Tensor logits = project_logits(w_char_project, run.top_states[p]);
      losses.push_back(cross_entropy_row(logits, entry.char_ids[p]));
    }
    entry_losses.push_back(add_n(losses));
    if (char_tokens != nullptr) {
      *char_tokens += static_cast<std::int64_t>(entry.char_ids.size());
    }
  }
  return entry_losses.empty() ? Tensor::scalar(0.0) : add_n(entry_losses);
}

ForwardResult HybridModel::total_loss(const Batch& batch, bool training, Rng* rng) const {
  ForwardResult result;
  Tensor rare_reps;
  if (cfg_.mode == ModelMode::kHybrid && !batch.source_rare.empty()) {
    std::vector<std::vector<int>> types;
    types.reserve(batch.source_rare.size());
    for (const auto& t : batch.source_rare) types.push_back(t.char_ids);
    rare_reps = char_source_reps(types, training, rng);
  }
  auto encoded = encode_source(batch, rare_reps, training, rng);
  auto tf = decode_teacher_forced(batch, encoded, training, rng);
  result.j_word = tf.j_word;
  result.word_tokens = tf.tokens;
  if (cfg_.mode == ModelMode::kHybrid && !batch.target_rare.empty()) {
    result.j_char = char_target_loss(batch.target_rare, tf.rare_seeds, training, rng,
                                     &result.char_tokens);
  } else {
    result.j_char = Tensor::scalar(0.0);
  }
  result.j_total = add(result.j_word, scale(result.j_char, cfg_.alpha));
  return result;
}

}  // namespace hnmt
