#include "hnmt/decode.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <sstream>
#include <thread>

namespace hnmt {

Dictionary Dictionary::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read dictionary file " + path);
  Dictionary dict;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw FormatError("dictionary line without TAB: " + line);
    dict.insert(line.substr(0, tab), line.substr(tab + 1));
  }
  return dict;
}

void Dictionary::insert(const std::string& source, const std::string& target) {
  entries_.try_emplace(source, target);  // first match wins
}

std::optional<std::string> Dictionary::lookup(const std::string& source) const {
  auto it = entries_.find(source);
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

std::string to_string(UnkStrategy s) {
  switch (s) {
    case UnkStrategy::kChar: return "char";
    case UnkStrategy::kUnkReplace: return "unk-replace";
    case UnkStrategy::kNone: return "none";
  }
  return "none";
}

UnkStrategy parse_strategy(const std::string& s) {
  if (s == "char") return UnkStrategy::kChar;
  if (s == "unk-replace") return UnkStrategy::kUnkReplace;
  if (s == "none") return UnkStrategy::kNone;
  throw ConfigError("unknown strategy '" + s + "' (expected char|unk-replace|none)");
}

std::string Translation::text() const {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += ' ';
    out += tokens[i];
  }
  return out;
}

namespace {

std::vector<double> log_softmax_values(const Tensor& logits) {
  auto v = logits.value();
  double mx = *std::max_element(v.begin(), v.end());
  double z = 0.0;
  for (double x : v) z += std::exp(x - mx);
  const double lse = std::log(z) + mx;
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] - lse;
  return out;
}

int argmax_index(const Tensor& weights) {
  auto v = weights.value();
  return static_cast<int>(std::max_element(v.begin(), v.end()) - v.begin());
}

// score desc, then token sequence asc, then earlier completion.
bool better(const Hypothesis& a, const Hypothesis& b, bool length_norm) {
  const double sa = length_norm && !a.tokens.empty()
                        ? a.score / static_cast<double>(a.tokens.size())
                        : a.score;
  const double sb = length_norm && !b.tokens.empty()
                        ? b.score / static_cast<double>(b.tokens.size())
                        : b.score;
  if (sa != sb) return sa > sb;
  if (a.tokens != b.tokens) return a.tokens < b.tokens;
  return a.completion_step < b.completion_step;
}

}  // namespace

EncodedSentence encode_tokens(const HybridModel& model,
                              const std::vector<std::string>& source_tokens, int max_len) {
  if (source_tokens.empty()) throw ContractError("encode_tokens: empty source sentence");
  const ModelMode mode = model.config().mode;
  BatchingOptions opts;
  opts.batch_size = 1;
  opts.max_len = max_len;
  opts.char_stream = mode == ModelMode::kChar;
  opts.rare_bookkeeping = mode == ModelMode::kHybrid;
  ParallelCorpus single{{source_tokens, {}}};
  const Vocabulary* src_chars =
      mode == ModelMode::kHybrid ? &model.source_char_vocab() : nullptr;
  Batch batch = make_batches(single, model.source_vocab(), model.target_vocab(), src_chars,
                             nullptr, opts, /*seed=*/0)
                    .front();
  Tensor reps;
  if (mode == ModelMode::kHybrid && !batch.source_rare.empty()) {
    std::vector<std::vector<int>> types;
    for (const auto& t : batch.source_rare) types.push_back(t.char_ids);
    reps = model.char_source_reps(types, /*training=*/false, nullptr);
  }
  return model.encode_source(batch, reps, /*training=*/false, nullptr).front();
}

std::vector<Hypothesis> beam_search_word(const HybridModel& model,
                                         const std::vector<std::string>& source_tokens,
                                         int beam, int max_len, int nbest, bool length_norm) {
  if (beam < 1 || max_len < 1) throw ContractError("beam_search_word: beam and max_len must be >= 1");
  EncodedSentence encoded = encode_tokens(model, source_tokens, max_len);
  const bool hybrid = model.config().mode == ModelMode::kHybrid;
  const bool separate = model.config().path == SeedPath::kSeparate;
  const std::int64_t vocab = model.target_vocab().size();

  std::vector<Hypothesis> live;
  live.push_back(Hypothesis{{}, 0.0, encoded.final_state, {}, {}, false, -1});
  std::vector<Hypothesis> done;

  for (int step = 0; step < max_len && !live.empty(); ++step) {
    std::vector<Hypothesis> candidates;
    candidates.reserve(live.size() * static_cast<std::size_t>(vocab));
    for (const Hypothesis& hyp : live) {
      const int input_id = hyp.tokens.empty() ? Vocabulary::kBos : hyp.tokens.back();
      Tensor x = embed(model.tgt_embed, std::span<const int>(&input_id, 1)).front();
      auto run = lstm_forward(model.decoder, {x}, hyp.state, 0.0, false, nullptr);
      const Tensor& ht = run.top_states.front();
      AttentionOutput att = attend(ht, encoded.states, model.attention);
      Tensor logits = project_logits(model.w_project, att.attentional);
      auto logprobs = log_softmax_values(logits);
      const int align = argmax_index(att.weights);
      Tensor seed;
      if (hybrid) {
        seed = separate ? counterpart_state(att.context, ht, model.attention.w_counterpart)
                        : att.attentional;
      }
      for (std::int64_t tok = 0; tok < vocab; ++tok) {
        if (tok == Vocabulary::kPad || tok == Vocabulary::kBos) continue;
        Hypothesis next = hyp;
        next.tokens.push_back(static_cast<int>(tok));
        next.score += logprobs[static_cast<std::size_t>(tok)];
        next.state = run.final_state;
        next.alignments.push_back(align);
        if (tok == Vocabulary::kEos) {
          next.complete = true;
          next.completion_step = step;
        } else if (hybrid && tok == Vocabulary::kUnk) {
          next.unk_seeds[step] = seed;
        }
        candidates.push_back(std::move(next));
      }
    }
    const std::size_t keep = std::min(candidates.size(), static_cast<std::size_t>(beam));
    std::partial_sort(candidates.begin(), candidates.begin() + keep, candidates.end(),
                      [length_norm](const Hypothesis& a, const Hypothesis& b) {
                        return better(a, b, length_norm);
                      });
    candidates.resize(keep);
    live.clear();
    for (auto& cand : candidates) {
      if (cand.complete) {
        done.push_back(std::move(cand));
      } else {
        live.push_back(std::move(cand));
      }
    }
  }
  // Anything still alive ran into the length cap.
  for (auto& hyp : live) {
    hyp.completion_step = max_len;
    done.push_back(std::move(hyp));
  }
  std::sort(done.begin(), done.end(), [length_norm](const Hypothesis& a, const Hypothesis& b) {
    return better(a, b, length_norm);
  });
  if (static_cast<int>(done.size()) > nbest) done.resize(static_cast<std::size_t>(nbest));
  return done;
}

CharBeamResult beam_search_char(const HybridModel& model, const Tensor& seed, int beam,
                                int max_chars) {
  if (model.config().mode != ModelMode::kHybrid) {
    throw ConfigError("beam_search_char: model has no char decoder");
  }
  const std::int64_t cdim = model.config().effective_char_dim();
  if (!seed.defined() || seed.cols() != cdim) {
    throw ContractError("beam_search_char: seed dim does not match char hidden dim");
  }
  const Vocabulary& cv = model.target_char_vocab();

  struct CharHyp {
    std::vector<int> chars;
    double score = 0.0;
    LstmState state;
    bool complete = false;
    int completion_step = -1;
  };
  auto char_better = [](const CharHyp& a, const CharHyp& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.chars != b.chars) return a.chars < b.chars;
    return a.completion_step < b.completion_step;
  };

  LstmState init = LstmState::zeros(model.config().char_layers, cdim);
  init.h[0] = seed;
  std::vector<CharHyp> live{CharHyp{{}, 0.0, std::move(init), false, -1}};
  std::vector<CharHyp> done;

  for (int step = 0; step < max_chars && !live.empty(); ++step) {
    std::vector<CharHyp> candidates;
    for (const CharHyp& hyp : live) {
      const int input_id = hyp.chars.empty() ? Vocabulary::kBos : hyp.chars.back();
      Tensor x = embed(model.char_tgt_embed, std::span<const int>(&input_id, 1)).front();
      auto run = lstm_forward(model.char_decoder, {x}, hyp.state, 0.0, false, nullptr);
      Tensor logits = project_logits(model.w_char_project, run.top_states.front());
      auto logprobs = log_softmax_values(logits);
      for (int tok = 0; tok < cv.size(); ++tok) {
        // Reserved symbols are not characters; a generated surface form can
        // never contain them.
        if (tok == Vocabulary::kUnk || tok == Vocabulary::kBos || tok == Vocabulary::kEos ||
            tok == Vocabulary::kPad) {
          continue;
        }
        CharHyp next = hyp;
        next.score += logprobs[static_cast<std::size_t>(tok)];
        next.state = run.final_state;
        if (tok == Vocabulary::kBoundary) {
          next.complete = true;
          next.completion_step = step;
        } else {
          next.chars.push_back(tok);
        }
        candidates.push_back(std::move(next));
      }
    }
    const std::size_t keep = std::min(candidates.size(), static_cast<std::size_t>(beam));
    std::partial_sort(candidates.begin(), candidates.begin() + keep, candidates.end(),
                      char_better);
    candidates.resize(keep);
    live.clear();
    for (auto& cand : candidates) {
      if (cand.complete) {
        done.push_back(std::move(cand));
      } else {
        live.push_back(std::move(cand));
      }
    }
  }
  const bool complete = !done.empty();
  if (!complete) {
    done = std::move(live);  // length-capped partials
  }
  std::sort(done.begin(), done.end(), char_better);
  if (done.empty()) return {"", 0.0, false};
  std::string surface;
  for (int tok : done.front().chars) surface += cv.token(tok);
  return {surface, done.front().score, complete};
}

Translation translate(const HybridModel& model, const std::vector<std::string>& source_tokens,
                      const DecodeOptions& opts) {
  const ModelMode mode = model.config().mode;
  if (opts.strategy == UnkStrategy::kChar && mode != ModelMode::kHybrid) {
    throw ConfigError("strategy=char requires a hybrid model");
  }
  if (opts.strategy == UnkStrategy::kUnkReplace && mode == ModelMode::kChar) {
    throw ConfigError("strategy=unk-replace is not available in char mode");
  }
  Translation out;
  if (source_tokens.empty()) return out;
  auto nbest = beam_search_word(model, source_tokens, opts.beam, opts.max_len, 1,
                                opts.length_norm);
  if (nbest.empty()) return out;
  const Hypothesis& best = nbest.front();
  out.word_score = best.score;

  const Vocabulary& tv = model.target_vocab();
  if (mode == ModelMode::kChar) {
    // The backbone emitted characters; reassemble words at boundary symbols.
    std::string word;
    auto flush = [&]() {
      if (!word.empty()) {
        out.tokens.push_back(word);
        out.mechanism.push_back(OutputMechanism::kModel);
        word.clear();
      }
    };
    for (int tok : best.tokens) {
      if (tok == Vocabulary::kEos) break;
      if (tok == Vocabulary::kBoundary) {
        flush();
      } else {
        word += tv.token(tok);
      }
    }
    flush();
    return out;
  }

  // Source surfaces after the same truncation the encoder saw.
  std::vector<std::string> visible(source_tokens.begin(),
                                   source_tokens.begin() +
                                       std::min<std::size_t>(source_tokens.size(),
                                                             static_cast<std::size_t>(opts.max_len)));
  for (std::size_t step = 0; step < best.tokens.size(); ++step) {
    const int tok = best.tokens[step];
    if (tok == Vocabulary::kEos) break;
    if (tok != Vocabulary::kUnk || opts.strategy == UnkStrategy::kNone) {
      out.tokens.push_back(tv.token(tok));
      out.mechanism.push_back(tok == Vocabulary::kUnk ? OutputMechanism::kUnk
                                                      : OutputMechanism::kModel);
      continue;
    }
    const int position = static_cast<int>(out.tokens.size());
    if (opts.strategy == UnkStrategy::kChar) {
      auto it = best.unk_seeds.find(static_cast<int>(step));
      if (it == best.unk_seeds.end()) {
        throw ContractError("translate: missing char seed for <unk> step");
      }
      CharBeamResult res = beam_search_char(model, it->second, opts.char_beam, opts.max_chars);
      out.tokens.push_back(res.surface);
      out.mechanism.push_back(OutputMechanism::kCharGenerated);
      out.char_scores.emplace_back(position, res.score);
    } else {  // unk-replace
      const int align = best.alignments[step];
      const std::string& src_word =
          align < static_cast<int>(visible.size()) ? visible[static_cast<std::size_t>(align)]
                                                   : visible.back();
      std::optional<std::string> hit;
      if (opts.dictionary != nullptr) {
        hit = opts.dictionary->lookup(src_word);
      } else {
        out.used_copy_fallback_warning = true;
      }
      out.tokens.push_back(hit.value_or(src_word));
      out.mechanism.push_back(hit ? OutputMechanism::kDictionary : OutputMechanism::kCopy);
      out.char_scores.emplace_back(position, 0.0);
    }
  }
  return out;
}

std::vector<Translation> translate_corpus(const HybridModel& model,
                                          const std::vector<std::vector<std::string>>& sources,
                                          const DecodeOptions& opts, int threads) {
  std::vector<Translation> out(sources.size());
  if (threads < 1) threads = 1;
  threads = std::min<int>(threads, static_cast<int>(sources.size()) > 0
                                       ? static_cast<int>(sources.size())
                                       : 1);
  if (threads == 1) {
    for (std::size_t i = 0; i < sources.size(); ++i) {
      out[i] = translate(model, sources[i], opts);
    }
    return out;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> workers;
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(threads));
  for (int t = 0; t < threads; ++t) {
    workers.emplace_back([&, t]() {
      try {
        for (std::size_t i = next.fetch_add(1); i < sources.size(); i = next.fetch_add(1)) {
          out[i] = translate(model, sources[i], opts);
        }
      } catch (...) {
        errors[static_cast<std::size_t>(t)] = std::current_exception();
      }
    });
  }
  for (auto& w : workers) w.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

}  // namespace hnmt
