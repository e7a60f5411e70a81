#pragma once

// Brute-force search oracles for beam-search exactness tests. They enumerate
// every admissible output sequence and score it with teacher-forced steps, so
// they share no search logic with the beam implementation they check.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "hnmt/decode.hpp"

namespace testutil {

struct ScoredSequence {
  std::vector<int> tokens;
  double score = -std::numeric_limits<double>::infinity();
};

inline std::vector<double> step_logprobs(const hnmt::HybridModel& model,
                                         const hnmt::EncodedSentence& encoded,
                                         const hnmt::LstmState& state, int input_id,
                                         hnmt::LstmState* next_state) {
  using namespace hnmt;
  Tensor x = embed(model.tgt_embed, std::span<const int>(&input_id, 1)).front();
  auto run = lstm_forward(model.decoder, {x}, state, 0.0, false, nullptr);
  AttentionOutput att = attend(run.top_states.front(), encoded.states, model.attention);
  Tensor logits = project_logits(model.w_project, att.attentional);
  auto v = logits.value();
  double mx = *std::max_element(v.begin(), v.end());
  double z = 0.0;
  for (double lv : v) z += std::exp(lv - mx);
  const double lse = std::log(z) + mx;
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] - lse;
  *next_state = run.final_state;
  return out;
}

inline bool sequence_better(const ScoredSequence& a, const ScoredSequence& b) {
  if (a.score != b.score) return a.score > b.score;
  return a.tokens < b.tokens;
}

// Exhaustive maximum-probability sequence of length <= max_len; sequences end
// at </s> or at the length cap, and <pad>/<s> are never emitted.
inline ScoredSequence brute_force_best(const hnmt::HybridModel& model,
                                       const std::vector<std::string>& source_tokens,
                                       int max_len) {
  using namespace hnmt;
  EncodedSentence encoded = encode_tokens(model, source_tokens, max_len);
  ScoredSequence best;
  std::vector<int> prefix;
  const int vocab = model.target_vocab().size();

  std::function<void(const LstmState&, int, double)> rec = [&](const LstmState& state,
                                                               int input_id, double logp) {
    LstmState next;
    auto lp = step_logprobs(model, encoded, state, input_id, &next);
    for (int tok = 0; tok < vocab; ++tok) {
      if (tok == Vocabulary::kPad || tok == Vocabulary::kBos) continue;
      prefix.push_back(tok);
      const double score = logp + lp[static_cast<std::size_t>(tok)];
      if (tok == Vocabulary::kEos || static_cast<int>(prefix.size()) == max_len) {
        ScoredSequence cand{prefix, score};
        if (sequence_better(cand, best)) best = cand;
      } else {
        rec(next, tok, score);
      }
      prefix.pop_back();
    }
  };
  rec(encoded.final_state, Vocabulary::kBos, 0.0);
  return best;
}

// Greedy argmax rollout, ties to the lowest token id.
inline ScoredSequence greedy_rollout(const hnmt::HybridModel& model,
                                     const std::vector<std::string>& source_tokens,
                                     int max_len) {
  using namespace hnmt;
  EncodedSentence encoded = encode_tokens(model, source_tokens, max_len);
  ScoredSequence out;
  out.score = 0.0;
  LstmState state = encoded.final_state;
  int input_id = Vocabulary::kBos;
  for (int step = 0; step < max_len; ++step) {
    LstmState next;
    auto lp = step_logprobs(model, encoded, state, input_id, &next);
    int pick = -1;
    for (int tok = 0; tok < static_cast<int>(lp.size()); ++tok) {
      if (tok == Vocabulary::kPad || tok == Vocabulary::kBos) continue;
      if (pick < 0 || lp[static_cast<std::size_t>(tok)] > lp[static_cast<std::size_t>(pick)]) {
        pick = tok;
      }
    }
    out.tokens.push_back(pick);
    out.score += lp[static_cast<std::size_t>(pick)];
    if (pick == Vocabulary::kEos) break;
    state = next;
    input_id = pick;
  }
  return out;
}

// Exhaustive char-level search mirror of beam_search_char.
inline hnmt::CharBeamResult brute_force_char(const hnmt::HybridModel& model,
                                             const hnmt::Tensor& seed, int max_chars) {
  using namespace hnmt;
  const Vocabulary& cv = model.target_char_vocab();
  struct Cand {
    std::vector<int> chars;
    double score;
    bool complete;
  };
  std::vector<Cand> finished;
  std::vector<int> prefix;

  std::function<void(const LstmState&, int, double)> rec = [&](const LstmState& state,
                                                               int input_id, double logp) {
    Tensor x = embed(model.char_tgt_embed, std::span<const int>(&input_id, 1)).front();
    auto run = lstm_forward(model.char_decoder, {x}, state, 0.0, false, nullptr);
    Tensor logits = project_logits(model.w_char_project, run.top_states.front());
    auto v = logits.value();
    double mx = *std::max_element(v.begin(), v.end());
    double z = 0.0;
    for (double lv : v) z += std::exp(lv - mx);
    const double lse = std::log(z) + mx;
    for (int tok = 0; tok < cv.size(); ++tok) {
      if (tok == Vocabulary::kUnk || tok == Vocabulary::kBos || tok == Vocabulary::kEos ||
          tok == Vocabulary::kPad) {
        continue;
      }
      const double score = logp + (v[static_cast<std::size_t>(tok)] - lse);
      if (tok == Vocabulary::kBoundary) {
        finished.push_back({prefix, score, true});
        continue;
      }
      prefix.push_back(tok);
      if (static_cast<int>(prefix.size()) == max_chars) {
        finished.push_back({prefix, score, false});
      } else {
        rec(run.final_state, tok, score);
      }
      prefix.pop_back();
    }
  };
  LstmState init = LstmState::zeros(model.config().char_layers,
                                    model.config().effective_char_dim());
  init.h[0] = seed;
  rec(init, Vocabulary::kBos, 0.0);

  // Complete sequences win; partials only matter when nothing completed.
  auto better = [](const Cand& a, const Cand& b) {
    if (a.complete != b.complete) return a.complete;
    if (a.score != b.score) return a.score > b.score;
    return a.chars < b.chars;
  };
  std::sort(finished.begin(), finished.end(), better);
  CharBeamResult out;
  if (finished.empty()) return out;
  out.complete = finished.front().complete;
  out.score = finished.front().score;
  for (int tok : finished.front().chars) out.surface += cv.token(tok);
  return out;
}

}  // namespace testutil
