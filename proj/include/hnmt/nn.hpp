#pragma once

#include <span>
#include <utility>
#include <vector>

#include "hnmt/tensor.hpp"

namespace hnmt {

// One LSTM layer. Gate blocks are stacked in the fixed order
// input, forget, candidate, output; the checkpoint format relies on it.
struct LstmLayerParams {
  Tensor w_input;   // [4h × in]
  Tensor w_hidden;  // [4h × h]
  Tensor bias;      // [1 × 4h]

  std::int64_t hidden_size() const { return w_hidden.cols(); }
  std::int64_t input_size() const { return w_input.cols(); }

  static LstmLayerParams create(std::int64_t input, std::int64_t hidden, double init_range,
                                Rng& rng);
};

// Hidden and cell vectors for a stack of layers, each [1 × h].
struct LstmState {
  std::vector<Tensor> h;
  std::vector<Tensor> c;

  std::int64_t layers() const { return static_cast<std::int64_t>(h.size()); }
  static LstmState zeros(std::int64_t layers, std::int64_t hidden);
};

struct EmbeddingTable {
  Tensor weight;  // [V × d]

  std::int64_t vocab_size() const { return weight.rows(); }
  std::int64_t dim() const { return weight.cols(); }

  static EmbeddingTable create(std::int64_t vocab, std::int64_t dim, double init_range, Rng& rng);
};

// Standard LSTM recurrence for one layer:
//   gates = Wx·x + Wh·h + b;  c' = f⊙c + i⊙g;  h' = o⊙tanh(c')
std::pair<Tensor, Tensor> lstm_step(const LstmLayerParams& params, const Tensor& x,
                                    const Tensor& h_prev, const Tensor& c_prev);

struct LstmForwardResult {
  std::vector<Tensor> top_states;  // per timestep, [1 × h]
  LstmState final_state;
};

// Runs a stacked LSTM over a sequence. Dropout is applied to every layer's
// input (never to the recurrent connections) and only while training.
LstmForwardResult lstm_forward(const std::vector<LstmLayerParams>& stack,
                               const std::vector<Tensor>& inputs, const LstmState& init,
                               double dropout_p, bool training, Rng* rng);

// Row lookups; backward scatters into the looked-up rows only.
std::vector<Tensor> embed(const EmbeddingTable& table, std::span<const int> ids);

// hᵀW, no bias.
Tensor project_logits(const Tensor& weight, const Tensor& h);

}  // namespace hnmt
