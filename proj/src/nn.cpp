#include "hnmt/nn.hpp"

#include <string>

namespace hnmt {

LstmLayerParams LstmLayerParams::create(std::int64_t input, std::int64_t hidden,
                                        double init_range, Rng& rng) {
  LstmLayerParams p;
  p.w_input = Tensor::uniform({4 * hidden, input}, -init_range, init_range, rng).require_grad();
  p.w_hidden = Tensor::uniform({4 * hidden, hidden}, -init_range, init_range, rng).require_grad();
  p.bias = Tensor::uniform({1, 4 * hidden}, -init_range, init_range, rng).require_grad();
  return p;
}

LstmState LstmState::zeros(std::int64_t layers, std::int64_t hidden) {
  LstmState s;
  for (std::int64_t l = 0; l < layers; ++l) {
    s.h.push_back(Tensor::zeros({1, hidden}));
    s.c.push_back(Tensor::zeros({1, hidden}));
  }
  return s;
}

EmbeddingTable EmbeddingTable::create(std::int64_t vocab, std::int64_t dim, double init_range,
                                      Rng& rng) {
  EmbeddingTable t;
  t.weight = Tensor::uniform({vocab, dim}, -init_range, init_range, rng).require_grad();
  return t;
}

std::pair<Tensor, Tensor> lstm_step(const LstmLayerParams& params, const Tensor& x,
                                    const Tensor& h_prev, const Tensor& c_prev) {
  const std::int64_t h = params.hidden_size();
  Tensor gates = add_n({matmul_nt(x, params.w_input), matmul_nt(h_prev, params.w_hidden),
                        params.bias});
  Tensor gi = sigmoid(slice_cols(gates, 0, h));
  Tensor gf = sigmoid(slice_cols(gates, h, h));
  Tensor gg = tanh(slice_cols(gates, 2 * h, h));
  Tensor go = sigmoid(slice_cols(gates, 3 * h, h));
  Tensor c_next = add(mul(gf, c_prev), mul(gi, gg));
  Tensor h_next = mul(go, tanh(c_next));
  return {h_next, c_next};
}

LstmForwardResult lstm_forward(const std::vector<LstmLayerParams>& stack,
                               const std::vector<Tensor>& inputs, const LstmState& init,
                               double dropout_p, bool training, Rng* rng) {
  if (inputs.empty()) throw ContractError("lstm_forward: empty input sequence");
  if (stack.empty()) throw ContractError("lstm_forward: empty layer stack");
  if (init.layers() != static_cast<std::int64_t>(stack.size())) {
    throw DimensionError("lstm_forward: " + std::to_string(init.layers()) + " state layers for " +
                         std::to_string(stack.size()) + " stack layers");
  }
  if (dropout_p > 0.0 && training && rng == nullptr) {
    throw ContractError("lstm_forward: dropout requires an RNG while training");
  }
  LstmForwardResult result;
  result.final_state = init;
  for (const Tensor& input : inputs) {
    Tensor x = input;
    for (std::size_t l = 0; l < stack.size(); ++l) {
      if (dropout_p > 0.0 && training) x = dropout(x, dropout_p, *rng, training);
      auto [h_next, c_next] = lstm_step(stack[l], x, result.final_state.h[l],
                                        result.final_state.c[l]);
      result.final_state.h[l] = h_next;
      result.final_state.c[l] = c_next;
      x = h_next;
    }
    result.top_states.push_back(x);
  }
  return result;
}

std::vector<Tensor> embed(const EmbeddingTable& table, std::span<const int> ids) {
  std::vector<Tensor> out;
  out.reserve(ids.size());
  for (int id : ids) {
    if (id < 0 || id >= table.vocab_size()) {
      throw VocabError("embed: id " + std::to_string(id) + " outside vocabulary of " +
                       std::to_string(table.vocab_size()));
    }
    out.push_back(row(table.weight, id));
  }
  return out;
}

Tensor project_logits(const Tensor& weight, const Tensor& h) {
  return matmul(h, weight);
}

}  // namespace hnmt
