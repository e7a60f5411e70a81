#include "hnmt/attention.hpp"

#include <string>

namespace hnmt {

AttentionParams AttentionParams::create(std::int64_t hidden, bool with_counterpart,
                                        double init_range, Rng& rng) {
  AttentionParams p;
  p.w_align = Tensor::uniform({hidden, hidden}, -init_range, init_range, rng).require_grad();
  p.w_combine = Tensor::uniform({hidden, 2 * hidden}, -init_range, init_range, rng).require_grad();
  if (with_counterpart) {
    p.w_counterpart =
        Tensor::uniform({hidden, 2 * hidden}, -init_range, init_range, rng).require_grad();
  }
  return p;
}

Tensor score_bilinear(const Tensor& ht, const Tensor& source_states, const Tensor& w_align) {
  if (source_states.rows() < 1) throw ContractError("score_bilinear: no source states");
  Tensor u = matmul(ht, w_align);         // [1 × h]
  return matmul_nt(u, source_states);     // [1 × n]
}

AttentionOutput attend(const Tensor& ht, const Tensor& source_states,
                       const AttentionParams& params, const std::vector<std::uint8_t>* mask) {
  Tensor scores = score_bilinear(ht, source_states, params.w_align);
  Tensor weights;
  if (mask != nullptr) {
    weights = softmax_masked(scores, *mask);
  } else {
    weights = softmax_rows(scores);
  }
  Tensor context = matmul(weights, source_states);  // [1 × h]
  Tensor attentional = tanh(matmul_nt(concat_cols(context, ht), params.w_combine));
  return {context, weights, attentional};
}

Tensor counterpart_state(const Tensor& context, const Tensor& ht, const Tensor& w_counterpart) {
  return tanh(matmul_nt(concat_cols(context, ht), w_counterpart));
}

}  // namespace hnmt
