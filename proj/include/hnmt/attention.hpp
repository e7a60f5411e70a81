#pragma once

#include <cstdint>
#include <vector>

#include "hnmt/tensor.hpp"

namespace hnmt {

struct AttentionParams {
  Tensor w_align;        // bilinear score matrix, [h × h]
  Tensor w_combine;      // attentional combiner, [h × 2h]
  Tensor w_counterpart;  // separate-path combiner, [h × 2h]; undefined when unused

  static AttentionParams create(std::int64_t hidden, bool with_counterpart, double init_range,
                                Rng& rng);
};

struct AttentionOutput {
  Tensor context;      // [1 × h]
  Tensor weights;      // [1 × n], simplex over unmasked positions
  Tensor attentional;  // [1 × h]
};

// scoreᵢ = hₜᵀ · W_a · h̄ᵢ over the n source states.
Tensor score_bilinear(const Tensor& ht, const Tensor& source_states, const Tensor& w_align);

// Global attention: alignment softmax over unmasked positions, context as the
// weighted average of source states, attentional state tanh(W·[c; h]).
AttentionOutput attend(const Tensor& ht, const Tensor& source_states,
                       const AttentionParams& params,
                       const std::vector<std::uint8_t>* mask = nullptr);

// tanh(W_c·[c; h]) — the separate-path vector that seeds the char decoder.
Tensor counterpart_state(const Tensor& context, const Tensor& ht, const Tensor& w_counterpart);

}  // namespace hnmt
