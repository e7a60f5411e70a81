#pragma once

#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "hnmt/batch.hpp"
#include "hnmt/model.hpp"

namespace hnmt {

struct TrainConfig {
  double epochs = 6.0;
  double lr0 = 1.0;
  double warm_epochs = 4.0;   // constant lr before this point
  double halve_every = 0.5;   // halve once per completed interval after warm_epochs
  double clip_norm = 5.0;
  int batch_size = 128;
  int max_len = 50;
  int max_len_chars = 150;  // per-side cap in char mode (the backprop window)
  std::uint64_t seed = 1;
  int logs_per_epoch = 10;
  // Dev decoding during training is greedy for speed.
  int dev_beam = 1;
  std::string checkpoint_prefix;  // empty disables checkpointing
};

struct TrainState {
  double progress = 0.0;  // fractional epochs completed
  double lr = 0.0;
  LossBreakdown last_interval;
  double best_dev_score = 0.0;
  bool has_dev_score = false;
  std::vector<std::string> checkpoint_paths;
  std::string best_checkpoint;
};

// Piecewise-constant schedule: lr0 through warm_epochs, then one halving per
// completed `halve_every` interval.
double lr_at(double progress, const TrainConfig& cfg);

// Rescales the global gradient norm to clip_norm when exceeded, applies
// p ← p − lr·g, and zeroes the grads. Throws NumericError (naming the tensor)
// on non-finite gradients.
void sgd_step(HybridModel& model, double lr, double clip_norm);

// Sums the evaluation-mode loss over a corpus; used for dev perplexity.
LossBreakdown evaluate_loss(const HybridModel& model, const ParallelCorpus& corpus,
                            const TrainConfig& cfg);

// Plain SGD over shuffled batches, logging `progress lr J Jw Jc ppl_w ppl_c`
// per interval and evaluating/checkpointing each half-epoch. Deterministic
// given the config seed.
TrainState train(HybridModel& model, const ParallelCorpus& train_pairs,
                 const ParallelCorpus* dev_pairs, const TrainConfig& cfg, std::ostream* log);

}  // namespace hnmt
