#include "hnmt/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>

#include "hnmt/checkpoint.hpp"
#include "hnmt/decode.hpp"
#include "hnmt/metrics.hpp"

namespace hnmt {

double lr_at(double progress, const TrainConfig& cfg) {
  if (progress < 0.0) throw ContractError("lr_at: negative progress");
  if (progress <= cfg.warm_epochs) return cfg.lr0;
  // Completed halving intervals past the warm phase; the epsilon keeps exact
  // boundaries like 4.5 from landing on the wrong side of floor().
  const double past = (progress - cfg.warm_epochs) / cfg.halve_every;
  const auto halvings = static_cast<std::int64_t>(std::floor(past + 1e-9));
  return cfg.lr0 * std::pow(0.5, static_cast<double>(halvings));
}

void sgd_step(HybridModel& model, double lr, double clip_norm) {
  auto params = model.named_parameters();
  double sq_norm = 0.0;
  for (const auto& [name, p] : params) {
    for (double g : p.grad()) {
      if (!std::isfinite(g)) {
        throw NumericError("sgd_step: non-finite gradient in " + name);
      }
      sq_norm += g * g;
    }
  }
  const double norm = std::sqrt(sq_norm);
  const double rescale = (clip_norm > 0.0 && norm > clip_norm) ? clip_norm / norm : 1.0;
  for (auto& [name, p] : params) {
    auto value = p.value_mut();
    auto grad = p.grad_mut();
    for (std::size_t i = 0; i < value.size(); ++i) {
      value[i] -= lr * rescale * grad[i];
      grad[i] = 0.0;
    }
  }
}

namespace {

BatchingOptions batching_options(const HybridModel& model, const TrainConfig& cfg) {
  BatchingOptions opts;
  opts.batch_size = cfg.batch_size;
  opts.char_stream = model.config().mode == ModelMode::kChar;
  opts.max_len = opts.char_stream ? cfg.max_len_chars : cfg.max_len;
  opts.rare_bookkeeping = model.config().mode == ModelMode::kHybrid;
  return opts;
}

const Vocabulary* char_vocab_or_null(const HybridModel& model, bool source) {
  if (model.config().mode != ModelMode::kHybrid) return nullptr;
  return source ? &model.source_char_vocab() : &model.target_char_vocab();
}

ParallelCorpus drop_empty_sources(const ParallelCorpus& pairs) {
  ParallelCorpus kept;
  kept.reserve(pairs.size());
  for (const auto& p : pairs) {
    if (!p.source.empty()) kept.push_back(p);
  }
  return kept;
}

std::string format_fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string perplexity_field(double loss, std::int64_t tokens) {
  if (tokens < 1) return "-";
  return format_fixed(perplexity(loss, tokens), 4);
}

double dev_bleu(const HybridModel& model, const ParallelCorpus& dev, const TrainConfig& cfg) {
  DecodeOptions opts;
  opts.beam = cfg.dev_beam;
  opts.char_beam = 5;
  opts.max_len = model.config().mode == ModelMode::kChar ? cfg.max_len_chars : cfg.max_len;
  opts.strategy = model.config().mode == ModelMode::kHybrid ? UnkStrategy::kChar
                                                            : UnkStrategy::kNone;
  std::vector<std::vector<std::string>> sources;
  std::vector<std::string> refs;
  for (const auto& pair : dev) {
    sources.push_back(pair.source);
    std::string ref;
    for (std::size_t i = 0; i < pair.target.size(); ++i) {
      if (i) ref += ' ';
      ref += pair.target[i];
    }
    refs.push_back(ref);
  }
  auto hyps = translate_corpus(model, sources, opts, 1);
  std::vector<std::string> texts;
  texts.reserve(hyps.size());
  for (const auto& h : hyps) texts.push_back(h.text());
  return bleu(texts, refs).value;
}

}  // namespace

LossBreakdown evaluate_loss(const HybridModel& model, const ParallelCorpus& corpus,
                            const TrainConfig& cfg) {
  auto opts = batching_options(model, cfg);
  auto batches = make_batches(drop_empty_sources(corpus), model.source_vocab(),
                              model.target_vocab(), char_vocab_or_null(model, true),
                              char_vocab_or_null(model, false), opts, /*seed=*/0);
  LossBreakdown sum;
  sum.alpha = model.config().alpha;
  for (const auto& batch : batches) {
    auto fr = model.total_loss(batch, /*training=*/false, nullptr);
    sum.j_word += fr.j_word.item();
    sum.j_char += fr.j_char.item();
    sum.word_tokens += fr.word_tokens;
    sum.char_tokens += fr.char_tokens;
  }
  return sum;
}

TrainState train(HybridModel& model, const ParallelCorpus& train_pairs,
                 const ParallelCorpus* dev_pairs, const TrainConfig& cfg, std::ostream* log) {
  if (cfg.epochs <= 0.0) throw ConfigError("train: epochs must be positive");
  const ParallelCorpus pairs = drop_empty_sources(train_pairs);
  if (pairs.empty()) throw DataError("train: no usable sentence pairs");
  auto opts = batching_options(model, cfg);
  const auto batches_per_epoch =
      static_cast<std::int64_t>((pairs.size() + opts.batch_size - 1) / opts.batch_size);
  const std::int64_t interval =
      std::max<std::int64_t>(1, batches_per_epoch / std::max(1, cfg.logs_per_epoch));

  Rng dropout_rng(Rng::mix(cfg.seed, 0xd0u));
  TrainState state;
  LossBreakdown running;
  running.alpha = model.config().alpha;
  std::int64_t running_sentences = 0;
  double next_eval = 0.5;

  auto emit_log = [&](double progress, double lr) {
    if (log == nullptr || running_sentences == 0) return;
    const double denom = static_cast<double>(running_sentences);
    *log << format_fixed(progress, 4) << '\t' << format_fixed(lr, 6) << '\t'
         << format_fixed(running.total() / denom, 6) << '\t'
         << format_fixed(running.j_word / denom, 6) << '\t'
         << format_fixed(running.j_char / denom, 6) << '\t'
         << perplexity_field(running.j_word, running.word_tokens) << '\t'
         << perplexity_field(running.j_char, running.char_tokens) << '\n';
    state.last_interval = running;
    running = LossBreakdown{};
    running.alpha = model.config().alpha;
    running_sentences = 0;
  };

  auto evaluate_and_checkpoint = [&](double progress) {
    if (dev_pairs != nullptr && !dev_pairs->empty()) {
      const LossBreakdown dev = evaluate_loss(model, *dev_pairs, cfg);
      const double ppl = dev.word_tokens > 0 ? perplexity(dev.j_word, dev.word_tokens)
                                             : std::numeric_limits<double>::quiet_NaN();
      const double score = dev_bleu(model, *dev_pairs, cfg);
      if (log != nullptr) {
        *log << "dev\t" << format_fixed(progress, 4) << '\t' << format_fixed(ppl, 4) << '\t'
             << format_fixed(score, 6) << '\n';
      }
      if (!state.has_dev_score || score > state.best_dev_score) {
        state.has_dev_score = true;
        state.best_dev_score = score;
        if (!cfg.checkpoint_prefix.empty()) {
          state.best_checkpoint = cfg.checkpoint_prefix + ".best.ckpt";
          save_checkpoint(model, state.best_checkpoint);
        }
      }
    }
    if (!cfg.checkpoint_prefix.empty()) {
      char tag[32];
      std::snprintf(tag, sizeof tag, "%.1f", progress);
      const std::string path = cfg.checkpoint_prefix + ".e" + tag + ".ckpt";
      save_checkpoint(model, path);
      state.checkpoint_paths.push_back(path);
    }
  };

  const auto total_epochs = static_cast<std::int64_t>(std::ceil(cfg.epochs - 1e-9));
  for (std::int64_t epoch = 0; epoch < total_epochs; ++epoch) {
    auto batches =
        make_batches(pairs, model.source_vocab(), model.target_vocab(),
                     char_vocab_or_null(model, true), char_vocab_or_null(model, false), opts,
                     Rng::mix(cfg.seed, static_cast<std::uint64_t>(epoch)));
    for (std::int64_t b = 0; b < static_cast<std::int64_t>(batches.size()); ++b) {
      const double progress_before =
          static_cast<double>(epoch) +
          static_cast<double>(b) / static_cast<double>(batches_per_epoch);
      if (progress_before >= cfg.epochs - 1e-9) break;
      const double lr = lr_at(progress_before, cfg);
      const Batch& batch = batches[static_cast<std::size_t>(b)];
      Tape tape;
      TapeScope scope(tape);
      auto fr = model.total_loss(batch, /*training=*/true, &dropout_rng);
      // Updates use the batch-summed loss normalized per sentence.
      Tensor update_loss = scale(fr.j_total, 1.0 / static_cast<double>(batch.size()));
      backward(tape, update_loss);
      sgd_step(model, lr, cfg.clip_norm);

      running.j_word += fr.j_word.item();
      running.j_char += fr.j_char.item();
      running.word_tokens += fr.word_tokens;
      running.char_tokens += fr.char_tokens;
      running_sentences += batch.size();

      const double progress =
          static_cast<double>(epoch) +
          static_cast<double>(b + 1) / static_cast<double>(batches_per_epoch);
      state.progress = progress;
      state.lr = lr;
      if ((b + 1) % interval == 0 || b + 1 == static_cast<std::int64_t>(batches.size())) {
        emit_log(progress, lr);
      }
      if (progress + 1e-9 >= next_eval) {
        evaluate_and_checkpoint(progress);
        next_eval += 0.5;
      }
    }
  }
  emit_log(state.progress, state.lr);
  return state;
}

}  // namespace hnmt
