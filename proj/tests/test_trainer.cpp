#include <cmath>
#include <filesystem>
#include <fstream>
#include <memory>
#include <sstream>
#include <vector>

#include "doctest.h"
#include "hnmt/checkpoint.hpp"
#include "hnmt/decode.hpp"
#include "hnmt/trainer.hpp"

using namespace hnmt;

namespace {

std::shared_ptr<const Vocabulary> words(std::vector<std::string> toks) {
  return std::make_shared<Vocabulary>(VocabKind::kWord, std::move(toks));
}

std::shared_ptr<const Vocabulary> chars(std::vector<std::string> toks) {
  return std::make_shared<Vocabulary>(VocabKind::kChar, std::move(toks));
}

HybridModel small_model(std::uint64_t seed, ModelMode mode = ModelMode::kWord) {
  ModelConfig cfg;
  cfg.mode = mode;
  cfg.dim = 4;
  cfg.word_layers = 1;
  cfg.char_layers = 1;
  cfg.dropout = 0.1;
  cfg.seed = seed;
  return HybridModel(cfg, words({"aa", "bb", "cc"}), words({"xx", "yy", "zz"}),
                     mode == ModelMode::kHybrid ? chars({"a", "b", "c"}) : nullptr,
                     mode == ModelMode::kHybrid ? chars({"x", "y", "z"}) : nullptr);
}

ParallelCorpus toy_corpus() {
  return {
      {{"aa"}, {"xx"}},          {{"bb"}, {"yy"}},          {{"cc"}, {"zz"}},
      {{"aa", "bb"}, {"xx", "yy"}}, {{"bb", "cc"}, {"yy", "zz"}}, {{"cc", "aa"}, {"zz", "xx"}},
  };
}

std::string tmp(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_SUITE_BEGIN("trainer");

TEST_CASE("learning rate schedule fixtures") {
  TrainConfig cfg;
  CHECK(lr_at(0.0, cfg) == 1.0);
  CHECK(lr_at(3.9, cfg) == 1.0);
  CHECK(lr_at(4.0, cfg) == 1.0);
  CHECK(lr_at(4.5, cfg) == 0.5);
  CHECK(lr_at(5.0, cfg) == 0.25);
  CHECK(lr_at(5.5, cfg) == 0.125);
  CHECK(lr_at(6.0, cfg) == 0.0625);
  CHECK_THROWS_AS(lr_at(-0.1, cfg), ContractError);
}

TEST_CASE("schedule is non-increasing and piecewise constant") {
  TrainConfig cfg;
  double prev = cfg.lr0;
  for (double p = 0.0; p <= 8.0; p += 0.01) {
    const double lr = lr_at(p, cfg);
    CHECK(lr <= prev + 1e-15);
    prev = lr;
  }
  // Constant strictly inside a half-epoch interval.
  CHECK(lr_at(4.6, cfg) == lr_at(4.9, cfg));
  CHECK(lr_at(4.49, cfg) == lr_at(4.01, cfg));
}

TEST_CASE("sgd_step rescales the global norm and zeroes grads") {
  HybridModel m = small_model(5);
  auto params = m.named_parameters();
  // Put a known gradient on one tensor: norm 10 with clip 5 halves it.
  Tensor p = params.front().second;
  Tensor before = p.clone();
  auto g = p.grad_mut();
  g[0] = 6.0;
  g[1] = 8.0;  // global norm = 10
  sgd_step(m, 0.1, 5.0);
  CHECK(p.value()[0] == doctest::Approx(before.value()[0] - 0.1 * 3.0).epsilon(1e-12));
  CHECK(p.value()[1] == doctest::Approx(before.value()[1] - 0.1 * 4.0).epsilon(1e-12));
  for (auto& [name, t] : m.named_parameters()) {
    for (double gv : t.grad()) CHECK(gv == 0.0);
  }

  // Below the clip, gradients apply unscaled; update norm ≤ clip·lr always.
  Tensor q = params.front().second;
  auto g2 = q.grad_mut();
  g2[0] = 3.0;
  g2[1] = 4.0;  // norm 5, no rescale
  Tensor before2 = q.clone();
  sgd_step(m, 0.1, 5.0);
  CHECK(q.value()[0] == doctest::Approx(before2.value()[0] - 0.3).epsilon(1e-12));
  CHECK(q.value()[1] == doctest::Approx(before2.value()[1] - 0.4).epsilon(1e-12));
}

TEST_CASE("sgd_step aborts on non-finite gradients naming the tensor") {
  HybridModel m = small_model(6);
  auto params = m.named_parameters();
  params[1].second.grad_mut()[0] = std::nan("");
  try {
    sgd_step(m, 0.1, 5.0);
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find(params[1].first) != std::string::npos);
  }
}

TEST_CASE("single scalar parameter update") {
  HybridModel m = small_model(7);
  Tensor p = m.named_parameters().front().second;
  const double v0 = p.value()[0];
  p.grad_mut()[0] = 1.0;
  sgd_step(m, 0.1, 100.0);
  CHECK(p.value()[0] == doctest::Approx(v0 - 0.1).epsilon(1e-12));
}

TEST_CASE("same seed gives bitwise-identical training logs") {
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.batch_size = 2;
  cfg.seed = 33;
  cfg.logs_per_epoch = 3;
  std::ostringstream log_a, log_b;
  {
    HybridModel m = small_model(33);
    train(m, toy_corpus(), nullptr, cfg, &log_a);
  }
  {
    HybridModel m = small_model(33);
    train(m, toy_corpus(), nullptr, cfg, &log_b);
  }
  CHECK(log_a.str() == log_b.str());
  CHECK(!log_a.str().empty());
}

TEST_CASE("zero learning rate leaves parameters unchanged") {
  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.batch_size = 3;
  cfg.lr0 = 0.0;
  HybridModel m = small_model(44);
  std::vector<double> before;
  for (auto& [name, p] : m.named_parameters()) {
    before.insert(before.end(), p.value().begin(), p.value().end());
  }
  train(m, toy_corpus(), nullptr, cfg, nullptr);
  std::vector<double> after;
  for (auto& [name, p] : m.named_parameters()) {
    after.insert(after.end(), p.value().begin(), p.value().end());
  }
  CHECK(before == after);
}

TEST_CASE("training reduces the loss on a tiny copy task") {
  TrainConfig cfg;
  cfg.epochs = 6;
  cfg.batch_size = 3;
  cfg.seed = 3;
  cfg.logs_per_epoch = 1;
  HybridModel m = small_model(3);
  std::ostringstream log;
  auto state = train(m, toy_corpus(), nullptr, cfg, &log);
  const auto eval_cfg = cfg;
  auto final_loss = evaluate_loss(m, toy_corpus(), eval_cfg);
  HybridModel fresh = small_model(3);
  auto initial_loss = evaluate_loss(fresh, toy_corpus(), eval_cfg);
  CHECK(final_loss.total() < initial_loss.total());
  CHECK(state.progress == doctest::Approx(6.0));
}

TEST_CASE("checkpoint round trip is bit exact") {
  HybridModel m = small_model(55, ModelMode::kHybrid);
  const auto p1 = tmp("hnmt_ckpt_a.bin");
  const auto p2 = tmp("hnmt_ckpt_b.bin");
  save_checkpoint(m, p1);
  HybridModel loaded = load_checkpoint(p1);
  save_checkpoint(loaded, p2);
  std::ifstream f1(p1, std::ios::binary), f2(p2, std::ios::binary);
  std::string bytes1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
  std::string bytes2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
  CHECK(bytes1 == bytes2);
  CHECK(!bytes1.empty());

  // Loaded model translates identically.
  DecodeOptions opts;
  opts.beam = 2;
  opts.max_len = 4;
  opts.strategy = UnkStrategy::kChar;
  auto before = translate(m, {"aa", "qq"}, opts);
  auto after = translate(loaded, {"aa", "qq"}, opts);
  CHECK(before.text() == after.text());

  std::filesystem::remove(p1);
  std::filesystem::remove(p2);
}

TEST_CASE("corrupt or truncated checkpoints are rejected") {
  HybridModel m = small_model(66);
  const auto path = tmp("hnmt_ckpt_corrupt.bin");
  save_checkpoint(m, path);
  {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(0);
    f.write("XXXX", 4);
  }
  CHECK_THROWS_AS(load_checkpoint(path), FormatError);

  save_checkpoint(m, path);
  const auto full_size = std::filesystem::file_size(path);
  std::filesystem::resize_file(path, full_size - 16);
  CHECK_THROWS_AS(load_checkpoint(path), FormatError);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(load_checkpoint(tmp("does_not_exist.ckpt")), IoError);
}

TEST_CASE("dev evaluation and half-epoch checkpointing run during training") {
  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.batch_size = 2;
  cfg.seed = 9;
  cfg.checkpoint_prefix = tmp("hnmt_train_ckpt");
  ParallelCorpus dev = {{{"aa"}, {"xx"}}, {{"bb"}, {"yy"}}};
  HybridModel m = small_model(9);
  std::ostringstream log;
  auto state = train(m, toy_corpus(), &dev, cfg, &log);
  CHECK(state.has_dev_score);
  CHECK(!state.checkpoint_paths.empty());
  CHECK(log.str().find("dev\t") != std::string::npos);
  // Reloading the last checkpoint reproduces dev perplexity bit for bit.
  auto reloaded = load_checkpoint(state.checkpoint_paths.back());
  auto a = evaluate_loss(m, dev, cfg);
  auto b = evaluate_loss(reloaded, dev, cfg);
  CHECK(a.j_word == b.j_word);
  for (const auto& path : state.checkpoint_paths) std::filesystem::remove(path);
  if (!state.best_checkpoint.empty()) std::filesystem::remove(state.best_checkpoint);
}

TEST_SUITE_END();
