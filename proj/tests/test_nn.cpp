#include <cmath>
#include <vector>

#include "doctest.h"
#include "hnmt/nn.hpp"
#include "oracles.hpp"

using namespace hnmt;

namespace {

LstmLayerParams zero_params(std::int64_t input, std::int64_t hidden) {
  LstmLayerParams p;
  p.w_input = Tensor::zeros({4 * hidden, input});
  p.w_hidden = Tensor::zeros({4 * hidden, hidden});
  p.bias = Tensor::zeros({1, 4 * hidden});
  return p;
}

std::vector<double> vec(const Tensor& t) { return {t.value().begin(), t.value().end()}; }

}  // namespace

TEST_SUITE_BEGIN("nn");

TEST_CASE("lstm_step with zero parameters collapses to zero") {
  auto p = zero_params(3, 2);
  Tensor x = Tensor::from({1, 3}, {1.0, -2.0, 0.5});
  Tensor h = Tensor::zeros({1, 2});
  Tensor c = Tensor::zeros({1, 2});
  auto [h2, c2] = lstm_step(p, x, h, c);
  for (double v : h2.value()) CHECK(v == 0.0);
  for (double v : c2.value()) CHECK(v == 0.0);
}

TEST_CASE("saturated forget gate carries the cell through") {
  auto p = zero_params(2, 2);
  // Forget-gate bias block is the second of four.
  auto bias = p.bias.value_mut();
  bias[2] = 50.0;
  bias[3] = 50.0;
  Tensor x = Tensor::zeros({1, 2});
  Tensor h = Tensor::zeros({1, 2});
  Tensor c = Tensor::from({1, 2}, {0.8, -0.3});
  auto [h2, c2] = lstm_step(p, x, h, c);
  CHECK(c2.value()[0] == doctest::Approx(0.8).epsilon(1e-9));
  CHECK(c2.value()[1] == doctest::Approx(-0.3).epsilon(1e-9));
}

TEST_CASE("lstm_step matches the scalar oracle") {
  Rng rng(17);
  const std::int64_t in = 3, hid = 4;
  auto p = LstmLayerParams::create(in, hid, 0.5, rng);
  Tensor x = Tensor::uniform({1, in}, -1.0, 1.0, rng);
  Tensor h = Tensor::uniform({1, hid}, -1.0, 1.0, rng);
  Tensor c = Tensor::uniform({1, hid}, -1.0, 1.0, rng);
  auto [h2, c2] = lstm_step(p, x, h, c);
  auto expect = oracle::lstm_step(vec(p.w_input), vec(p.w_hidden), vec(p.bias), vec(x), vec(h),
                                  vec(c), hid, in);
  for (std::int64_t j = 0; j < hid; ++j) {
    CHECK(std::abs(h2.value()[j] - expect.h[j]) <= 1e-12);
    CHECK(std::abs(c2.value()[j] - expect.c[j]) <= 1e-12);
  }
}

TEST_CASE("lstm_forward depth 1 length 1 equals lstm_step") {
  Rng rng(23);
  auto p = LstmLayerParams::create(2, 3, 0.3, rng);
  Tensor x = Tensor::uniform({1, 2}, -1.0, 1.0, rng);
  auto init = LstmState::zeros(1, 3);
  auto run = lstm_forward({p}, {x}, init, 0.0, false, nullptr);
  auto [h2, c2] = lstm_step(p, x, init.h[0], init.c[0]);
  for (int j = 0; j < 3; ++j) {
    CHECK(run.top_states[0].value()[j] == h2.value()[j]);
    CHECK(run.final_state.c[0].value()[j] == c2.value()[j]);
  }
}

TEST_CASE("p=0 makes training and evaluation identical") {
  Rng rng(29);
  auto p = LstmLayerParams::create(3, 3, 0.3, rng);
  std::vector<Tensor> inputs;
  for (int t = 0; t < 3; ++t) inputs.push_back(Tensor::uniform({1, 3}, -1.0, 1.0, rng));
  Rng drop(1);
  auto train_out = lstm_forward({p}, inputs, LstmState::zeros(1, 3), 0.0, true, &drop);
  auto eval_out = lstm_forward({p}, inputs, LstmState::zeros(1, 3), 0.0, false, nullptr);
  for (int t = 0; t < 3; ++t) {
    for (int j = 0; j < 3; ++j) {
      CHECK(train_out.top_states[t].value()[j] == eval_out.top_states[t].value()[j]);
    }
  }
}

TEST_CASE("depth 2, length 3 equals manual composition of six steps") {
  Rng rng(41);
  auto p0 = LstmLayerParams::create(2, 3, 0.4, rng);
  auto p1 = LstmLayerParams::create(3, 3, 0.4, rng);
  std::vector<Tensor> inputs;
  for (int t = 0; t < 3; ++t) inputs.push_back(Tensor::uniform({1, 2}, -1.0, 1.0, rng));
  auto run = lstm_forward({p0, p1}, inputs, LstmState::zeros(2, 3), 0.0, false, nullptr);

  Tensor h0 = Tensor::zeros({1, 3}), c0 = Tensor::zeros({1, 3});
  Tensor h1 = Tensor::zeros({1, 3}), c1 = Tensor::zeros({1, 3});
  for (int t = 0; t < 3; ++t) {
    auto [nh0, nc0] = lstm_step(p0, inputs[t], h0, c0);
    h0 = nh0;
    c0 = nc0;
    auto [nh1, nc1] = lstm_step(p1, h0, h1, c1);
    h1 = nh1;
    c1 = nc1;
    for (int j = 0; j < 3; ++j) CHECK(run.top_states[t].value()[j] == h1.value()[j]);
  }
  for (int j = 0; j < 3; ++j) {
    CHECK(run.final_state.h[1].value()[j] == h1.value()[j]);
    CHECK(run.final_state.c[0].value()[j] == c0.value()[j]);
  }
}

TEST_CASE("lstm_forward rejects empty input") {
  Rng rng(1);
  auto p = LstmLayerParams::create(2, 2, 0.1, rng);
  CHECK_THROWS_AS(lstm_forward({p}, {}, LstmState::zeros(1, 2), 0.0, false, nullptr),
                  ContractError);
}

TEST_CASE("lstm_forward passes grad_check through the stack") {
  Rng rng(47);
  auto p0 = LstmLayerParams::create(2, 2, 0.4, rng);
  auto p1 = LstmLayerParams::create(2, 2, 0.4, rng);
  std::vector<Tensor> fixed;
  for (int t = 0; t < 4; ++t) fixed.push_back(Tensor::uniform({1, 2}, -1.0, 1.0, rng));
  // Differentiate with respect to the first layer's input weight.
  auto f = [&](const Tensor& w) {
    LstmLayerParams q0{w, p0.w_hidden, p0.bias};
    auto run = lstm_forward({q0, p1}, fixed, LstmState::zeros(2, 2), 0.0, false, nullptr);
    return sum_all(concat_rows(run.top_states));
  };
  CHECK(grad_check(f, p0.w_input.clone(), 1e-5) <= 1e-5);
}

TEST_CASE("inverted dropout preserves expectation inside the stack") {
  Rng rng(53);
  auto p = LstmLayerParams::create(2, 2, 0.4, rng);
  Tensor x = Tensor::uniform({1, 2}, 0.5, 1.5, rng);
  auto base = lstm_forward({p}, {x}, LstmState::zeros(1, 2), 0.0, false, nullptr);
  const double base_sum = base.top_states[0].value()[0] + base.top_states[0].value()[1];
  Rng drop(99);
  double mean = 0.0;
  const int draws = 20000;
  for (int i = 0; i < draws; ++i) {
    auto run = lstm_forward({p}, {x}, LstmState::zeros(1, 2), 0.2, true, &drop);
    mean += run.top_states[0].value()[0] + run.top_states[0].value()[1];
  }
  mean /= draws;
  CHECK(mean == doctest::Approx(base_sum).epsilon(0.02));
}

TEST_CASE("embed basics and gradient accumulation") {
  Rng rng(59);
  auto table = EmbeddingTable::create(5, 3, 0.5, rng);
  std::vector<int> ids = {0};
  auto rows0 = embed(table, ids);
  for (int j = 0; j < 3; ++j) CHECK(rows0[0].value()[j] == table.weight.at(0, j));

  std::vector<int> twice = {2, 2};
  Tape tape;
  TapeScope scope(tape);
  auto rows = embed(table, twice);
  for (int j = 0; j < 3; ++j) CHECK(rows[0].value()[j] == rows[1].value()[j]);
  backward(tape, sum_all(concat_rows(rows)));
  for (int j = 0; j < 3; ++j) {
    CHECK(table.weight.grad()[2 * 3 + j] == doctest::Approx(2.0));
    CHECK(table.weight.grad()[0 * 3 + j] == 0.0);
  }
  table.weight.zero_grad();

  std::vector<int> bad = {7};
  CHECK_THROWS_AS(embed(table, bad), VocabError);
}

TEST_CASE("embedding gradients are one-hot row patterns matching finite differences") {
  Rng rng(61);
  auto f = [](const Tensor& w) {
    EmbeddingTable t{w};
    std::vector<int> ids = {1, 3, 1};
    return sum_all(concat_rows(embed(t, ids)));
  };
  Tensor w = Tensor::uniform({4, 2}, -1.0, 1.0, rng);
  CHECK(grad_check(f, w, 1e-5) <= 1e-6);
}

TEST_CASE("project_logits") {
  Tensor zero_w = Tensor::zeros({3, 4});
  Tensor h = Tensor::from({1, 3}, {0.3, -0.7, 1.1});
  Tensor logits = project_logits(zero_w, h);
  for (double v : logits.value()) CHECK(v == 0.0);
  Tensor probs = softmax_rows(logits);
  for (double v : probs.value()) CHECK(v == doctest::Approx(0.25).epsilon(1e-12));

  // One-hot column copies a coordinate of h.
  Tensor onehot = Tensor::zeros({3, 2});
  onehot.value_mut()[1 * 2 + 0] = 1.0;  // column 0 selects h[1]
  Tensor picked = project_logits(onehot, h);
  CHECK(picked.value()[0] == doctest::Approx(-0.7));

  Rng rng(67);
  Tensor w = Tensor::uniform({3, 5}, -1.0, 1.0, rng);
  Tensor a = project_logits(w, h);
  Tensor b = matmul(h, w);
  for (std::size_t i = 0; i < a.value().size(); ++i) CHECK(a.value()[i] == b.value()[i]);
}

TEST_SUITE_END();
