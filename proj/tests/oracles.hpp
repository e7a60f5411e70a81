#pragma once

// Test-only scalar re-implementations used as independent oracles. These work
// on plain double vectors and never touch the Tensor/Tape machinery they are
// checking.

#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace oracle {

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// y = M·x for row-major M [rows×cols].
inline std::vector<double> matvec(const std::vector<double>& m, const std::vector<double>& x,
                                  std::size_t rows, std::size_t cols) {
  std::vector<double> y(rows, 0.0);
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) y[i] += m[i * cols + j] * x[j];
  }
  return y;
}

struct LstmStepOut {
  std::vector<double> h;
  std::vector<double> c;
};

// One LSTM step from flat parameters, gate order i,f,g,o.
inline LstmStepOut lstm_step(const std::vector<double>& wx, const std::vector<double>& wh,
                             const std::vector<double>& bias, const std::vector<double>& x,
                             const std::vector<double>& h_prev, const std::vector<double>& c_prev,
                             std::size_t hidden, std::size_t input) {
  auto zx = matvec(wx, x, 4 * hidden, input);
  auto zh = matvec(wh, h_prev, 4 * hidden, hidden);
  LstmStepOut out;
  out.h.resize(hidden);
  out.c.resize(hidden);
  for (std::size_t j = 0; j < hidden; ++j) {
    const double gi = sigmoid(zx[j] + zh[j] + bias[j]);
    const double gf = sigmoid(zx[hidden + j] + zh[hidden + j] + bias[hidden + j]);
    const double gg = std::tanh(zx[2 * hidden + j] + zh[2 * hidden + j] + bias[2 * hidden + j]);
    const double go = sigmoid(zx[3 * hidden + j] + zh[3 * hidden + j] + bias[3 * hidden + j]);
    out.c[j] = gf * c_prev[j] + gi * gg;
    out.h[j] = go * std::tanh(out.c[j]);
  }
  return out;
}

inline std::vector<double> softmax(const std::vector<double>& v) {
  double mx = v[0];
  for (double x : v) mx = std::max(mx, x);
  double z = 0.0;
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    out[i] = std::exp(v[i] - mx);
    z += out[i];
  }
  for (auto& x : out) x /= z;
  return out;
}

inline double cross_entropy(const std::vector<double>& logits, std::size_t target) {
  return -std::log(softmax(logits)[target]);
}

struct AttendOut {
  std::vector<double> weights;
  std::vector<double> context;
  std::vector<double> htilde;
};

// Bilinear scores, softmax, weighted average, tanh-affine combiner. `states`
// is row-major [n×h], `w_combine` is [h×2h] applied to [context; ht].
inline AttendOut attend(const std::vector<double>& ht, const std::vector<double>& states,
                        const std::vector<double>& w_align, const std::vector<double>& w_combine,
                        std::size_t n, std::size_t h) {
  // score_i = htᵀ·Wa·sᵢ; htᵀ·Wa first.
  std::vector<double> hw(h, 0.0);
  for (std::size_t j = 0; j < h; ++j) {
    for (std::size_t i = 0; i < h; ++i) hw[j] += ht[i] * w_align[i * h + j];
  }
  std::vector<double> scores(n, 0.0);
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t j = 0; j < h; ++j) scores[s] += hw[j] * states[s * h + j];
  }
  AttendOut out;
  out.weights = softmax(scores);
  out.context.assign(h, 0.0);
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t j = 0; j < h; ++j) out.context[j] += out.weights[s] * states[s * h + j];
  }
  std::vector<double> cat(2 * h);
  for (std::size_t j = 0; j < h; ++j) {
    cat[j] = out.context[j];
    cat[h + j] = ht[j];
  }
  auto combined = matvec(w_combine, cat, h, 2 * h);
  out.htilde.resize(h);
  for (std::size_t j = 0; j < h; ++j) out.htilde[j] = std::tanh(combined[j]);
  return out;
}

// Brute-force modified n-gram precision counting for one corpus line pair.
inline std::pair<std::int64_t, std::int64_t> clipped_ngrams(
    const std::vector<std::string>& hyp, const std::vector<std::string>& ref, std::size_t n) {
  std::map<std::vector<std::string>, std::int64_t> hyp_counts, ref_counts;
  if (hyp.size() >= n) {
    for (std::size_t i = 0; i + n <= hyp.size(); ++i) {
      hyp_counts[{hyp.begin() + i, hyp.begin() + i + n}] += 1;
    }
  }
  if (ref.size() >= n) {
    for (std::size_t i = 0; i + n <= ref.size(); ++i) {
      ref_counts[{ref.begin() + i, ref.begin() + i + n}] += 1;
    }
  }
  std::int64_t matched = 0, total = 0;
  for (const auto& [gram, count] : hyp_counts) {
    total += count;
    auto it = ref_counts.find(gram);
    if (it != ref_counts.end()) matched += std::min(count, it->second);
  }
  return {matched, total};
}

}  // namespace oracle
