#include "hnmt/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

namespace hnmt {

double CorpusScore::component(const std::string& name) const {
  for (const auto& [n, v] : components) {
    if (n == name) return v;
  }
  throw ContractError("no component named " + name + " in " + metric);
}

double perplexity(double total_loss, std::int64_t token_count) {
  if (token_count < 1) throw ContractError("perplexity: token count must be >= 1");
  return std::exp(total_loss / static_cast<double>(token_count));
}

namespace {

std::vector<std::string> split_tokens(const std::string& line) {
  std::vector<std::string> tokens;
  std::istringstream ss(line);
  std::string tok;
  while (ss >> tok) tokens.push_back(tok);
  return tokens;
}

void check_line_counts(std::size_t hyp, std::size_t ref) {
  if (hyp != ref) {
    throw DataError("line counts differ: " + std::to_string(hyp) + " hypotheses vs " +
                    std::to_string(ref) + " references");
  }
}

// Counts of token n-grams of one order.
std::map<std::vector<std::string>, std::int64_t> ngram_counts(
    const std::vector<std::string>& tokens, std::size_t n) {
  std::map<std::vector<std::string>, std::int64_t> counts;
  if (tokens.size() < n) return counts;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
    counts[{tokens.begin() + i, tokens.begin() + i + n}] += 1;
  }
  return counts;
}

}  // namespace

CorpusScore bleu(const std::vector<std::string>& hypotheses,
                 const std::vector<std::string>& references) {
  check_line_counts(hypotheses.size(), references.size());
  constexpr std::size_t kMaxOrder = 4;
  std::int64_t matched[kMaxOrder] = {0, 0, 0, 0};
  std::int64_t total[kMaxOrder] = {0, 0, 0, 0};
  std::int64_t hyp_len = 0, ref_len = 0;
  for (std::size_t i = 0; i < hypotheses.size(); ++i) {
    const auto hyp = split_tokens(hypotheses[i]);
    const auto ref = split_tokens(references[i]);
    hyp_len += static_cast<std::int64_t>(hyp.size());
    ref_len += static_cast<std::int64_t>(ref.size());
    for (std::size_t n = 1; n <= kMaxOrder; ++n) {
      const auto hyp_counts = ngram_counts(hyp, n);
      const auto ref_counts = ngram_counts(ref, n);
      for (const auto& [gram, count] : hyp_counts) {
        total[n - 1] += count;
        auto it = ref_counts.find(gram);
        if (it != ref_counts.end()) matched[n - 1] += std::min(count, it->second);
      }
    }
  }
  CorpusScore score;
  score.metric = "bleu";
  double log_precision = 0.0;
  bool zero = false;
  for (std::size_t n = 0; n < kMaxOrder; ++n) {
    // Orders with no hypothesis n-grams at all are neutral, so an identical
    // pair of very short corpora still scores 1.
    double p = 1.0;
    if (total[n] > 0) {
      p = static_cast<double>(matched[n]) / static_cast<double>(total[n]);
    }
    score.components.emplace_back("p" + std::to_string(n + 1), p);
    if (p == 0.0) {
      zero = true;
    } else {
      log_precision += 0.25 * std::log(p);
    }
  }
  const double bp = hyp_len == 0
                        ? 0.0
                        : std::min(1.0, std::exp(1.0 - static_cast<double>(ref_len) /
                                                           static_cast<double>(hyp_len)));
  score.components.emplace_back("bp", bp);
  score.components.emplace_back("hyp_len", static_cast<double>(hyp_len));
  score.components.emplace_back("ref_len", static_cast<double>(ref_len));
  score.value = zero ? 0.0 : bp * std::exp(log_precision);
  return score;
}

namespace {

std::string strip_whitespace(const std::string& line) {
  std::string out;
  for (char c : line) {
    if (c != ' ' && c != '\t') out += c;
  }
  return out;
}

std::map<std::vector<std::string>, std::int64_t> char_ngram_counts(
    const std::vector<std::string>& chars, std::size_t n) {
  std::map<std::vector<std::string>, std::int64_t> counts;
  if (chars.size() < n) return counts;
  for (std::size_t i = 0; i + n <= chars.size(); ++i) {
    counts[{chars.begin() + i, chars.begin() + i + n}] += 1;
  }
  return counts;
}

}  // namespace

CorpusScore chrf3(const std::vector<std::string>& hypotheses,
                  const std::vector<std::string>& references) {
  check_line_counts(hypotheses.size(), references.size());
  constexpr std::size_t kMaxOrder = 6;
  constexpr double kBeta = 3.0;
  std::int64_t matched[kMaxOrder] = {};
  std::int64_t hyp_total[kMaxOrder] = {};
  std::int64_t ref_total[kMaxOrder] = {};
  for (std::size_t i = 0; i < hypotheses.size(); ++i) {
    const auto hyp = utf8_chars(strip_whitespace(hypotheses[i]));
    const auto ref = utf8_chars(strip_whitespace(references[i]));
    for (std::size_t n = 1; n <= kMaxOrder; ++n) {
      const auto hyp_counts = char_ngram_counts(hyp, n);
      const auto ref_counts = char_ngram_counts(ref, n);
      for (const auto& [gram, count] : hyp_counts) {
        hyp_total[n - 1] += count;
        auto it = ref_counts.find(gram);
        if (it != ref_counts.end()) matched[n - 1] += std::min(count, it->second);
      }
      for (const auto& [gram, count] : ref_counts) ref_total[n - 1] += count;
    }
  }
  double precision_sum = 0.0, recall_sum = 0.0;
  int orders = 0;
  for (std::size_t n = 0; n < kMaxOrder; ++n) {
    if (hyp_total[n] == 0 && ref_total[n] == 0) continue;  // order absent from both sides
    orders += 1;
    precision_sum += hyp_total[n] > 0
                         ? static_cast<double>(matched[n]) / static_cast<double>(hyp_total[n])
                         : 0.0;
    recall_sum += ref_total[n] > 0
                      ? static_cast<double>(matched[n]) / static_cast<double>(ref_total[n])
                      : 0.0;
  }
  CorpusScore score;
  score.metric = "chrf3";
  const double chr_p = orders > 0 ? precision_sum / orders : 0.0;
  const double chr_r = orders > 0 ? recall_sum / orders : 0.0;
  score.components.emplace_back("chrP", chr_p);
  score.components.emplace_back("chrR", chr_r);
  const double denom = kBeta * kBeta * chr_p + chr_r;
  score.value = denom > 0.0 ? (1.0 + kBeta * kBeta) * chr_p * chr_r / denom : 0.0;
  return score;
}

namespace {

std::vector<double> average_ranks(const std::vector<double>& values) {
  const std::size_t n = values.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&values](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(n, 0.0);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
    const double rank = 0.5 * static_cast<double>(i + j) + 1.0;  // 1-based average rank
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = rank;
    i = j + 1;
  }
  return ranks;
}

}  // namespace

double spearman_rho(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) {
    throw DataError("spearman_rho: length mismatch " + std::to_string(a.size()) + " vs " +
                    std::to_string(b.size()));
  }
  if (a.size() < 2) throw ContractError("spearman_rho: need at least 2 observations");
  const auto ra = average_ranks(a);
  const auto rb = average_ranks(b);
  const double n = static_cast<double>(a.size());
  const double mean_a = std::accumulate(ra.begin(), ra.end(), 0.0) / n;
  const double mean_b = std::accumulate(rb.begin(), rb.end(), 0.0) / n;
  double cov = 0.0, var_a = 0.0, var_b = 0.0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    const double da = ra[i] - mean_a;
    const double db = rb[i] - mean_b;
    cov += da * db;
    var_a += da * da;
    var_b += db * db;
  }
  if (var_a == 0.0 || var_b == 0.0) {
    throw ContractError("spearman_rho: constant input vector, correlation undefined");
  }
  return cov / std::sqrt(var_a * var_b);
}

std::vector<SimilarityPair> read_similarity_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read similarity file " + path);
  std::vector<SimilarityPair> pairs;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto t1 = line.find('\t');
    const auto t2 = t1 == std::string::npos ? std::string::npos : line.find('\t', t1 + 1);
    if (t2 == std::string::npos) throw FormatError("similarity line needs two TABs: " + line);
    pairs.push_back({line.substr(0, t1), line.substr(t1 + 1, t2 - t1 - 1),
                     std::stod(line.substr(t2 + 1))});
  }
  return pairs;
}

namespace {

std::vector<double> word_embedding(const HybridModel& model, const std::string& word) {
  const Vocabulary& wv = model.source_vocab();
  const int id = wv.id(word);
  if (id != Vocabulary::kUnk || wv.contains(word)) {
    Tensor r = row(model.src_embed.weight, id);
    return {r.value().begin(), r.value().end()};
  }
  if (model.config().mode == ModelMode::kHybrid) {
    auto ids = encode_word_chars(word, model.source_char_vocab());
    Tensor rep = model.char_source_reps({ids}, /*training=*/false, nullptr);
    return {rep.value().begin(), rep.value().end()};
  }
  // A word-only model falls back to the universal <unk> embedding.
  Tensor r = row(model.src_embed.weight, Vocabulary::kUnk);
  return {r.value().begin(), r.value().end()};
}

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / std::sqrt(na * nb);
}

}  // namespace

double rare_word_similarity(const HybridModel& model, const std::vector<SimilarityPair>& pairs) {
  std::vector<double> model_scores, human_scores;
  for (const auto& p : pairs) {
    model_scores.push_back(cosine(word_embedding(model, p.word1), word_embedding(model, p.word2)));
    human_scores.push_back(p.human_score);
  }
  return spearman_rho(model_scores, human_scores);
}

}  // namespace hnmt
