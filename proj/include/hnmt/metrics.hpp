#pragma once

#include <string>
#include <vector>

#include "hnmt/model.hpp"

namespace hnmt {

struct CorpusScore {
  std::string metric;
  double value = 0.0;
  // Component breakdown: n-gram precisions and brevity penalty for BLEU,
  // chrP/chrR for chrF3.
  std::vector<std::pair<std::string, double>> components;

  double component(const std::string& name) const;
};

// exp(loss / tokens), loss in nats.
double perplexity(double total_loss, std::int64_t token_count);

// Corpus BLEU-4: modified n-gram precisions with clipping, geometric mean,
// BP = min(1, exp(1 - r/c)). Any zero precision gives score 0 (no smoothing).
// Single reference, case-sensitive, whitespace tokens.
CorpusScore bleu(const std::vector<std::string>& hypotheses,
                 const std::vector<std::string>& references);

// chrF with β=3: character n-grams n=1..6 over whitespace-stripped text,
// precision/recall averaged uniformly over orders.
CorpusScore chrf3(const std::vector<std::string>& hypotheses,
                  const std::vector<std::string>& references);

// Pearson correlation of average ranks; ties get averaged ranks.
double spearman_rho(const std::vector<double>& a, const std::vector<double>& b);

struct SimilarityPair {
  std::string word1;
  std::string word2;
  double human_score = 0.0;
};

// TSV `word1<TAB>word2<TAB>score`.
std::vector<SimilarityPair> read_similarity_file(const std::string& path);

// Embeds each word (encoder embedding for in-vocab words, char-built
// representation for rare ones), scores pairs by cosine similarity, and
// returns Spearman's ρ against the human scores.
double rare_word_similarity(const HybridModel& model, const std::vector<SimilarityPair>& pairs);

}  // namespace hnmt
