#include "hnmt/batch.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <sstream>
#include <unordered_map>

namespace hnmt {

std::vector<std::vector<std::string>> read_corpus(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read corpus file " + path);
  std::vector<std::vector<std::string>> corpus;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::vector<std::string> tokens;
    std::istringstream ss(line);
    std::string tok;
    while (ss >> tok) tokens.push_back(tok);
    corpus.push_back(std::move(tokens));
  }
  return corpus;
}

ParallelCorpus zip_corpus(const std::string& src_path, const std::string& tgt_path) {
  auto src = read_corpus(src_path);
  auto tgt = read_corpus(tgt_path);
  if (src.size() != tgt.size()) {
    throw DataError("parallel corpus line counts differ: " + std::to_string(src.size()) + " (" +
                    src_path + ") vs " + std::to_string(tgt.size()) + " (" + tgt_path + ")");
  }
  ParallelCorpus pairs(src.size());
  for (std::size_t i = 0; i < src.size(); ++i) {
    pairs[i].source = std::move(src[i]);
    pairs[i].target = std::move(tgt[i]);
  }
  return pairs;
}

int Batch::source_len(int s) const {
  const auto& m = source_mask[static_cast<std::size_t>(s)];
  return static_cast<int>(std::count(m.begin(), m.end(), std::uint8_t{1}));
}

int Batch::target_len(int s) const {
  const auto& m = target_mask[static_cast<std::size_t>(s)];
  return static_cast<int>(std::count(m.begin(), m.end(), std::uint8_t{1}));
}

std::vector<std::string> stream_tokens(const std::vector<std::string>& words, bool char_stream) {
  if (!char_stream) return words;
  std::vector<std::string> out;
  for (std::size_t w = 0; w < words.size(); ++w) {
    if (w > 0) out.push_back(Vocabulary::boundary_token());
    auto chars = utf8_chars(words[w]);
    out.insert(out.end(), chars.begin(), chars.end());
  }
  return out;
}

namespace {

std::vector<std::string> truncate(const std::vector<std::string>& tokens, int max_len) {
  if (static_cast<int>(tokens.size()) <= max_len) return tokens;
  return {tokens.begin(), tokens.begin() + max_len};
}

Batch build_batch(const ParallelCorpus& pairs, const std::vector<std::size_t>& members,
                  const Vocabulary& src_vocab, const Vocabulary& tgt_vocab,
                  const Vocabulary* src_chars, const Vocabulary* tgt_chars,
                  const BatchingOptions& opts) {
  Batch batch;
  std::size_t src_width = 0, tgt_width = 0;
  std::vector<std::vector<std::string>> src_tokens, tgt_tokens;
  for (std::size_t idx : members) {
    src_tokens.push_back(truncate(stream_tokens(pairs[idx].source, opts.char_stream),
                                  opts.max_len));
    tgt_tokens.push_back(truncate(stream_tokens(pairs[idx].target, opts.char_stream),
                                  opts.max_len));
    src_width = std::max(src_width, src_tokens.back().size());
    tgt_width = std::max(tgt_width, tgt_tokens.back().size() + 1);  // +</s>
  }
  std::unordered_map<std::string, std::size_t> rare_index;
  for (std::size_t s = 0; s < members.size(); ++s) {
    const int sent = static_cast<int>(s);
    std::vector<int> src_row(src_width, Vocabulary::kPad);
    std::vector<std::uint8_t> src_mask(src_width, 0);
    for (std::size_t p = 0; p < src_tokens[s].size(); ++p) {
      const std::string& tok = src_tokens[s][p];
      const int id = src_vocab.id(tok);
      src_row[p] = id;
      src_mask[p] = 1;
      if (id == Vocabulary::kUnk && opts.rare_bookkeeping && src_chars != nullptr) {
        auto [it, fresh] = rare_index.try_emplace(tok, batch.source_rare.size());
        if (fresh) {
          batch.source_rare.push_back(
              {tok, encode_word_chars(tok, *src_chars), {}});
        }
        batch.source_rare[it->second].slots.push_back({sent, static_cast<int>(p)});
      }
    }
    std::vector<int> tgt_in(tgt_width, Vocabulary::kPad);
    std::vector<int> tgt_out(tgt_width, Vocabulary::kPad);
    std::vector<std::uint8_t> tgt_mask(tgt_width, 0);
    tgt_in[0] = Vocabulary::kBos;
    for (std::size_t p = 0; p < tgt_tokens[s].size(); ++p) {
      const std::string& tok = tgt_tokens[s][p];
      const int id = tgt_vocab.id(tok);
      tgt_out[p] = id;
      tgt_mask[p] = 1;
      if (p + 1 < tgt_width) tgt_in[p + 1] = id;  // <unk> is fed back as is
      if (id == Vocabulary::kUnk && opts.rare_bookkeeping && tgt_chars != nullptr) {
        batch.target_rare.push_back(
            {tok, encode_word_chars(tok, *tgt_chars), {sent, static_cast<int>(p)}});
      }
    }
    const std::size_t eos_pos = tgt_tokens[s].size();
    tgt_out[eos_pos] = Vocabulary::kEos;
    tgt_mask[eos_pos] = 1;
    batch.source.push_back(std::move(src_row));
    batch.source_mask.push_back(std::move(src_mask));
    batch.target_input.push_back(std::move(tgt_in));
    batch.target_output.push_back(std::move(tgt_out));
    batch.target_mask.push_back(std::move(tgt_mask));
  }
  return batch;
}

}  // namespace

std::vector<Batch> make_batches(const ParallelCorpus& pairs, const Vocabulary& src_vocab,
                                const Vocabulary& tgt_vocab, const Vocabulary* src_chars,
                                const Vocabulary* tgt_chars, const BatchingOptions& opts,
                                std::uint64_t seed) {
  if (opts.batch_size < 1) throw ContractError("make_batches: batch size must be >= 1");
  if (opts.max_len < 1) throw ContractError("make_batches: max_len must be >= 1");
  std::vector<std::size_t> order(pairs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  rng.shuffle(order);
  std::vector<Batch> batches;
  for (std::size_t start = 0; start < order.size(); start += opts.batch_size) {
    const std::size_t stop = std::min(order.size(), start + opts.batch_size);
    std::vector<std::size_t> members(order.begin() + start, order.begin() + stop);
    batches.push_back(build_batch(pairs, members, src_vocab, tgt_vocab, src_chars, tgt_chars,
                                  opts));
  }
  return batches;
}

}  // namespace hnmt
