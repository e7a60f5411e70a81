#include <filesystem>
#include <set>
#include <fstream>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "hnmt/checkpoint.hpp"
#include "hnmt/decode.hpp"
#include "hnmt/metrics.hpp"
#include "hnmt/trainer.hpp"

namespace {

using namespace hnmt;

void require_readable(const std::string& path, const std::string& what) {
  if (!std::filesystem::exists(path)) {
    throw IoError(what + " not found: " + path);
  }
}

std::string vocab_path(const std::string& dir, const char* side, const char* kind) {
  return (std::filesystem::path(dir) / (std::string(side) + "." + kind + ".vocab")).string();
}

struct VocabFlags {
  std::string dir;
  int vocab_size = 0;  // 0 keeps the stored size
  int char_size = 0;
};

std::shared_ptr<const Vocabulary> load_vocab(const std::string& path, int cap) {
  auto v = Vocabulary::load(path);
  if (cap > 0) v = v.truncated(cap);
  return std::make_shared<const Vocabulary>(std::move(v));
}

int cmd_build_vocab(const std::string& src, const std::string& tgt, int vocab_size,
                    int char_size, const std::string& out_dir) {
  require_readable(src, "source corpus");
  require_readable(tgt, "target corpus");
  std::filesystem::create_directories(out_dir);
  struct Side {
    const char* name;
    const std::string* path;
  } sides[2] = {{"src", &src}, {"tgt", &tgt}};
  for (const auto& side : sides) {
    auto corpus = read_corpus(*side.path);
    auto wv = Vocabulary::build_words(corpus, vocab_size);
    auto cv = Vocabulary::build_chars(wv, char_size);
    wv.save(vocab_path(out_dir, side.name, "words"));
    cv.save(vocab_path(out_dir, side.name, "chars"));
    std::int64_t total_tokens = 0, covered_tokens = 0;
    std::set<std::string> types;
    for (const auto& sent : corpus) {
      for (const auto& tok : sent) {
        total_tokens += 1;
        covered_tokens += wv.contains(tok) ? 1 : 0;
        types.insert(tok);
      }
    }
    // Fraction of all corpus types fully spellable with the char list; rare
    // words outside it degrade to char-<unk> and cannot be regenerated.
    std::int64_t spellable = 0;
    for (const auto& type : types) {
      bool ok = true;
      for (const auto& ch : utf8_chars(type)) ok = ok && cv.contains(ch);
      spellable += ok ? 1 : 0;
    }
    std::cout << side.name << "\twords\t" << wv.size() - wv.reserved() << "\n";
    std::cout << side.name << "\tchars\t" << cv.size() - cv.reserved() << "\n";
    std::cout << side.name << "\ttoken_coverage\t"
              << (total_tokens ? static_cast<double>(covered_tokens) / total_tokens : 0.0)
              << "\n";
    std::cout << side.name << "\ttype_char_coverage\t"
              << (types.empty() ? 0.0 : static_cast<double>(spellable) / types.size()) << "\n";
  }
  return 0;
}

int cmd_train(const std::string& train_src, const std::string& train_tgt,
              const std::string& dev_src, const std::string& dev_tgt, const VocabFlags& vocabs,
              ModelConfig mcfg, TrainConfig tcfg, const std::string& out_prefix,
              const std::string& log_path) {
  require_readable(train_src, "training corpus");
  require_readable(train_tgt, "training corpus");
  std::shared_ptr<const Vocabulary> src_words, tgt_words, src_chars, tgt_chars;
  if (mcfg.mode != ModelMode::kChar) {
    src_words = load_vocab(vocab_path(vocabs.dir, "src", "words"), vocabs.vocab_size);
    tgt_words = load_vocab(vocab_path(vocabs.dir, "tgt", "words"), vocabs.vocab_size);
  }
  if (mcfg.mode != ModelMode::kWord) {
    src_chars = load_vocab(vocab_path(vocabs.dir, "src", "chars"), vocabs.char_size);
    tgt_chars = load_vocab(vocab_path(vocabs.dir, "tgt", "chars"), vocabs.char_size);
  }
  std::cerr << "note: desk-scale defaults (dim 64, 2 layers, vocab 1000); larger settings "
               "remain legal via flags\n";
  std::cerr << "mode=" << to_string(mcfg.mode) << " path=" << to_string(mcfg.path)
            << " dim=" << mcfg.dim << " layers=" << mcfg.word_layers << "/" << mcfg.char_layers
            << " alpha=" << mcfg.alpha << " seed=" << mcfg.seed << "\n";

  HybridModel model(mcfg, src_words, tgt_words, src_chars, tgt_chars);
  auto train_pairs = zip_corpus(train_src, train_tgt);
  ParallelCorpus dev_pairs;
  if (!dev_src.empty()) {
    require_readable(dev_src, "dev corpus");
    require_readable(dev_tgt, "dev corpus");
    dev_pairs = zip_corpus(dev_src, dev_tgt);
  }
  tcfg.checkpoint_prefix = out_prefix;

  std::ofstream log_file;
  std::ostream* log = &std::cout;
  if (!log_path.empty()) {
    log_file.open(log_path, std::ios::binary);
    if (!log_file) throw IoError("cannot write log file " + log_path);
    log = &log_file;
  }
  auto state = train(model, train_pairs, dev_pairs.empty() ? nullptr : &dev_pairs, tcfg, log);
  const std::string final_path = out_prefix + ".ckpt";
  save_checkpoint(model, final_path);
  std::cerr << "final checkpoint: " << final_path << "\n";
  if (state.has_dev_score) std::cerr << "best dev BLEU: " << state.best_dev_score << "\n";
  return 0;
}

int cmd_translate(const std::string& ckpt, const std::string& in_path,
                  const std::string& out_path, DecodeOptions opts, const std::string& dict_path,
                  bool write_meta, int threads) {
  require_readable(ckpt, "checkpoint");
  require_readable(in_path, "input file");
  HybridModel model = load_checkpoint(ckpt);
  Dictionary dict;
  if (!dict_path.empty()) {
    dict = Dictionary::load(dict_path);
    opts.dictionary = &dict;
  }
  auto sources = read_corpus(in_path);
  auto translations = translate_corpus(model, sources, opts, threads);
  std::ofstream out(out_path, std::ios::binary);
  if (!out) throw IoError("cannot write output file " + out_path);
  bool warned = false;
  for (const auto& t : translations) {
    out << t.text() << "\n";
    warned = warned || t.used_copy_fallback_warning;
  }
  if (warned) {
    std::cerr << "warning: --strategy unk-replace without --dict falls back to identity copy\n";
  }
  if (write_meta) {
    std::ofstream meta(out_path + ".meta", std::ios::binary);
    if (!meta) throw IoError("cannot write meta file " + out_path + ".meta");
    for (std::size_t s = 0; s < translations.size(); ++s) {
      const auto& t = translations[s];
      std::size_t char_idx = 0;
      for (std::size_t p = 0; p < t.tokens.size(); ++p) {
        const char* mech = nullptr;
        double score = 0.0;
        switch (t.mechanism[p]) {
          case OutputMechanism::kCharGenerated: mech = "char"; break;
          case OutputMechanism::kDictionary: mech = "dict"; break;
          case OutputMechanism::kCopy: mech = "copy"; break;
          case OutputMechanism::kUnk: mech = "unk"; break;
          case OutputMechanism::kModel: break;
        }
        if (mech == nullptr) continue;
        if (t.mechanism[p] != OutputMechanism::kModel && char_idx < t.char_scores.size() &&
            t.char_scores[char_idx].first == static_cast<int>(p)) {
          score = t.char_scores[char_idx].second;
          char_idx += 1;
        }
        meta << s << "." << p << "\t" << mech << "\t" << score << "\n";
      }
    }
  }
  return 0;
}

int cmd_eval(const std::string& hyp_path, const std::string& ref_path,
             const std::string& similarity_path, const std::string& ckpt) {
  if (!similarity_path.empty()) {
    require_readable(similarity_path, "similarity file");
    require_readable(ckpt, "checkpoint");
    HybridModel model = load_checkpoint(ckpt);
    auto pairs = read_similarity_file(similarity_path);
    const double rho = rare_word_similarity(model, pairs);
    std::cout << "spearman_rho\t" << rho << "\n";
    std::cout << "spearman_rho_x100\t" << rho * 100.0 << "\n";
    return 0;
  }
  require_readable(hyp_path, "hypothesis file");
  require_readable(ref_path, "reference file");
  auto read_lines = [](const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      lines.push_back(line);
    }
    return lines;
  };
  auto hyp = read_lines(hyp_path);
  auto ref = read_lines(ref_path);
  auto b = bleu(hyp, ref);
  auto c = chrf3(hyp, ref);
  std::cout << "bleu\t" << b.value << "\n";
  for (const auto& [name, v] : b.components) std::cout << "bleu_" << name << "\t" << v << "\n";
  std::cout << "chrf3\t" << c.value << "\n";
  for (const auto& [name, v] : c.components) std::cout << "chrf3_" << name << "\t" << v << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"hybrid word-character neural machine translation"};
  app.require_subcommand(1);

  // build-vocab ---------------------------------------------------------
  auto* build = app.add_subcommand("build-vocab", "build word and char vocabulary files");
  std::string bv_src, bv_tgt, bv_out;
  int bv_vocab = 1000, bv_chars = 200;
  build->add_option("--src", bv_src, "source corpus (one sentence per line)")->required();
  build->add_option("--tgt", bv_tgt, "target corpus")->required();
  build->add_option("--vocab-size", bv_vocab, "word vocabulary size")->capture_default_str();
  build->add_option("--char-size", bv_chars, "character list size")->capture_default_str();
  build->add_option("--out", bv_out, "output directory")->required();

  // train ----------------------------------------------------------------
  auto* tr = app.add_subcommand("train", "train a model");
  tr->set_config("--config", "", "key=value config file; flags override");
  std::string tr_src, tr_tgt, tr_dev_src, tr_dev_tgt, tr_out = "model", tr_log;
  std::string tr_mode = "hybrid", tr_path = "separate";
  VocabFlags tr_vocabs;
  ModelConfig mcfg;
  TrainConfig tcfg;
  std::uint64_t tr_seed = 1;
  tr->add_option("--train-src", tr_src)->required();
  tr->add_option("--train-tgt", tr_tgt)->required();
  tr->add_option("--dev-src", tr_dev_src);
  tr->add_option("--dev-tgt", tr_dev_tgt);
  tr->add_option("--vocab-dir", tr_vocabs.dir, "directory written by build-vocab")->required();
  tr->add_option("--vocab-size", tr_vocabs.vocab_size,
                 "cap the loaded word vocabularies (0 keeps all)")
      ->capture_default_str();
  tr->add_option("--char-size", tr_vocabs.char_size, "cap the loaded char vocabularies")
      ->capture_default_str();
  tr->add_option("--mode", tr_mode, "word|char|hybrid")->capture_default_str();
  tr->add_option("--path", tr_path, "same|separate char-decoder seeding")->capture_default_str();
  tr->add_option("--dim", mcfg.dim, "hidden size")->capture_default_str();
  tr->add_option("--embed-dim", mcfg.embed_dim, "word embedding size (0 = --dim)")
      ->capture_default_str();
  tr->add_option("--char-dim", mcfg.char_dim, "char hidden size (0 = --dim)")
      ->capture_default_str();
  tr->add_option("--layers", mcfg.word_layers, "word LSTM depth")->capture_default_str();
  tr->add_option("--char-layers", mcfg.char_layers, "char LSTM depth")->capture_default_str();
  tr->add_option("--alpha", mcfg.alpha, "char loss weight")->capture_default_str();
  tr->add_option("--dropout", mcfg.dropout, "dropout probability")->capture_default_str();
  tr->add_option("--init-range", mcfg.init_range, "uniform init half-width")
      ->capture_default_str();
  tr->add_option("--epochs", tcfg.epochs)->capture_default_str();
  tr->add_option("--lr", tcfg.lr0, "initial learning rate")->capture_default_str();
  tr->add_option("--warm-epochs", tcfg.warm_epochs, "epochs before halving starts")
      ->capture_default_str();
  tr->add_option("--halve-every", tcfg.halve_every, "halving interval in epochs after warm")
      ->capture_default_str();
  tr->add_option("--clip-norm", tcfg.clip_norm, "gradient norm rescale threshold")
      ->capture_default_str();
  tr->add_option("--batch-size", tcfg.batch_size)->capture_default_str();
  tr->add_option("--max-len", tcfg.max_len, "token truncation per side")->capture_default_str();
  tr->add_option("--max-len-chars", tcfg.max_len_chars, "char-mode truncation per side")
      ->capture_default_str();
  tr->add_option("--seed", tr_seed, "RNG seed")->envname("HNMT_SEED")->capture_default_str();
  tr->add_option("--logs-per-epoch", tcfg.logs_per_epoch)->capture_default_str();
  tr->add_option("--out", tr_out, "checkpoint path prefix")->capture_default_str();
  tr->add_option("--log", tr_log, "training log file (default stdout)");

  // translate -------------------------------------------------------------
  auto* trl = app.add_subcommand("translate", "translate a file with a trained model");
  trl->set_config("--config", "", "key=value config file; flags override");
  std::string x_ckpt, x_in, x_out, x_dict, x_strategy = "char";
  DecodeOptions dopts;
  bool x_meta = false;
  int x_threads = 1;
  trl->add_option("--ckpt", x_ckpt)->required();
  trl->add_option("--in", x_in)->required();
  trl->add_option("--out", x_out)->required();
  trl->add_option("--beam", dopts.beam, "word beam width")->capture_default_str();
  trl->add_option("--char-beam", dopts.char_beam, "char beam width")->capture_default_str();
  trl->add_option("--max-len", dopts.max_len, "maximum output words")->capture_default_str();
  trl->add_option("--max-chars", dopts.max_chars, "maximum chars per generated word")
      ->capture_default_str();
  trl->add_option("--strategy", x_strategy, "char|unk-replace|none")->capture_default_str();
  trl->add_option("--dict", x_dict, "TSV dictionary for unk-replace");
  trl->add_flag("--meta", x_meta, "write a .meta side file");
  trl->add_flag("--length-norm", dopts.length_norm, "normalize beam scores by length");
  trl->add_option("--threads", x_threads, "parallel sentence workers")->capture_default_str();

  // eval -------------------------------------------------------------------
  auto* ev = app.add_subcommand("eval", "score hypotheses or similarity data");
  std::string e_hyp, e_ref, e_sim, e_ckpt;
  ev->add_option("--hyp", e_hyp, "hypothesis file");
  ev->add_option("--ref", e_ref, "reference file");
  ev->add_option("--similarity", e_sim, "TSV word1<TAB>word2<TAB>score");
  ev->add_option("--ckpt", e_ckpt, "checkpoint for --similarity");

  CLI11_PARSE(app, argc, argv);
  try {
    if (build->parsed()) {
      return cmd_build_vocab(bv_src, bv_tgt, bv_vocab, bv_chars, bv_out);
    }
    if (tr->parsed()) {
      mcfg.mode = parse_mode(tr_mode);
      mcfg.path = parse_path(tr_path);
      mcfg.seed = tr_seed;
      tcfg.seed = tr_seed;
      if ((tr_dev_src.empty()) != (tr_dev_tgt.empty())) {
        throw ConfigError("--dev-src and --dev-tgt must be given together");
      }
      return cmd_train(tr_src, tr_tgt, tr_dev_src, tr_dev_tgt, tr_vocabs, mcfg, tcfg, tr_out,
                       tr_log);
    }
    if (trl->parsed()) {
      dopts.strategy = parse_strategy(x_strategy);
      return cmd_translate(x_ckpt, x_in, x_out, dopts, x_dict, x_meta, x_threads);
    }
    if (ev->parsed()) {
      if (e_sim.empty() && (e_hyp.empty() || e_ref.empty())) {
        throw ConfigError("eval needs --hyp/--ref or --similarity/--ckpt");
      }
      return cmd_eval(e_hyp, e_ref, e_sim, e_ckpt);
    }
  } catch (const hnmt::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
