#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "hnmt/checkpoint.hpp"
#include "hnmt/decode.hpp"
#include "hnmt/metrics.hpp"
#include "hnmt/trainer.hpp"

namespace py = pybind11;
using namespace hnmt;

namespace {

std::vector<std::string> split_tokens(const std::string& line) {
  std::vector<std::string> out;
  std::istringstream ss(line);
  std::string tok;
  while (ss >> tok) out.push_back(tok);
  return out;
}

std::vector<std::vector<std::string>> split_corpus(const std::vector<std::string>& lines) {
  std::vector<std::vector<std::string>> out;
  out.reserve(lines.size());
  for (const auto& line : lines) out.push_back(split_tokens(line));
  return out;
}

ParallelCorpus zip_lines(const std::vector<std::string>& src,
                         const std::vector<std::string>& tgt) {
  if (src.size() != tgt.size()) {
    throw DataError("source and target line counts differ: " + std::to_string(src.size()) +
                    " vs " + std::to_string(tgt.size()));
  }
  ParallelCorpus pairs(src.size());
  for (std::size_t i = 0; i < src.size(); ++i) {
    pairs[i].source = split_tokens(src[i]);
    pairs[i].target = split_tokens(tgt[i]);
  }
  return pairs;
}

Tensor tensor_from_numpy(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
  if (a.ndim() != 2) throw DimensionError("expected a 2-d array");
  Shape shape = {a.shape(0), a.shape(1)};
  std::vector<double> data(a.data(), a.data() + a.size());
  return Tensor::from(std::move(shape), std::move(data));
}

py::array_t<double> tensor_to_numpy(const Tensor& t) {
  py::array_t<double> out({t.rows(), t.cols()});
  std::copy(t.value().begin(), t.value().end(), out.mutable_data());
  return out;
}

py::dict score_to_dict(const CorpusScore& s) {
  py::dict d;
  d["metric"] = s.metric;
  d["value"] = s.value;
  py::dict comp;
  for (const auto& [name, v] : s.components) comp[py::str(name)] = v;
  d["components"] = comp;
  return d;
}

py::dict breakdown_to_dict(const LossBreakdown& b) {
  py::dict d;
  d["j_word"] = b.j_word;
  d["j_char"] = b.j_char;
  d["alpha"] = b.alpha;
  d["j_total"] = b.total();
  d["word_tokens"] = b.word_tokens;
  d["char_tokens"] = b.char_tokens;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "hybrid word-character neural machine translation";

  py::register_exception<Error>(m, "HnmtError");

  py::enum_<ModelMode>(m, "ModelMode")
      .value("WORD", ModelMode::kWord)
      .value("CHAR", ModelMode::kChar)
      .value("HYBRID", ModelMode::kHybrid);
  py::enum_<SeedPath>(m, "SeedPath")
      .value("SAME", SeedPath::kSame)
      .value("SEPARATE", SeedPath::kSeparate);

  py::class_<Vocabulary, std::shared_ptr<Vocabulary>>(m, "Vocabulary")
      .def_static(
          "build_words",
          [](const std::vector<std::string>& lines, int size) {
            return std::make_shared<Vocabulary>(Vocabulary::build_words(split_corpus(lines), size));
          },
          py::arg("lines"), py::arg("size"))
      .def_static(
          "build_chars",
          [](const Vocabulary& words, int size) {
            return std::make_shared<Vocabulary>(Vocabulary::build_chars(words, size));
          },
          py::arg("word_vocab"), py::arg("size"))
      .def_static("load",
                  [](const std::string& path) {
                    return std::make_shared<Vocabulary>(Vocabulary::load(path));
                  })
      .def("save", &Vocabulary::save)
      .def("id", &Vocabulary::id)
      .def("token", &Vocabulary::token)
      .def("contains", &Vocabulary::contains)
      .def("__len__", &Vocabulary::size)
      .def("__contains__", &Vocabulary::contains);

  py::class_<ModelConfig>(m, "ModelConfig")
      .def(py::init([](const std::string& mode, const std::string& path, std::int64_t dim,
                       int word_layers, int char_layers, double alpha, double dropout,
                       double init_range, std::uint64_t seed) {
             ModelConfig cfg;
             cfg.mode = parse_mode(mode);
             cfg.path = parse_path(path);
             cfg.dim = dim;
             cfg.word_layers = word_layers;
             cfg.char_layers = char_layers;
             cfg.alpha = alpha;
             cfg.dropout = dropout;
             cfg.init_range = init_range;
             cfg.seed = seed;
             return cfg;
           }),
           py::arg("mode") = "hybrid", py::arg("path") = "separate", py::arg("dim") = 64,
           py::arg("word_layers") = 2, py::arg("char_layers") = 2, py::arg("alpha") = 1.0,
           py::arg("dropout") = 0.2, py::arg("init_range") = 0.1, py::arg("seed") = 1)
      .def_property_readonly("mode", [](const ModelConfig& c) { return to_string(c.mode); })
      .def_property_readonly("path", [](const ModelConfig& c) { return to_string(c.path); })
      .def_readwrite("dim", &ModelConfig::dim)
      .def_readwrite("alpha", &ModelConfig::alpha)
      .def_readwrite("dropout", &ModelConfig::dropout)
      .def_readwrite("seed", &ModelConfig::seed);

  py::class_<HybridModel>(m, "HybridModel")
      .def(py::init([](const ModelConfig& cfg, std::shared_ptr<Vocabulary> src_words,
                       std::shared_ptr<Vocabulary> tgt_words,
                       std::shared_ptr<Vocabulary> src_chars,
                       std::shared_ptr<Vocabulary> tgt_chars) {
             return HybridModel(cfg, std::move(src_words), std::move(tgt_words),
                                std::move(src_chars), std::move(tgt_chars));
           }),
           py::arg("config"), py::arg("src_words") = nullptr, py::arg("tgt_words") = nullptr,
           py::arg("src_chars") = nullptr, py::arg("tgt_chars") = nullptr)
      .def_property_readonly("mode",
                             [](const HybridModel& m_) { return to_string(m_.config().mode); })
      .def("parameter_names",
           [](const HybridModel& m_) {
             std::vector<std::string> names;
             for (auto& [n, t] : m_.named_parameters()) names.push_back(n);
             return names;
           })
      .def("parameter",
           [](const HybridModel& m_, const std::string& name) {
             return tensor_to_numpy(m_.parameter(name));
           })
      .def(
          "loss",
          [](const HybridModel& m_, const std::vector<std::string>& src,
             const std::vector<std::string>& tgt, int batch_size) {
            TrainConfig cfg;
            cfg.batch_size = batch_size;
            return breakdown_to_dict(evaluate_loss(m_, zip_lines(src, tgt), cfg));
          },
          py::arg("src"), py::arg("tgt"), py::arg("batch_size") = 16)
      .def(
          "translate",
          [](const HybridModel& m_, const std::vector<std::string>& lines, int beam,
             int char_beam, int max_len, int max_chars, const std::string& strategy,
             int threads) {
            DecodeOptions opts;
            opts.beam = beam;
            opts.char_beam = char_beam;
            opts.max_len = max_len;
            opts.max_chars = max_chars;
            opts.strategy = parse_strategy(strategy);
            auto translations = translate_corpus(m_, split_corpus(lines), opts, threads);
            std::vector<std::string> out;
            out.reserve(translations.size());
            for (const auto& t : translations) out.push_back(t.text());
            return out;
          },
          py::arg("lines"), py::arg("beam") = 4, py::arg("char_beam") = 5,
          py::arg("max_len") = 50, py::arg("max_chars") = 50, py::arg("strategy") = "char",
          py::arg("threads") = 1)
      .def("save", &save_checkpoint, py::arg("path"));

  m.def("load_checkpoint", &load_checkpoint, py::arg("path"));

  m.def(
      "train",
      [](HybridModel& model, const std::vector<std::string>& src,
         const std::vector<std::string>& tgt, double epochs, double lr, double warm_epochs,
         double halve_every, double clip_norm, int batch_size, int max_len,
         std::uint64_t seed, const std::string& checkpoint_prefix) {
        TrainConfig cfg;
        cfg.epochs = epochs;
        cfg.lr0 = lr;
        cfg.warm_epochs = warm_epochs;
        cfg.halve_every = halve_every;
        cfg.clip_norm = clip_norm;
        cfg.batch_size = batch_size;
        cfg.max_len = max_len;
        cfg.seed = seed;
        cfg.checkpoint_prefix = checkpoint_prefix;
        std::ostringstream log;
        train(model, zip_lines(src, tgt), nullptr, cfg, &log);
        return log.str();
      },
      py::arg("model"), py::arg("src"), py::arg("tgt"), py::arg("epochs") = 6.0,
      py::arg("lr") = 1.0, py::arg("warm_epochs") = 4.0, py::arg("halve_every") = 0.5,
      py::arg("clip_norm") = 5.0, py::arg("batch_size") = 128, py::arg("max_len") = 50,
      py::arg("seed") = 1, py::arg("checkpoint_prefix") = "");

  m.def("bleu", [](const std::vector<std::string>& hyp, const std::vector<std::string>& ref) {
    return score_to_dict(bleu(hyp, ref));
  });
  m.def("chrf3", [](const std::vector<std::string>& hyp, const std::vector<std::string>& ref) {
    return score_to_dict(chrf3(hyp, ref));
  });
  m.def("spearman_rho", &spearman_rho, py::arg("a"), py::arg("b"));
  m.def("perplexity", &perplexity, py::arg("total_loss"), py::arg("token_count"));
  m.def(
      "rare_word_similarity",
      [](const HybridModel& model,
         const std::vector<std::tuple<std::string, std::string, double>>& triples) {
        std::vector<SimilarityPair> pairs;
        for (const auto& [a, b, s] : triples) pairs.push_back({a, b, s});
        return rare_word_similarity(model, pairs);
      },
      py::arg("model"), py::arg("pairs"));

  // Low-level tensor surface for numerical smoke tests.
  m.def("matmul", [](const py::array_t<double>& a, const py::array_t<double>& b) {
    return tensor_to_numpy(matmul(tensor_from_numpy(a), tensor_from_numpy(b)));
  });
  m.def("softmax_rows", [](const py::array_t<double>& x) {
    return tensor_to_numpy(softmax_rows(tensor_from_numpy(x)));
  });
  m.def("grad_check_softmax_xent", [](const py::array_t<double>& logits, std::int64_t target) {
    return grad_check(
        [target](const Tensor& t) { return cross_entropy_row(t, target); },
        tensor_from_numpy(logits), 1e-5);
  });
}
