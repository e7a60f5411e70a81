#include "hnmt/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

namespace hnmt {

namespace {

constexpr const char* kMagic = "hnmt-ckpt v1";

void write_u64(std::ostream& out, std::uint64_t v) {
  char bytes[8];
  for (int i = 0; i < 8; ++i) bytes[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  out.write(bytes, 8);
}

std::uint64_t read_u64(std::istream& in) {
  char bytes[8];
  in.read(bytes, 8);
  if (in.gcount() != 8) throw FormatError("checkpoint truncated while reading u64");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) {
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[i])) << (8 * i);
  }
  return v;
}

void write_f64(std::ostream& out, double d) {
  write_u64(out, std::bit_cast<std::uint64_t>(d));
}

double read_f64(std::istream& in) {
  return std::bit_cast<double>(read_u64(in));
}

std::string format_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

std::string join_tokens(const std::vector<std::string>& tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += ' ';
    out += tokens[i];
  }
  return out;
}

std::vector<std::string> split_space(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream ss(s);
  std::string tok;
  while (ss >> tok) out.push_back(tok);
  return out;
}

}  // namespace

void save_checkpoint(const HybridModel& model, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint " + path);
  const ModelConfig& cfg = model.config();
  out << kMagic << "\n";
  out << "mode=" << to_string(cfg.mode) << "\n";
  out << "path=" << to_string(cfg.path) << "\n";
  out << "dim=" << cfg.dim << "\n";
  out << "embed_dim=" << cfg.embed_dim << "\n";
  out << "char_dim=" << cfg.char_dim << "\n";
  out << "word_layers=" << cfg.word_layers << "\n";
  out << "char_layers=" << cfg.char_layers << "\n";
  out << "alpha=" << format_double(cfg.alpha) << "\n";
  out << "dropout=" << format_double(cfg.dropout) << "\n";
  out << "init_range=" << format_double(cfg.init_range) << "\n";
  out << "seed=" << cfg.seed << "\n";
  out << "gate_order=ifgo\n";
  auto dump_vocab = [&out](const char* key, std::shared_ptr<const Vocabulary> v) {
    if (!v) return;
    out << key << "=" << join_tokens(v->regular_tokens()) << "\n";
  };
  dump_vocab("vocab.src_words", model.source_words_ptr());
  dump_vocab("vocab.tgt_words", model.target_words_ptr());
  dump_vocab("vocab.src_chars", model.source_chars_ptr());
  dump_vocab("vocab.tgt_chars", model.target_chars_ptr());
  out << "\n";
  for (const auto& [name, tensor] : model.named_parameters()) {
    write_u64(out, name.size());
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    const auto& shape = tensor.shape();
    write_u64(out, shape.size());
    for (auto d : shape) write_u64(out, static_cast<std::uint64_t>(d));
    for (double v : tensor.value()) write_f64(out, v);
  }
  if (!out) throw IoError("failed writing checkpoint " + path);
}

HybridModel load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read checkpoint " + path);
  std::string line;
  if (!std::getline(in, line) || line != kMagic) {
    throw FormatError("bad checkpoint magic in " + path);
  }
  std::map<std::string, std::string> kv;
  while (std::getline(in, line)) {
    if (line.empty()) break;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw FormatError("bad config line in checkpoint: " + line);
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  auto need = [&kv, &path](const std::string& key) -> const std::string& {
    auto it = kv.find(key);
    if (it == kv.end()) throw FormatError("checkpoint " + path + " missing key " + key);
    return it->second;
  };
  ModelConfig cfg;
  cfg.mode = parse_mode(need("mode"));
  cfg.path = parse_path(need("path"));
  cfg.dim = std::stoll(need("dim"));
  cfg.embed_dim = kv.count("embed_dim") ? std::stoll(kv.at("embed_dim")) : 0;
  cfg.char_dim = std::stoll(need("char_dim"));
  cfg.word_layers = std::stoi(need("word_layers"));
  cfg.char_layers = std::stoi(need("char_layers"));
  cfg.alpha = std::stod(need("alpha"));
  cfg.dropout = std::stod(need("dropout"));
  cfg.init_range = std::stod(need("init_range"));
  cfg.seed = std::stoull(need("seed"));
  if (need("gate_order") != "ifgo") {
    throw FormatError("unsupported gate order " + need("gate_order"));
  }
  auto read_vocab = [&kv](const char* key, VocabKind kind) -> std::shared_ptr<const Vocabulary> {
    auto it = kv.find(key);
    if (it == kv.end()) return nullptr;
    return std::make_shared<Vocabulary>(kind, split_space(it->second));
  };
  auto src_words = read_vocab("vocab.src_words", VocabKind::kWord);
  auto tgt_words = read_vocab("vocab.tgt_words", VocabKind::kWord);
  auto src_chars = read_vocab("vocab.src_chars", VocabKind::kChar);
  auto tgt_chars = read_vocab("vocab.tgt_chars", VocabKind::kChar);

  HybridModel model(cfg, src_words, tgt_words, src_chars, tgt_chars);
  auto params = model.named_parameters();
  std::size_t loaded = 0;
  for (auto& [name, tensor] : params) {
    const std::uint64_t name_len = read_u64(in);
    std::string record_name(name_len, '\0');
    in.read(record_name.data(), static_cast<std::streamsize>(name_len));
    if (in.gcount() != static_cast<std::streamsize>(name_len)) {
      throw FormatError("checkpoint truncated while reading tensor name");
    }
    if (record_name != name) {
      throw FormatError("checkpoint tensor order mismatch: expected " + name + ", found " +
                        record_name);
    }
    const std::uint64_t rank = read_u64(in);
    Shape shape(rank);
    for (auto& d : shape) d = static_cast<std::int64_t>(read_u64(in));
    if (shape != tensor.shape()) {
      throw FormatError("checkpoint tensor " + name + " has unexpected shape");
    }
    auto dst = tensor.value_mut();
    for (auto& v : dst) v = read_f64(in);
    loaded += 1;
  }
  if (in.peek() != std::ifstream::traits_type::eof()) {
    throw FormatError("checkpoint " + path + " has trailing data after " +
                      std::to_string(loaded) + " tensors");
  }
  return model;
}

}  // namespace hnmt
