#include "translit/checkpoint.hpp"

#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include "translit/errors.hpp"
#include "translit/rnn_seq2seq.hpp"
#include "translit/transformer_seq2seq.hpp"

namespace translit {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

int int_value(const std::string& key, const std::string& v) {
  int out = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) throw ConfigError("invalid integer for " + key + ": " + v);
  return out;
}

double real_value(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double out = 0.0;
  try {
    out = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != v.size()) throw ConfigError("invalid number for " + key + ": " + v);
  return out;
}

std::string hex_encode(const std::string& s) {
  static const char* digits = "0123456789abcdef";
  std::string out;
  for (unsigned char c : s) {
    out += digits[c >> 4];
    out += digits[c & 15];
  }
  return out;
}

std::string hex_decode(std::string_view s) {
  if (s.size() % 2) throw CorruptCheckpoint("odd-length hex field");
  std::string out;
  for (std::size_t i = 0; i < s.size(); i += 2) {
    unsigned v = 0;
    auto [ptr, ec] = std::from_chars(s.data() + i, s.data() + i + 2, v, 16);
    if (ec != std::errc() || ptr != s.data() + i + 2) throw CorruptCheckpoint("bad hex field");
    out += static_cast<char>(v);
  }
  return out;
}

std::string vocab_field(const Vocabulary& v) {
  std::string out;
  for (const auto& s : v.symbols()) {
    if (!out.empty()) out += ',';
    out += hex_encode(s);
  }
  return out;
}

Vocabulary parse_vocab(const std::string& field) {
  std::vector<std::string> symbols;
  std::size_t start = 0;
  while (start < field.size()) {
    std::size_t end = field.find(',', start);
    if (end == std::string::npos) end = field.size();
    symbols.push_back(hex_decode(std::string_view(field).substr(start, end - start)));
    start = end + 1;
  }
  return Vocabulary(symbols);
}

struct Header {
  ModelKind kind = ModelKind::rnn;
  Direction direction = Direction::C2T;
  Vocabulary source_vocab, target_vocab;
  ConfigEntries arch;
  std::size_t param_count = 0;
};

Header read_header(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw CorruptCheckpoint("empty checkpoint");
  const std::string magic = std::string(kCheckpointMagic) + " v";
  if (line.rfind(magic, 0) != 0) throw CorruptCheckpoint("bad checkpoint magic");
  if (line != magic + std::to_string(kCheckpointVersion))
    throw UnsupportedVersion("unsupported checkpoint version: " + line.substr(magic.size() - 1));

  std::map<std::string, std::string> fields;
  ConfigEntries arch;
  bool ended = false;
  while (std::getline(in, line)) {
    if (line == "end") {
      ended = true;
      break;
    }
    auto eq = line.find('=');
    if (eq == std::string::npos) throw CorruptCheckpoint("malformed header line: " + line);
    std::string key = line.substr(0, eq), value = line.substr(eq + 1);
    if (key.starts_with("arch.")) {
      arch.emplace_back(key.substr(5), value);
    } else if (!fields.emplace(key, value).second) {
      throw CorruptCheckpoint("duplicate header key: " + key);
    }
  }
  if (!ended) throw CorruptCheckpoint("truncated header");

  auto need = [&](const char* key) -> const std::string& {
    auto it = fields.find(key);
    if (it == fields.end()) throw CorruptCheckpoint(std::string("missing header key: ") + key);
    return it->second;
  };
  Header h;
  try {
    h.kind = parse_model_kind(need("kind"));
    h.direction = parse_direction(need("direction"));
    h.param_count = static_cast<std::size_t>(int_value("params", need("params")));
  } catch (const ConfigError& e) {
    throw CorruptCheckpoint(e.what());
  }
  h.source_vocab = parse_vocab(need("source_vocab"));
  h.target_vocab = parse_vocab(need("target_vocab"));
  h.arch = std::move(arch);
  return h;
}

template <class T>
T read_le(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!in) throw CorruptCheckpoint("truncated parameter data");
  return v;
}

template <class T>
void write_le(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

void read_params(std::istream& in, const Header& h, Seq2SeqModel& model) {
  auto& params = model.params();
  if (h.param_count != params.size()) throw CorruptCheckpoint("parameter count does not match the architecture");
  for (auto& p : params) {
    auto name_len = read_le<std::uint32_t>(in);
    if (name_len > 4096) throw CorruptCheckpoint("implausible parameter name length");
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    if (!in) throw CorruptCheckpoint("truncated parameter name");
    if (name != p.name) throw CorruptCheckpoint("unexpected parameter " + name + ", wanted " + p.name);
    auto rank = read_le<std::uint32_t>(in);
    if (rank != p.value.shape().size()) throw CorruptCheckpoint("rank mismatch for " + name);
    for (std::size_t d = 0; d < rank; ++d)
      if (read_le<std::uint64_t>(in) != p.value.dim(d)) throw CorruptCheckpoint("shape mismatch for " + name);
    auto& data = p.value.storage();
    in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(data.size() * sizeof(double)));
    if (!in) throw CorruptCheckpoint("truncated values for " + name);
  }
  if (in.peek() != std::char_traits<char>::eof()) throw CorruptCheckpoint("trailing data after parameters");
}

}  // namespace

std::unique_ptr<Seq2SeqModel> make_model(ModelKind kind, const ConfigEntries& arch, Vocabulary source_vocab,
                                         Vocabulary target_vocab, std::uint64_t seed) {
  if (kind == ModelKind::transformer) {
    TransformerConfig c;
    for (const auto& [k, v] : arch) {
      if (k == "d_model") c.d_model = int_value(k, v);
      else if (k == "heads") c.heads = int_value(k, v);
      else if (k == "layers") c.layers = int_value(k, v);
      else if (k == "ffn_dim") c.ffn_dim = int_value(k, v);
      else if (k == "dropout") c.dropout = real_value(k, v);
      else if (k == "label_smoothing") c.label_smoothing = real_value(k, v);
      else throw ConfigError("unknown transformer key: " + k);
    }
    return std::make_unique<TransformerModel>(c, std::move(source_vocab), std::move(target_vocab), seed);
  }
  RnnConfig c;
  c.attention = kind == ModelKind::rnn_attention;
  for (const auto& [k, v] : arch) {
    if (k == "embed_dim") c.embed_dim = int_value(k, v);
    else if (k == "hidden") c.hidden = int_value(k, v);
    else if (k == "layers") c.layers = int_value(k, v);
    else if (k == "dropout") c.dropout = real_value(k, v);
    else if (k == "attention") {
      if ((v == "1") != c.attention || (v != "0" && v != "1"))
        throw ConfigError("attention=" + v + " contradicts model kind " + model_kind_name(kind));
    } else {
      throw ConfigError("unknown rnn key: " + k);
    }
  }
  return std::make_unique<RnnModel>(c, std::move(source_vocab), std::move(target_vocab), seed);
}

void save_checkpoint(const Seq2SeqModel& model, Direction direction, std::ostream& out) {
  out << kCheckpointMagic << " v" << kCheckpointVersion << "\n";
  out << "kind=" << model_kind_name(model.kind()) << "\n";
  out << "direction=" << direction_name(direction) << "\n";
  out << "source_vocab=" << vocab_field(model.source_vocab()) << "\n";
  out << "target_vocab=" << vocab_field(model.target_vocab()) << "\n";
  for (const auto& [k, v] : model.config_entries()) out << "arch." << k << "=" << v << "\n";
  out << "params=" << model.params().size() << "\n";
  out << "end\n";
  for (const auto& p : model.params()) {
    write_le<std::uint32_t>(out, static_cast<std::uint32_t>(p.name.size()));
    out.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
    write_le<std::uint32_t>(out, static_cast<std::uint32_t>(p.value.shape().size()));
    for (std::size_t d : p.value.shape()) write_le<std::uint64_t>(out, d);
    const auto data = p.value.data();
    out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size() * sizeof(double)));
  }
  if (!out) throw Error("failed to write checkpoint");
}

void save_checkpoint(const Seq2SeqModel& model, Direction direction, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  save_checkpoint(model, direction, out);
}

Checkpoint load_checkpoint(std::istream& in) {
  Header h = read_header(in);
  Checkpoint ck;
  ck.direction = h.direction;
  try {
    ck.model = make_model(h.kind, h.arch, h.source_vocab, h.target_vocab, 0);
  } catch (const ConfigError& e) {
    throw CorruptCheckpoint(std::string("bad architecture: ") + e.what());
  }
  read_params(in, h, *ck.model);
  return ck;
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CorruptCheckpoint("cannot open " + path.string());
  return load_checkpoint(in);
}

Direction load_checkpoint_into(Seq2SeqModel& model, std::istream& in) {
  Header h = read_header(in);
  if (h.kind != model.kind())
    throw ConfigMismatch(std::string("checkpoint holds a ") + model_kind_name(h.kind) + " model");
  if (!(h.source_vocab == model.source_vocab())) throw ConfigMismatch("source vocabulary differs");
  if (!(h.target_vocab == model.target_vocab())) throw ConfigMismatch("target vocabulary differs");
  if (h.arch != model.config_entries()) throw ConfigMismatch("architecture differs");
  read_params(in, h, model);
  return h.direction;
}

bool is_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::string head(std::strlen(kCheckpointMagic), '\0');
  in.read(head.data(), static_cast<std::streamsize>(head.size()));
  return in && head == kCheckpointMagic;
}

}  // namespace translit
