#include "translit/script_codec.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "translit/errors.hpp"
#include "translit/utf8.hpp"

namespace translit {

namespace {

std::string_view trim(std::string_view s) {
  auto is_space = [](char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n'; };
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

bool valid_latin(std::string_view latin) {
  for (char c : latin) {
    auto u = static_cast<unsigned char>(c);
    if (u < 0x21 || u >= 0x7F) return false;
    if (c >= 'A' && c <= 'Z') return false;
  }
  return true;
}

}  // namespace

const char* side_name(Side side) { return side == Side::cyrillic ? "cyrillic" : "latin"; }

TransliterationTable TransliterationTable::parse(std::string_view text) {
  TransliterationTable table;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (trim(line).empty() || trim(line).front() == '#') continue;

    std::size_t tab = line.find('\t');
    if (tab == std::string_view::npos) throw MalformedLine(line_no, "expected script<TAB>latin");
    std::string_view script = trim(line.substr(0, tab));
    std::string_view latin = trim(line.substr(tab + 1));
    if (script.empty() || latin.empty()) throw MalformedLine(line_no, "empty field");
    if (!valid_latin(latin))
      throw MalformedLine(line_no, "latin side must be printable lowercase ASCII: '" + std::string(latin) + "'");
    if (table.by_script_.count(script))
      throw DuplicateEntry("line " + std::to_string(line_no) + ": duplicate script symbol '" + std::string(script) + "'");
    if (table.by_latin_.count(latin))
      throw DuplicateEntry("line " + std::to_string(line_no) + ": duplicate latin string '" + std::string(latin) + "'");

    table.by_script_.emplace(std::string(script), table.entries_.size());
    table.by_latin_.emplace(std::string(latin), table.entries_.size());
    table.entries_.push_back({std::string(script), std::string(latin)});
    table.max_script_bytes_ = std::max(table.max_script_bytes_, script.size());
    table.max_latin_bytes_ = std::max(table.max_latin_bytes_, latin.size());
  }
  if (table.entries_.empty()) throw EmptyTable("transliteration table has no entries");

  // Prefix-freeness of the latin side. by_latin_ is sorted, so a proper prefix
  // of a key sorts immediately before some key that extends it.
  for (const auto& [latin, index] : table.by_latin_) {
    for (std::size_t n = 1; n < latin.size(); ++n) {
      auto it = table.by_latin_.find(std::string_view(latin).substr(0, n));
      if (it != table.by_latin_.end())
        throw PrefixConflict("latin '" + it->first + "' is a proper prefix of '" + latin + "'");
    }
  }
  return table;
}

TransliterationTable TransliterationTable::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open transliteration table: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

std::string TransliterationTable::to_latin(std::string_view word) const {
  std::string out;
  std::size_t pos = 0;
  std::size_t cp_index = 0;
  while (pos < word.size()) {
    std::size_t best = 0;
    std::size_t limit = std::min(max_script_bytes_, word.size() - pos);
    for (std::size_t n = limit; n >= 1; --n) {
      auto it = by_script_.find(word.substr(pos, n));
      if (it != by_script_.end()) {
        out += entries_[it->second].latin;
        best = n;
        break;
      }
    }
    if (best == 0) throw UnknownSymbol(cp_index, "script symbol not in table");
    cp_index += utf8::split(word.substr(pos, best)).size();
    pos += best;
  }
  return out;
}

std::string TransliterationTable::to_script(std::string_view latin) const {
  std::string out;
  std::size_t pos = 0;
  while (pos < latin.size()) {
    std::size_t best = 0;
    std::size_t limit = std::min(max_latin_bytes_, latin.size() - pos);
    for (std::size_t n = limit; n >= 1; --n) {
      auto it = by_latin_.find(latin.substr(pos, n));
      if (it != by_latin_.end()) {
        out += entries_[it->second].script;
        best = n;
        break;
      }
    }
    if (best == 0) throw UnparseableLatin(pos, "latin residue '" + std::string(latin.substr(pos)) + "' unparseable");
    pos += best;
  }
  return out;
}

std::string lowercase_code_point(std::string_view cp) {
  char32_t c = utf8::decode(cp);
  char32_t lower = c;
  if (c >= 'A' && c <= 'Z') lower = c + 32;
  else if (c >= 0x0410 && c <= 0x042F) lower = c + 0x20;
  else if (c >= 0x0400 && c <= 0x040F) lower = c + 0x50;
  else if (((c >= 0x0460 && c <= 0x0481) || (c >= 0x048A && c <= 0x04BF) || (c >= 0x04D0 && c <= 0x04FF)) &&
           c % 2 == 0)
    lower = c + 1;
  return lower == c ? std::string(cp) : utf8::encode(lower);
}

std::string uppercase_code_point(std::string_view cp) {
  char32_t c = utf8::decode(cp);
  char32_t upper = c;
  if (c >= 'a' && c <= 'z') upper = c - 32;
  else if (c >= 0x0430 && c <= 0x044F) upper = c - 0x20;
  else if (c >= 0x0450 && c <= 0x045F) upper = c - 0x50;
  else if (((c >= 0x0460 && c <= 0x0481) || (c >= 0x048A && c <= 0x04BF) || (c >= 0x04D0 && c <= 0x04FF)) &&
           c % 2 == 1)
    upper = c - 1;
  return upper == c ? std::string(cp) : utf8::encode(upper);
}

CharSeq tokenize(std::string_view word, Side side) {
  word = trim(word);
  if (word.empty()) throw EmptyInput("cannot tokenize an empty word");
  CharSeq seq;
  seq.side = side;
  seq.tokens = utf8::split(word);
  if (side == Side::cyrillic) {
    std::string lowered = lowercase_code_point(seq.tokens.front());
    if (lowered != seq.tokens.front()) {
      seq.tokens.front() = std::move(lowered);
      seq.capitalized = true;
    }
  }
  return seq;
}

std::string join_tokens(std::span<const std::string> tokens) {
  std::string out;
  for (const auto& t : tokens) out += t;
  return out;
}

std::string detokenize(const CharSeq& seq) {
  if (seq.tokens.empty()) return {};
  std::string out = seq.capitalized ? uppercase_code_point(seq.tokens.front()) : seq.tokens.front();
  for (std::size_t i = 1; i < seq.tokens.size(); ++i) out += seq.tokens[i];
  return out;
}

Vocabulary::Vocabulary() : symbols_{"<pad>", "<s>", "</s>", "<unk>"} {}

Vocabulary::Vocabulary(std::span<const std::string> symbols) : Vocabulary() {
  for (const auto& s : symbols) {
    if (ids_.count(s)) continue;
    ids_.emplace(s, static_cast<int>(symbols_.size()));
    symbols_.push_back(s);
  }
}

int Vocabulary::id(std::string_view symbol) const {
  auto it = ids_.find(symbol);
  return it == ids_.end() ? kUnk : it->second;
}

const std::string& Vocabulary::symbol(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= symbols_.size())
    throw IndexError("vocabulary id " + std::to_string(id) + " out of range");
  return symbols_[static_cast<std::size_t>(id)];
}

bool Vocabulary::contains(std::string_view symbol) const { return ids_.count(symbol) > 0; }

std::vector<std::string> Vocabulary::symbols() const {
  return {symbols_.begin() + kReserved, symbols_.end()};
}

std::vector<int> encode_ids(const CharSeq& seq, const Vocabulary& vocab, bool add_bos_eos) {
  std::vector<int> ids;
  ids.reserve(seq.tokens.size() + 2);
  if (add_bos_eos) ids.push_back(Vocabulary::kBos);
  for (const auto& t : seq.tokens) ids.push_back(vocab.id(t));
  if (add_bos_eos) ids.push_back(Vocabulary::kEos);
  return ids;
}

CharSeq decode_ids(std::span<const int> ids, const Vocabulary& vocab, Side side) {
  CharSeq seq;
  seq.side = side;
  for (int id : ids) {
    if (id == Vocabulary::kEos) break;
    if (id == Vocabulary::kPad || id == Vocabulary::kBos) continue;
    seq.tokens.push_back(vocab.symbol(id));
  }
  return seq;
}

}  // namespace translit
