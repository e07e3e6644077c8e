#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace translit {

enum class Side { cyrillic, latin };

const char* side_name(Side side);

struct TableEntry {
  std::string script;
  std::string latin;
};

/// Bijective mapping between Traditional Mongolian script symbols and Latin
/// transcriptions. The Latin side is prefix-free, so greedy longest match
/// decomposes any covered string uniquely.
class TransliterationTable {
 public:
  /// Parses `script<TAB>latin` lines; `#` starts a comment line.
  static TransliterationTable parse(std::string_view text);
  static TransliterationTable load(const std::filesystem::path& path);

  const std::vector<TableEntry>& entries() const { return entries_; }
  bool bidirectional() const { return true; }

  std::string to_latin(std::string_view word) const;
  std::string to_script(std::string_view latin) const;

 private:
  std::vector<TableEntry> entries_;
  std::size_t max_script_bytes_ = 0;
  std::size_t max_latin_bytes_ = 0;
  std::map<std::string, std::size_t, std::less<>> by_script_;
  std::map<std::string, std::size_t, std::less<>> by_latin_;
};

inline TransliterationTable load_table(std::string_view text) { return TransliterationTable::parse(text); }

/// Longest-match greedy conversion of a script word to Latin. Throws UnknownSymbol.
inline std::string traditional_to_latin(std::string_view word, const TransliterationTable& table) {
  return table.to_latin(word);
}

/// Inverse of traditional_to_latin on covered inputs. Throws UnparseableLatin.
inline std::string latin_to_traditional(std::string_view latin, const TransliterationTable& table) {
  return table.to_script(latin);
}

/// Tokenized word. `capitalized` records a folded initial capital (Cyrillic side).
struct CharSeq {
  std::vector<std::string> tokens;
  Side side = Side::latin;
  bool capitalized = false;

  bool operator==(const CharSeq& other) const { return tokens == other.tokens && side == other.side; }
  std::size_t size() const { return tokens.size(); }
};

CharSeq tokenize(std::string_view word, Side side);

/// Concatenates tokens, re-applying the recorded initial capital.
std::string detokenize(const CharSeq& seq);

/// Joins tokens without case restoration.
std::string join_tokens(std::span<const std::string> tokens);

/// Lowercases a single code point (ASCII and Cyrillic ranges); others pass through.
std::string lowercase_code_point(std::string_view cp);
std::string uppercase_code_point(std::string_view cp);

class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kBos = 1;
  static constexpr int kEos = 2;
  static constexpr int kUnk = 3;
  static constexpr int kReserved = 4;

  Vocabulary();
  /// Symbols receive ids 4.. in the given order; duplicates are ignored.
  explicit Vocabulary(std::span<const std::string> symbols);

  int id(std::string_view symbol) const;
  const std::string& symbol(int id) const;
  bool contains(std::string_view symbol) const;
  std::size_t size() const { return symbols_.size(); }
  /// Non-reserved symbols in id order.
  std::vector<std::string> symbols() const;

  bool operator==(const Vocabulary& other) const { return symbols_ == other.symbols_; }

 private:
  std::vector<std::string> symbols_;
  std::map<std::string, int, std::less<>> ids_;
};

std::vector<int> encode_ids(const CharSeq& seq, const Vocabulary& vocab, bool add_bos_eos);

/// Drops PAD/BOS and stops at the first EOS; UNK decodes to the literal "<unk>".
CharSeq decode_ids(std::span<const int> ids, const Vocabulary& vocab, Side side);

}  // namespace translit
