#include "translit/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <set>
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

}  // namespace

const char* direction_name(Direction d) { return d == Direction::C2T ? "C2T" : "T2C"; }

Direction parse_direction(std::string_view name) {
  if (name == "C2T" || name == "c2t") return Direction::C2T;
  if (name == "T2C" || name == "t2c") return Direction::T2C;
  throw ConfigError("unknown direction '" + std::string(name) + "' (expected C2T or T2C)");
}

Side source_side(Direction d) { return d == Direction::C2T ? Side::cyrillic : Side::latin; }
Side target_side(Direction d) { return d == Direction::C2T ? Side::latin : Side::cyrillic; }

CharSeq prepare_word(std::string_view word, Side side, const TransliterationTable* table) {
  word = trim(word);
  if (side == Side::latin && table != nullptr && !utf8::is_ascii(word)) {
    return tokenize(table->to_latin(word), Side::latin);
  }
  return tokenize(word, side);
}

Corpus parse_corpus(std::string_view text, Direction direction, const TransliterationTable* table) {
  Corpus corpus;
  corpus.direction = direction;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    std::string_view stripped = trim(line);
    if (stripped.empty() || stripped.front() == '#') continue;

    std::size_t tab = line.find('\t');
    if (tab == std::string_view::npos) throw MalformedLine(line_no, "expected source<TAB>references");
    std::string_view source = trim(line.substr(0, tab));
    if (source.empty()) throw MalformedLine(line_no, "empty source word");

    WordPairGroup group;
    group.line = line_no;
    try {
      group.source = prepare_word(source, source_side(direction), table);
      std::string_view refs = line.substr(tab + 1);
      std::size_t rpos = 0;
      while (rpos <= refs.size()) {
        std::size_t bar = refs.find('|', rpos);
        if (bar == std::string_view::npos) bar = refs.size();
        std::string_view ref = trim(refs.substr(rpos, bar - rpos));
        rpos = bar + 1;
        if (ref.empty()) continue;
        CharSeq seq = prepare_word(ref, target_side(direction), table);
        if (std::find(group.references.begin(), group.references.end(), seq) == group.references.end())
          group.references.push_back(std::move(seq));
      }
    } catch (const PositionalError& e) {
      throw MalformedLine(line_no, e.what());
    }
    if (group.references.empty()) throw MalformedLine(line_no, "empty reference list");
    corpus.groups.push_back(std::move(group));
  }
  return corpus;
}

Corpus load_corpus(const std::filesystem::path& path, Direction direction, const TransliterationTable* table) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open corpus: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_corpus(ss.str(), direction, table);
}

std::mt19937_64 make_rng(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
  return std::mt19937_64(seq);
}

std::vector<std::size_t> shuffled_indices(std::size_t n, std::mt19937_64& rng) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  for (std::size_t i = n; i > 1; --i) {
    std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(idx[i - 1], idx[j]);
  }
  return idx;
}

std::pair<Corpus, Corpus> split_corpus(const Corpus& corpus, const SplitSpec& spec) {
  if (spec.train_count == 0 || spec.test_count == 0 || spec.train_count + spec.test_count != corpus.size())
    throw SplitSizeError("split " + std::to_string(spec.train_count) + "+" + std::to_string(spec.test_count) +
                         " does not partition a corpus of " + std::to_string(corpus.size()) + " groups");
  auto rng = make_rng(spec.seed, 0x5157);
  auto order = shuffled_indices(corpus.size(), rng);
  Corpus train, test;
  train.direction = test.direction = corpus.direction;
  for (std::size_t k = 0; k < order.size(); ++k) {
    (k < spec.train_count ? train : test).groups.push_back(corpus.groups[order[k]]);
  }
  return {std::move(train), std::move(test)};
}

Vocabulary build_vocabulary(const Corpus& corpus, Side side) {
  std::set<std::string> symbols;
  for (const auto& g : corpus.groups) {
    if (g.source.side == side) symbols.insert(g.source.tokens.begin(), g.source.tokens.end());
    for (const auto& r : g.references)
      if (r.side == side) symbols.insert(r.tokens.begin(), r.tokens.end());
  }
  std::vector<std::string> sorted(symbols.begin(), symbols.end());
  return Vocabulary(sorted);
}

std::vector<EncodedPair> encode_pairs(const Corpus& corpus, const Vocabulary& source_vocab,
                                      const Vocabulary& target_vocab) {
  std::vector<EncodedPair> pairs;
  for (std::size_t g = 0; g < corpus.groups.size(); ++g) {
    auto src = encode_ids(corpus.groups[g].source, source_vocab, false);
    for (const auto& ref : corpus.groups[g].references)
      pairs.push_back({src, encode_ids(ref, target_vocab, false), g});
  }
  return pairs;
}

std::size_t Batch::target_tokens() const {
  std::size_t n = 0;
  for (double m : target_mask) n += m > 0.0 ? 1 : 0;
  return n;
}

Batch make_batch(std::span<const EncodedPair> pairs, std::span<const std::size_t> indices) {
  Batch b;
  b.size = indices.size();
  for (std::size_t i : indices) {
    b.source_len = std::max(b.source_len, pairs[i].source.size());
    b.target_len = std::max(b.target_len, pairs[i].target.size() + 1);
  }
  b.source.assign(b.size * b.source_len, Vocabulary::kPad);
  b.source_mask.assign(b.size * b.source_len, 0.0);
  b.target_in.assign(b.size * b.target_len, Vocabulary::kPad);
  b.target_out.assign(b.size * b.target_len, Vocabulary::kPad);
  b.target_mask.assign(b.size * b.target_len, 0.0);
  for (std::size_t row = 0; row < b.size; ++row) {
    const auto& p = pairs[indices[row]];
    b.pairs.push_back(indices[row]);
    for (std::size_t t = 0; t < p.source.size(); ++t) {
      b.source[row * b.source_len + t] = p.source[t];
      b.source_mask[row * b.source_len + t] = 1.0;
    }
    for (std::size_t t = 0; t <= p.target.size(); ++t) {
      b.target_in[row * b.target_len + t] = t == 0 ? Vocabulary::kBos : p.target[t - 1];
      b.target_out[row * b.target_len + t] = t == p.target.size() ? Vocabulary::kEos : p.target[t];
      b.target_mask[row * b.target_len + t] = 1.0;
    }
  }
  return b;
}

std::vector<Batch> batch_iter(std::span<const EncodedPair> pairs, std::size_t batch_size, std::uint64_t seed,
                              std::uint64_t epoch) {
  if (batch_size == 0) throw ConfigError("batch_size must be >= 1");
  auto rng = make_rng(seed, 0xBA7C0000ULL + epoch);
  auto order = shuffled_indices(pairs.size(), rng);
  std::vector<Batch> batches;
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    std::size_t n = std::min(batch_size, order.size() - start);
    batches.push_back(make_batch(pairs, std::span(order).subspan(start, n)));
  }
  return batches;
}

std::vector<Batch> batch_iter_tokens(std::span<const EncodedPair> pairs, std::size_t max_tokens,
                                     std::uint64_t seed, std::uint64_t epoch) {
  if (max_tokens == 0) throw ConfigError("token budget must be >= 1");
  auto rng = make_rng(seed, 0xBA7C0000ULL + epoch);
  auto order = shuffled_indices(pairs.size(), rng);
  std::vector<Batch> batches;
  std::size_t start = 0;
  while (start < order.size()) {
    std::size_t longest = 0;
    std::size_t end = start;
    while (end < order.size()) {
      std::size_t len = std::max(pairs[order[end]].source.size(), pairs[order[end]].target.size() + 1);
      std::size_t next_longest = std::max(longest, len);
      if (end > start && next_longest * (end - start + 1) > max_tokens) break;
      longest = next_longest;
      ++end;
    }
    batches.push_back(make_batch(pairs, std::span(order).subspan(start, end - start)));
    start = end;
  }
  return batches;
}

}  // namespace translit
