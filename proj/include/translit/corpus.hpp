#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "translit/script_codec.hpp"

namespace translit {

enum class Direction { C2T, T2C };

const char* direction_name(Direction d);
Direction parse_direction(std::string_view name);
Side source_side(Direction d);
Side target_side(Direction d);

/// One source word with every acceptable reference conversion.
struct WordPairGroup {
  CharSeq source;
  std::vector<CharSeq> references;
  std::size_t line = 0;
};

struct Corpus {
  std::vector<WordPairGroup> groups;
  Direction direction = Direction::C2T;

  std::size_t size() const { return groups.size(); }
  bool empty() const { return groups.empty(); }
};

struct SplitSpec {
  std::size_t train_count = 0;
  std::size_t test_count = 0;
  std::uint64_t seed = 0;
};

/// Parses `source<TAB>ref1|ref2|...` lines. Traditional-side words containing
/// script characters are converted to Latin through `table`; pure ASCII words are
/// taken as Latin transcription already. `table` may be null for all-Latin data.
Corpus parse_corpus(std::string_view text, Direction direction, const TransliterationTable* table);
Corpus load_corpus(const std::filesystem::path& path, Direction direction, const TransliterationTable* table);

/// Converts one raw word from either side into its model-facing CharSeq.
CharSeq prepare_word(std::string_view word, Side side, const TransliterationTable* table);

std::pair<Corpus, Corpus> split_corpus(const Corpus& corpus, const SplitSpec& spec);

/// Symbols observed on `side`, sorted, with ids from 4 upward.
Vocabulary build_vocabulary(const Corpus& corpus, Side side);

/// Deterministic generator keyed by (seed, stream); seed_seq keeps it portable.
std::mt19937_64 make_rng(std::uint64_t seed, std::uint64_t stream = 0);

/// Fisher-Yates permutation of 0..n-1.
std::vector<std::size_t> shuffled_indices(std::size_t n, std::mt19937_64& rng);

struct EncodedPair {
  std::vector<int> source;  // no framing
  std::vector<int> target;  // no framing
  std::size_t group = 0;
};

/// Expands every (source, reference) combination into a training pair.
std::vector<EncodedPair> encode_pairs(const Corpus& corpus, const Vocabulary& source_vocab,
                                      const Vocabulary& target_vocab);

/// Row-major padded batch. Decoder input is BOS-shifted, decoder output ends in EOS.
struct Batch {
  std::size_t size = 0;
  std::size_t source_len = 0;
  std::size_t target_len = 0;
  std::vector<int> source;
  std::vector<double> source_mask;
  std::vector<int> target_in;
  std::vector<int> target_out;
  std::vector<double> target_mask;
  std::vector<std::size_t> pairs;

  std::size_t target_tokens() const;
};

Batch make_batch(std::span<const EncodedPair> pairs, std::span<const std::size_t> indices);

/// Fixed-size batches in a per-epoch order determined by (seed, epoch).
std::vector<Batch> batch_iter(std::span<const EncodedPair> pairs, std::size_t batch_size, std::uint64_t seed,
                              std::uint64_t epoch);

/// Batches filled up to a padded target-token budget (at least one pair each).
std::vector<Batch> batch_iter_tokens(std::span<const EncodedPair> pairs, std::size_t max_tokens,
                                     std::uint64_t seed, std::uint64_t epoch);

}  // namespace translit
