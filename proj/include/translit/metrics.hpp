#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "translit/corpus.hpp"
#include "translit/script_codec.hpp"

namespace translit {

/// Unit-cost edit operations turning one sequence into another.
struct EditOps {
  std::size_t insertions = 0;
  std::size_t deletions = 0;
  std::size_t substitutions = 0;

  std::size_t total() const { return insertions + deletions + substitutions; }
  bool operator==(const EditOps&) const = default;
};

/// Levenshtein alignment of `from` into `to`. Op counts come from a backtrace
/// that prefers the diagonal (match/substitution), then deletion, then insertion.
EditOps edit_distance(std::span<const std::string> from, std::span<const std::string> to);
inline EditOps edit_distance(const CharSeq& from, const CharSeq& to) { return edit_distance(from.tokens, to.tokens); }

struct WordEval {
  bool correct = false;
  std::size_t best_reference = 0;
  EditOps ops;  // reference -> prediction
  std::size_t reference_length = 0;
};

struct EvalReport {
  std::size_t n_total = 0;
  std::size_t n_correct = 0;
  std::size_t total_edits = 0;
  std::size_t reference_chars = 0;
  double wer = 0.0;
  double cer = 0.0;
  std::vector<WordEval> words;
};

/// A word is correct when the prediction equals any reference. Per word the
/// reference with the fewest edits (first on ties) supplies both the edit count
/// and the character denominator. Throws AlignmentError on a length mismatch.
EvalReport evaluate(std::span<const CharSeq> predictions, std::span<const WordPairGroup> groups);

inline double wer(std::span<const CharSeq> predictions, std::span<const WordPairGroup> groups) {
  return evaluate(predictions, groups).wer;
}
inline double cer(std::span<const CharSeq> predictions, std::span<const WordPairGroup> groups) {
  return evaluate(predictions, groups).cer;
}

struct SweepRow {
  std::string label;
  double wer = 0.0;
  double cer = 0.0;
};

struct SweepReport {
  std::vector<SweepRow> rows;
  std::optional<std::size_t> best_wer;
  std::optional<std::size_t> best_cer;

  /// `label,wer,cer` header followed by one line per row.
  std::string csv() const;
};

/// Throws DuplicateLabel when two rows share a label. Argmin ties go to the earlier row.
SweepReport sweep_report(std::vector<SweepRow> rows);

}  // namespace translit
