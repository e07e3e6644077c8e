#pragma once

#include <compare>
#include <cstddef>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "translit/corpus.hpp"
#include "translit/script_codec.hpp"

namespace translit {

/// Joint unit: a source substring paired with a target substring. Ordered by
/// (input, output) token lists, which is the tie-break order everywhere.
struct Graphone {
  std::vector<std::string> input;
  std::vector<std::string> output;

  std::string str() const;  // "in:out"
  auto operator<=>(const Graphone&) const = default;
  bool operator==(const Graphone&) const = default;
};

struct LatticeEdge {
  std::size_t from = 0;  // node index i * (m + 1) + j
  std::size_t to = 0;
  Graphone graphone;
};

/// Monotone segmentation DAG of one word pair. Only edges lying on some complete
/// path are kept, sorted by source node.
struct GraphoneLattice {
  std::size_t source_len = 0;
  std::size_t target_len = 0;
  std::vector<LatticeEdge> edges;

  std::size_t node(std::size_t i, std::size_t j) const { return i * (target_len + 1) + j; }
  std::size_t node_count() const { return (source_len + 1) * (target_len + 1); }
};

GraphoneLattice build_lattice(const CharSeq& source, const CharSeq& target, int max_input, int max_output,
                              bool allow_epsilon = true);

/// Number of complete (0,0) -> (n,m) paths.
double count_paths(const GraphoneLattice& lattice);

struct EmConfig {
  int max_input = 2;
  int max_output = 2;
  bool allow_epsilon = true;
  int iterations = 20;
  double prune_eps = 1e-6;
};

/// Unigram graphone distribution. `graphones` is sorted, so id order is the
/// graphone order; pruned entries keep their slot with log_prob = -inf.
struct AlignmentModel {
  Side source_side = Side::cyrillic;
  Side target_side = Side::latin;
  int max_input = 2;
  int max_output = 2;
  bool allow_epsilon = true;
  std::vector<Graphone> graphones;
  std::vector<double> log_prob;
  std::vector<double> log_likelihood;  // corpus LL at each E-step

  /// Id of `g` or -1.
  int find(const Graphone& g) const;
  bool retained(int id) const;
  std::size_t retained_count() const;
};

/// One E-step per iteration followed by renormalization and pruning of
/// graphones whose probability falls below prune_eps.
AlignmentModel em_train(const Corpus& corpus, const EmConfig& config);

/// Best segmentation of (source, target) as graphone ids; ties go to fewer
/// graphones, then the lexicographically smaller id sequence.
std::vector<int> viterbi_segment(const CharSeq& source, const CharSeq& target, const AlignmentModel& model);

struct NGramConfig {
  int order = 3;
  double discount = 0.5;
  double trim_min_count = 1.0;
  bool sentence_end = true;
};

struct HistoryStats {
  double total = 0.0;
  double backoff = 0.0;               // D * distinct / total
  std::map<int, double> discounted;   // (c - D) / total
};

/// Absolute discounting, interpolated down to a uniform distribution over
/// graphones (+ end symbol). Symbol `inventory` is the end marker, `inventory + 1`
/// pads histories at the start of a sequence.
struct NGramModel {
  NGramConfig config;
  std::size_t inventory = 0;
  std::map<std::vector<int>, HistoryStats> histories;

  int end_symbol() const { return static_cast<int>(inventory); }
  int begin_symbol() const { return static_cast<int>(inventory) + 1; }
  std::size_t symbol_count() const { return inventory + (config.sentence_end ? 1 : 0); }

  /// P(symbol | history); only the last order-1 history entries are used.
  double prob(std::span<const int> history, int symbol) const;
  double log_prob(std::span<const int> history, int symbol) const;
};

NGramModel estimate_ngram(std::span<const std::vector<int>> sequences, std::size_t inventory,
                          const NGramConfig& config);

struct JointModel {
  AlignmentModel align;
  NGramModel lm;
};

/// EM alignment, 1-best segmentation of every (source, reference) pair, n-gram estimation.
JointModel train_joint(const Corpus& corpus, const EmConfig& em, const NGramConfig& ngram);

/// Step-synchronous beam search over graphone extensions consuming `source`.
/// `max_expand` caps the number of graphones in a hypothesis (0 = 4 * n + 4).
/// Throws DecodeFailure when nothing finishes.
CharSeq decode_joint(const CharSeq& source, const AlignmentModel& align, const NGramModel& lm, std::size_t beam,
                     std::size_t max_expand = 0);

void save_joint(const JointModel& model, std::ostream& out);
JointModel load_joint(std::istream& in);

}  // namespace translit
