#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "translit/seq2seq.hpp"

namespace translit {

struct BeamConfig {
  std::size_t beam_width = 5;
  std::size_t max_len = 0;  // 0 means 2 * source length + 5
  double length_norm_alpha = 0.0;
};

struct Hypothesis {
  std::vector<int> tokens;  // generated ids, EOS included when finished
  double score = 0.0;
  bool finished = false;
};

std::size_t default_max_len(std::size_t source_len);

/// Argmax per step (lowest id on ties) for at most max_len steps. Output has no BOS/EOS.
std::vector<int> greedy_decode(SequenceScorer& scorer, std::size_t max_len);

/// Best hypothesis of a beam search; finished hypotheses compete with live
/// ones for beam slots and are ranked by score / length^alpha.
Hypothesis beam_search(SequenceScorer& scorer, const BeamConfig& cfg);

/// beam_search output with the trailing EOS removed.
std::vector<int> beam_decode(SequenceScorer& scorer, const BeamConfig& cfg);

/// Convenience: decodes one source id sequence (no framing) with a model.
/// beam_width 1 and alpha 0 route through greedy_decode.
std::vector<int> decode_ids_with(Seq2SeqModel& model, std::span<const int> source, const BeamConfig& cfg);

/// Decodes every group's source word; symbols outside the source vocabulary map to UNK.
std::vector<CharSeq> decode_corpus(Seq2SeqModel& model, const Corpus& corpus, const BeamConfig& cfg);

}  // namespace translit
