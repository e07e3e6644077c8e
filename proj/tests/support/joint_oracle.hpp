#pragma once

// Brute-force references for the joint-sequence model: explicit enumeration
// of every segmentation, with no lattice or dynamic programming.

#include <cmath>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "translit/joint_ngram.hpp"

namespace translit::testing {

inline CharSeq letters(std::string_view s, Side side = Side::latin) {
  CharSeq c;
  c.side = side;
  for (char ch : s) c.tokens.emplace_back(1, ch);
  return c;
}

/// All segmentations of (source, target) into graphones within the bounds.
inline std::vector<std::vector<Graphone>> enumerate_segmentations(const CharSeq& source, const CharSeq& target,
                                                                  int max_input, int max_output,
                                                                  bool allow_epsilon) {
  std::vector<std::vector<Graphone>> out;
  std::vector<Graphone> path;
  std::function<void(std::size_t, std::size_t)> rec = [&](std::size_t i, std::size_t j) {
    if (i == source.size() && j == target.size()) {
      out.push_back(path);
      return;
    }
    for (int di = 0; di <= max_input; ++di)
      for (int dj = 0; dj <= max_output; ++dj) {
        if (di == 0 && dj == 0) continue;
        if (!allow_epsilon && (di == 0 || dj == 0)) continue;
        if (i + di > source.size() || j + dj > target.size()) continue;
        Graphone g{{source.tokens.begin() + i, source.tokens.begin() + i + di},
                   {target.tokens.begin() + j, target.tokens.begin() + j + dj}};
        path.push_back(g);
        rec(i + di, j + dj);
        path.pop_back();
      }
  };
  rec(0, 0);
  return out;
}

struct ScoredSequence {
  double score = -INFINITY;
  std::vector<int> ids;
};

/// (score desc, length asc, ids lexicographic asc).
inline bool ranks_before(const ScoredSequence& a, const ScoredSequence& b) {
  if (a.score != b.score) return a.score > b.score;
  if (a.ids.size() != b.ids.size()) return a.ids.size() < b.ids.size();
  return a.ids < b.ids;
}

/// Exhaustive argmax over segmentations under a unigram alignment model.
inline std::optional<std::vector<int>> brute_force_viterbi(const CharSeq& source, const CharSeq& target,
                                                           const AlignmentModel& model) {
  std::optional<ScoredSequence> best;
  for (const auto& seg : enumerate_segmentations(source, target, model.max_input, model.max_output,
                                                 model.allow_epsilon)) {
    ScoredSequence s{0.0, {}};
    bool ok = true;
    for (const auto& g : seg) {
      int id = model.find(g);
      if (!model.retained(id)) {
        ok = false;
        break;
      }
      s.score += model.log_prob[id];
      s.ids.push_back(id);
    }
    if (ok && (!best || ranks_before(s, *best))) best = s;
  }
  if (!best) return std::nullopt;
  return best->ids;
}

/// Exhaustive argmax over every graphone sequence (up to max_steps graphones)
/// whose input parts concatenate to `source`, scored left to right by `lm`.
inline std::optional<ScoredSequence> brute_force_decode(const CharSeq& source, const AlignmentModel& align,
                                                        const NGramModel& lm, std::size_t max_steps) {
  std::optional<ScoredSequence> best;
  ScoredSequence cur{0.0, {}};
  std::vector<int> history(static_cast<std::size_t>(lm.config.order - 1), lm.begin_symbol());
  std::function<void(std::size_t)> rec = [&](std::size_t pos) {
    if (pos == source.size()) {
      ScoredSequence fin = cur;
      if (lm.config.sentence_end) fin.score = cur.score + lm.log_prob(history, lm.end_symbol());
      if (!best || ranks_before(fin, *best)) best = fin;
    }
    if (cur.ids.size() == max_steps) return;
    for (std::size_t id = 0; id < align.graphones.size(); ++id) {
      if (!align.retained(static_cast<int>(id))) continue;
      const auto& in = align.graphones[id].input;
      if (pos + in.size() > source.size()) continue;
      if (!std::equal(in.begin(), in.end(), source.tokens.begin() + pos)) continue;
      const double saved = cur.score;
      const auto saved_history = history;
      cur.score = saved + lm.log_prob(history, static_cast<int>(id));
      cur.ids.push_back(static_cast<int>(id));
      if (!history.empty()) {
        history.erase(history.begin());
        history.push_back(static_cast<int>(id));
      }
      rec(pos + in.size());
      cur.ids.pop_back();
      cur.score = saved;
      history = saved_history;
    }
  };
  rec(0);
  return best;
}

/// Random toy corpus: words of length 1..max_len over the first `alphabet` letters.
inline Corpus random_toy_corpus(std::uint64_t seed, std::size_t pairs, std::size_t alphabet, std::size_t max_len) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> len(1, max_len), sym(0, alphabet - 1);
  auto word = [&] {
    std::string w;
    for (std::size_t k = len(rng); k > 0; --k) w += static_cast<char>('a' + sym(rng));
    return w;
  };
  Corpus c;
  c.direction = Direction::T2C;
  for (std::size_t p = 0; p < pairs; ++p) {
    WordPairGroup g;
    g.source = letters(word(), Side::latin);
    g.references.push_back(letters(word(), Side::cyrillic));
    c.groups.push_back(std::move(g));
  }
  return c;
}

}  // namespace translit::testing
