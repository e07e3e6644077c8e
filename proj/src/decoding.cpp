#include "translit/decoding.hpp"

#include <algorithm>
#include <cmath>

#include "translit/errors.hpp"

namespace translit {

namespace {

bool ranks_before(const Hypothesis& a, const Hypothesis& b) {
  if (a.score != b.score) return a.score > b.score;
  return a.tokens < b.tokens;
}

double normalized(const Hypothesis& h, double alpha) {
  if (alpha == 0.0) return h.score;
  return h.score / std::pow(static_cast<double>(std::max<std::size_t>(h.tokens.size(), 1)), alpha);
}

std::vector<int> with_bos(const std::vector<int>& tokens) {
  std::vector<int> prefix{Vocabulary::kBos};
  prefix.insert(prefix.end(), tokens.begin(), tokens.end());
  return prefix;
}

}  // namespace

std::size_t default_max_len(std::size_t source_len) { return 2 * source_len + 5; }

std::vector<int> greedy_decode(SequenceScorer& scorer, std::size_t max_len) {
  if (max_len < 1) throw ConfigError("max_len must be >= 1");
  std::vector<int> prefix{Vocabulary::kBos};
  std::vector<int> out;
  for (std::size_t step = 0; step < max_len; ++step) {
    auto lp = scorer.next_log_probs(prefix);
    int best = static_cast<int>(std::max_element(lp.begin(), lp.end()) - lp.begin());  // first max = lowest id
    if (best == Vocabulary::kEos) break;
    out.push_back(best);
    prefix.push_back(best);
  }
  return out;
}

Hypothesis beam_search(SequenceScorer& scorer, const BeamConfig& cfg) {
  if (cfg.beam_width < 1) throw ConfigError("beam_width must be >= 1");
  if (cfg.max_len < 1) throw ConfigError("max_len must be >= 1");
  std::vector<Hypothesis> live{Hypothesis{}};
  std::vector<Hypothesis> finished;

  for (std::size_t step = 0; step < cfg.max_len && !live.empty(); ++step) {
    std::vector<Hypothesis> candidates;
    for (const Hypothesis& h : live) {
      auto lp = scorer.next_log_probs(with_bos(h.tokens));
      for (std::size_t v = 0; v < lp.size(); ++v) {
        Hypothesis c{h.tokens, h.score + lp[v], static_cast<int>(v) == Vocabulary::kEos};
        c.tokens.push_back(static_cast<int>(v));
        candidates.push_back(std::move(c));
      }
    }
    const std::size_t keep = std::min(cfg.beam_width, candidates.size());
    std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(keep), candidates.end(),
                      ranks_before);
    live.clear();
    for (std::size_t k = 0; k < keep; ++k)
      (candidates[k].finished ? finished : live).push_back(std::move(candidates[k]));

    // Without length normalization scores only fall, so a finished
    // hypothesis at least as good as every live one is final.
    if (cfg.length_norm_alpha == 0.0 && !finished.empty() && !live.empty()) {
      double best_finished = std::max_element(finished.begin(), finished.end(), [](auto& a, auto& b) {
                               return ranks_before(b, a);
                             })->score;
      if (best_finished >= live.front().score) live.clear();
    }
  }

  // Hypotheses cut off by max_len compete as they are.
  std::vector<Hypothesis> pool = std::move(finished);
  pool.insert(pool.end(), live.begin(), live.end());
  return *std::min_element(pool.begin(), pool.end(), [&](const Hypothesis& a, const Hypothesis& b) {
    double na = normalized(a, cfg.length_norm_alpha), nb = normalized(b, cfg.length_norm_alpha);
    if (na != nb) return na > nb;
    return a.tokens < b.tokens;
  });
}

std::vector<int> beam_decode(SequenceScorer& scorer, const BeamConfig& cfg) {
  Hypothesis best = beam_search(scorer, cfg);
  if (best.finished) best.tokens.pop_back();
  return best.tokens;
}

std::vector<int> decode_ids_with(Seq2SeqModel& model, std::span<const int> source, const BeamConfig& cfg) {
  auto scorer = model.scorer(source);
  BeamConfig c = cfg;
  if (c.max_len == 0) c.max_len = default_max_len(source.size());
  if (c.beam_width == 1 && c.length_norm_alpha == 0.0) return greedy_decode(*scorer, c.max_len);
  return beam_decode(*scorer, c);
}

std::vector<CharSeq> decode_corpus(Seq2SeqModel& model, const Corpus& corpus, const BeamConfig& cfg) {
  std::vector<CharSeq> out;
  out.reserve(corpus.groups.size());
  const Side side = target_side(corpus.direction);
  for (const auto& g : corpus.groups) {
    auto ids = decode_ids_with(model, encode_ids(g.source, model.source_vocab(), false), cfg);
    out.push_back(decode_ids(ids, model.target_vocab(), side));
  }
  return out;
}

}  // namespace translit
