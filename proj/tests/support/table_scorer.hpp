#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <random>
#include <vector>

#include "translit/decoding.hpp"

namespace translit::testing {

/// Scorer whose next-token distribution is a seeded random function of the prefix.
/// `levels` > 0 quantizes logits so that ties occur.
class TableScorer : public SequenceScorer {
 public:
  TableScorer(std::size_t vocab, std::uint64_t seed, int levels = 0) : vocab_(vocab), seed_(seed), levels_(levels) {}

  std::size_t vocab_size() const override { return vocab_; }

  std::vector<double> next_log_probs(std::span<const int> prefix) override {
    std::vector<int> key(prefix.begin(), prefix.end());
    auto it = cache_.find(key);
    if (it != cache_.end()) return it->second;
    std::uint64_t h = seed_ * 0x9E3779B97F4A7C15ULL;
    for (int t : key) h = (h ^ static_cast<std::uint64_t>(t + 1)) * 0x100000001B3ULL;
    std::mt19937_64 rng(h);
    std::normal_distribution<double> n(0.0, 2.0);
    std::vector<double> logits(vocab_);
    for (auto& l : logits) l = levels_ > 0 ? std::round(n(rng) * levels_ / 4.0) : n(rng);
    double mx = *std::max_element(logits.begin(), logits.end()), z = 0.0;
    for (double l : logits) z += std::exp(l - mx);
    for (auto& l : logits) l = l - mx - std::log(z);
    return cache_.emplace(std::move(key), logits).first->second;
  }

 private:
  std::size_t vocab_;
  std::uint64_t seed_;
  int levels_;
  std::map<std::vector<int>, std::vector<double>> cache_;
};

/// Exhaustive argmax over every output a beam search can return within max_len
/// steps: EOS-terminated strings, and strings cut off at max_len. Ties go to the
/// lexicographically smallest token list.
inline Hypothesis brute_force_best(SequenceScorer& scorer, std::size_t max_len) {
  Hypothesis best;
  bool have = false;
  std::function<void(std::vector<int>&, double)> walk = [&](std::vector<int>& tokens, double score) {
    std::vector<int> prefix{Vocabulary::kBos};
    prefix.insert(prefix.end(), tokens.begin(), tokens.end());
    auto lp = scorer.next_log_probs(prefix);
    for (std::size_t v = 0; v < lp.size(); ++v) {
      tokens.push_back(static_cast<int>(v));
      double s = score + lp[v];
      bool eos = static_cast<int>(v) == Vocabulary::kEos;
      if (eos || tokens.size() == max_len) {
        if (!have || s > best.score || (s == best.score && tokens < best.tokens)) best = {tokens, s, eos};
        have = true;
      } else {
        walk(tokens, s);
      }
      tokens.pop_back();
    }
  };
  std::vector<int> tokens;
  walk(tokens, 0.0);
  return best;
}

}  // namespace translit::testing
