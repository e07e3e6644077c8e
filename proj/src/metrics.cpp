#include "translit/metrics.hpp"

#include <cstdio>
#include <algorithm>
#include <set>
#include <utility>

#include "translit/errors.hpp"

namespace translit {

EditOps edit_distance(std::span<const std::string> from, std::span<const std::string> to) {
  // Cells hold (total edits, insertions + deletions) ordered lexicographically:
  // among minimum-distance alignments the one with the most substitutions wins,
  // which pins the op breakdown and makes it mirror exactly when swapping sides.
  using Cost = std::pair<std::size_t, std::size_t>;
  const std::size_t n = from.size(), m = to.size();
  std::vector<Cost> d((n + 1) * (m + 1));
  auto at = [&](std::size_t i, std::size_t j) -> Cost& { return d[i * (m + 1) + j]; };
  auto step = [](Cost c, std::size_t edit, std::size_t indel) { return Cost{c.first + edit, c.second + indel}; };
  for (std::size_t i = 0; i <= n; ++i) at(i, 0) = {i, i};
  for (std::size_t j = 0; j <= m; ++j) at(0, j) = {j, j};
  for (std::size_t i = 1; i <= n; ++i)
    for (std::size_t j = 1; j <= m; ++j) {
      Cost diag = step(at(i - 1, j - 1), from[i - 1] == to[j - 1] ? 0 : 1, 0);
      at(i, j) = std::min({diag, step(at(i - 1, j), 1, 1), step(at(i, j - 1), 1, 1)});
    }

  EditOps ops;
  std::size_t i = n, j = m;
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0) {
      bool same = from[i - 1] == to[j - 1];
      if (at(i, j) == step(at(i - 1, j - 1), same ? 0 : 1, 0)) {
        if (!same) ++ops.substitutions;
        --i;
        --j;
        continue;
      }
    }
    if (i > 0 && at(i, j) == step(at(i - 1, j), 1, 1)) {
      ++ops.deletions;
      --i;
    } else {
      ++ops.insertions;
      --j;
    }
  }
  return ops;
}

EvalReport evaluate(std::span<const CharSeq> predictions, std::span<const WordPairGroup> groups) {
  if (predictions.size() != groups.size())
    throw AlignmentError(std::to_string(predictions.size()) + " predictions for " + std::to_string(groups.size()) +
                         " reference groups");
  EvalReport report;
  report.n_total = groups.size();
  for (std::size_t w = 0; w < groups.size(); ++w) {
    const auto& refs = groups[w].references;
    if (refs.empty()) throw AlignmentError("group " + std::to_string(w) + " has no references");
    WordEval we;
    bool first = true;
    for (std::size_t r = 0; r < refs.size(); ++r) {
      if (refs[r].tokens == predictions[w].tokens) we.correct = true;
      EditOps ops = edit_distance(refs[r].tokens, predictions[w].tokens);
      if (first || ops.total() < we.ops.total()) {
        we.ops = ops;
        we.best_reference = r;
        we.reference_length = refs[r].tokens.size();
        first = false;
      }
    }
    report.n_correct += we.correct ? 1 : 0;
    report.total_edits += we.ops.total();
    report.reference_chars += we.reference_length;
    report.words.push_back(we);
  }
  if (report.n_total > 0) {
    report.wer = 1.0 - static_cast<double>(report.n_correct) / static_cast<double>(report.n_total);
    report.cer = report.reference_chars > 0
                     ? static_cast<double>(report.total_edits) / static_cast<double>(report.reference_chars)
                     : 0.0;
  }
  return report;
}

std::string SweepReport::csv() const {
  std::string out = "label,wer,cer\n";
  char buf[64];
  for (const auto& row : rows) {
    std::snprintf(buf, sizeof buf, ",%.6f,%.6f\n", row.wer, row.cer);
    out += row.label + buf;
  }
  return out;
}

SweepReport sweep_report(std::vector<SweepRow> rows) {
  std::set<std::string> labels;
  for (const auto& r : rows)
    if (!labels.insert(r.label).second) throw DuplicateLabel("duplicate sweep label '" + r.label + "'");
  SweepReport report;
  report.rows = std::move(rows);
  for (std::size_t i = 0; i < report.rows.size(); ++i) {
    if (!report.best_wer || report.rows[i].wer < report.rows[*report.best_wer].wer) report.best_wer = i;
    if (!report.best_cer || report.rows[i].cer < report.rows[*report.best_cer].cer) report.best_cer = i;
  }
  return report;
}

}  // namespace translit
