#include "translit/joint_ngram.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <tuple>

#include "translit/errors.hpp"

namespace translit {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double log_add(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  if (a < b) std::swap(a, b);
  return a + std::log1p(std::exp(b - a));
}

std::vector<std::string> slice_tokens(const CharSeq& seq, std::size_t at, std::size_t len) {
  return {seq.tokens.begin() + static_cast<std::ptrdiff_t>(at),
          seq.tokens.begin() + static_cast<std::ptrdiff_t>(at + len)};
}

// Edge list in compact form: graphone ids into an AlignmentModel.
struct IdEdge {
  std::size_t from;
  std::size_t to;
  int id;
};

struct IdLattice {
  std::size_t nodes = 0;
  std::vector<IdEdge> edges;
};

std::string pair_label(const CharSeq& source, const CharSeq& target) {
  return "'" + join_tokens(source.tokens) + "' -> '" + join_tokens(target.tokens) + "'";
}

}  // namespace

std::string Graphone::str() const { return join_tokens(input) + ":" + join_tokens(output); }

GraphoneLattice build_lattice(const CharSeq& source, const CharSeq& target, int max_input, int max_output,
                              bool allow_epsilon) {
  if (max_input < 1 || max_output < 1) throw ConfigError("graphone bounds must be >= 1");
  GraphoneLattice lat;
  lat.source_len = source.size();
  lat.target_len = target.size();
  const std::size_t n = lat.source_len, m = lat.target_len;
  const int min_part = allow_epsilon ? 0 : 1;

  std::vector<LatticeEdge> all;
  for (std::size_t i = 0; i <= n; ++i)
    for (std::size_t j = 0; j <= m; ++j)
      for (int di = min_part; di <= max_input && i + di <= n; ++di)
        for (int dj = min_part; dj <= max_output && j + dj <= m; ++dj) {
          if (di == 0 && dj == 0) continue;
          all.push_back({lat.node(i, j), lat.node(i + di, j + dj),
                         Graphone{slice_tokens(source, i, di), slice_tokens(target, j, dj)}});
        }

  // Keep edges on complete paths: forward-reachable from (0,0), backward from (n,m).
  std::vector<char> fwd(lat.node_count(), 0), bwd(lat.node_count(), 0);
  fwd[0] = 1;
  for (const auto& e : all)
    if (fwd[e.from]) fwd[e.to] = 1;
  bwd[lat.node(n, m)] = 1;
  for (auto it = all.rbegin(); it != all.rend(); ++it)
    if (bwd[it->to]) bwd[it->from] = 1;
  for (auto& e : all)
    if (fwd[e.from] && bwd[e.to]) lat.edges.push_back(std::move(e));
  return lat;
}

double count_paths(const GraphoneLattice& lattice) {
  std::vector<double> paths(lattice.node_count(), 0.0);
  paths[0] = 1.0;
  for (const auto& e : lattice.edges) paths[e.to] += paths[e.from];
  return paths[lattice.node(lattice.source_len, lattice.target_len)];
}

int AlignmentModel::find(const Graphone& g) const {
  auto it = std::lower_bound(graphones.begin(), graphones.end(), g);
  if (it == graphones.end() || !(*it == g)) return -1;
  return static_cast<int>(it - graphones.begin());
}

bool AlignmentModel::retained(int id) const {
  return id >= 0 && static_cast<std::size_t>(id) < log_prob.size() && log_prob[id] != kNegInf;
}

std::size_t AlignmentModel::retained_count() const {
  return static_cast<std::size_t>(std::count_if(log_prob.begin(), log_prob.end(), [](double v) { return v != kNegInf; }));
}

AlignmentModel em_train(const Corpus& corpus, const EmConfig& config) {
  if (config.iterations < 1) throw ConfigError("em iterations must be >= 1");
  if (corpus.empty()) throw EmptyModel("no word pairs to align");

  AlignmentModel model;
  model.source_side = source_side(corpus.direction);
  model.target_side = target_side(corpus.direction);
  model.max_input = config.max_input;
  model.max_output = config.max_output;
  model.allow_epsilon = config.allow_epsilon;

  struct PairRef {
    const CharSeq* source;
    const CharSeq* target;
  };
  std::vector<PairRef> pairs;
  std::vector<GraphoneLattice> lattices;
  for (const auto& group : corpus.groups)
    for (const auto& ref : group.references) {
      pairs.push_back({&group.source, &ref});
      lattices.push_back(build_lattice(group.source, ref, config.max_input, config.max_output, config.allow_epsilon));
      if (lattices.back().edges.empty()) throw UnalignablePair("no legal segmentation for " + pair_label(group.source, ref));
    }

  for (const auto& lat : lattices)
    for (const auto& e : lat.edges) model.graphones.push_back(e.graphone);
  std::sort(model.graphones.begin(), model.graphones.end());
  model.graphones.erase(std::unique(model.graphones.begin(), model.graphones.end()), model.graphones.end());
  model.log_prob.assign(model.graphones.size(), -std::log(static_cast<double>(model.graphones.size())));

  std::vector<IdLattice> compact(lattices.size());
  for (std::size_t p = 0; p < lattices.size(); ++p) {
    compact[p].nodes = lattices[p].node_count();
    for (const auto& e : lattices[p].edges) compact[p].edges.push_back({e.from, e.to, model.find(e.graphone)});
  }
  lattices.clear();

  std::vector<double> alpha, beta, counts;
  for (int iter = 0; iter < config.iterations; ++iter) {
    counts.assign(model.graphones.size(), 0.0);
    double corpus_ll = 0.0;
    for (std::size_t p = 0; p < compact.size(); ++p) {
      const auto& lat = compact[p];
      alpha.assign(lat.nodes, kNegInf);
      beta.assign(lat.nodes, kNegInf);
      alpha[0] = 0.0;
      beta[lat.nodes - 1] = 0.0;
      for (const auto& e : lat.edges)
        if (model.log_prob[e.id] != kNegInf) alpha[e.to] = log_add(alpha[e.to], alpha[e.from] + model.log_prob[e.id]);
      for (auto it = lat.edges.rbegin(); it != lat.edges.rend(); ++it)
        if (model.log_prob[it->id] != kNegInf)
          beta[it->from] = log_add(beta[it->from], beta[it->to] + model.log_prob[it->id]);
      const double z = alpha[lat.nodes - 1];
      if (z == kNegInf)
        throw UnalignablePair("pair " + std::to_string(p) + " " + pair_label(*pairs[p].source, *pairs[p].target) +
                              " has no path under the retained graphones");
      corpus_ll += z;
      for (const auto& e : lat.edges)
        if (model.log_prob[e.id] != kNegInf)
          counts[e.id] += std::exp(alpha[e.from] + model.log_prob[e.id] + beta[e.to] - z);
    }
    model.log_likelihood.push_back(corpus_ll);

    double total = 0.0;
    for (double c : counts) total += c;
    double kept_mass = 0.0;
    for (double& c : counts) {
      if (c / total < config.prune_eps) c = 0.0;
      kept_mass += c;
    }
    for (std::size_t g = 0; g < counts.size(); ++g)
      model.log_prob[g] = counts[g] > 0.0 ? std::log(counts[g] / kept_mass) : kNegInf;
  }
  return model;
}

std::vector<int> viterbi_segment(const CharSeq& source, const CharSeq& target, const AlignmentModel& model) {
  GraphoneLattice lat = build_lattice(source, target, model.max_input, model.max_output, model.allow_epsilon);
  struct Cell {
    double score = kNegInf;
    std::vector<int> seq;
    bool reached = false;
  };
  auto better = [](double score, const std::vector<int>& seq, const Cell& cell) {
    if (!cell.reached) return true;
    if (score != cell.score) return score > cell.score;
    if (seq.size() != cell.seq.size()) return seq.size() < cell.seq.size();
    return seq < cell.seq;
  };
  std::vector<Cell> cells(lat.node_count());
  cells[0].score = 0.0;
  cells[0].reached = true;
  for (const auto& e : lat.edges) {
    const Cell& from = cells[e.from];
    if (!from.reached) continue;
    int id = model.find(e.graphone);
    if (!model.retained(id)) continue;
    double score = from.score + model.log_prob[id];
    std::vector<int> seq = from.seq;
    seq.push_back(id);
    if (better(score, seq, cells[e.to])) cells[e.to] = Cell{score, std::move(seq), true};
  }
  const Cell& end = cells[lat.node(lat.source_len, lat.target_len)];
  if (!end.reached) throw UnalignablePair("no segmentation of " + pair_label(source, target) + " under the model");
  return end.seq;
}

double NGramModel::prob(std::span<const int> history, int symbol) const {
  if (symbol < 0 || static_cast<std::size_t>(symbol) >= symbol_count())
    throw IndexError("n-gram symbol " + std::to_string(symbol) + " out of range");
  double p = 1.0 / static_cast<double>(symbol_count());
  const std::size_t max_len = std::min<std::size_t>(static_cast<std::size_t>(config.order - 1), history.size());
  std::vector<int> key;
  for (std::size_t k = 0; k <= max_len; ++k) {
    key.assign(history.end() - static_cast<std::ptrdiff_t>(k), history.end());
    auto it = histories.find(key);
    if (it == histories.end()) continue;
    const HistoryStats& h = it->second;
    auto d = h.discounted.find(symbol);
    p = (d == h.discounted.end() ? 0.0 : d->second) + h.backoff * p;
  }
  return p;
}

double NGramModel::log_prob(std::span<const int> history, int symbol) const { return std::log(prob(history, symbol)); }

NGramModel estimate_ngram(std::span<const std::vector<int>> sequences, std::size_t inventory,
                          const NGramConfig& config) {
  if (config.order < 1 || config.order > 10) throw ConfigError("n-gram order must be in [1, 10]");
  if (config.discount < 0.0 || config.discount >= 1.0) throw ConfigError("discount must be in [0, 1)");
  if (sequences.empty() || inventory == 0) throw EmptyModel("no training sequences for the n-gram model");

  NGramModel lm;
  lm.config = config;
  lm.inventory = inventory;
  const std::size_t ctx = static_cast<std::size_t>(config.order - 1);

  std::map<std::vector<int>, std::map<int, double>> counts;
  for (const auto& seq : sequences) {
    std::vector<int> padded(ctx, lm.begin_symbol());
    for (int g : seq) {
      if (g < 0 || static_cast<std::size_t>(g) >= inventory) throw IndexError("graphone id out of range");
      padded.push_back(g);
    }
    if (config.sentence_end) padded.push_back(lm.end_symbol());
    for (std::size_t t = ctx; t < padded.size(); ++t)
      for (std::size_t k = 0; k <= ctx; ++k) {
        std::vector<int> h(padded.begin() + static_cast<std::ptrdiff_t>(t - k), padded.begin() + static_cast<std::ptrdiff_t>(t));
        counts[h][padded[t]] += 1.0;
      }
  }

  for (auto& [history, next] : counts) {
    HistoryStats stats;
    for (const auto& [sym, c] : next) stats.total += c;
    if (!history.empty() && stats.total < config.trim_min_count) continue;
    for (const auto& [sym, c] : next) {
      double d = std::max(c - config.discount, 0.0) / stats.total;
      if (d > 0.0) stats.discounted[sym] = d;
    }
    double kept = 0.0;
    for (const auto& [sym, d] : stats.discounted) kept += d;
    stats.backoff = 1.0 - kept;
    lm.histories.emplace(history, std::move(stats));
  }
  return lm;
}

JointModel train_joint(const Corpus& corpus, const EmConfig& em, const NGramConfig& ngram) {
  JointModel model;
  model.align = em_train(corpus, em);
  std::vector<std::vector<int>> sequences;
  for (const auto& group : corpus.groups)
    for (const auto& ref : group.references) sequences.push_back(viterbi_segment(group.source, ref, model.align));
  model.lm = estimate_ngram(sequences, model.align.graphones.size(), ngram);
  return model;
}

CharSeq decode_joint(const CharSeq& source, const AlignmentModel& align, const NGramModel& lm, std::size_t beam,
                     std::size_t max_expand) {
  if (beam < 1) throw ConfigError("beam must be >= 1");
  if (lm.inventory != align.graphones.size()) throw ConfigError("n-gram inventory does not match alignment model");
  const std::size_t n = source.size();
  if (max_expand == 0) max_expand = 4 * n + 4;
  const std::size_t ctx = static_cast<std::size_t>(lm.config.order - 1);

  struct Hyp {
    std::size_t pos = 0;
    std::vector<int> history;
    std::vector<int> seq;
    double score = 0.0;
  };
  auto ranks_before = [](double sa, const std::vector<int>& a, double sb, const std::vector<int>& b) {
    if (sa != sb) return sa > sb;
    if (a.size() != b.size()) return a.size() < b.size();
    return a < b;
  };

  // Graphones sharing an input part are contiguous in the sorted inventory.
  auto input_range = [&](std::size_t pos, std::size_t len) {
    Graphone probe{slice_tokens(source, pos, len), {}};
    auto lo = std::lower_bound(align.graphones.begin(), align.graphones.end(), probe);
    auto hi = lo;
    while (hi != align.graphones.end() && hi->input == probe.input) ++hi;
    return std::pair{lo - align.graphones.begin(), hi - align.graphones.begin()};
  };

  // Fewest graphones that consume source[p..n); extensions that cannot finish
  // within max_expand are dead ends and never enter the beam.
  constexpr std::size_t kUnreachable = std::numeric_limits<std::size_t>::max() / 2;
  std::vector<std::size_t> min_steps(n + 1, kUnreachable);
  min_steps[n] = 0;
  for (std::size_t p = n; p-- > 0;)
    for (std::size_t di = 1; di <= static_cast<std::size_t>(align.max_input) && p + di <= n; ++di) {
      auto [lo, hi] = input_range(p, di);
      for (auto id = lo; id < hi; ++id)
        if (align.retained(static_cast<int>(id))) {
          min_steps[p] = std::min(min_steps[p], 1 + min_steps[p + di]);
          break;
        }
    }
  if (min_steps[0] > max_expand)
    throw DecodeFailure("no graphone segmentation covers '" + join_tokens(source.tokens) + "' within " +
                        std::to_string(max_expand) + " graphones");

  std::vector<Hyp> active(1);
  active[0].history.assign(ctx, lm.begin_symbol());
  bool have_best = false;
  double best_score = kNegInf;
  std::vector<int> best_seq;

  for (std::size_t step = 0; step < max_expand && !active.empty(); ++step) {
    std::map<std::pair<std::size_t, std::vector<int>>, Hyp> next;
    for (const Hyp& h : active)
      for (std::size_t di = 0; di <= static_cast<std::size_t>(align.max_input) && h.pos + di <= n; ++di) {
        auto [lo, hi] = input_range(h.pos, di);
        if (step + 1 + min_steps[h.pos + di] > max_expand) continue;
        for (auto id = lo; id < hi; ++id) {
          if (!align.retained(static_cast<int>(id))) continue;
          Hyp e;
          e.pos = h.pos + di;
          e.score = h.score + lm.log_prob(h.history, static_cast<int>(id));
          e.seq = h.seq;
          e.seq.push_back(static_cast<int>(id));
          e.history = h.history;
          if (ctx > 0) {
            e.history.erase(e.history.begin());
            e.history.push_back(static_cast<int>(id));
          }
          auto key = std::pair{e.pos, e.history};
          auto it = next.find(key);
          if (it == next.end())
            next.emplace(std::move(key), std::move(e));
          else if (ranks_before(e.score, e.seq, it->second.score, it->second.seq))
            it->second = std::move(e);
        }
      }

    active.clear();
    for (auto& [key, h] : next) {
      if (h.pos == n) {
        double fin = h.score + (lm.config.sentence_end ? lm.log_prob(h.history, lm.end_symbol()) : 0.0);
        if (!have_best || ranks_before(fin, h.seq, best_score, best_seq)) {
          have_best = true;
          best_score = fin;
          best_seq = h.seq;
        }
      }
      active.push_back(std::move(h));
    }
    std::sort(active.begin(), active.end(),
              [&](const Hyp& a, const Hyp& b) { return ranks_before(a.score, a.seq, b.score, b.seq); });
    if (active.size() > beam) active.resize(beam);
    // Scores only decrease, and later finishers use more graphones.
    if (have_best && !active.empty() && best_score >= active.front().score) break;
  }

  if (!have_best)
    throw DecodeFailure("no complete hypothesis for '" + join_tokens(source.tokens) + "' within " +
                        std::to_string(max_expand) + " graphones");
  CharSeq out;
  out.side = align.target_side;
  for (int id : best_seq)
    for (const auto& t : align.graphones[id].output) out.tokens.push_back(t);
  return out;
}

// ---------------------------------------------------------------------------
// Persistence

namespace {

std::string hex(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%a", v);
  return buf;
}

double parse_double(const std::string& s) {
  if (s == "-inf") return kNegInf;
  char* end = nullptr;
  double v = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size()) throw CorruptCheckpoint("bad number '" + s + "'");
  return v;
}

long parse_int(const std::string& s) {
  char* end = nullptr;
  long v = std::strtol(s.c_str(), &end, 10);
  if (s.empty() || end != s.c_str() + s.size()) throw CorruptCheckpoint("bad integer '" + s + "'");
  return v;
}

std::string escape_token(const std::string& t) {
  std::string out;
  for (unsigned char c : t) {
    if (c == '%' || c == ' ' || c == '\t' || c == '\n' || c == '\r') {
      char buf[4];
      std::snprintf(buf, sizeof buf, "%%%02X", c);
      out += buf;
    } else {
      out += static_cast<char>(c);
    }
  }
  return out;
}

std::string unescape_token(const std::string& t) {
  std::string out;
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (t[i] == '%') {
      if (i + 2 >= t.size()) throw CorruptCheckpoint("truncated escape");
      out += static_cast<char>(std::strtol(t.substr(i + 1, 2).c_str(), nullptr, 16));
      i += 2;
    } else {
      out += t[i];
    }
  }
  return out;
}

std::string write_part(const std::vector<std::string>& tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += ' ';
    out += escape_token(tokens[i]);
  }
  return out;
}

std::vector<std::string> read_part(const std::string& field) {
  std::vector<std::string> tokens;
  std::istringstream in(field);
  std::string t;
  while (in >> t) tokens.push_back(unescape_token(t));
  return tokens;
}

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  while (true) {
    std::size_t tab = line.find('\t', start);
    fields.push_back(line.substr(start, tab == std::string::npos ? std::string::npos : tab - start));
    if (tab == std::string::npos) break;
    start = tab + 1;
  }
  return fields;
}

Side parse_side(const std::string& s) {
  if (s == side_name(Side::cyrillic)) return Side::cyrillic;
  if (s == side_name(Side::latin)) return Side::latin;
  throw CorruptCheckpoint("unknown side '" + s + "'");
}

class LineReader {
 public:
  explicit LineReader(std::istream& in) : in_(in) {}

  std::string next() {
    std::string line;
    if (!std::getline(in_, line)) throw CorruptCheckpoint("unexpected end of joint model");
    return line;
  }

  // "key value" line.
  std::string value(const std::string& key) {
    std::string line = next();
    if (line.rfind(key + " ", 0) != 0) throw CorruptCheckpoint("expected '" + key + "', got '" + line + "'");
    return line.substr(key.size() + 1);
  }

 private:
  std::istream& in_;
};

}  // namespace

void save_joint(const JointModel& model, std::ostream& out) {
  const AlignmentModel& a = model.align;
  const NGramModel& lm = model.lm;
  out << "JOINT-NGRAM v1\n";
  out << "source_side " << side_name(a.source_side) << "\n";
  out << "target_side " << side_name(a.target_side) << "\n";
  out << "max_input " << a.max_input << "\n";
  out << "max_output " << a.max_output << "\n";
  out << "allow_epsilon " << (a.allow_epsilon ? 1 : 0) << "\n";
  out << "graphones " << a.graphones.size() << "\n";
  for (std::size_t g = 0; g < a.graphones.size(); ++g)
    out << write_part(a.graphones[g].input) << '\t' << write_part(a.graphones[g].output) << '\t'
        << (a.log_prob[g] == kNegInf ? std::string("-inf") : hex(a.log_prob[g])) << "\n";
  out << "log_likelihood " << a.log_likelihood.size() << "\n";
  for (double ll : a.log_likelihood) out << hex(ll) << "\n";
  out << "order " << lm.config.order << "\n";
  out << "discount " << hex(lm.config.discount) << "\n";
  out << "trim_min_count " << hex(lm.config.trim_min_count) << "\n";
  out << "sentence_end " << (lm.config.sentence_end ? 1 : 0) << "\n";
  out << "histories " << lm.histories.size() << "\n";
  for (const auto& [history, stats] : lm.histories) {
    std::string h;
    for (std::size_t i = 0; i < history.size(); ++i) h += (i ? " " : "") + std::to_string(history[i]);
    out << h << '\t' << hex(stats.total) << '\t' << hex(stats.backoff) << '\t' << stats.discounted.size() << "\n";
    for (const auto& [sym, d] : stats.discounted) out << sym << '\t' << hex(d) << "\n";
  }
  out << "end\n";
}

JointModel load_joint(std::istream& in) {
  LineReader r(in);
  std::string header = r.next();
  if (header.rfind("JOINT-NGRAM ", 0) != 0) throw CorruptCheckpoint("not a joint model file");
  if (header != "JOINT-NGRAM v1") throw UnsupportedVersion("unsupported joint model version '" + header + "'");

  JointModel model;
  AlignmentModel& a = model.align;
  a.source_side = parse_side(r.value("source_side"));
  a.target_side = parse_side(r.value("target_side"));
  a.max_input = static_cast<int>(parse_int(r.value("max_input")));
  a.max_output = static_cast<int>(parse_int(r.value("max_output")));
  a.allow_epsilon = parse_int(r.value("allow_epsilon")) != 0;
  long count = parse_int(r.value("graphones"));
  if (count < 0) throw CorruptCheckpoint("negative graphone count");
  for (long g = 0; g < count; ++g) {
    auto f = split_tabs(r.next());
    if (f.size() != 3) throw CorruptCheckpoint("bad graphone record");
    a.graphones.push_back(Graphone{read_part(f[0]), read_part(f[1])});
    a.log_prob.push_back(parse_double(f[2]));
  }
  if (!std::is_sorted(a.graphones.begin(), a.graphones.end())) throw CorruptCheckpoint("graphones out of order");
  long lls = parse_int(r.value("log_likelihood"));
  for (long i = 0; i < lls; ++i) a.log_likelihood.push_back(parse_double(r.next()));

  NGramModel& lm = model.lm;
  lm.inventory = a.graphones.size();
  lm.config.order = static_cast<int>(parse_int(r.value("order")));
  lm.config.discount = parse_double(r.value("discount"));
  lm.config.trim_min_count = parse_double(r.value("trim_min_count"));
  lm.config.sentence_end = parse_int(r.value("sentence_end")) != 0;
  if (lm.config.order < 1 || lm.config.order > 10) throw CorruptCheckpoint("bad n-gram order");
  long hcount = parse_int(r.value("histories"));
  for (long i = 0; i < hcount; ++i) {
    auto f = split_tabs(r.next());
    if (f.size() != 4) throw CorruptCheckpoint("bad history record");
    std::vector<int> history;
    std::istringstream hs(f[0]);
    std::string tok;
    while (hs >> tok) history.push_back(static_cast<int>(parse_int(tok)));
    HistoryStats stats;
    stats.total = parse_double(f[1]);
    stats.backoff = parse_double(f[2]);
    long entries = parse_int(f[3]);
    for (long e = 0; e < entries; ++e) {
      auto ef = split_tabs(r.next());
      if (ef.size() != 2) throw CorruptCheckpoint("bad n-gram entry");
      stats.discounted[static_cast<int>(parse_int(ef[0]))] = parse_double(ef[1]);
    }
    lm.histories.emplace(std::move(history), std::move(stats));
  }
  if (r.next() != "end") throw CorruptCheckpoint("missing end marker");
  return model;
}

}  // namespace translit
