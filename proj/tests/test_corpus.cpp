#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <set>

#include "translit/corpus.hpp"
#include "translit/errors.hpp"

using namespace translit;

namespace {

Corpus numbered_corpus(std::size_t n) {
  std::string text;
  for (std::size_t i = 0; i < n; ++i) text += "w" + std::to_string(i) + "\tx" + std::to_string(i) + "\n";
  return parse_corpus(text, Direction::T2C, nullptr);
}

}  // namespace

TEST_CASE("parse_corpus") {
  auto c = parse_corpus("dala\tX|Y\n", Direction::T2C, nullptr);
  REQUIRE(c.size() == 1);
  CHECK(c.groups[0].references.size() == 2);
  CHECK(c.groups[0].source.side == Side::latin);
  CHECK(c.groups[0].references[0].side == Side::cyrillic);

  CHECK_THROWS_AS(parse_corpus("w\t\n", Direction::C2T, nullptr), MalformedLine);
  CHECK_THROWS_AS(parse_corpus("w\t | \n", Direction::C2T, nullptr), MalformedLine);
  CHECK_THROWS_AS(parse_corpus("no tab here\n", Direction::C2T, nullptr), MalformedLine);

  auto three = parse_corpus("# header\na\tb\n\nc\td|e|d\nf\tg\n", Direction::C2T, nullptr);
  CHECK(three.size() == 3);
  CHECK(three.groups[1].references.size() == 2);  // exact duplicate dropped
  CHECK(three.groups[1].line == 4);
}

TEST_CASE("parse_corpus converts script references through the table") {
  auto table = TransliterationTable::parse("\xE1\xA0\xB3\td\n\xE1\xA0\xA0\ta\n\xE1\xA0\xAF\tl\n");
  auto c = parse_corpus("\xD0\xB4\xD0\xB0\xD0\xBB\t\xE1\xA0\xB3\xE1\xA0\xA0\xE1\xA0\xAF\xE1\xA0\xA0|dalv\n",
                        Direction::C2T, &table);
  REQUIRE(c.size() == 1);
  CHECK(join_tokens(c.groups[0].references[0].tokens) == "dala");
  CHECK(join_tokens(c.groups[0].references[1].tokens) == "dalv");
}

TEST_CASE("split_corpus") {
  auto c = numbered_corpus(15);
  CHECK_THROWS_AS(split_corpus(c, {10, 10, 1}), SplitSizeError);
  CHECK_THROWS_AS(split_corpus(c, {15, 0, 1}), SplitSizeError);

  auto [tr, te] = split_corpus(c, {11, 4, 77});
  CHECK(tr.size() == 11);
  CHECK(te.size() == 4);
  std::multiset<std::string> seen;
  for (const auto& g : tr.groups) seen.insert(join_tokens(g.source.tokens));
  for (const auto& g : te.groups) seen.insert(join_tokens(g.source.tokens));
  CHECK(seen.size() == 15);
  CHECK(std::set<std::string>(seen.begin(), seen.end()).size() == 15);

  auto [tr2, te2] = split_corpus(c, {11, 4, 77});
  for (std::size_t i = 0; i < te.size(); ++i) CHECK(te.groups[i].source == te2.groups[i].source);
}

TEST_CASE("split sizes at the published dictionary scale") {
  auto c = numbered_corpus(63668);
  auto [tr, te] = split_corpus(c, {58436, 5232, 2023});
  CHECK(tr.size() == 58436);
  CHECK(te.size() == 5232);
}

TEST_CASE("build_vocabulary") {
  auto c1 = parse_corpus("b\tx\na\ty\n", Direction::C2T, nullptr);
  auto c2 = parse_corpus("a\ty\nb\tx\n", Direction::C2T, nullptr);
  auto v1 = build_vocabulary(c1, Side::cyrillic);
  CHECK(v1.size() == 6);
  CHECK(v1.id("a") == 4);
  CHECK(v1.id("b") == 5);
  CHECK(v1 == build_vocabulary(c1, Side::cyrillic));
  CHECK(v1 == build_vocabulary(c2, Side::cyrillic));
  CHECK(build_vocabulary(c1, Side::latin).symbols() == std::vector<std::string>{"x", "y"});
}

TEST_CASE("batch_iter") {
  auto c = numbered_corpus(10);
  auto sv = build_vocabulary(c, Side::latin);
  auto tv = build_vocabulary(c, Side::cyrillic);
  auto pairs = encode_pairs(c, sv, tv);
  auto batches = batch_iter(pairs, 4, 5, 0);
  REQUIRE(batches.size() == 3);
  CHECK(batches[0].size == 4);
  CHECK(batches[1].size == 4);
  CHECK(batches[2].size == 2);

  auto again = batch_iter(pairs, 4, 5, 0);
  for (std::size_t i = 0; i < batches.size(); ++i) CHECK(batches[i].pairs == again[i].pairs);
  auto other_epoch = batch_iter(pairs, 4, 5, 1);
  bool differs = false;
  for (std::size_t i = 0; i < batches.size(); ++i) differs = differs || batches[i].pairs != other_epoch[i].pairs;
  CHECK(differs);

  std::multiset<std::size_t> covered;
  for (const auto& b : batches) covered.insert(b.pairs.begin(), b.pairs.end());
  CHECK(covered.size() == 10);
  CHECK(std::set<std::size_t>(covered.begin(), covered.end()).size() == 10);

  for (const auto& b : batches) {
    for (std::size_t i = 0; i < b.source.size(); ++i) CHECK((b.source[i] == Vocabulary::kPad) == (b.source_mask[i] == 0.0));
    for (std::size_t i = 0; i < b.target_out.size(); ++i)
      CHECK((b.target_out[i] == Vocabulary::kPad) == (b.target_mask[i] == 0.0));
    for (std::size_t r = 0; r < b.size; ++r) CHECK(b.target_in[r * b.target_len] == Vocabulary::kBos);
  }
}

TEST_CASE("multi-reference groups expand into pairs") {
  auto c = parse_corpus("ab\tx|y|z\ncd\tw\n", Direction::T2C, nullptr);
  auto pairs = encode_pairs(c, build_vocabulary(c, Side::latin), build_vocabulary(c, Side::cyrillic));
  CHECK(pairs.size() == 4);
  CHECK(pairs[2].group == 0);
  CHECK(pairs[3].group == 1);
}

TEST_CASE("token-budget batches") {
  auto c = numbered_corpus(40);
  auto pairs = encode_pairs(c, build_vocabulary(c, Side::latin), build_vocabulary(c, Side::cyrillic));
  auto batches = batch_iter_tokens(pairs, 16, 3, 0);
  std::size_t total = 0;
  for (const auto& b : batches) {
    total += b.size;
    CHECK(b.size * std::max(b.source_len, b.target_len) <= 16);
  }
  CHECK(total == 40);
}
