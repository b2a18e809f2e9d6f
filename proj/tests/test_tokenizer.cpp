#include <fstream>
#include <filesystem>
#include <map>

#include "doctest.h"
#include "tnmt/common.hpp"
#include "tnmt/tokenizer.hpp"

using namespace tnmt;
using namespace tnmt::tok;

TEST_CASE("pretokenize splits words and punctuation") {
  auto toks = pretokenize("Am zburat cu Air Force Two timp de opt ani.");
  REQUIRE(toks.size() == 11);
  CHECK(toks[0] == "Am");
  CHECK(toks[9] == "ani");
  CHECK(toks[10] == ".");

  CHECK(pretokenize("").empty());
  CHECK(pretokenize("a,b") == std::vector<std::string>{"a", ",", "b"});
  // numbers stay intact
  CHECK(pretokenize("pi is 3.14 .") ==
        std::vector<std::string>{"pi", "is", "3.14", "."});
  CHECK(pretokenize("  spaced\tout ") ==
        std::vector<std::string>{"spaced", "out"});
}

TEST_CASE("bpe_learn picks the most frequent pair, ties lexicographic") {
  std::map<std::string, long> freq = {{"aaab", 1}, {"aab", 1}};
  auto model = bpe_learn(freq, 1);
  REQUIRE(model.merges.size() == 1);
  // ("a","a") occurs 3 times, beats everything else
  CHECK(model.merges[0].first == "a");
  CHECK(model.merges[0].second == "a");
}

TEST_CASE("bpe_learn merge_count=0 gives character segmentation") {
  std::map<std::string, long> freq = {{"abc", 5}};
  auto model = bpe_learn(freq, 0);
  CHECK(model.merges.empty());
  CHECK(bpe_apply("abc", model) ==
        std::vector<std::string>{"a", "b", "c</w>"});
}

TEST_CASE("bpe_learn is deterministic and stops below frequency 2") {
  std::map<std::string, long> freq = {{"hello", 3}, {"help", 2}, {"world", 1}};
  auto m1 = bpe_learn(freq, 1000);
  auto m2 = bpe_learn(freq, 1000);
  CHECK(m1.merges == m2.merges);
  // "world" occurs once; none of its unique pairs may be learned
  for (const auto& [l, r] : m1.merges) CHECK(l + r != "wo");
}

TEST_CASE("bpe_apply traces the learned merges") {
  std::map<std::string, long> freq = {{"aaab", 1}, {"aab", 1}};
  auto model = bpe_learn(freq, 1);
  CHECK(bpe_apply("aaab", model) ==
        std::vector<std::string>{"aa", "a", "b</w>"});
  // unseen characters pass through as singletons
  auto segs = bpe_apply("xyz", model);
  CHECK(segs == std::vector<std::string>{"x", "y", "z</w>"});
}

TEST_CASE("fully merged word becomes a single token") {
  std::map<std::string, long> freq = {{"abab", 50}};
  auto model = bpe_learn(freq, 10);
  CHECK(bpe_apply("abab", model).size() == 1);
}

TEST_CASE("segment-join is the identity on random words") {
  Rng rng(123);
  std::map<std::string, long> freq;
  auto random_word = [&]() {
    std::string w;
    std::size_t len = 1 + rng.below(12);
    for (std::size_t i = 0; i < len; ++i)
      w.push_back('a' + static_cast<char>(rng.below(6)));
    return w;
  };
  for (int i = 0; i < 500; ++i) freq[random_word()] += 1 + rng.below(5);
  auto model = bpe_learn(freq, 200);

  for (int i = 0; i < 10000; ++i) {
    std::string w = random_word();
    auto words = subwords_to_words(bpe_apply(w, model));
    REQUIRE(words.size() == 1);
    CHECK(words[0] == w);
  }
}

TEST_CASE("merge file round-trip") {
  std::map<std::string, long> freq = {{"banana", 4}, {"bandana", 3}};
  auto model = bpe_learn(freq, 20);
  auto path = std::filesystem::temp_directory_path() / "tnmt_merges.txt";
  model.save(path.string());
  auto loaded = BpeModel::load(path.string());
  CHECK(loaded.merges == model.merges);

  std::ifstream f(path);
  std::string first;
  std::getline(f, first);
  CHECK(first == "#bpe-v1 merges=" + std::to_string(model.merges.size()));
}

TEST_CASE("vocabulary reserved layout, bijection, save/load") {
  auto v = Vocabulary::build({"<2a>", "<a>", "<2b>", "<b>"},
                             {"zz</w>", "aa", "mm</w>"});
  CHECK(v.token(0) == "<pad>");
  CHECK(v.token(1) == "<unk>");
  CHECK(v.token(2) == "<s>");
  CHECK(v.token(3) == "</s>");
  // tags sorted after the specials
  CHECK(v.token(4) == "<2a>");
  CHECK(v.token(5) == "<2b>");
  CHECK(v.token(6) == "<a>");
  CHECK(v.token(7) == "<b>");
  CHECK(v.n_reserved() == 8);
  CHECK(v.is_tag(v.id("<a>")));
  CHECK(!v.is_tag(v.id("aa")));
  CHECK(v.id("missing") == Vocabulary::kUnk);

  for (int i = 0; i < v.size(); ++i) CHECK(v.id(v.token(i)) == i);

  auto path = std::filesystem::temp_directory_path() / "tnmt_vocab.txt";
  v.save(path.string());
  auto lv = Vocabulary::load(path.string());
  CHECK(lv.size() == v.size());
  CHECK(lv.n_reserved() == v.n_reserved());
  for (int i = 0; i < v.size(); ++i) CHECK(lv.token(i) == v.token(i));
}

TEST_CASE("detokenize rebuilds sentences with spacing rules") {
  std::map<std::string, long> freq = {{"hello", 2}, {"world", 2}};
  auto model = bpe_learn(freq, 50);
  auto segs = segment_words(pretokenize("hello world ."), model);
  CHECK(detokenize(segs) == "hello world.");
}
