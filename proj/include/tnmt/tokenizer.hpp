#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "tnmt/common.hpp"

namespace tnmt::tok {

// Rule-based pre-tokenization: split on whitespace, then split punctuation
// into separate tokens. Punctuation between two digits stays attached so
// numbers like 3.14 survive intact. '_' is treated as a word character.
std::vector<std::string> pretokenize(const std::string& text);

// Inverse of pretokenize up to spacing: no space before closing punctuation,
// no space after an opening bracket/quote.
std::string join_words(const std::vector<std::string>& words);

struct BpeModel {
  // ordered by learning priority, earliest merge first
  std::vector<std::pair<std::string, std::string>> merges;
  std::size_t merge_count = 0;  // configured maximum

  static constexpr const char* kEndOfWord = "</w>";

  void save(const std::string& path) const;
  static BpeModel load(const std::string& path);
};

// Greedy highest-frequency pair merging over a word frequency table.
// Ties break lexicographically by (left, right); learning stops early when no
// pair occurs at least twice.
BpeModel bpe_learn(const std::map<std::string, long>& word_freq,
                   std::size_t merge_count);

// Segment one word; the word-final subword carries the end-of-word marker.
std::vector<std::string> bpe_apply(const std::string& word,
                                   const BpeModel& model);

// Join a subword stream back into words (marker-delimited), then into text.
std::vector<std::string> subwords_to_words(
    const std::vector<std::string>& subwords);
std::string detokenize(const std::vector<std::string>& subwords);

// Segment a pretokenized sentence.
std::vector<std::string> segment_words(const std::vector<std::string>& words,
                                       const BpeModel& model);

// Bijective token<->id map with fixed reserved ids:
// pad=0, unk=1, bos=2, eos=3, then all language tag tokens sorted, then
// corpus subwords.
class Vocabulary {
 public:
  static constexpr int kPad = 0, kUnk = 1, kBos = 2, kEos = 3;

  Vocabulary() = default;
  static Vocabulary build(std::vector<std::string> tag_tokens,
                          std::vector<std::string> subwords);

  int id(const std::string& token) const;  // kUnk when absent
  bool contains(const std::string& token) const;
  const std::string& token(int id) const;
  int size() const { return static_cast<int>(tokens_.size()); }
  int n_reserved() const { return n_reserved_; }
  bool is_tag(int id) const { return id >= 4 && id < n_reserved_; }

  std::vector<int> encode(const std::vector<std::string>& tokens) const;
  std::vector<std::string> decode(const std::vector<int>& ids) const;

  void save(const std::string& path) const;
  static Vocabulary load(const std::string& path);

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> ids_;
  int n_reserved_ = 4;
  void index();
};

}  // namespace tnmt::tok
