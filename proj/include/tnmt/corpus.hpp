#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "tnmt/common.hpp"

namespace tnmt::corpus {

// Language identity. Renders as "<2xx>" on the source side (required target
// language marker) and "<xx>" on the target side.
struct LangTag {
  std::string code;  // lowercase ascii, unique per experiment

  std::string src_token() const { return "<2" + code + ">"; }
  std::string tgt_token() const { return "<" + code + ">"; }
  bool operator==(const LangTag&) const = default;
};

LangTag make_lang_tag(const std::string& code);

enum class TagMode {
  Tagged,      // tags on both sides
  SourceOnly,  // tag on the source side only (the target-forcing baseline)
};

TagMode tag_mode_from_string(const std::string& s);
std::string to_string(TagMode m);

struct TaggedExample {
  LangTag src_lang, tgt_lang;
  std::vector<std::string> src_tokens, tgt_tokens;  // tags included
};

struct Provenance {
  bool synthetic = false;
  int round = 0;
  std::string decode_mode;  // "beam" | "sample" | "combined", synthetic only

  std::string str() const {
    return synthetic ? "synthetic(round " + std::to_string(round) + ", " +
                           decode_mode + ")"
                     : "original";
  }
  bool operator==(const Provenance&) const = default;
};

struct ParallelCorpus {
  std::vector<TaggedExample> examples;
  Provenance provenance;
};

TaggedExample tag_pair(const std::vector<std::string>& src_tokens,
                       const std::vector<std::string>& tgt_tokens,
                       const LangTag& src_lang, const LangTag& tgt_lang,
                       TagMode mode);

// Inverse of tag_pair: the (src, tgt) token sequences without tags.
std::pair<std::vector<std::string>, std::vector<std::string>> strip_tags(
    const TaggedExample& ex);

// Line-aligned bilingual corpus, both sides already subword-segmented.
struct BilingualCorpus {
  LangTag lang_a, lang_b;
  std::vector<std::vector<std::string>> a_lines, b_lines;
};

// Every aligned pair contributes both directions; result shuffled with rng.
ParallelCorpus build_mixed(const std::vector<BilingualCorpus>& pairs,
                           TagMode mode, Rng& rng);

// Deduplicated target-side sentences of `lang`, tags stripped. Preserves
// first-occurrence order. Empty (plus a caller-visible warning flag) when the
// language is absent.
std::vector<std::vector<std::string>> extract_monolingual(
    const ParallelCorpus& corpus, const LangTag& lang,
    bool* found = nullptr);

// D* = D + synthetic examples. D is never mutated; synth must carry
// synthetic provenance.
ParallelCorpus mix_synthetic(const ParallelCorpus& base,
                             const ParallelCorpus& synth);

// ---- synthetic toy languages ----

enum class ToyTransform { Identity, Reversal, IdShift, PairSwap };

ToyTransform toy_transform_from_string(const std::string& s);
std::string to_string(ToyTransform t);

// A toy language is a bijective rendering of latent token sequences.
// Surface tokens are "<name>_t<i>", so languages have pairwise-disjoint
// vocabularies and every token's language is decidable.
struct ToyLanguageSpec {
  std::string name;
  std::size_t vocab_size = 64;
  ToyTransform transform = ToyTransform::Identity;
  int shift = 0;  // IdShift only

  LangTag tag() const { return make_lang_tag(name); }

  std::vector<int> apply(const std::vector<int>& latent) const;
  std::vector<std::string> render(const std::vector<int>& latent) const;
  // true iff token belongs to this language's surface vocabulary
  bool owns_token(const std::string& token) const;
};

struct ToySplit {
  std::vector<std::vector<std::string>> a_lines, b_lines;  // aligned
};

struct ToyTask {
  std::vector<ToyLanguageSpec> specs;  // non-pivot languages
  ToyLanguageSpec pivot;
  // supervised corpora, one per non-pivot spec: spec <-> pivot
  std::vector<ToySplit> train, dev, test;
  // zero-shot test sets for every unordered non-pivot pair (i < j):
  // a_lines in specs[i]'s language, b_lines the exact reference in specs[j]'s
  std::map<std::pair<std::size_t, std::size_t>, ToySplit> zero_shot_test;
};

ToyTask gen_toy_task(const std::vector<ToyLanguageSpec>& specs,
                     const ToyLanguageSpec& pivot, std::size_t n_train,
                     std::size_t n_dev, std::size_t n_test,
                     std::uint64_t seed, std::size_t min_len = 3,
                     std::size_t max_len = 12);

// ---- disk formats ----

std::vector<std::string> read_lines(const std::string& path);
void write_lines(const std::string& path,
                 const std::vector<std::string>& lines);

std::string join_tokens(const std::vector<std::string>& tokens);
std::vector<std::string> split_tokens(const std::string& line);

// Prepared corpus: "src_tokens<TAB>tgt_tokens" per line plus a JSON sidecar
// at <path>.meta.json describing languages, mode, provenance and seed.
void save_prepared(const std::string& path, const ParallelCorpus& corpus,
                   TagMode mode, std::uint64_t seed);
ParallelCorpus load_prepared(const std::string& path, TagMode* mode = nullptr,
                             std::uint64_t* seed = nullptr);

}  // namespace tnmt::corpus
