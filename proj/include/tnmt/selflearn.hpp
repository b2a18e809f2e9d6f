#pragma once

#include <string>
#include <vector>

#include "tnmt/corpus.hpp"
#include "tnmt/decoder.hpp"
#include "tnmt/tokenizer.hpp"
#include "tnmt/trainer.hpp"

namespace tnmt::selflearn {

struct SelfLearnConfig {
  int n_rounds = 5;
  int epochs_per_round = 3;
  decode::DecodeConfig decode;  // synthesis mode: beam | sample | combined
  corpus::LangTag l1, l2;       // the zero-shot pair
  std::uint64_t seed = 0;
  std::string artifacts_dir;  // empty = no round artifacts on disk
  int workers = 1;

  void validate() const {
    if (n_rounds < 0) throw Error("config", "n_rounds must be >= 0");
    if (epochs_per_round < 1)
      throw Error("config", "epochs_per_round must be >= 1");
    if (l1.code.empty() || l2.code.empty() || l1 == l2)
      throw Error("config", "zero-shot pair needs two distinct languages");
    decode.validate();
  }
};

struct RoundMetrics {
  int round = 0;
  double bleu_l1l2 = 0.0, bleu_l2l1 = 0.0;  // zero-shot, smoothed
  double tag_acc = 0.0;   // free-policy decoding, both directions pooled
  double distinct1 = 0.0, distinct2 = 0.0;  // synthetic sources of the round
};

struct SelfLearnState {
  int round = 0;
  std::vector<RoundMetrics> table;  // row per completed round plus round 0
  corpus::ParallelCorpus synth_l1l2, synth_l2l1;  // latest round
};

// Zero-shot evaluation data, untagged token lines, line-aligned.
struct ZeroShotEval {
  std::vector<std::vector<std::string>> l1_src, l2_ref;  // l1 -> l2
  std::vector<std::vector<std::string>> l2_src, l1_ref;  // l2 -> l1
};

// Back-translation for one zero-shot direction: every sentence of `mono`
// (real text in `real_lang`) is translated into `synth_lang` and becomes the
// synthetic SOURCE of a (synth_lang -> real_lang) pair. The real side is
// copied verbatim. Combined mode yields two pairs per sentence.
corpus::ParallelCorpus synthesize_pairs(
    model::Transformer<float>& model, const tok::Vocabulary& vocab,
    corpus::TagMode mode,
    const std::vector<std::vector<std::string>>& mono,
    const corpus::LangTag& real_lang, const corpus::LangTag& synth_lang,
    const decode::DecodeConfig& dcfg, int round, int workers = 1);

// Greedy free-policy decoding of untagged source lines toward `tgt_lang`;
// returns token sequences with any generated tag left in place.
std::vector<std::vector<std::string>> decode_corpus_free(
    model::Transformer<float>& model, const tok::Vocabulary& vocab,
    corpus::TagMode mode,
    const std::vector<std::vector<std::string>>& src_lines,
    const corpus::LangTag& tgt_lang, int workers = 1);

// The train-infer-train loop. `trainer` carries optimizer state across
// rounds; D is the supervised corpus, never mutated.
SelfLearnState run_self_learning(model::Transformer<float>& model,
                                 train::Trainer& trainer,
                                 const tok::Vocabulary& vocab,
                                 corpus::TagMode mode,
                                 const corpus::ParallelCorpus& D,
                                 const ZeroShotEval& test,
                                 const SelfLearnConfig& cfg);

// CSV rows {round, bleu_l1l2, bleu_l2l1, tag_acc, distinct1, distinct2}
std::vector<std::vector<std::string>> round_report(const SelfLearnState& state);
void write_round_report(const std::string& path, const SelfLearnState& state);

// id conversion for training: vocab-encoded examples, no bos/eos
std::vector<train::Example> to_examples(const corpus::ParallelCorpus& corpus,
                                        const tok::Vocabulary& vocab);

}  // namespace tnmt::selflearn
