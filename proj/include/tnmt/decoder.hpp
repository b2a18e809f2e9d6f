#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "tnmt/common.hpp"
#include "tnmt/transformer.hpp"

namespace tnmt::decode {

// Model surface the searchers run against. Implementations must be safe for
// concurrent read-only use across decoding workers.
class SeqModel {
 public:
  virtual ~SeqModel() = default;
  virtual int vocab_size() const = 0;
  virtual int bos_id() const = 0;
  virtual int eos_id() const = 0;
  virtual std::shared_ptr<void> encode(const std::vector<int>& src_ids) = 0;
  // next-token log-probabilities for a batch of same-length prefixes
  virtual std::vector<std::vector<float>> step_logprobs(
      const std::shared_ptr<void>& enc,
      const std::vector<std::vector<int>>& prefixes) = 0;
};

class TransformerSeqModel : public SeqModel {
 public:
  TransformerSeqModel(model::Transformer<float>& m, int bos, int eos)
      : model_(m), bos_(bos), eos_(eos) {}
  int vocab_size() const override { return model_.cfg.vocab_size; }
  int bos_id() const override { return bos_; }
  int eos_id() const override { return eos_; }
  std::shared_ptr<void> encode(const std::vector<int>& src_ids) override {
    return std::make_shared<model::Transformer<float>::Encoded>(
        model_.encode(src_ids));
  }
  std::vector<std::vector<float>> step_logprobs(
      const std::shared_ptr<void>& enc,
      const std::vector<std::vector<int>>& prefixes) override {
    auto* e = static_cast<model::Transformer<float>::Encoded*>(enc.get());
    return model_.step_logprobs(*e, prefixes);
  }

 private:
  model::Transformer<float>& model_;
  int bos_, eos_;
};

enum class DecodeMode { Beam, Sample, Greedy, Combined };
enum class TagPolicy { Force, Free };

DecodeMode decode_mode_from_string(const std::string& s);
std::string to_string(DecodeMode m);

struct DecodeConfig {
  DecodeMode mode = DecodeMode::Beam;
  int beam_size = 10;
  int sample_size = 5;
  double temperature = 1.0;
  int max_len = 64;
  double length_norm = 1.0;  // score = log_prob / generated_len^length_norm
  TagPolicy tag_policy = TagPolicy::Free;
  std::uint64_t seed = 0;
  bool keep_all_samples = false;  // sample mode: emit all S draws

  void validate() const {
    if (beam_size < 1 || sample_size < 1)
      throw Error("config", "beam_size and sample_size must be >= 1");
    if (temperature <= 0.0) throw Error("config", "temperature must be > 0");
    if (max_len < 1) throw Error("config", "max_len must be >= 1");
  }
};

struct Hypothesis {
  std::vector<int> ids;   // starts at bos
  double log_prob = 0.0;  // sum of chosen-token log-probs
  bool finished = false;  // ended on eos; false means max_len truncation

  std::size_t generated_len() const { return ids.empty() ? 0 : ids.size() - 1; }
  double score(double alpha) const {
    std::size_t n = generated_len();
    return n ? log_prob / std::pow(double(n), alpha) : log_prob;
  }
};

// `forced_first` pins the first generated token (force tag policy).
Hypothesis greedy_decode(SeqModel& m, const std::vector<int>& src_ids,
                         const DecodeConfig& cfg,
                         std::optional<int> forced_first = std::nullopt);

Hypothesis beam_search(SeqModel& m, const std::vector<int>& src_ids,
                       const DecodeConfig& cfg,
                       std::optional<int> forced_first = std::nullopt,
                       std::vector<Hypothesis>* nbest = nullptr);

// sample_size independent ancestral samples; returns the one with the
// highest model log-prob (all of them via `all` when requested).
Hypothesis sample_decode(SeqModel& m, const std::vector<int>& src_ids,
                         const DecodeConfig& cfg, Rng& rng,
                         std::optional<int> forced_first = std::nullopt,
                         std::vector<Hypothesis>* all = nullptr);

// one beam output and one sampled output per source
std::pair<Hypothesis, Hypothesis> combined_decode(
    SeqModel& m, const std::vector<int>& src_ids, const DecodeConfig& cfg,
    Rng& rng, std::optional<int> forced_first = std::nullopt);

// Tag policy resolution: returns the forced first token, if any.
// Free policy or an untagged model is a no-op.
std::optional<int> apply_tag_policy(const DecodeConfig& cfg, bool model_tagged,
                                    int required_tag_id);

// Teacher-forced recomputation of a hypothesis' log-prob (test oracle
// support and the recomputability invariant).
double recompute_logprob(SeqModel& m, const std::vector<int>& src_ids,
                         const Hypothesis& hyp);

// Corpus-level decoding. Each sentence draws its RNG substream from
// (cfg.seed, sentence index), so output is independent of worker count.
// Every inner vector holds 1 hypothesis (2 in combined mode, sample_size in
// keep_all sample mode).
std::vector<std::vector<Hypothesis>> translate_corpus(
    SeqModel& m, const std::vector<std::vector<int>>& srcs,
    const DecodeConfig& cfg, std::optional<int> forced_first = std::nullopt,
    int workers = 1);

}  // namespace tnmt::decode
