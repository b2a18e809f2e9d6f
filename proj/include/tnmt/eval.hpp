#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "tnmt/corpus.hpp"

namespace tnmt::eval {

using Sentence = std::vector<std::string>;

struct BleuReport {
  double bleu = 0.0;  // 0..100
  std::array<double, 4> precisions{};  // modified n-gram precisions p1..p4
  double brevity_penalty = 1.0;
  std::size_t hyp_len = 0, ref_len = 0;
  bool smoothed = false;

  std::string summary() const;
};

// Corpus-level clipped n-gram precision BLEU with brevity penalty.
// Unsmoothed by default (any zero precision gives 0); the add-one smoothed
// variant is reported separately for tiny corpora and never mixed in.
BleuReport corpus_bleu(const std::vector<Sentence>& hyps,
                       const std::vector<Sentence>& refs, int max_order = 4,
                       bool smooth = false);

struct FidelityReport {
  // absent (nullopt) for untagged-model outputs rather than 0
  std::optional<double> tag_accuracy;
  std::optional<double> lang_id_rate;
};

// outputs: decoded token sequences, tags still in place when the model
// generates them (free policy). toy_spec enables the exact language-id rate.
FidelityReport fidelity(const std::vector<Sentence>& outputs,
                        const corpus::LangTag& requested,
                        bool model_is_tagged,
                        const corpus::ToyLanguageSpec* toy_spec = nullptr);

// (#unique n-grams) / (#total n-grams) over the whole corpus; 0 if empty
double distinct_n(const std::vector<Sentence>& sentences, int n);

void write_csv(const std::string& path,
               const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows);

}  // namespace tnmt::eval
