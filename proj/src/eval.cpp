#include "tnmt/eval.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace tnmt::eval {

namespace {

using Ngram = std::vector<std::string>;

std::map<Ngram, long> ngram_counts(const Sentence& s, int n) {
  std::map<Ngram, long> counts;
  if (static_cast<int>(s.size()) >= n)
    for (std::size_t i = 0; i + n <= s.size(); ++i)
      counts[Ngram(s.begin() + i, s.begin() + i + n)]++;
  return counts;
}

}  // namespace

BleuReport corpus_bleu(const std::vector<Sentence>& hyps,
                       const std::vector<Sentence>& refs, int max_order,
                       bool smooth) {
  if (hyps.empty() || hyps.size() != refs.size())
    throw Error("data", "hypothesis/reference count mismatch: " +
                            std::to_string(hyps.size()) + " vs " +
                            std::to_string(refs.size()));
  if (max_order < 1 || max_order > 4)
    throw Error("config", "max_order must be in 1..4");

  BleuReport rep;
  rep.smoothed = smooth;
  std::array<long, 4> matched{}, total{};
  for (std::size_t i = 0; i < hyps.size(); ++i) {
    rep.hyp_len += hyps[i].size();
    rep.ref_len += refs[i].size();
    for (int n = 1; n <= max_order; ++n) {
      auto hc = ngram_counts(hyps[i], n);
      auto rc = ngram_counts(refs[i], n);
      for (const auto& [g, c] : hc) {
        total[n - 1] += c;
        auto it = rc.find(g);
        if (it != rc.end()) matched[n - 1] += std::min(c, it->second);
      }
    }
  }

  // orders with no hypothesis n-grams at all (corpus shorter than n) are
  // excluded from the geometric mean instead of zeroing the score
  int effective = 0;
  for (int n = 0; n < max_order; ++n)
    if (total[n] > 0) ++effective;
  if (effective == 0) effective = 1;

  double log_prec = 0.0;
  bool zero = false;
  for (int n = 0; n < max_order; ++n) {
    if (total[n] == 0) {
      rep.precisions[n] = 0.0;
      continue;
    }
    double num = double(matched[n]) + (smooth ? 1.0 : 0.0);
    double den = double(total[n]) + (smooth ? 1.0 : 0.0);
    double p = num / den;
    rep.precisions[n] = p;
    if (p <= 0.0)
      zero = true;
    else
      log_prec += std::log(p) / effective;
  }

  if (rep.hyp_len < rep.ref_len && rep.hyp_len > 0)
    rep.brevity_penalty = std::exp(1.0 - double(rep.ref_len) / double(rep.hyp_len));
  else if (rep.hyp_len == 0)
    rep.brevity_penalty = 0.0;

  rep.bleu = zero ? 0.0 : 100.0 * rep.brevity_penalty * std::exp(log_prec);
  return rep;
}

std::string BleuReport::summary() const {
  std::ostringstream ss;
  ss << "BLEU" << (smoothed ? "(+1)" : "") << " = " << bleu << "  p1..p4 =";
  for (double p : precisions) ss << " " << p;
  ss << "  BP = " << brevity_penalty << "  lengths " << hyp_len << "/"
     << ref_len;
  return ss.str();
}

FidelityReport fidelity(const std::vector<Sentence>& outputs,
                        const corpus::LangTag& requested,
                        bool model_is_tagged,
                        const corpus::ToyLanguageSpec* toy_spec) {
  FidelityReport rep;
  const std::string want_tag = requested.tgt_token();

  if (model_is_tagged && !outputs.empty()) {
    std::size_t hits = 0;
    for (const auto& out : outputs)
      if (!out.empty() && out.front() == want_tag) ++hits;
    rep.tag_accuracy = double(hits) / double(outputs.size());
  }

  if (toy_spec) {
    std::size_t tokens = 0, owned = 0;
    for (const auto& out : outputs)
      for (const auto& t : out) {
        if (t.size() >= 2 && t.front() == '<' && t.back() == '>') continue;
        ++tokens;
        if (toy_spec->owns_token(t)) ++owned;
      }
    rep.lang_id_rate = tokens ? double(owned) / double(tokens) : 0.0;
  }
  return rep;
}

double distinct_n(const std::vector<Sentence>& sentences, int n) {
  if (n < 1) throw Error("config", "distinct_n needs n >= 1");
  std::set<Ngram> unique;
  long total = 0;
  for (const auto& s : sentences)
    for (const auto& [g, c] : ngram_counts(s, n)) {
      unique.insert(g);
      total += c;
    }
  return total ? double(unique.size()) / double(total) : 0.0;
}

void write_csv(const std::string& path,
               const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows) {
  std::ofstream f(path);
  if (!f) throw Error("io", "cannot write " + path);
  auto emit = [&](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i)
      f << (i ? "," : "") << cells[i];
    f << "\n";
  };
  emit(header);
  for (const auto& r : rows) emit(r);
}

}  // namespace tnmt::eval
