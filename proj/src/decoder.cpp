#include "tnmt/decoder.hpp"

#include <algorithm>
#include <cmath>

namespace tnmt::decode {

DecodeMode decode_mode_from_string(const std::string& s) {
  if (s == "beam") return DecodeMode::Beam;
  if (s == "sample") return DecodeMode::Sample;
  if (s == "greedy") return DecodeMode::Greedy;
  if (s == "combined") return DecodeMode::Combined;
  throw Error("config", "unknown decode mode: " + s);
}

std::string to_string(DecodeMode m) {
  switch (m) {
    case DecodeMode::Beam: return "beam";
    case DecodeMode::Sample: return "sample";
    case DecodeMode::Greedy: return "greedy";
    case DecodeMode::Combined: return "combined";
  }
  return "?";
}

std::optional<int> apply_tag_policy(const DecodeConfig& cfg, bool model_tagged,
                                    int required_tag_id) {
  if (!model_tagged) return std::nullopt;
  if (cfg.tag_policy == TagPolicy::Force) return required_tag_id;
  return std::nullopt;
}

namespace {

// finished beats unfinished; then higher normalized score wins
bool better(const Hypothesis& a, const Hypothesis& b, double alpha) {
  if (a.finished != b.finished) return a.finished;
  return a.score(alpha) > b.score(alpha);
}

Hypothesis greedy_with_enc(SeqModel& m, const std::shared_ptr<void>& enc,
                           const DecodeConfig& cfg,
                           std::optional<int> forced_first) {
  Hypothesis hyp;
  hyp.ids = {m.bos_id()};
  for (int step = 0; step < cfg.max_len; ++step) {
    auto lp = m.step_logprobs(enc, {hyp.ids})[0];
    int pick;
    if (step == 0 && forced_first) {
      pick = *forced_first;
    } else {
      pick = 0;
      for (int v = 1; v < static_cast<int>(lp.size()); ++v)
        if (lp[v] > lp[pick]) pick = v;
    }
    hyp.ids.push_back(pick);
    hyp.log_prob += lp[pick];
    if (pick == m.eos_id()) {
      hyp.finished = true;
      break;
    }
  }
  return hyp;
}

}  // namespace

Hypothesis greedy_decode(SeqModel& m, const std::vector<int>& src_ids,
                         const DecodeConfig& cfg,
                         std::optional<int> forced_first) {
  cfg.validate();
  auto enc = m.encode(src_ids);
  return greedy_with_enc(m, enc, cfg, forced_first);
}

Hypothesis beam_search(SeqModel& m, const std::vector<int>& src_ids,
                       const DecodeConfig& cfg,
                       std::optional<int> forced_first,
                       std::vector<Hypothesis>* nbest) {
  cfg.validate();
  auto enc = m.encode(src_ids);
  const int eos = m.eos_id();
  const int V = m.vocab_size();

  std::vector<Hypothesis> live = {{{m.bos_id()}, 0.0, false}};
  std::vector<Hypothesis> completed;

  for (int step = 0; step < cfg.max_len && !live.empty(); ++step) {
    std::vector<std::vector<int>> prefixes;
    prefixes.reserve(live.size());
    for (const auto& h : live) prefixes.push_back(h.ids);
    auto lps = m.step_logprobs(enc, prefixes);

    struct Cand {
      double lp;
      std::size_t beam;
      int token;
    };
    std::vector<Cand> cands;
    if (step == 0 && forced_first) {
      cands.push_back({live[0].log_prob + lps[0][*forced_first], 0,
                       *forced_first});
    } else {
      cands.reserve(live.size() * V);
      for (std::size_t b = 0; b < live.size(); ++b)
        for (int v = 0; v < V; ++v)
          cands.push_back({live[b].log_prob + lps[b][v], b, v});
    }
    std::size_t keep = std::min<std::size_t>(cfg.beam_size, cands.size());
    std::partial_sort(cands.begin(), cands.begin() + keep, cands.end(),
                      [](const Cand& a, const Cand& b) {
                        if (a.lp != b.lp) return a.lp > b.lp;
                        if (a.beam != b.beam) return a.beam < b.beam;
                        return a.token < b.token;
                      });

    std::vector<Hypothesis> next;
    for (std::size_t i = 0; i < keep; ++i) {
      Hypothesis h = live[cands[i].beam];
      h.ids.push_back(cands[i].token);
      h.log_prob = cands[i].lp;
      if (cands[i].token == eos) {
        h.finished = true;
        completed.push_back(std::move(h));
      } else {
        next.push_back(std::move(h));
      }
    }
    live = std::move(next);
  }

  // greedy shadow: guarantees the returned score is never below greedy's
  Hypothesis best = greedy_with_enc(m, enc, cfg, forced_first);
  for (const auto& h : completed)
    if (better(h, best, cfg.length_norm)) best = h;
  for (const auto& h : live)
    if (better(h, best, cfg.length_norm)) best = h;

  if (nbest) {
    *nbest = completed;
    nbest->insert(nbest->end(), live.begin(), live.end());
    std::sort(nbest->begin(), nbest->end(),
              [&](const Hypothesis& a, const Hypothesis& b) {
                return better(a, b, cfg.length_norm);
              });
  }
  return best;
}

Hypothesis sample_decode(SeqModel& m, const std::vector<int>& src_ids,
                         const DecodeConfig& cfg, Rng& rng,
                         std::optional<int> forced_first,
                         std::vector<Hypothesis>* all) {
  cfg.validate();
  auto enc = m.encode(src_ids);
  const int eos = m.eos_id();
  const int V = m.vocab_size();

  std::vector<Hypothesis> seqs(cfg.sample_size);
  for (auto& s : seqs) s.ids = {m.bos_id()};
  std::vector<std::size_t> active(seqs.size());
  for (std::size_t i = 0; i < seqs.size(); ++i) active[i] = i;

  for (int step = 0; step < cfg.max_len && !active.empty(); ++step) {
    std::vector<std::vector<int>> prefixes;
    prefixes.reserve(active.size());
    for (auto i : active) prefixes.push_back(seqs[i].ids);
    auto lps = m.step_logprobs(enc, prefixes);

    std::vector<std::size_t> still;
    for (std::size_t a = 0; a < active.size(); ++a) {
      auto& hyp = seqs[active[a]];
      const auto& lp = lps[a];
      int pick;
      if (step == 0 && forced_first) {
        pick = *forced_first;
      } else {
        // temperature-adjusted ancestral draw over the full vocabulary
        double mx = lp[0];
        for (int v = 1; v < V; ++v) mx = std::max<double>(mx, lp[v]);
        std::vector<double> w(V);
        double z = 0;
        for (int v = 0; v < V; ++v) {
          w[v] = std::exp((double(lp[v]) - mx) / cfg.temperature);
          z += w[v];
        }
        double u = rng.uniform() * z;
        pick = V - 1;
        double acc = 0;
        for (int v = 0; v < V; ++v) {
          acc += w[v];
          if (u < acc) {
            pick = v;
            break;
          }
        }
      }
      hyp.ids.push_back(pick);
      hyp.log_prob += lp[pick];
      if (pick == eos)
        hyp.finished = true;
      else
        still.push_back(active[a]);
    }
    active = std::move(still);
  }

  if (all) *all = seqs;
  // keep the draw with the highest model log-prob
  std::size_t best = 0;
  for (std::size_t i = 1; i < seqs.size(); ++i)
    if (seqs[i].log_prob > seqs[best].log_prob) best = i;
  return seqs[best];
}

std::pair<Hypothesis, Hypothesis> combined_decode(
    SeqModel& m, const std::vector<int>& src_ids, const DecodeConfig& cfg,
    Rng& rng, std::optional<int> forced_first) {
  auto beam = beam_search(m, src_ids, cfg, forced_first);
  auto sampled = sample_decode(m, src_ids, cfg, rng, forced_first);
  return {beam, sampled};
}

double recompute_logprob(SeqModel& m, const std::vector<int>& src_ids,
                         const Hypothesis& hyp) {
  if (hyp.ids.size() < 2) return 0.0;
  auto enc = m.encode(src_ids);
  double total = 0.0;
  std::vector<int> prefix = {hyp.ids[0]};
  for (std::size_t t = 1; t < hyp.ids.size(); ++t) {
    auto lp = m.step_logprobs(enc, {prefix})[0];
    total += lp[hyp.ids[t]];
    prefix.push_back(hyp.ids[t]);
  }
  return total;
}

std::vector<std::vector<Hypothesis>> translate_corpus(
    SeqModel& m, const std::vector<std::vector<int>>& srcs,
    const DecodeConfig& cfg, std::optional<int> forced_first, int workers) {
  cfg.validate();
  if (workers < 1) workers = 1;
  std::vector<std::vector<Hypothesis>> out(srcs.size());
  std::exception_ptr err;

#pragma omp parallel for schedule(dynamic) num_threads(workers)
  for (std::size_t i = 0; i < srcs.size(); ++i) {
    try {
      Rng rng = Rng::substream(cfg.seed, i);
      switch (cfg.mode) {
        case DecodeMode::Greedy:
          out[i] = {greedy_decode(m, srcs[i], cfg, forced_first)};
          break;
        case DecodeMode::Beam:
          out[i] = {beam_search(m, srcs[i], cfg, forced_first)};
          break;
        case DecodeMode::Sample: {
          std::vector<Hypothesis> all;
          auto best = sample_decode(m, srcs[i], cfg, rng, forced_first, &all);
          out[i] = cfg.keep_all_samples ? all
                                        : std::vector<Hypothesis>{best};
          break;
        }
        case DecodeMode::Combined: {
          auto [b, s] = combined_decode(m, srcs[i], cfg, rng, forced_first);
          out[i] = {b, s};
          break;
        }
      }
    } catch (...) {
#pragma omp critical
      if (!err) err = std::current_exception();
    }
  }
  if (err) std::rethrow_exception(err);
  return out;
}

}  // namespace tnmt::decode
