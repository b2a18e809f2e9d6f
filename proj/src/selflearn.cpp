#include "tnmt/selflearn.hpp"

#include <filesystem>
#include <set>
#include <sstream>

#include "tnmt/eval.hpp"

namespace tnmt::selflearn {

namespace {

std::vector<int> encode_source(const tok::Vocabulary& vocab,
                               const std::vector<std::string>& tokens,
                               const corpus::LangTag& tgt_lang) {
  std::vector<std::string> tagged;
  tagged.reserve(tokens.size() + 1);
  tagged.push_back(tgt_lang.src_token());
  tagged.insert(tagged.end(), tokens.begin(), tokens.end());
  return vocab.encode(tagged);
}

// hypothesis ids -> tokens; reserved ids dropped, tags dropped on demand
std::vector<std::string> ids_to_tokens(const tok::Vocabulary& vocab,
                                       const std::vector<int>& ids,
                                       bool keep_tags) {
  std::vector<std::string> out;
  for (int id : ids) {
    if (id == tok::Vocabulary::kPad || id == tok::Vocabulary::kBos ||
        id == tok::Vocabulary::kEos || id == tok::Vocabulary::kUnk)
      continue;
    if (vocab.is_tag(id) && !keep_tags) continue;
    out.push_back(vocab.token(id));
  }
  return out;
}

std::vector<std::vector<std::string>> strip_tag_tokens(
    const std::vector<std::vector<std::string>>& lines) {
  std::vector<std::vector<std::string>> out;
  for (const auto& line : lines) {
    std::vector<std::string> s;
    for (const auto& t : line)
      if (!(t.size() >= 2 && t.front() == '<' && t.back() == '>'))
        s.push_back(t);
    out.push_back(std::move(s));
  }
  return out;
}

std::string fmt(double x) {
  std::ostringstream ss;
  ss << x;
  return ss.str();
}

}  // namespace

std::vector<train::Example> to_examples(const corpus::ParallelCorpus& corpus,
                                        const tok::Vocabulary& vocab) {
  std::vector<train::Example> out;
  out.reserve(corpus.examples.size());
  for (const auto& ex : corpus.examples)
    out.push_back({vocab.encode(ex.src_tokens), vocab.encode(ex.tgt_tokens)});
  return out;
}

corpus::ParallelCorpus synthesize_pairs(
    model::Transformer<float>& model, const tok::Vocabulary& vocab,
    corpus::TagMode mode,
    const std::vector<std::vector<std::string>>& mono,
    const corpus::LangTag& real_lang, const corpus::LangTag& synth_lang,
    const decode::DecodeConfig& dcfg, int round, int workers) {
  corpus::ParallelCorpus out;
  out.provenance = {true, round, decode::to_string(dcfg.mode)};
  if (mono.empty()) return out;

  auto cfg = dcfg;
  // synthetic sources must fit back into training: tag + tokens <= max_len
  cfg.max_len = std::min(cfg.max_len, model.cfg.max_len - 2);

  // translate real_lang -> synth_lang
  std::vector<std::vector<int>> srcs;
  srcs.reserve(mono.size());
  for (const auto& line : mono)
    srcs.push_back(encode_source(vocab, line, synth_lang));
  auto forced = decode::apply_tag_policy(cfg, mode == corpus::TagMode::Tagged,
                                         vocab.id(synth_lang.tgt_token()));

  decode::TransformerSeqModel sm(model, tok::Vocabulary::kBos,
                                 tok::Vocabulary::kEos);
  auto hyps = decode::translate_corpus(sm, srcs, cfg, forced, workers);

  for (std::size_t i = 0; i < mono.size(); ++i)
    for (const auto& h : hyps[i]) {
      auto synth_tokens = ids_to_tokens(vocab, h.ids, false);
      out.examples.push_back(corpus::tag_pair(synth_tokens, mono[i],
                                              synth_lang, real_lang, mode));
    }
  return out;
}

std::vector<std::vector<std::string>> decode_corpus_free(
    model::Transformer<float>& model, const tok::Vocabulary& vocab,
    corpus::TagMode mode,
    const std::vector<std::vector<std::string>>& src_lines,
    const corpus::LangTag& tgt_lang, int workers) {
  (void)mode;  // free policy: nothing forced even for tagged models
  decode::DecodeConfig cfg;
  cfg.mode = decode::DecodeMode::Greedy;
  cfg.max_len = model.cfg.max_len - 1;

  std::vector<std::vector<int>> srcs;
  srcs.reserve(src_lines.size());
  for (const auto& line : src_lines)
    srcs.push_back(encode_source(vocab, line, tgt_lang));

  decode::TransformerSeqModel sm(model, tok::Vocabulary::kBos,
                                 tok::Vocabulary::kEos);
  auto hyps = decode::translate_corpus(sm, srcs, cfg, std::nullopt, workers);

  std::vector<std::vector<std::string>> out;
  out.reserve(hyps.size());
  for (const auto& hs : hyps)
    out.push_back(ids_to_tokens(vocab, hs[0].ids, true));
  return out;
}

std::vector<std::vector<std::string>> round_report(
    const SelfLearnState& state) {
  std::vector<std::vector<std::string>> rows;
  for (const auto& m : state.table)
    rows.push_back({std::to_string(m.round), fmt(m.bleu_l1l2),
                    fmt(m.bleu_l2l1), fmt(m.tag_acc), fmt(m.distinct1),
                    fmt(m.distinct2)});
  return rows;
}

void write_round_report(const std::string& path,
                        const SelfLearnState& state) {
  eval::write_csv(path,
                  {"round", "bleu_l1l2", "bleu_l2l1", "tag_acc", "distinct1",
                   "distinct2"},
                  round_report(state));
}

SelfLearnState run_self_learning(model::Transformer<float>& model,
                                 train::Trainer& trainer,
                                 const tok::Vocabulary& vocab,
                                 corpus::TagMode mode,
                                 const corpus::ParallelCorpus& D,
                                 const ZeroShotEval& test,
                                 const SelfLearnConfig& cfg) {
  cfg.validate();
  SelfLearnState st;
  const bool tagged = mode == corpus::TagMode::Tagged;

  auto eval_round = [&](int round, const corpus::ParallelCorpus& s12,
                        const corpus::ParallelCorpus& s21) {
    RoundMetrics m;
    m.round = round;
    std::size_t tag_hits = 0, tag_total = 0;
    if (!test.l1_src.empty()) {
      auto hyp = decode_corpus_free(model, vocab, mode, test.l1_src, cfg.l2,
                                    cfg.workers);
      m.bleu_l1l2 =
          eval::corpus_bleu(strip_tag_tokens(hyp), test.l2_ref, 4, true).bleu;
      if (tagged)
        for (const auto& h : hyp) {
          ++tag_total;
          if (!h.empty() && h.front() == cfg.l2.tgt_token()) ++tag_hits;
        }
    }
    if (!test.l2_src.empty()) {
      auto hyp = decode_corpus_free(model, vocab, mode, test.l2_src, cfg.l1,
                                    cfg.workers);
      m.bleu_l2l1 =
          eval::corpus_bleu(strip_tag_tokens(hyp), test.l1_ref, 4, true).bleu;
      if (tagged)
        for (const auto& h : hyp) {
          ++tag_total;
          if (!h.empty() && h.front() == cfg.l1.tgt_token()) ++tag_hits;
        }
    }
    if (tag_total) m.tag_acc = double(tag_hits) / double(tag_total);

    std::vector<std::vector<std::string>> synth_srcs;
    for (const auto* s : {&s12, &s21})
      for (const auto& ex : s->examples)
        synth_srcs.push_back(corpus::strip_tags(ex).first);
    if (!synth_srcs.empty()) {
      m.distinct1 = eval::distinct_n(synth_srcs, 1);
      m.distinct2 = eval::distinct_n(synth_srcs, 2);
    }
    return m;
  };

  st.table.push_back(eval_round(0, {}, {}));

  for (int round = 1; round <= cfg.n_rounds; ++round) {
    try {
      bool found1 = false, found2 = false;
      auto mono_l1 = corpus::extract_monolingual(D, cfg.l1, &found1);
      auto mono_l2 = corpus::extract_monolingual(D, cfg.l2, &found2);
      if (!found1 || !found2)
        throw Error("data", "zero-shot language missing from the corpus");

      auto d12 = cfg.decode;
      d12.seed = cfg.seed * 0x9e3779b97f4a7c15ULL + std::uint64_t(round) * 2;
      auto d21 = d12;
      d21.seed += 1;

      // direction l1->l2: real side is mono L2, synthetic source is l1
      corpus::ParallelCorpus s12, s21;
      try {
        s12 = synthesize_pairs(model, vocab, mode, mono_l2, cfg.l2, cfg.l1,
                               d12, round, cfg.workers);
        s21 = synthesize_pairs(model, vocab, mode, mono_l1, cfg.l1, cfg.l2,
                               d21, round, cfg.workers);
      } catch (const Error& e) {
        throw Error(e.category(), std::string("synthesis: ") + e.what());
      }

      // real sides must be verbatim sentences of D
      std::set<std::vector<std::string>> real1(mono_l1.begin(), mono_l1.end());
      std::set<std::vector<std::string>> real2(mono_l2.begin(), mono_l2.end());
      for (const auto& ex : s12.examples)
        if (!real2.count(corpus::strip_tags(ex).second))
          throw Error("state", "synthetic pair with non-verbatim target side");
      for (const auto& ex : s21.examples)
        if (!real1.count(corpus::strip_tags(ex).second))
          throw Error("state", "synthetic pair with non-verbatim target side");

      corpus::ParallelCorpus synth;
      synth.provenance = s12.provenance;
      synth.examples = s12.examples;
      synth.examples.insert(synth.examples.end(), s21.examples.begin(),
                            s21.examples.end());

      auto mixed = corpus::mix_synthetic(D, synth);
      try {
        trainer.train_epochs(to_examples(mixed, vocab), cfg.epochs_per_round);
      } catch (const Error& e) {
        throw Error(e.category(), std::string("mixed training: ") + e.what());
      }

      st.round = round;
      st.synth_l1l2 = s12;
      st.synth_l2l1 = s21;
      st.table.push_back(eval_round(round, s12, s21));

      if (!cfg.artifacts_dir.empty()) {
        namespace fs = std::filesystem;
        fs::path dir =
            fs::path(cfg.artifacts_dir) / ("round_" + std::to_string(round));
        fs::create_directories(dir);
        trainer.snapshot().save((dir / "checkpoint").string());
        std::string pair = cfg.l1.code + cfg.l2.code;
        std::string rpair = cfg.l2.code + cfg.l1.code;
        corpus::save_prepared((dir / ("synthetic." + pair)).string(), s12,
                              mode, cfg.seed);
        corpus::save_prepared((dir / ("synthetic." + rpair)).string(), s21,
                              mode, cfg.seed);
        write_round_report((dir / "metrics.csv").string(), st);
      }
    } catch (const Error& e) {
      throw Error(e.category(),
                  "self-learning round " + std::to_string(round) +
                      " failed: " + e.what());
    }
  }
  return st;
}

}  // namespace tnmt::selflearn
