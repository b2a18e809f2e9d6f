// tnmt: tagged-multilingual NMT laboratory command line.
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>

#include "CLI11.hpp"
#include "json.hpp"
#include "tnmt/corpus.hpp"
#include "tnmt/decoder.hpp"
#include "tnmt/eval.hpp"
#include "tnmt/selflearn.hpp"
#include "tnmt/tokenizer.hpp"
#include "tnmt/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace tnmt;

namespace {

constexpr const char* kVersion = "tnmt 1.0.0";

// ---- config plumbing ----

json load_json_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw Error("io", "cannot read config file: " + path);
  try {
    json j;
    f >> j;
    return j;
  } catch (const json::exception& e) {
    throw Error("config", "invalid JSON in " + path + ": " + e.what());
  }
}

// dotted-path override "model.d_model=32"; value parsed as JSON when possible
void apply_override(json& cfg, const std::string& kv) {
  auto eq = kv.find('=');
  if (eq == std::string::npos)
    throw Error("config", "override must be key.path=value: " + kv);
  std::string path = kv.substr(0, eq), value = kv.substr(eq + 1);
  json* node = &cfg;
  std::size_t pos = 0;
  while (true) {
    auto dot = path.find('.', pos);
    std::string key = path.substr(pos, dot - pos);
    if (key.empty()) throw Error("config", "empty key in override: " + kv);
    if (dot == std::string::npos) {
      (*node)[key] = json::accept(value) ? json::parse(value) : json(value);
      return;
    }
    node = &(*node)[key];
    pos = dot + 1;
  }
}

model::ModelConfig model_cfg_from(const json& j) {
  model::ModelConfig c;
  c.n_layers = j.value("n_layers", c.n_layers);
  c.d_model = j.value("d_model", c.d_model);
  c.n_heads = j.value("n_heads", c.n_heads);
  c.d_ff = j.value("d_ff", c.d_ff);
  c.vocab_size = j.value("vocab_size", c.vocab_size);
  c.max_len = j.value("max_len", c.max_len);
  c.dropout = j.value("dropout", c.dropout);
  c.embedding_dropout = j.value("embedding_dropout", c.embedding_dropout);
  c.label_smoothing = j.value("label_smoothing", c.label_smoothing);
  c.tie_embeddings = j.value("tie_embeddings", c.tie_embeddings);
  return c;
}

json model_cfg_json(const model::ModelConfig& c) {
  return json{{"n_layers", c.n_layers},
              {"d_model", c.d_model},
              {"n_heads", c.n_heads},
              {"d_ff", c.d_ff},
              {"vocab_size", c.vocab_size},
              {"max_len", c.max_len},
              {"dropout", c.dropout},
              {"embedding_dropout", c.embedding_dropout},
              {"label_smoothing", c.label_smoothing},
              {"tie_embeddings", c.tie_embeddings}};
}

train::TrainConfig train_cfg_from(const json& j, bool toy_defaults) {
  auto c = toy_defaults ? train::TrainConfig::toy() : train::TrainConfig{};
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.warmup_steps = j.value("warmup_steps", c.warmup_steps);
  c.batch_size_tokens = j.value("batch_size_tokens", c.batch_size_tokens);
  c.patience = j.value("patience", c.patience);
  c.eval_interval_steps = j.value("eval_interval_steps", c.eval_interval_steps);
  c.max_steps = j.value("max_steps", c.max_steps);
  c.seed = j.value("seed", c.seed);
  c.beta1 = j.value("beta1", c.beta1);
  c.beta2 = j.value("beta2", c.beta2);
  c.eps = j.value("eps", c.eps);
  c.decode_max_len = j.value("decode_max_len", c.decode_max_len);
  return c;
}

json train_cfg_json(const train::TrainConfig& c) {
  return json{{"learning_rate", c.learning_rate},
              {"warmup_steps", c.warmup_steps},
              {"batch_size_tokens", c.batch_size_tokens},
              {"patience", c.patience},
              {"eval_interval_steps", c.eval_interval_steps},
              {"max_steps", c.max_steps},
              {"seed", c.seed},
              {"beta1", c.beta1},
              {"beta2", c.beta2},
              {"eps", c.eps},
              {"decode_max_len", c.decode_max_len}};
}

decode::DecodeConfig decode_cfg_from(const json& j) {
  decode::DecodeConfig c;
  c.mode = decode::decode_mode_from_string(j.value("mode", "beam"));
  c.beam_size = j.value("beam_size", c.beam_size);
  c.sample_size = j.value("sample_size", c.sample_size);
  c.temperature = j.value("temperature", c.temperature);
  c.max_len = j.value("max_len", c.max_len);
  c.length_norm = j.value("length_norm", c.length_norm);
  c.seed = j.value("seed", c.seed);
  std::string tp = j.value("tag_policy", "free");
  if (tp != "free" && tp != "force")
    throw Error("config", "tag_policy must be free|force");
  c.tag_policy =
      tp == "force" ? decode::TagPolicy::Force : decode::TagPolicy::Free;
  return c;
}

json decode_cfg_json(const decode::DecodeConfig& c) {
  return json{{"mode", decode::to_string(c.mode)},
              {"beam_size", c.beam_size},
              {"sample_size", c.sample_size},
              {"temperature", c.temperature},
              {"max_len", c.max_len},
              {"length_norm", c.length_norm},
              {"seed", c.seed},
              {"tag_policy",
               c.tag_policy == decode::TagPolicy::Force ? "force" : "free"}};
}

void write_run_metadata(const std::string& dir, const json& resolved,
                        std::uint64_t seed) {
  fs::create_directories(dir);
  json out = resolved;
  out["version"] = kVersion;
  out["seed"] = seed;
  std::ofstream f(fs::path(dir) / "config.json");
  if (!f) throw Error("io", "cannot write run config in " + dir);
  f << out.dump(2) << "\n";
}

// ---- shared I/O helpers ----

std::vector<std::vector<std::string>> read_token_lines(
    const std::string& path) {
  std::vector<std::vector<std::string>> out;
  for (const auto& line : corpus::read_lines(path))
    out.push_back(corpus::split_tokens(line));
  return out;
}

void write_token_lines(const std::string& path,
                       const std::vector<std::vector<std::string>>& lines) {
  std::vector<std::string> joined;
  joined.reserve(lines.size());
  for (const auto& l : lines) joined.push_back(corpus::join_tokens(l));
  corpus::write_lines(path, joined);
}

// "name:transform[:shift]" -> spec
corpus::ToyLanguageSpec parse_spec(const std::string& s,
                                   std::size_t vocab_size) {
  corpus::ToyLanguageSpec spec;
  spec.vocab_size = vocab_size;
  std::vector<std::string> parts;
  std::size_t pos = 0;
  while (true) {
    auto c = s.find(':', pos);
    parts.push_back(s.substr(pos, c - pos));
    if (c == std::string::npos) break;
    pos = c + 1;
  }
  if (parts.size() < 2)
    throw Error("config", "language spec must be name:transform[:shift]: " + s);
  spec.name = parts[0];
  spec.transform = corpus::toy_transform_from_string(parts[1]);
  if (parts.size() > 2) spec.shift = std::stoi(parts[2]);
  return spec;
}

model::Transformer<float> model_from_checkpoint(const train::Checkpoint& ck) {
  Rng init(0);
  model::Transformer<float> m(ck.model_cfg, init);
  auto params = m.named_params();
  if (params.size() != ck.params.size())
    throw Error("state", "checkpoint parameter manifest mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].first != ck.params[i].first ||
        params[i].second->size() != ck.params[i].second.size())
      throw Error("state", "checkpoint block mismatch: " + params[i].first);
    *params[i].second->data = ck.params[i].second;
  }
  m.dropout_rng().set_state(ck.dropout_rng);
  return m;
}

corpus::TagMode mode_from_string(const std::string& s) {
  return corpus::tag_mode_from_string(s);
}

// ---- subcommands ----

struct GenToyArgs {
  std::string out;
  std::uint64_t seed = 1;
  std::size_t n_train = 250, n_dev = 30, n_test = 40;
  std::size_t vocab_size = 32, min_len = 3, max_len = 9;
  std::vector<std::string> langs = {"aa:id_shift:7", "bb:pair_swap"};
  std::string pivot = "cc:identity";
};

void run_gen_toy(const GenToyArgs& a) {
  std::vector<corpus::ToyLanguageSpec> specs;
  for (const auto& s : a.langs) specs.push_back(parse_spec(s, a.vocab_size));
  auto pivot = parse_spec(a.pivot, a.vocab_size);
  auto task = corpus::gen_toy_task(specs, pivot, a.n_train, a.n_dev, a.n_test,
                                   a.seed, a.min_len, a.max_len);
  fs::create_directories(a.out);
  fs::path dir(a.out);

  auto dump_split = [&](const std::string& split, const corpus::ToySplit& sp,
                        const std::string& la, const std::string& lb) {
    write_token_lines((dir / (split + "." + la + "-" + lb + "." + la)).string(),
                      sp.a_lines);
    write_token_lines((dir / (split + "." + la + "-" + lb + "." + lb)).string(),
                      sp.b_lines);
  };
  for (std::size_t i = 0; i < specs.size(); ++i) {
    dump_split("train", task.train[i], specs[i].name, pivot.name);
    dump_split("dev", task.dev[i], specs[i].name, pivot.name);
    dump_split("test", task.test[i], specs[i].name, pivot.name);
  }
  for (const auto& [key, sp] : task.zero_shot_test)
    dump_split("zeroshot", sp, specs[key.first].name, specs[key.second].name);

  json manifest{{"seed", a.seed},
                {"vocab_size", a.vocab_size},
                {"n_train", a.n_train},
                {"n_dev", a.n_dev},
                {"n_test", a.n_test},
                {"pivot", a.pivot},
                {"langs", a.langs},
                {"version", kVersion}};
  std::ofstream f(dir / "task.json");
  f << manifest.dump(2) << "\n";
  std::cout << "wrote toy task to " << a.out << "\n";
}

void run_learn_bpe(const std::vector<std::string>& inputs, int merges,
                   const std::string& out) {
  std::map<std::string, long> counts;
  for (const auto& path : inputs)
    for (const auto& line : corpus::read_lines(path))
      for (const auto& w : tok::pretokenize(line)) counts[w]++;
  auto bpe = tok::bpe_learn(counts, merges);
  bpe.save(out);
  std::cout << "learned " << bpe.merges.size() << " merges -> " << out << "\n";
}

void run_apply_bpe(const std::string& model_path, const std::string& input,
                   const std::string& out) {
  auto bpe = tok::BpeModel::load(model_path);
  std::vector<std::string> lines;
  for (const auto& line : corpus::read_lines(input))
    lines.push_back(
        corpus::join_tokens(tok::segment_words(tok::pretokenize(line), bpe)));
  corpus::write_lines(out, lines);
}

struct PrepareArgs {
  std::vector<std::string> pairs;  // la:lb:fileA:fileB
  std::string mode = "tagged";
  std::uint64_t seed = 1;
  std::string out_corpus, out_vocab, bpe_model;
};

void run_prepare(const PrepareArgs& a) {
  auto mode = mode_from_string(a.mode);
  std::optional<tok::BpeModel> bpe;
  if (!a.bpe_model.empty()) bpe = tok::BpeModel::load(a.bpe_model);

  auto load_side = [&](const std::string& path) {
    std::vector<std::vector<std::string>> lines;
    for (const auto& raw : corpus::read_lines(path)) {
      auto words = tok::pretokenize(raw);
      lines.push_back(bpe ? tok::segment_words(words, *bpe) : words);
    }
    return lines;
  };

  std::vector<corpus::BilingualCorpus> bcs;
  std::vector<std::string> tags;
  for (const auto& p : a.pairs) {
    std::vector<std::string> parts;
    std::size_t pos = 0;
    while (parts.size() < 3) {
      auto c = p.find(':', pos);
      if (c == std::string::npos)
        throw Error("config", "pair must be la:lb:fileA:fileB: " + p);
      parts.push_back(p.substr(pos, c - pos));
      pos = c + 1;
    }
    parts.push_back(p.substr(pos));
    corpus::BilingualCorpus bc;
    bc.lang_a = corpus::make_lang_tag(parts[0]);
    bc.lang_b = corpus::make_lang_tag(parts[1]);
    bc.a_lines = load_side(parts[2]);
    bc.b_lines = load_side(parts[3]);
    for (const auto& t : {bc.lang_a, bc.lang_b}) {
      tags.push_back(t.src_token());
      tags.push_back(t.tgt_token());
    }
    bcs.push_back(std::move(bc));
  }
  if (bcs.empty()) throw Error("config", "prepare needs at least one --pair");

  Rng rng(a.seed);
  auto mixed = corpus::build_mixed(bcs, mode, rng);

  std::vector<std::string> words;
  for (const auto& bc : bcs)
    for (const auto* side : {&bc.a_lines, &bc.b_lines})
      for (const auto& line : *side)
        for (const auto& w : line) words.push_back(w);
  std::sort(tags.begin(), tags.end());
  tags.erase(std::unique(tags.begin(), tags.end()), tags.end());
  auto vocab = tok::Vocabulary::build(tags, words);

  corpus::save_prepared(a.out_corpus, mixed, mode, a.seed);
  vocab.save(a.out_vocab);
  std::cout << "prepared " << mixed.examples.size() << " examples, vocab "
            << vocab.size() << "\n";
}

struct TrainArgs {
  std::string config, data, dev, vocab_path, out, resume;
  std::vector<std::string> overrides;
  std::uint64_t seed = 1;
};

void run_train(const TrainArgs& a) {
  json cfg = a.config.empty() ? json::object() : load_json_file(a.config);
  for (const auto& kv : a.overrides) apply_override(cfg, kv);

  auto vocab = tok::Vocabulary::load(a.vocab_path);
  auto data = corpus::load_prepared(a.data);
  auto dev = corpus::load_prepared(a.dev);

  auto mcfg = model_cfg_from(cfg.value("model", json::object()));
  mcfg.vocab_size = vocab.size();
  auto tcfg = train_cfg_from(cfg.value("train", json::object()), true);
  tcfg.seed = cfg.value("seed", a.seed);
  tcfg.decode_max_len = std::min(tcfg.decode_max_len, mcfg.max_len - 1);

  json resolved{{"model", model_cfg_json(mcfg)},
                {"train", train_cfg_json(tcfg)},
                {"data", a.data},
                {"dev", a.dev},
                {"vocab", a.vocab_path}};
  write_run_metadata(a.out, resolved, tcfg.seed);

  Rng init(tcfg.seed);
  model::Transformer<float> m(mcfg, init);
  train::Trainer tr(m, tcfg);
  if (!a.resume.empty()) {
    tr.restore(train::Checkpoint::load(a.resume));
    tr.config() = tcfg;  // resume keeps state, not the old run's schedule caps
  }

  auto best = tr.train(selflearn::to_examples(data, vocab),
                       selflearn::to_examples(dev, vocab),
                       (fs::path(a.out) / "train_log.jsonl").string());
  best.save((fs::path(a.out) / "checkpoint").string());
  std::cout << "best dev BLEU " << best.best_dev << " at step " << best.step
            << "; checkpoint in " << a.out << "\n";
}

struct TranslateArgs {
  std::string checkpoint, vocab_path, input, out, tgt_lang;
  std::string mode = "beam", tag_policy = "free", corpus_mode = "tagged";
  int beam_size = 10, sample_size = 5, max_len = 0, workers = 1;
  double temperature = 1.0;
  std::uint64_t seed = 0;
  bool keep_tags = false;
};

void run_translate(const TranslateArgs& a) {
  auto ck = train::Checkpoint::load(a.checkpoint);
  auto m = model_from_checkpoint(ck);
  auto vocab = tok::Vocabulary::load(a.vocab_path);
  auto tag = corpus::make_lang_tag(a.tgt_lang);
  auto cmode = mode_from_string(a.corpus_mode);

  decode::DecodeConfig dcfg;
  dcfg.mode = decode::decode_mode_from_string(a.mode);
  dcfg.beam_size = a.beam_size;
  dcfg.sample_size = a.sample_size;
  dcfg.temperature = a.temperature;
  dcfg.max_len = a.max_len > 0 ? a.max_len : m.cfg.max_len - 1;
  dcfg.seed = a.seed;
  dcfg.tag_policy = a.tag_policy == "force" ? decode::TagPolicy::Force
                                            : decode::TagPolicy::Free;

  auto lines = read_token_lines(a.input);
  std::vector<std::vector<int>> srcs;
  for (const auto& line : lines) {
    std::vector<std::string> tagged = {tag.src_token()};
    tagged.insert(tagged.end(), line.begin(), line.end());
    srcs.push_back(vocab.encode(tagged));
  }
  auto forced =
      decode::apply_tag_policy(dcfg, cmode == corpus::TagMode::Tagged,
                               vocab.id(tag.tgt_token()));

  decode::TransformerSeqModel sm(m, tok::Vocabulary::kBos,
                                 tok::Vocabulary::kEos);
  auto hyps = decode::translate_corpus(sm, srcs, dcfg, forced, a.workers);

  std::vector<std::vector<std::string>> out_lines;
  for (const auto& hs : hyps) {
    std::vector<std::string> toks;
    for (int id : hs[0].ids) {
      if (id < 4) continue;
      if (vocab.is_tag(id) && !a.keep_tags) continue;
      toks.push_back(vocab.token(id));
    }
    out_lines.push_back(std::move(toks));
  }
  write_token_lines(a.out, out_lines);
  std::cout << "translated " << out_lines.size() << " lines -> " << a.out
            << "\n";
}

struct SelfLearnArgs {
  std::string config, data, checkpoint, vocab_path, out;
  std::string l1, l2, corpus_mode = "tagged";
  std::string test_l1_src, test_l2_ref, test_l2_src, test_l1_ref;
  std::vector<std::string> overrides;
  int rounds = 3, epochs = 3, workers = 1;
  std::uint64_t seed = 1;
};

void run_selflearn_cmd(const SelfLearnArgs& a) {
  json cfg = a.config.empty() ? json::object() : load_json_file(a.config);
  for (const auto& kv : a.overrides) apply_override(cfg, kv);

  auto vocab = tok::Vocabulary::load(a.vocab_path);
  auto D = corpus::load_prepared(a.data);
  auto ck = train::Checkpoint::load(a.checkpoint);
  auto m = model_from_checkpoint(ck);
  auto cmode = mode_from_string(a.corpus_mode);

  train::Trainer tr(m, ck.train_cfg);
  tr.restore(ck);

  selflearn::SelfLearnConfig sl;
  sl.l1 = corpus::make_lang_tag(a.l1);
  sl.l2 = corpus::make_lang_tag(a.l2);
  sl.n_rounds = cfg.value("n_rounds", a.rounds);
  sl.epochs_per_round = cfg.value("epochs_per_round", a.epochs);
  sl.decode = decode_cfg_from(cfg.value("decode", json::object()));
  if (!cfg.contains("decode")) sl.decode.mode = decode::DecodeMode::Sample;
  sl.decode.tag_policy = decode::TagPolicy::Force;
  sl.seed = cfg.value("seed", a.seed);
  sl.workers = a.workers;
  sl.artifacts_dir = a.out;

  selflearn::ZeroShotEval test;
  if (!a.test_l1_src.empty()) {
    test.l1_src = read_token_lines(a.test_l1_src);
    test.l2_ref = read_token_lines(a.test_l2_ref);
  }
  if (!a.test_l2_src.empty()) {
    test.l2_src = read_token_lines(a.test_l2_src);
    test.l1_ref = read_token_lines(a.test_l1_ref);
  }

  json resolved{{"selflearn",
                 {{"n_rounds", sl.n_rounds},
                  {"epochs_per_round", sl.epochs_per_round},
                  {"l1", a.l1},
                  {"l2", a.l2},
                  {"decode", decode_cfg_json(sl.decode)},
                  {"mode", a.corpus_mode}}},
                {"data", a.data},
                {"checkpoint", a.checkpoint}};
  write_run_metadata(a.out, resolved, sl.seed);

  auto st = selflearn::run_self_learning(m, tr, vocab, cmode, D, test, sl);
  selflearn::write_round_report((fs::path(a.out) / "metrics.csv").string(),
                                st);
  tr.snapshot().save((fs::path(a.out) / "checkpoint").string());
  for (const auto& row : selflearn::round_report(st)) {
    std::cout << "round " << row[0] << ": bleu " << row[1] << "/" << row[2]
              << " tag_acc " << row[3] << " distinct2 " << row[5] << "\n";
  }
}

struct EvaluateArgs {
  std::string hyp, ref, csv, tag_lang, toy_lang;
  std::size_t toy_vocab = 32;
  bool smooth = false, tagged = false;
  int max_order = 4;
};

void run_evaluate(const EvaluateArgs& a) {
  auto hyps = read_token_lines(a.hyp);
  auto refs = read_token_lines(a.ref);
  auto rep = eval::corpus_bleu(hyps, refs, a.max_order, a.smooth);
  std::cout << rep.summary() << "\n";

  std::optional<eval::FidelityReport> fid;
  if (!a.tag_lang.empty()) {
    auto lang = corpus::make_lang_tag(a.tag_lang);
    std::optional<corpus::ToyLanguageSpec> spec;
    if (!a.toy_lang.empty()) spec = parse_spec(a.toy_lang, a.toy_vocab);
    fid = eval::fidelity(hyps, lang, a.tagged, spec ? &*spec : nullptr);
    if (fid->tag_accuracy)
      std::cout << "tag_accuracy = " << *fid->tag_accuracy << "\n";
    if (fid->lang_id_rate)
      std::cout << "lang_id_rate = " << *fid->lang_id_rate << "\n";
  }
  std::cout << "distinct1 = " << eval::distinct_n(hyps, 1)
            << "  distinct2 = " << eval::distinct_n(hyps, 2) << "\n";

  if (!a.csv.empty()) {
    std::vector<std::string> header = {"bleu", "p1", "p2", "p3", "p4",
                                       "brevity_penalty", "hyp_len",
                                       "ref_len", "smoothed"};
    std::vector<std::string> row = {
        std::to_string(rep.bleu),          std::to_string(rep.precisions[0]),
        std::to_string(rep.precisions[1]), std::to_string(rep.precisions[2]),
        std::to_string(rep.precisions[3]), std::to_string(rep.brevity_penalty),
        std::to_string(rep.hyp_len),       std::to_string(rep.ref_len),
        rep.smoothed ? "1" : "0"};
    if (fid) {
      header.push_back("tag_accuracy");
      row.push_back(fid->tag_accuracy ? std::to_string(*fid->tag_accuracy)
                                      : "");
      header.push_back("lang_id_rate");
      row.push_back(fid->lang_id_rate ? std::to_string(*fid->lang_id_rate)
                                      : "");
    }
    eval::write_csv(a.csv, header, {row});
  }
}

// ---- reproduce-toy: the end-to-end scripted toy experiment ----

struct ReproduceArgs {
  std::string out;
  std::uint64_t seed = 1;
  int rounds = 3;
  std::string mode = "sample";
  int workers = 1;
};

void run_reproduce_toy(const ReproduceArgs& a) {
  fs::create_directories(a.out);
  fs::path dir(a.out);

  // toy triangle: aa <-> cc and bb <-> cc supervised, aa <-> bb zero-shot
  corpus::ToyLanguageSpec sa{"aa", 32, corpus::ToyTransform::IdShift, 7};
  corpus::ToyLanguageSpec sb{"bb", 32, corpus::ToyTransform::PairSwap};
  corpus::ToyLanguageSpec sc{"cc", 32, corpus::ToyTransform::Identity};
  auto task = corpus::gen_toy_task({sa, sb}, sc, 250, 24, 40, a.seed, 3, 9);

  std::vector<std::string> tags, words;
  for (const auto& s : {sa, sb, sc}) {
    tags.push_back(s.tag().src_token());
    tags.push_back(s.tag().tgt_token());
    for (std::size_t i = 0; i < s.vocab_size; ++i)
      words.push_back(s.name + "_t" + std::to_string(i));
  }
  auto vocab = tok::Vocabulary::build(tags, words);
  vocab.save((dir / "vocab.txt").string());

  auto to_bc = [&](const corpus::ToySplit& sp,
                   const corpus::ToyLanguageSpec& la) {
    corpus::BilingualCorpus bc;
    bc.lang_a = la.tag();
    bc.lang_b = sc.tag();
    bc.a_lines = sp.a_lines;
    bc.b_lines = sp.b_lines;
    return bc;
  };
  Rng mix_rng(a.seed);
  auto D = corpus::build_mixed({to_bc(task.train[0], sa),
                                to_bc(task.train[1], sb)},
                               corpus::TagMode::Tagged, mix_rng);
  auto dev = corpus::build_mixed({to_bc(task.dev[0], sa),
                                  to_bc(task.dev[1], sb)},
                                 corpus::TagMode::Tagged, mix_rng);
  corpus::save_prepared((dir / "corpus.tsv").string(), D,
                        corpus::TagMode::Tagged, a.seed);

  model::ModelConfig mcfg;
  mcfg.n_layers = 2;
  mcfg.d_model = 32;
  mcfg.n_heads = 2;
  mcfg.d_ff = 128;
  mcfg.vocab_size = vocab.size();
  mcfg.max_len = 16;
  mcfg.dropout = 0.1;
  mcfg.embedding_dropout = 0.1;

  auto tcfg = train::TrainConfig::toy();
  tcfg.learning_rate = 0.003;
  tcfg.warmup_steps = 300;
  tcfg.eval_interval_steps = 300;
  tcfg.patience = 6;
  tcfg.max_steps = 3600;
  tcfg.seed = a.seed;
  tcfg.decode_max_len = 12;

  json resolved{{"model", model_cfg_json(mcfg)},
                {"train", train_cfg_json(tcfg)},
                {"rounds", a.rounds},
                {"mode", a.mode}};
  write_run_metadata(a.out, resolved, a.seed);

  Rng init(a.seed);
  model::Transformer<float> m(mcfg, init);
  train::Trainer tr(m, tcfg);
  std::cout << "training base model...\n";
  auto best = tr.train(selflearn::to_examples(D, vocab),
                       selflearn::to_examples(dev, vocab),
                       (dir / "train_log.jsonl").string());
  best.save((dir / "base_checkpoint").string());
  tr.restore(best);
  std::cout << "base model: dev BLEU " << best.best_dev << " at step "
            << best.step << "\n";

  selflearn::SelfLearnConfig sl;
  sl.l1 = sa.tag();
  sl.l2 = sb.tag();
  sl.n_rounds = a.rounds;
  sl.epochs_per_round = 3;
  sl.decode.mode = decode::decode_mode_from_string(a.mode);
  sl.decode.beam_size = 10;
  sl.decode.sample_size = 5;
  sl.decode.max_len = 12;
  sl.decode.tag_policy = decode::TagPolicy::Force;
  sl.seed = a.seed;
  sl.workers = a.workers;
  sl.artifacts_dir = (dir / "rounds").string();

  const auto& zs = task.zero_shot_test.at({0, 1});
  selflearn::ZeroShotEval test;
  test.l1_src = zs.a_lines;
  test.l2_ref = zs.b_lines;
  test.l2_src = zs.b_lines;
  test.l1_ref = zs.a_lines;

  std::cout << "running " << a.rounds << " self-learning rounds ("
            << a.mode << ")...\n";
  auto st = selflearn::run_self_learning(m, tr, vocab, corpus::TagMode::Tagged,
                                         D, test, sl);
  selflearn::write_round_report((dir / "metrics.csv").string(), st);
  tr.snapshot().save((dir / "final_checkpoint").string());

  // zero-shot fidelity of the final model (free policy)
  auto hyp = selflearn::decode_corpus_free(m, vocab, corpus::TagMode::Tagged,
                                           test.l1_src, sb.tag(), a.workers);
  auto fid = eval::fidelity(hyp, sb.tag(), true, &sb);
  eval::write_csv((dir / "fidelity.csv").string(),
                  {"tag_accuracy", "lang_id_rate"},
                  {{fid.tag_accuracy ? std::to_string(*fid.tag_accuracy) : "",
                    fid.lang_id_rate ? std::to_string(*fid.lang_id_rate)
                                     : ""}});

  for (const auto& row : selflearn::round_report(st))
    std::cout << "round " << row[0] << ": zero-shot BLEU " << row[1] << " / "
              << row[2] << " tag_acc " << row[3] << "\n";
  std::cout << "artifacts in " << a.out << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"tagged-multilingual NMT laboratory"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  GenToyArgs gt;
  auto* c_gt = app.add_subcommand("gen-toy", "generate a synthetic toy task");
  c_gt->add_option("--out", gt.out)->required();
  c_gt->add_option("--seed", gt.seed);
  c_gt->add_option("--n-train", gt.n_train);
  c_gt->add_option("--n-dev", gt.n_dev);
  c_gt->add_option("--n-test", gt.n_test);
  c_gt->add_option("--vocab-size", gt.vocab_size);
  c_gt->add_option("--min-len", gt.min_len);
  c_gt->add_option("--max-len", gt.max_len);
  c_gt->add_option("--lang", gt.langs, "name:transform[:shift], repeatable");
  c_gt->add_option("--pivot", gt.pivot);

  std::vector<std::string> lb_inputs;
  int lb_merges = 8000;
  std::string lb_out;
  auto* c_lb = app.add_subcommand("learn-bpe", "learn BPE merges");
  c_lb->add_option("--input", lb_inputs)->required();
  c_lb->add_option("--merges", lb_merges);
  c_lb->add_option("--out", lb_out)->required();

  std::string ab_model, ab_input, ab_out;
  auto* c_ab = app.add_subcommand("apply-bpe", "segment text with BPE");
  c_ab->add_option("--model", ab_model)->required();
  c_ab->add_option("--input", ab_input)->required();
  c_ab->add_option("--out", ab_out)->required();

  PrepareArgs pr;
  auto* c_pr = app.add_subcommand("prepare", "tag + mix a multilingual corpus");
  c_pr->add_option("--pair", pr.pairs, "la:lb:fileA:fileB, repeatable")
      ->required();
  c_pr->add_option("--mode", pr.mode, "tagged|source_only");
  c_pr->add_option("--seed", pr.seed);
  c_pr->add_option("--out-corpus", pr.out_corpus)->required();
  c_pr->add_option("--out-vocab", pr.out_vocab)->required();
  c_pr->add_option("--bpe", pr.bpe_model);

  TrainArgs ta;
  auto* c_tr = app.add_subcommand("train", "train a model");
  c_tr->add_option("--config", ta.config);
  c_tr->add_option("--set", ta.overrides, "dotted-path override key=value");
  c_tr->add_option("--data", ta.data)->required();
  c_tr->add_option("--dev", ta.dev)->required();
  c_tr->add_option("--vocab", ta.vocab_path)->required();
  c_tr->add_option("--out", ta.out)->required();
  c_tr->add_option("--resume", ta.resume);
  c_tr->add_option("--seed", ta.seed);

  TranslateArgs tl;
  auto* c_tl = app.add_subcommand("translate", "decode a file");
  c_tl->add_option("--checkpoint", tl.checkpoint)->required();
  c_tl->add_option("--vocab", tl.vocab_path)->required();
  c_tl->add_option("--input", tl.input)->required();
  c_tl->add_option("--out", tl.out)->required();
  c_tl->add_option("--tgt-lang", tl.tgt_lang)->required();
  c_tl->add_option("--mode", tl.mode, "beam|sample|greedy|combined");
  c_tl->add_option("--tag-policy", tl.tag_policy, "force|free");
  c_tl->add_option("--corpus-mode", tl.corpus_mode, "tagged|source_only");
  c_tl->add_option("--beam-size", tl.beam_size);
  c_tl->add_option("--sample-size", tl.sample_size);
  c_tl->add_option("--temperature", tl.temperature);
  c_tl->add_option("--max-len", tl.max_len);
  c_tl->add_option("--seed", tl.seed);
  c_tl->add_option("--workers", tl.workers);
  c_tl->add_flag("--keep-tags", tl.keep_tags);

  SelfLearnArgs sa;
  auto* c_sl = app.add_subcommand("selflearn", "train-infer-train loop");
  c_sl->add_option("--config", sa.config);
  c_sl->add_option("--set", sa.overrides);
  c_sl->add_option("--data", sa.data)->required();
  c_sl->add_option("--checkpoint", sa.checkpoint)->required();
  c_sl->add_option("--vocab", sa.vocab_path)->required();
  c_sl->add_option("--out", sa.out)->required();
  c_sl->add_option("--l1", sa.l1)->required();
  c_sl->add_option("--l2", sa.l2)->required();
  c_sl->add_option("--corpus-mode", sa.corpus_mode);
  c_sl->add_option("--test-l1-src", sa.test_l1_src);
  c_sl->add_option("--test-l2-ref", sa.test_l2_ref);
  c_sl->add_option("--test-l2-src", sa.test_l2_src);
  c_sl->add_option("--test-l1-ref", sa.test_l1_ref);
  c_sl->add_option("--rounds", sa.rounds);
  c_sl->add_option("--epochs", sa.epochs);
  c_sl->add_option("--seed", sa.seed);
  c_sl->add_option("--workers", sa.workers);

  EvaluateArgs ev;
  auto* c_ev = app.add_subcommand("evaluate", "score hypotheses");
  c_ev->add_option("--hyp", ev.hyp)->required();
  c_ev->add_option("--ref", ev.ref)->required();
  c_ev->add_option("--csv", ev.csv);
  c_ev->add_option("--max-order", ev.max_order);
  c_ev->add_flag("--smooth", ev.smooth);
  c_ev->add_option("--tag-lang", ev.tag_lang);
  c_ev->add_flag("--tagged", ev.tagged);
  c_ev->add_option("--toy-lang", ev.toy_lang, "name:transform[:shift]");
  c_ev->add_option("--toy-vocab-size", ev.toy_vocab);

  ReproduceArgs rp;
  auto* c_rp =
      app.add_subcommand("reproduce-toy", "end-to-end toy experiment");
  c_rp->add_option("--out", rp.out)->required();
  c_rp->add_option("--seed", rp.seed);
  c_rp->add_option("--rounds", rp.rounds);
  c_rp->add_option("--mode", rp.mode, "beam|sample|combined");
  c_rp->add_option("--workers", rp.workers);

  CLI11_PARSE(app, argc, argv);

  try {
    if (c_gt->parsed()) run_gen_toy(gt);
    if (c_lb->parsed()) run_learn_bpe(lb_inputs, lb_merges, lb_out);
    if (c_ab->parsed()) run_apply_bpe(ab_model, ab_input, ab_out);
    if (c_pr->parsed()) run_prepare(pr);
    if (c_tr->parsed()) run_train(ta);
    if (c_tl->parsed()) run_translate(tl);
    if (c_sl->parsed()) run_selflearn_cmd(sa);
    if (c_ev->parsed()) run_evaluate(ev);
    if (c_rp->parsed()) run_reproduce_toy(rp);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: internal: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
