#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "tnmt/eval.hpp"
#include "tnmt/selflearn.hpp"

using namespace tnmt;
using namespace tnmt::selflearn;

namespace {

struct Setup {
  corpus::ToyLanguageSpec spec_a{"aa", 12, corpus::ToyTransform::Identity};
  corpus::ToyLanguageSpec spec_b{"bb", 12, corpus::ToyTransform::IdShift, 5};
  tok::Vocabulary vocab;
  corpus::ParallelCorpus D;
  ZeroShotEval test;
  model::ModelConfig mcfg;

  explicit Setup(std::uint64_t seed = 1) {
    std::vector<std::string> words;
    for (std::size_t i = 0; i < spec_a.vocab_size; ++i) {
      words.push_back("aa_t" + std::to_string(i));
      words.push_back("bb_t" + std::to_string(i));
    }
    vocab = tok::Vocabulary::build({"<2aa>", "<2bb>", "<aa>", "<bb>"}, words);

    Rng rng(seed);
    corpus::BilingualCorpus bc;
    bc.lang_a = spec_a.tag();
    bc.lang_b = spec_b.tag();
    for (int i = 0; i < 10; ++i) {
      std::vector<int> latent;
      std::size_t len = 3 + rng.below(4);
      for (std::size_t j = 0; j < len; ++j)
        latent.push_back(int(rng.below(spec_a.vocab_size)));
      bc.a_lines.push_back(spec_a.render(latent));
      bc.b_lines.push_back(spec_b.render(latent));
    }
    D = corpus::build_mixed({bc}, corpus::TagMode::Tagged, rng);

    for (int i = 0; i < 4; ++i) {
      std::vector<int> latent = {int(rng.below(12)), int(rng.below(12)),
                                 int(rng.below(12))};
      test.l1_src.push_back(spec_a.render(latent));
      test.l2_ref.push_back(spec_b.render(latent));
      test.l2_src.push_back(spec_b.render(latent));
      test.l1_ref.push_back(spec_a.render(latent));
    }

    mcfg.n_layers = 1;
    mcfg.d_model = 32;
    mcfg.n_heads = 2;
    mcfg.d_ff = 64;
    mcfg.vocab_size = vocab.size();
    mcfg.max_len = 16;
    mcfg.dropout = 0.1;
    mcfg.embedding_dropout = 0.1;
  }

  model::Transformer<float> make_model(std::uint64_t seed = 42) {
    Rng r(seed);
    return model::Transformer<float>(mcfg, r);
  }

  train::TrainConfig tcfg() {
    auto c = train::TrainConfig::toy();
    c.warmup_steps = 50;
    c.learning_rate = 0.002;
    c.decode_max_len = 12;
    return c;
  }

  SelfLearnConfig slcfg() {
    SelfLearnConfig c;
    c.l1 = spec_a.tag();
    c.l2 = spec_b.tag();
    c.n_rounds = 1;
    c.epochs_per_round = 1;
    c.decode.mode = decode::DecodeMode::Beam;
    c.decode.beam_size = 2;
    c.decode.sample_size = 2;
    c.decode.max_len = 12;
    c.seed = 9;
    return c;
  }
};

bool has_tag_token(const std::vector<std::string>& tokens) {
  for (const auto& t : tokens)
    if (t.size() >= 2 && t.front() == '<' && t.back() == '>') return true;
  return false;
}

}  // namespace

TEST_CASE("config validation") {
  Setup s;
  auto cfg = s.slcfg();
  cfg.n_rounds = -1;
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg = s.slcfg();
  cfg.epochs_per_round = 0;
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg = s.slcfg();
  cfg.l2 = cfg.l1;
  CHECK_THROWS_AS(cfg.validate(), Error);
}

TEST_CASE("synthesis: sizes, verbatim targets, provenance, tag stripping") {
  Setup s;
  auto m = s.make_model();
  bool found = false;
  auto mono_b = corpus::extract_monolingual(s.D, s.spec_b.tag(), &found);
  REQUIRE(found);
  REQUIRE(!mono_b.empty());

  decode::DecodeConfig dcfg;
  dcfg.mode = decode::DecodeMode::Beam;
  dcfg.beam_size = 2;
  dcfg.max_len = 12;
  auto synth = synthesize_pairs(m, s.vocab, corpus::TagMode::Tagged, mono_b,
                                s.spec_b.tag(), s.spec_a.tag(), dcfg, 1);
  CHECK(synth.examples.size() == mono_b.size());
  CHECK(synth.provenance.synthetic);
  CHECK(synth.provenance.round == 1);
  CHECK(synth.provenance.decode_mode == "beam");

  for (std::size_t i = 0; i < synth.examples.size(); ++i) {
    auto [src, tgt] = corpus::strip_tags(synth.examples[i]);
    CHECK(tgt == mono_b[i]);          // real side verbatim
    CHECK(!has_tag_token(src));       // no tags inside the synthetic text
    CHECK(synth.examples[i].src_lang == s.spec_a.tag());
    CHECK(synth.examples[i].tgt_lang == s.spec_b.tag());
  }

  // beam synthesis is deterministic
  auto again = synthesize_pairs(m, s.vocab, corpus::TagMode::Tagged, mono_b,
                                s.spec_b.tag(), s.spec_a.tag(), dcfg, 1);
  REQUIRE(again.examples.size() == synth.examples.size());
  for (std::size_t i = 0; i < again.examples.size(); ++i)
    CHECK(again.examples[i].src_tokens == synth.examples[i].src_tokens);

  // combined mode doubles the corpus
  dcfg.mode = decode::DecodeMode::Combined;
  auto comb = synthesize_pairs(m, s.vocab, corpus::TagMode::Tagged, mono_b,
                               s.spec_b.tag(), s.spec_a.tag(), dcfg, 1);
  CHECK(comb.examples.size() == 2 * mono_b.size());

  // empty monolingual input: empty corpus, no failure
  auto empty = synthesize_pairs(m, s.vocab, corpus::TagMode::Tagged, {},
                                s.spec_b.tag(), s.spec_a.tag(), dcfg, 1);
  CHECK(empty.examples.empty());
}

TEST_CASE("sampled synthesis varies with the seed and is at least as diverse "
          "as beam") {
  Setup s;
  auto m = s.make_model();
  bool found = false;
  auto mono_b = corpus::extract_monolingual(s.D, s.spec_b.tag(), &found);

  decode::DecodeConfig dcfg;
  dcfg.max_len = 12;
  dcfg.mode = decode::DecodeMode::Beam;
  dcfg.beam_size = 2;
  auto beam = synthesize_pairs(m, s.vocab, corpus::TagMode::Tagged, mono_b,
                               s.spec_b.tag(), s.spec_a.tag(), dcfg, 1);

  dcfg.mode = decode::DecodeMode::Sample;
  dcfg.sample_size = 2;
  dcfg.seed = 1;
  auto s1 = synthesize_pairs(m, s.vocab, corpus::TagMode::Tagged, mono_b,
                             s.spec_b.tag(), s.spec_a.tag(), dcfg, 1);
  dcfg.seed = 2;
  auto s2 = synthesize_pairs(m, s.vocab, corpus::TagMode::Tagged, mono_b,
                             s.spec_b.tag(), s.spec_a.tag(), dcfg, 1);

  bool differ = false;
  for (std::size_t i = 0; i < s1.examples.size(); ++i)
    if (s1.examples[i].src_tokens != s2.examples[i].src_tokens) differ = true;
  CHECK(differ);

  auto srcs_of = [](const corpus::ParallelCorpus& c) {
    std::vector<std::vector<std::string>> out;
    for (const auto& ex : c.examples)
      out.push_back(corpus::strip_tags(ex).first);
    return out;
  };
  CHECK(eval::distinct_n(srcs_of(s1), 2) >=
        eval::distinct_n(srcs_of(beam), 2));
}

TEST_CASE("n_rounds=0 leaves only the baseline row") {
  Setup s;
  auto m = s.make_model();
  train::Trainer tr(m, s.tcfg());
  auto cfg = s.slcfg();
  cfg.n_rounds = 0;
  auto st = run_self_learning(m, tr, s.vocab, corpus::TagMode::Tagged, s.D,
                              s.test, cfg);
  CHECK(st.table.size() == 1);
  CHECK(st.table[0].round == 0);
  CHECK(st.round == 0);
  CHECK(tr.step() == 0);
}

TEST_CASE("one round: table shape, synthetic sizes, reproducibility") {
  Setup s;
  auto run = [&]() {
    auto m = s.make_model();
    train::Trainer tr(m, s.tcfg());
    return run_self_learning(m, tr, s.vocab, corpus::TagMode::Tagged, s.D,
                             s.test, s.slcfg());
  };
  auto st = run();
  REQUIRE(st.table.size() == 2);
  CHECK(st.table[0].round == 0);
  CHECK(st.table[1].round == 1);
  CHECK(st.round == 1);

  bool f = false;
  auto mono_a = corpus::extract_monolingual(s.D, s.spec_a.tag(), &f);
  auto mono_b = corpus::extract_monolingual(s.D, s.spec_b.tag(), &f);
  CHECK(st.synth_l1l2.examples.size() == mono_b.size());
  CHECK(st.synth_l2l1.examples.size() == mono_a.size());
  CHECK(st.table[1].distinct2 > 0.0);

  // fixed seed: the whole loop reproduces the metric table exactly
  auto st2 = run();
  REQUIRE(st2.table.size() == st.table.size());
  for (std::size_t i = 0; i < st.table.size(); ++i) {
    CHECK(st2.table[i].bleu_l1l2 == st.table[i].bleu_l1l2);
    CHECK(st2.table[i].bleu_l2l1 == st.table[i].bleu_l2l1);
    CHECK(st2.table[i].tag_acc == st.table[i].tag_acc);
    CHECK(st2.table[i].distinct1 == st.table[i].distinct1);
    CHECK(st2.table[i].distinct2 == st.table[i].distinct2);
  }
}

TEST_CASE("round artifacts land in the documented layout") {
  namespace fs = std::filesystem;
  Setup s;
  auto m = s.make_model();
  train::Trainer tr(m, s.tcfg());
  auto cfg = s.slcfg();
  cfg.artifacts_dir = "sl_artifacts";
  auto st = run_self_learning(m, tr, s.vocab, corpus::TagMode::Tagged, s.D,
                              s.test, cfg);

  CHECK(fs::exists("sl_artifacts/round_1/checkpoint"));
  CHECK(fs::exists("sl_artifacts/round_1/synthetic.aabb"));
  CHECK(fs::exists("sl_artifacts/round_1/synthetic.bbaa"));
  CHECK(fs::exists("sl_artifacts/round_1/metrics.csv"));

  // checkpoint is loadable and matches the trainer's final state
  auto ck = train::Checkpoint::load("sl_artifacts/round_1/checkpoint");
  CHECK(ck.step == tr.step());

  // synthetic corpus round-trips with provenance
  auto synth = corpus::load_prepared("sl_artifacts/round_1/synthetic.aabb");
  CHECK(synth.provenance.synthetic);
  CHECK(synth.examples.size() == st.synth_l1l2.examples.size());

  // metrics.csv rows match round_report exactly
  std::ifstream f("sl_artifacts/round_1/metrics.csv");
  std::string line;
  std::getline(f, line);
  CHECK(line == "round,bleu_l1l2,bleu_l2l1,tag_acc,distinct1,distinct2");
  auto rows = round_report(st);
  for (const auto& row : rows) {
    REQUIRE(std::getline(f, line));
    std::string joined;
    for (std::size_t i = 0; i < row.size(); ++i)
      joined += (i ? "," : "") + row[i];
    CHECK(line == joined);
  }
  CHECK(!std::getline(f, line));
  fs::remove_all("sl_artifacts");
}

TEST_CASE("missing zero-shot language fails with round context") {
  Setup s;
  auto m = s.make_model();
  train::Trainer tr(m, s.tcfg());
  auto cfg = s.slcfg();
  cfg.l2 = corpus::make_lang_tag("zz");  // not in D
  try {
    run_self_learning(m, tr, s.vocab, corpus::TagMode::Tagged, s.D, s.test,
                      cfg);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("round 1") != std::string::npos);
  }
}
