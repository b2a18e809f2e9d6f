#include "tnmt/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace tnmt::corpus {

using nlohmann::json;

LangTag make_lang_tag(const std::string& code) {
  if (code.empty()) throw Error("config", "empty language code");
  for (char c : code)
    if (c < 'a' || c > 'z')
      throw Error("config", "language code must be lowercase ascii: " + code);
  return LangTag{code};
}

TagMode tag_mode_from_string(const std::string& s) {
  if (s == "tagged") return TagMode::Tagged;
  if (s == "source_only") return TagMode::SourceOnly;
  throw Error("config", "unknown tag mode: " + s);
}

std::string to_string(TagMode m) {
  return m == TagMode::Tagged ? "tagged" : "source_only";
}

TaggedExample tag_pair(const std::vector<std::string>& src_tokens,
                       const std::vector<std::string>& tgt_tokens,
                       const LangTag& src_lang, const LangTag& tgt_lang,
                       TagMode mode) {
  TaggedExample ex;
  ex.src_lang = src_lang;
  ex.tgt_lang = tgt_lang;
  ex.src_tokens.reserve(src_tokens.size() + 1);
  ex.src_tokens.push_back(tgt_lang.src_token());
  ex.src_tokens.insert(ex.src_tokens.end(), src_tokens.begin(),
                       src_tokens.end());
  if (mode == TagMode::Tagged) {
    ex.tgt_tokens.reserve(tgt_tokens.size() + 1);
    ex.tgt_tokens.push_back(tgt_lang.tgt_token());
  }
  ex.tgt_tokens.insert(ex.tgt_tokens.end(), tgt_tokens.begin(),
                       tgt_tokens.end());
  return ex;
}

namespace {
bool looks_like_tag(const std::string& t) {
  return t.size() >= 3 && t.front() == '<' && t.back() == '>' &&
         t.find("</w>") == std::string::npos;
}
}  // namespace

std::pair<std::vector<std::string>, std::vector<std::string>> strip_tags(
    const TaggedExample& ex) {
  std::vector<std::string> src = ex.src_tokens, tgt = ex.tgt_tokens;
  if (!src.empty() && src.front() == ex.tgt_lang.src_token())
    src.erase(src.begin());
  if (!tgt.empty() && tgt.front() == ex.tgt_lang.tgt_token())
    tgt.erase(tgt.begin());
  return {src, tgt};
}

ParallelCorpus build_mixed(const std::vector<BilingualCorpus>& pairs,
                           TagMode mode, Rng& rng) {
  ParallelCorpus out;
  for (const auto& bc : pairs) {
    if (bc.a_lines.size() != bc.b_lines.size())
      throw Error("data", "line-count mismatch in " + bc.lang_a.code + "-" +
                              bc.lang_b.code + " corpus: " +
                              std::to_string(bc.a_lines.size()) + " vs " +
                              std::to_string(bc.b_lines.size()));
    for (std::size_t i = 0; i < bc.a_lines.size(); ++i) {
      out.examples.push_back(
          tag_pair(bc.a_lines[i], bc.b_lines[i], bc.lang_a, bc.lang_b, mode));
      out.examples.push_back(
          tag_pair(bc.b_lines[i], bc.a_lines[i], bc.lang_b, bc.lang_a, mode));
    }
  }
  rng.shuffle(out.examples);
  return out;
}

std::vector<std::vector<std::string>> extract_monolingual(
    const ParallelCorpus& corpus, const LangTag& lang, bool* found) {
  std::vector<std::vector<std::string>> out;
  std::set<std::vector<std::string>> seen;
  bool any = false;
  for (const auto& ex : corpus.examples) {
    if (ex.tgt_lang != lang) continue;
    any = true;
    auto [src, tgt] = strip_tags(ex);
    (void)src;
    if (seen.insert(tgt).second) out.push_back(std::move(tgt));
  }
  if (found) *found = any;
  return out;
}

ParallelCorpus mix_synthetic(const ParallelCorpus& base,
                             const ParallelCorpus& synth) {
  if (!synth.examples.empty() && !synth.provenance.synthetic)
    throw Error("data", "mix_synthetic needs synthetic provenance");
  ParallelCorpus out = base;
  out.examples.insert(out.examples.end(), synth.examples.begin(),
                      synth.examples.end());
  return out;
}

// ---- toy languages ----

ToyTransform toy_transform_from_string(const std::string& s) {
  if (s == "identity") return ToyTransform::Identity;
  if (s == "reversal") return ToyTransform::Reversal;
  if (s == "id_shift") return ToyTransform::IdShift;
  if (s == "pair_swap") return ToyTransform::PairSwap;
  throw Error("config", "unknown toy transform: " + s);
}

std::string to_string(ToyTransform t) {
  switch (t) {
    case ToyTransform::Identity: return "identity";
    case ToyTransform::Reversal: return "reversal";
    case ToyTransform::IdShift: return "id_shift";
    case ToyTransform::PairSwap: return "pair_swap";
  }
  return "?";
}

std::vector<int> ToyLanguageSpec::apply(const std::vector<int>& latent) const {
  std::vector<int> out = latent;
  switch (transform) {
    case ToyTransform::Identity:
      break;
    case ToyTransform::Reversal:
      std::reverse(out.begin(), out.end());
      break;
    case ToyTransform::IdShift: {
      int v = static_cast<int>(vocab_size);
      for (auto& t : out) t = ((t + shift) % v + v) % v;
      break;
    }
    case ToyTransform::PairSwap:
      for (std::size_t i = 0; i + 1 < out.size(); i += 2)
        std::swap(out[i], out[i + 1]);
      break;
  }
  return out;
}

std::vector<std::string> ToyLanguageSpec::render(
    const std::vector<int>& latent) const {
  auto ids = apply(latent);
  std::vector<std::string> out;
  out.reserve(ids.size());
  for (int t : ids) out.push_back(name + "_t" + std::to_string(t));
  return out;
}

bool ToyLanguageSpec::owns_token(const std::string& token) const {
  return token.rfind(name + "_t", 0) == 0;
}

ToyTask gen_toy_task(const std::vector<ToyLanguageSpec>& specs,
                     const ToyLanguageSpec& pivot, std::size_t n_train,
                     std::size_t n_dev, std::size_t n_test,
                     std::uint64_t seed, std::size_t min_len,
                     std::size_t max_len) {
  if (specs.size() < 2)
    throw Error("config", "toy task needs at least 2 non-pivot languages");
  std::set<std::string> names{pivot.name};
  for (const auto& s : specs) {
    if (s.vocab_size < 2 || s.vocab_size != pivot.vocab_size)
      throw Error("config",
                  "toy vocab sizes must be equal and >= 2 for disjoint "
                  "bijective rendering");
    if (!names.insert(s.name).second)
      throw Error("config", "duplicate toy language name: " + s.name);
  }

  Rng rng(seed);
  auto draw_latent = [&]() {
    std::size_t len = min_len + rng.below(max_len - min_len + 1);
    std::vector<int> latent(len);
    for (auto& t : latent)
      t = static_cast<int>(rng.below(pivot.vocab_size));
    return latent;
  };

  ToyTask task;
  task.specs = specs;
  task.pivot = pivot;
  task.train.resize(specs.size());
  task.dev.resize(specs.size());
  task.test.resize(specs.size());

  // one latent draw per sentence, rendered in every language: the pivot side
  // of each supervised pair is shared, so during training the language tag is
  // the only signal that selects the output language for a given pivot source
  auto fill_splits = [&](std::vector<ToySplit>& splits, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
      auto latent = draw_latent();
      auto pivot_line = pivot.render(latent);
      for (std::size_t s = 0; s < specs.size(); ++s) {
        splits[s].a_lines.push_back(specs[s].render(latent));
        splits[s].b_lines.push_back(pivot_line);
      }
    }
  };
  fill_splits(task.train, n_train);
  fill_splits(task.dev, n_dev);
  fill_splits(task.test, n_test);
  for (std::size_t i = 0; i < specs.size(); ++i)
    for (std::size_t j = i + 1; j < specs.size(); ++j) {
      ToySplit zs;
      for (std::size_t k = 0; k < n_test; ++k) {
        auto latent = draw_latent();
        zs.a_lines.push_back(specs[i].render(latent));
        zs.b_lines.push_back(specs[j].render(latent));
      }
      task.zero_shot_test[{i, j}] = std::move(zs);
    }
  return task;
}

// ---- disk formats ----

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw Error("io", "cannot read " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(f, line)) lines.push_back(line);
  return lines;
}

void write_lines(const std::string& path,
                 const std::vector<std::string>& lines) {
  std::ofstream f(path);
  if (!f) throw Error("io", "cannot write " + path);
  for (const auto& l : lines) f << l << "\n";
}

std::string join_tokens(const std::vector<std::string>& tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out.push_back(' ');
    out += tokens[i];
  }
  return out;
}

std::vector<std::string> split_tokens(const std::string& line) {
  std::vector<std::string> out;
  std::istringstream ss(line);
  std::string tok;
  while (ss >> tok) out.push_back(tok);
  return out;
}

void save_prepared(const std::string& path, const ParallelCorpus& corpus,
                   TagMode mode, std::uint64_t seed) {
  std::ofstream f(path);
  if (!f) throw Error("io", "cannot write " + path);
  json langs = json::array();
  std::set<std::string> lang_set;
  for (const auto& ex : corpus.examples) {
    f << join_tokens(ex.src_tokens) << "\t" << join_tokens(ex.tgt_tokens)
      << "\n";
    lang_set.insert(ex.src_lang.code);
    lang_set.insert(ex.tgt_lang.code);
    langs.push_back(
        json::array({ex.src_lang.code, ex.tgt_lang.code}));
  }
  json meta;
  meta["languages"] = std::vector<std::string>(lang_set.begin(), lang_set.end());
  meta["example_languages"] = langs;
  meta["mode"] = to_string(mode);
  meta["provenance"] = corpus.provenance.str();
  meta["synthetic"] = corpus.provenance.synthetic;
  meta["round"] = corpus.provenance.round;
  meta["decode_mode"] = corpus.provenance.decode_mode;
  meta["seed"] = seed;
  std::ofstream mf(path + ".meta.json");
  if (!mf) throw Error("io", "cannot write " + path + ".meta.json");
  mf << meta.dump(2) << "\n";
}

ParallelCorpus load_prepared(const std::string& path, TagMode* mode,
                             std::uint64_t* seed) {
  std::ifstream mf(path + ".meta.json");
  if (!mf) throw Error("io", "cannot read " + path + ".meta.json");
  json meta = json::parse(mf);
  if (mode) *mode = tag_mode_from_string(meta.at("mode"));
  if (seed) *seed = meta.at("seed").get<std::uint64_t>();

  ParallelCorpus out;
  out.provenance.synthetic = meta.value("synthetic", false);
  out.provenance.round = meta.value("round", 0);
  out.provenance.decode_mode = meta.value("decode_mode", "");
  auto langs = meta.at("example_languages");

  auto lines = read_lines(path);
  if (langs.size() != lines.size())
    throw Error("data", "prepared corpus and sidecar disagree on size");
  for (std::size_t i = 0; i < lines.size(); ++i) {
    auto tab = lines[i].find('\t');
    if (tab == std::string::npos)
      throw Error("data", "malformed prepared line " + std::to_string(i + 1));
    TaggedExample ex;
    ex.src_lang = make_lang_tag(langs[i][0]);
    ex.tgt_lang = make_lang_tag(langs[i][1]);
    ex.src_tokens = split_tokens(lines[i].substr(0, tab));
    ex.tgt_tokens = split_tokens(lines[i].substr(tab + 1));
    out.examples.push_back(std::move(ex));
  }
  return out;
}

}  // namespace tnmt::corpus
