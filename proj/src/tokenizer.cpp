#include "tnmt/tokenizer.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>
#include <sstream>

namespace tnmt::tok {

namespace {

bool is_punct(unsigned char c) { return std::ispunct(c) && c != '_'; }
bool is_digit(unsigned char c) { return std::isdigit(c); }

// UTF-8 codepoints as strings; invalid bytes pass through as singletons
std::vector<std::string> utf8_chars(const std::string& s) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < s.size()) {
    unsigned char c = s[i];
    std::size_t len = 1;
    if ((c & 0xE0) == 0xC0) len = 2;
    else if ((c & 0xF0) == 0xE0) len = 3;
    else if ((c & 0xF8) == 0xF0) len = 4;
    if (i + len > s.size()) len = 1;
    out.push_back(s.substr(i, len));
    i += len;
  }
  return out;
}

}  // namespace

std::vector<std::string> pretokenize(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  auto flush = [&]() {
    if (!cur.empty()) {
      out.push_back(cur);
      cur.clear();
    }
  };
  for (std::size_t i = 0; i < text.size(); ++i) {
    unsigned char c = text[i];
    if (std::isspace(c)) {
      flush();
    } else if (is_punct(c)) {
      bool inside_number = i > 0 && i + 1 < text.size() &&
                           is_digit(text[i - 1]) && is_digit(text[i + 1]);
      if (inside_number) {
        cur.push_back(c);
      } else {
        flush();
        out.push_back(std::string(1, c));
      }
    } else {
      cur.push_back(c);
    }
  }
  flush();
  return out;
}

std::string join_words(const std::vector<std::string>& words) {
  static const std::string no_space_before = ".,!?;:)]}%";
  static const std::string no_space_after = "([{";
  std::string out;
  bool suppress = false;
  for (const auto& w : words) {
    bool closing = w.size() == 1 && no_space_before.find(w[0]) != std::string::npos;
    if (!out.empty() && !suppress && !closing) out.push_back(' ');
    out += w;
    suppress = w.size() == 1 && no_space_after.find(w[0]) != std::string::npos;
  }
  return out;
}

void BpeModel::save(const std::string& path) const {
  std::ofstream f(path);
  if (!f) throw Error("io", "cannot write " + path);
  f << "#bpe-v1 merges=" << merges.size() << "\n";
  for (const auto& [l, r] : merges) f << l << " " << r << "\n";
}

BpeModel BpeModel::load(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw Error("io", "cannot read " + path);
  std::string line;
  if (!std::getline(f, line) || line.rfind("#bpe-v1", 0) != 0)
    throw Error("data", "not a bpe-v1 merge file: " + path);
  BpeModel m;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    auto sp = line.find(' ');
    if (sp == std::string::npos || sp + 1 >= line.size())
      throw Error("data", "malformed merge line: " + line);
    m.merges.emplace_back(line.substr(0, sp), line.substr(sp + 1));
  }
  m.merge_count = m.merges.size();
  return m;
}

namespace {

std::vector<std::string> word_symbols(const std::string& word) {
  auto syms = utf8_chars(word);
  if (!syms.empty()) syms.back() += BpeModel::kEndOfWord;
  return syms;
}

}  // namespace

BpeModel bpe_learn(const std::map<std::string, long>& word_freq,
                   std::size_t merge_count) {
  BpeModel model;
  model.merge_count = merge_count;
  if (word_freq.empty()) return model;

  std::vector<std::pair<std::vector<std::string>, long>> words;
  words.reserve(word_freq.size());
  for (const auto& [w, f] : word_freq)
    if (!w.empty()) words.emplace_back(word_symbols(w), f);

  for (std::size_t step = 0; step < merge_count; ++step) {
    std::map<std::pair<std::string, std::string>, long> pair_freq;
    for (const auto& [syms, f] : words)
      for (std::size_t i = 0; i + 1 < syms.size(); ++i)
        pair_freq[{syms[i], syms[i + 1]}] += f;
    // std::map iteration order gives the lexicographically smallest pair on
    // frequency ties
    std::pair<std::string, std::string> best;
    long best_freq = 0;
    for (const auto& [p, f] : pair_freq)
      if (f > best_freq) {
        best = p;
        best_freq = f;
      }
    if (best_freq < 2) break;
    model.merges.push_back(best);
    const std::string joined = best.first + best.second;
    for (auto& [syms, f] : words) {
      std::vector<std::string> merged;
      merged.reserve(syms.size());
      for (std::size_t i = 0; i < syms.size(); ++i) {
        if (i + 1 < syms.size() && syms[i] == best.first &&
            syms[i + 1] == best.second) {
          merged.push_back(joined);
          ++i;
        } else {
          merged.push_back(syms[i]);
        }
      }
      syms = std::move(merged);
    }
  }
  return model;
}

std::vector<std::string> bpe_apply(const std::string& word,
                                   const BpeModel& model) {
  if (word.empty()) return {};
  auto syms = word_symbols(word);
  if (model.merges.empty()) return syms;

  std::map<std::pair<std::string, std::string>, std::size_t> rank;
  for (std::size_t i = 0; i < model.merges.size(); ++i)
    rank.emplace(model.merges[i], i);

  // repeatedly apply the highest-priority applicable merge
  while (syms.size() > 1) {
    std::size_t best_rank = model.merges.size();
    std::size_t best_pos = 0;
    for (std::size_t i = 0; i + 1 < syms.size(); ++i) {
      auto it = rank.find({syms[i], syms[i + 1]});
      if (it != rank.end() && it->second < best_rank) {
        best_rank = it->second;
        best_pos = i;
      }
    }
    if (best_rank == model.merges.size()) break;
    syms[best_pos] += syms[best_pos + 1];
    syms.erase(syms.begin() + best_pos + 1);
  }
  return syms;
}

std::vector<std::string> subwords_to_words(
    const std::vector<std::string>& subwords) {
  const std::string marker = BpeModel::kEndOfWord;
  std::vector<std::string> words;
  std::string cur;
  for (const auto& sw : subwords) {
    if (sw.size() >= marker.size() &&
        sw.compare(sw.size() - marker.size(), marker.size(), marker) == 0) {
      cur += sw.substr(0, sw.size() - marker.size());
      words.push_back(cur);
      cur.clear();
    } else {
      cur += sw;
    }
  }
  if (!cur.empty()) words.push_back(cur);  // unterminated tail passes through
  return words;
}

std::string detokenize(const std::vector<std::string>& subwords) {
  return join_words(subwords_to_words(subwords));
}

std::vector<std::string> segment_words(const std::vector<std::string>& words,
                                       const BpeModel& model) {
  std::vector<std::string> out;
  for (const auto& w : words) {
    auto sw = bpe_apply(w, model);
    out.insert(out.end(), sw.begin(), sw.end());
  }
  return out;
}

Vocabulary Vocabulary::build(std::vector<std::string> tag_tokens,
                             std::vector<std::string> subwords) {
  Vocabulary v;
  v.tokens_ = {"<pad>", "<unk>", "<s>", "</s>"};
  std::sort(tag_tokens.begin(), tag_tokens.end());
  tag_tokens.erase(std::unique(tag_tokens.begin(), tag_tokens.end()),
                   tag_tokens.end());
  for (auto& t : tag_tokens) v.tokens_.push_back(t);
  v.n_reserved_ = static_cast<int>(v.tokens_.size());
  std::sort(subwords.begin(), subwords.end());
  subwords.erase(std::unique(subwords.begin(), subwords.end()),
                 subwords.end());
  for (auto& s : subwords) v.tokens_.push_back(s);
  v.index();
  return v;
}

void Vocabulary::index() {
  ids_.clear();
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (!ids_.emplace(tokens_[i], static_cast<int>(i)).second)
      throw Error("data", "duplicate vocabulary token: " + tokens_[i]);
  }
}

int Vocabulary::id(const std::string& token) const {
  auto it = ids_.find(token);
  return it == ids_.end() ? kUnk : it->second;
}

bool Vocabulary::contains(const std::string& token) const {
  return ids_.count(token) > 0;
}

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || id >= size()) throw Error("data", "token id out of range");
  return tokens_[id];
}

std::vector<int> Vocabulary::encode(
    const std::vector<std::string>& tokens) const {
  std::vector<int> out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) out.push_back(id(t));
  return out;
}

std::vector<std::string> Vocabulary::decode(const std::vector<int>& ids) const {
  std::vector<std::string> out;
  out.reserve(ids.size());
  for (int i : ids) out.push_back(token(i));
  return out;
}

void Vocabulary::save(const std::string& path) const {
  std::ofstream f(path);
  if (!f) throw Error("io", "cannot write " + path);
  for (std::size_t i = 0; i < tokens_.size(); ++i)
    f << tokens_[i] << "\t" << i << "\n";
}

Vocabulary Vocabulary::load(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw Error("io", "cannot read " + path);
  Vocabulary v;
  v.tokens_.clear();
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    auto tab = line.find('\t');
    if (tab == std::string::npos)
      throw Error("data", "malformed vocab line: " + line);
    int id = std::stoi(line.substr(tab + 1));
    if (id != static_cast<int>(v.tokens_.size()))
      throw Error("data", "non-contiguous vocab ids in " + path);
    v.tokens_.push_back(line.substr(0, tab));
  }
  if (v.tokens_.size() < 4) throw Error("data", "vocab missing reserved rows");
  // reserved region = the four specials plus the leading tag block;
  // tag tokens have the shape <xx> or <2xx> with a lowercase code
  auto is_tag_token = [](const std::string& t) {
    if (t.size() < 3 || t.front() != '<' || t.back() != '>') return false;
    std::size_t i = 1;
    if (t[i] == '2') ++i;
    if (i + 1 > t.size() - 1) return false;
    for (; i + 1 < t.size(); ++i)
      if (t[i] < 'a' || t[i] > 'z') return false;
    return true;
  };
  int n = 4;
  while (n < static_cast<int>(v.tokens_.size()) && is_tag_token(v.tokens_[n]))
    ++n;
  v.n_reserved_ = n;
  v.index();
  return v;
}

}  // namespace tnmt::tok
