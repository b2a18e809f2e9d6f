#include "tnmt/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "json.hpp"
#include "tnmt/decoder.hpp"
#include "tnmt/eval.hpp"

namespace tnmt::train {

using nlohmann::json;

double lr_schedule(long step, const TrainConfig& cfg) {
  if (step < 1) throw Error("config", "lr_schedule needs step >= 1");
  double w = cfg.warmup_steps;
  if (step <= cfg.warmup_steps)
    return cfg.learning_rate * double(step) / w;
  return cfg.learning_rate * std::sqrt(w / double(step));
}

void adam_step(const std::vector<std::pair<std::string, TensorPtr<float>>>& params,
               AdamState& state, const TrainConfig& cfg, double lr) {
  if (state.m.empty()) {
    state.m.resize(params.size());
    state.v.resize(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
      state.m[i].assign(params[i].second->size(), 0.0f);
      state.v[i].assign(params[i].second->size(), 0.0f);
    }
  }
  if (state.m.size() != params.size())
    throw Error("state", "optimizer state does not match parameter manifest");

  state.t += 1;
  double bc1 = 1.0 - std::pow(cfg.beta1, double(state.t));
  double bc2 = 1.0 - std::pow(cfg.beta2, double(state.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = *params[i].second;
    if (!p.grad) throw Error("state", "parameter without gradient: " + params[i].first);
    auto& m = state.m[i];
    auto& v = state.v[i];
    for (std::size_t j = 0; j < p.size(); ++j) {
      double g = (*p.grad)[j];
      if (!std::isfinite(g))
        throw Error("numeric", "non-finite gradient in " + params[i].first);
      m[j] = float(cfg.beta1 * m[j] + (1.0 - cfg.beta1) * g);
      v[j] = float(cfg.beta2 * v[j] + (1.0 - cfg.beta2) * g * g);
      double mhat = m[j] / bc1, vhat = v[j] / bc2;
      (*p.data)[j] -= float(lr * mhat / (std::sqrt(vhat) + cfg.eps));
    }
  }
}

std::vector<std::vector<std::size_t>> make_batches(
    const std::vector<Example>& data, int batch_size_tokens, Rng& rng) {
  std::vector<std::size_t> order(data.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  rng.shuffle(order);
  // stable sort by length: similar lengths share a batch, shuffle breaks ties
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) {
                     return data[a].src.size() + data[a].tgt.size() <
                            data[b].src.size() + data[b].tgt.size();
                   });

  std::vector<std::vector<std::size_t>> batches;
  std::vector<std::size_t> cur;
  std::size_t max_s = 0, max_t = 0;
  for (std::size_t idx : order) {
    std::size_t s = std::max(max_s, data[idx].src.size());
    std::size_t t = std::max(max_t, data[idx].tgt.size() + 1);  // bos/eos row
    std::size_t cost = (cur.size() + 1) * (s + t);
    if (!cur.empty() && cost > std::size_t(batch_size_tokens)) {
      batches.push_back(std::move(cur));
      cur.clear();
      max_s = max_t = 0;
      s = data[idx].src.size();
      t = data[idx].tgt.size() + 1;
    }
    cur.push_back(idx);
    max_s = s;
    max_t = t;
  }
  if (!cur.empty()) batches.push_back(std::move(cur));
  rng.shuffle(batches);
  return batches;
}

// ---- checkpoint I/O ----

namespace {

json model_cfg_to_json(const model::ModelConfig& c) {
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

model::ModelConfig model_cfg_from_json(const json& j) {
  model::ModelConfig c;
  c.n_layers = j.at("n_layers");
  c.d_model = j.at("d_model");
  c.n_heads = j.at("n_heads");
  c.d_ff = j.at("d_ff");
  c.vocab_size = j.at("vocab_size");
  c.max_len = j.at("max_len");
  c.dropout = j.at("dropout");
  c.embedding_dropout = j.at("embedding_dropout");
  c.label_smoothing = j.at("label_smoothing");
  c.tie_embeddings = j.at("tie_embeddings");
  return c;
}

json train_cfg_to_json(const TrainConfig& c) {
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
              {"pad_id", c.pad_id},
              {"bos_id", c.bos_id},
              {"eos_id", c.eos_id},
              {"decode_max_len", c.decode_max_len}};
}

TrainConfig train_cfg_from_json(const json& j) {
  TrainConfig c;
  c.learning_rate = j.at("learning_rate");
  c.warmup_steps = j.at("warmup_steps");
  c.batch_size_tokens = j.at("batch_size_tokens");
  c.patience = j.at("patience");
  c.eval_interval_steps = j.at("eval_interval_steps");
  c.max_steps = j.at("max_steps");
  c.seed = j.at("seed");
  c.beta1 = j.at("beta1");
  c.beta2 = j.at("beta2");
  c.eps = j.at("eps");
  c.pad_id = j.at("pad_id");
  c.bos_id = j.at("bos_id");
  c.eos_id = j.at("eos_id");
  c.decode_max_len = j.at("decode_max_len");
  return c;
}

void write_block(std::ofstream& f, const std::vector<float>& v) {
  // raw little-endian f32; this codebase targets little-endian hosts
  f.write(reinterpret_cast<const char*>(v.data()),
          std::streamsize(v.size() * sizeof(float)));
}

std::vector<float> read_block(std::ifstream& f, std::size_t n,
                              const std::string& path) {
  std::vector<float> v(n);
  f.read(reinterpret_cast<char*>(v.data()), std::streamsize(n * sizeof(float)));
  if (!f) throw Error("io", "truncated checkpoint: " + path);
  return v;
}

}  // namespace

void Checkpoint::save(const std::string& path) const {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("io", "cannot write checkpoint: " + path);

  json manifest = json::array();
  for (const auto& [name, data] : params)
    manifest.push_back(json::array({name, data.size()}));
  json header{{"model", model_cfg_to_json(model_cfg)},
              {"train", train_cfg_to_json(train_cfg)},
              {"step", step},
              {"epoch", epoch},
              {"batch_index", batch_index},
              {"adam_t", opt.t},
              {"epoch_rng", epoch_rng},
              {"shuffle_rng", shuffle_rng},
              {"dropout_rng", dropout_rng},
              {"dev_history", dev_history},
              {"best_dev", best_dev},
              {"manifest", manifest}};

  f << "TNMT1\n" << header.dump() << "\n";
  for (const auto& [name, data] : params) write_block(f, data);
  for (const auto& m : opt.m) write_block(f, m);
  for (const auto& v : opt.v) write_block(f, v);
  if (!f) throw Error("io", "short write on checkpoint: " + path);
}

Checkpoint Checkpoint::load(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error("io", "cannot read checkpoint: " + path);
  std::string magic, header_line;
  if (!std::getline(f, magic) || magic != "TNMT1")
    throw Error("io", "bad checkpoint magic in " + path);
  if (!std::getline(f, header_line))
    throw Error("io", "missing checkpoint header in " + path);

  json h;
  try {
    h = json::parse(header_line);
  } catch (const json::exception& e) {
    throw Error("io", std::string("invalid checkpoint header: ") + e.what());
  }

  Checkpoint ck;
  ck.model_cfg = model_cfg_from_json(h.at("model"));
  ck.train_cfg = train_cfg_from_json(h.at("train"));
  ck.step = h.at("step");
  ck.epoch = h.at("epoch");
  ck.batch_index = h.at("batch_index");
  ck.opt.t = h.at("adam_t");
  ck.epoch_rng = h.at("epoch_rng").get<std::vector<std::uint64_t>>();
  ck.shuffle_rng = h.at("shuffle_rng").get<std::vector<std::uint64_t>>();
  ck.dropout_rng = h.at("dropout_rng").get<std::vector<std::uint64_t>>();
  ck.dev_history = h.at("dev_history").get<std::vector<double>>();
  ck.best_dev = h.at("best_dev");

  for (const auto& entry : h.at("manifest"))
    ck.params.emplace_back(entry.at(0).get<std::string>(),
                           std::vector<float>());
  std::size_t i = 0;
  for (const auto& entry : h.at("manifest"))
    ck.params[i++].second = read_block(f, entry.at(1), path);
  for (const auto& [name, data] : ck.params)
    ck.opt.m.push_back(read_block(f, data.size(), path));
  for (const auto& [name, data] : ck.params)
    ck.opt.v.push_back(read_block(f, data.size(), path));
  return ck;
}

// ---- trainer ----

Trainer::Trainer(model::Transformer<float>& m, TrainConfig cfg)
    : model_(m), cfg_(cfg), shuffle_rng_(cfg.seed) {
  cfg_.validate();
  epoch_rng_ = shuffle_rng_.state();
}

model::Transformer<float>::Batch Trainer::pack(
    const std::vector<Example>& data, const std::vector<std::size_t>& idx) {
  model::Transformer<float>::Batch b;
  b.B = idx.size();
  b.pad_id = cfg_.pad_id;
  for (std::size_t i : idx) {
    b.Ls = std::max(b.Ls, data[i].src.size());
    b.Lt = std::max(b.Lt, data[i].tgt.size() + 1);
  }
  b.src.assign(b.B * b.Ls, cfg_.pad_id);
  b.tgt_in.assign(b.B * b.Lt, cfg_.pad_id);
  b.tgt_out.assign(b.B * b.Lt, cfg_.pad_id);
  for (std::size_t r = 0; r < b.B; ++r) {
    const auto& ex = data[idx[r]];
    std::copy(ex.src.begin(), ex.src.end(), b.src.begin() + r * b.Ls);
    b.tgt_in[r * b.Lt] = cfg_.bos_id;
    std::copy(ex.tgt.begin(), ex.tgt.end(), b.tgt_in.begin() + r * b.Lt + 1);
    std::copy(ex.tgt.begin(), ex.tgt.end(), b.tgt_out.begin() + r * b.Lt);
    b.tgt_out[r * b.Lt + ex.tgt.size()] = cfg_.eos_id;
  }
  return b;
}

double Trainer::run_step(const model::Transformer<float>::Batch& batch) {
  Tape<float> tape;
  tape.training = true;
  tape.rng = &model_.dropout_rng();
  auto params = model_.named_params();
  for (auto& [name, p] : params) p->zero_grad();
  auto loss = model_.forward_loss(tape, batch);
  double value = loss->item();
  if (!std::isfinite(value))
    throw Error("numeric",
                "loss diverged at step " + std::to_string(step_ + 1));
  tape.backward(loss);
  adam_step(params, opt_, cfg_, lr_schedule(step_ + 1, cfg_));
  return value;
}

double Trainer::eval_dev(const std::vector<Example>& dev_set) {
  if (dev_set.empty()) throw Error("data", "empty dev set");
  decode::TransformerSeqModel sm(model_, cfg_.bos_id, cfg_.eos_id);
  decode::DecodeConfig dcfg;
  dcfg.mode = decode::DecodeMode::Greedy;
  dcfg.max_len = std::min(cfg_.decode_max_len, model_.cfg.max_len - 1);

  std::vector<eval::Sentence> hyps, refs;
  for (const auto& ex : dev_set) {
    auto h = decode::greedy_decode(sm, ex.src, dcfg);
    eval::Sentence hs;
    for (std::size_t t = 1; t < h.ids.size(); ++t)
      if (h.ids[t] != cfg_.eos_id) hs.push_back(std::to_string(h.ids[t]));
    hyps.push_back(std::move(hs));
    eval::Sentence rs;
    for (int id : ex.tgt) rs.push_back(std::to_string(id));
    refs.push_back(std::move(rs));
  }
  return eval::corpus_bleu(hyps, refs, 4, true).bleu;
}

void Trainer::append_log(const LogRecord& rec, const std::string& log_path) {
  log_.push_back(rec);
  if (log_path.empty()) return;
  std::ofstream f(log_path, std::ios::app);
  if (!f) throw Error("io", "cannot append training log: " + log_path);
  f << json{{"step", rec.step},
            {"loss", rec.loss},
            {"dev_bleu", rec.dev_bleu},
            {"lr", rec.lr}}
           .dump()
    << "\n";
}

Checkpoint Trainer::train(const std::vector<Example>& train_set,
                          const std::vector<Example>& dev_set,
                          const std::string& log_path) {
  if (train_set.empty()) throw Error("data", "empty training corpus");
  if (dev_set.empty()) throw Error("data", "empty dev set");

  Checkpoint best;
  bool have_best = false;
  int since_improve = 0;
  std::vector<std::vector<std::size_t>> batches;

  for (;;) {
    if (batches.empty()) {
      epoch_rng_ = shuffle_rng_.state();
      batches = make_batches(train_set, cfg_.batch_size_tokens, shuffle_rng_);
      if (batch_index_ >= batches.size()) batch_index_ = 0;
    }
    double loss = run_step(pack(train_set, batches[batch_index_]));
    ++batch_index_;
    ++step_;
    if (batch_index_ == batches.size()) {
      batches.clear();
      batch_index_ = 0;
      ++epoch_;
    }

    bool capped = cfg_.max_steps > 0 && step_ >= cfg_.max_steps;
    if (step_ % cfg_.eval_interval_steps == 0 || capped) {
      double bleu = eval_dev(dev_set);
      dev_history_.push_back(bleu);
      append_log({step_, loss, bleu, lr_schedule(step_, cfg_)}, log_path);
      if (!have_best || bleu > best_dev_) {
        best_dev_ = bleu;
        best = snapshot();
        have_best = true;
        since_improve = 0;
      } else {
        ++since_improve;
      }
      if (since_improve >= cfg_.patience) break;
    }
    if (capped) break;
  }
  if (!have_best) best = snapshot();
  return best;
}

Checkpoint Trainer::train_epochs(const std::vector<Example>& train_set,
                                 int n_epochs,
                                 const std::vector<Example>* dev_set,
                                 const std::string& log_path) {
  if (train_set.empty()) throw Error("data", "empty training corpus");
  if (n_epochs < 0) throw Error("config", "n_epochs must be >= 0");

  for (int e = 0; e < n_epochs; ++e) {
    epoch_rng_ = shuffle_rng_.state();
    auto batches = make_batches(train_set, cfg_.batch_size_tokens, shuffle_rng_);
    double loss = 0.0;
    for (batch_index_ = 0; batch_index_ < batches.size(); ++batch_index_) {
      loss = run_step(pack(train_set, batches[batch_index_]));
      ++step_;
    }
    batch_index_ = 0;
    ++epoch_;
    double bleu = -1.0;
    if (dev_set) {
      bleu = eval_dev(*dev_set);
      dev_history_.push_back(bleu);
      best_dev_ = std::max(best_dev_, bleu);
    }
    append_log({step_, loss, bleu, lr_schedule(std::max(step_, 1l), cfg_)},
               log_path);
  }
  return snapshot();
}

Checkpoint Trainer::snapshot() const {
  Checkpoint ck;
  ck.model_cfg = model_.cfg;
  ck.train_cfg = cfg_;
  ck.step = step_;
  ck.epoch = epoch_;
  ck.batch_index = batch_index_;
  ck.epoch_rng = epoch_rng_;
  ck.shuffle_rng = shuffle_rng_.state();
  ck.dropout_rng = const_cast<model::Transformer<float>&>(model_).dropout_rng().state();
  ck.dev_history = dev_history_;
  ck.best_dev = best_dev_;

  auto params = const_cast<model::Transformer<float>&>(model_).named_params();
  for (auto& [name, p] : params) ck.params.emplace_back(name, *p->data);
  ck.opt.t = opt_.t;
  if (opt_.m.empty()) {
    for (auto& [name, p] : params) {
      ck.opt.m.emplace_back(p->size(), 0.0f);
      ck.opt.v.emplace_back(p->size(), 0.0f);
    }
  } else {
    ck.opt.m = opt_.m;
    ck.opt.v = opt_.v;
  }
  return ck;
}

void Trainer::restore(const Checkpoint& ck) {
  const auto& a = model_.cfg;
  const auto& b = ck.model_cfg;
  if (a.n_layers != b.n_layers || a.d_model != b.d_model ||
      a.n_heads != b.n_heads || a.d_ff != b.d_ff ||
      a.vocab_size != b.vocab_size || a.max_len != b.max_len ||
      a.tie_embeddings != b.tie_embeddings)
    throw Error("state", "checkpoint geometry does not match the model");

  auto params = model_.named_params();
  if (params.size() != ck.params.size())
    throw Error("state", "checkpoint parameter manifest mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].first != ck.params[i].first ||
        params[i].second->size() != ck.params[i].second.size())
      throw Error("state", "checkpoint block mismatch: " + params[i].first);
    *params[i].second->data = ck.params[i].second;
  }
  cfg_ = ck.train_cfg;
  opt_ = ck.opt;
  step_ = ck.step;
  epoch_ = ck.epoch;
  batch_index_ = ck.batch_index;
  epoch_rng_ = ck.epoch_rng;
  // mid-epoch: rewind to the epoch start so the schedule regenerates
  shuffle_rng_.set_state(batch_index_ ? ck.epoch_rng : ck.shuffle_rng);
  model_.dropout_rng().set_state(ck.dropout_rng);
  dev_history_ = ck.dev_history;
  best_dev_ = ck.best_dev;
}

}  // namespace tnmt::train
