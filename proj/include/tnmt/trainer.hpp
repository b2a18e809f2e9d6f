#pragma once

#include <string>
#include <vector>

#include "tnmt/common.hpp"
#include "tnmt/transformer.hpp"

namespace tnmt::train {

struct TrainConfig {
  double learning_rate = 0.0003;
  int warmup_steps = 16000;
  int batch_size_tokens = 4096;
  int patience = 10;
  int eval_interval_steps = 200;
  int max_steps = 0;  // 0 = unbounded (early stopping decides)
  std::uint64_t seed = 1;
  double beta1 = 0.9, beta2 = 0.98, eps = 1e-9;
  int pad_id = 0, bos_id = 2, eos_id = 3;
  int decode_max_len = 64;  // dev-eval greedy decoding budget

  void validate() const {
    if (learning_rate <= 0 || warmup_steps < 1 || batch_size_tokens < 1 ||
        eval_interval_steps < 1 || max_steps < 0)
      throw Error("config", "training hyperparameters must be positive");
    if (patience < 1) throw Error("config", "patience must be >= 1");
    if (beta1 <= 0 || beta1 >= 1 || beta2 <= 0 || beta2 >= 1 || eps <= 0)
      throw Error("config", "adam parameters out of range");
  }

  static TrainConfig toy() {
    TrainConfig c;
    c.warmup_steps = 400;
    c.batch_size_tokens = 512;
    return c;
  }
};

// linear warmup to learning_rate, then inverse-square-root decay
double lr_schedule(long step, const TrainConfig& cfg);

struct AdamState {
  long t = 0;
  std::vector<std::vector<float>> m, v;  // one flat pair per parameter
};

// One Adam update with bias correction over a parameter manifest whose
// gradients are already populated. Order defines the moment layout.
void adam_step(const std::vector<std::pair<std::string, TensorPtr<float>>>& params,
               AdamState& state, const TrainConfig& cfg, double lr);

struct Example {
  std::vector<int> src, tgt;  // ids; bos/eos added by the batcher
};

struct LogRecord {
  long step = 0;
  double loss = 0.0;
  double dev_bleu = -1.0;  // -1 when the record carries no evaluation
  double lr = 0.0;
};

// Full training snapshot: parameters, optimizer moments, RNG streams, and
// the scheduling position needed to resume bit-exactly.
struct Checkpoint {
  model::ModelConfig model_cfg;
  TrainConfig train_cfg;
  long step = 0;
  long epoch = 0;
  std::size_t batch_index = 0;  // within the current epoch's schedule
  AdamState opt;
  std::vector<std::pair<std::string, std::vector<float>>> params;
  std::vector<std::uint64_t> epoch_rng;    // shuffle stream at epoch start
  std::vector<std::uint64_t> shuffle_rng;  // shuffle stream at snapshot time
  std::vector<std::uint64_t> dropout_rng;
  std::vector<double> dev_history;
  double best_dev = -1.0;

  void save(const std::string& path) const;
  static Checkpoint load(const std::string& path);
};

// Length-bucketed batches under a token budget; batch order shuffled.
std::vector<std::vector<std::size_t>> make_batches(
    const std::vector<Example>& data, int batch_size_tokens, Rng& rng);

class Trainer {
 public:
  Trainer(model::Transformer<float>& m, TrainConfig cfg);

  // Early-stopped training on dev BLEU; returns the best-dev checkpoint.
  Checkpoint train(const std::vector<Example>& train_set,
                   const std::vector<Example>& dev_set,
                   const std::string& log_path = "");

  // Exactly n_epochs passes, no early stopping (self-learning inner loop).
  Checkpoint train_epochs(const std::vector<Example>& train_set, int n_epochs,
                          const std::vector<Example>* dev_set = nullptr,
                          const std::string& log_path = "");

  void restore(const Checkpoint& ck);
  Checkpoint snapshot() const;

  // Smoothed corpus BLEU of greedy decodes against dev targets.
  double eval_dev(const std::vector<Example>& dev_set);

  long step() const { return step_; }
  TrainConfig& config() { return cfg_; }  // e.g. raising max_steps after restore
  const std::vector<LogRecord>& log() const { return log_; }

 private:
  model::Transformer<float>::Batch pack(const std::vector<Example>& data,
                                        const std::vector<std::size_t>& idx);
  double run_step(const model::Transformer<float>::Batch& batch);
  void append_log(const LogRecord& rec, const std::string& log_path);

  model::Transformer<float>& model_;
  TrainConfig cfg_;
  AdamState opt_;
  Rng shuffle_rng_;
  std::vector<std::uint64_t> epoch_rng_;  // shuffle state at epoch start
  long step_ = 0, epoch_ = 0;
  std::size_t batch_index_ = 0;
  std::vector<double> dev_history_;
  double best_dev_ = -1.0;
  std::vector<LogRecord> log_;
};

}  // namespace tnmt::train
