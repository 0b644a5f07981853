#pragma once

#include <cstdint>
#include <iosfwd>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "bflm/corpus.hpp"
#include "bflm/model.hpp"
#include "bflm/param_store.hpp"
#include "bflm/rng.hpp"
#include "bflm/tensor.hpp"

namespace bflm {

struct TrainConfig {
  std::size_t batch_size = 50;
  double lr0 = 0.002;
  double lr_decay = 0.97;   // multiplicative, applied after each epoch
  double rms_decay = 0.99;  // moving-average decay of the squared gradients
  double epsilon = 1e-8;    // damping term
  double clip = 5.0;        // element-wise gradient clip
  std::size_t max_epochs = 10;
  std::uint64_t seed = 1;

  // Embedding rows are updated by plain SGD, separately from rmsprop.
  // PaperLiteral divides the learning rate by sqrt(epsilon) (an effective
  // rate of lr/1e-4); Tied uses the plain learning rate.
  enum class EmbeddingLrMode { PaperLiteral, Tied };
  EmbeddingLrMode embedding_lr_mode = EmbeddingLrMode::Tied;

  std::size_t patience = 5;  // early stopping on validation PPL
  SplitPolicy split_policy = SplitPolicy::random();

  void validate() const;
};

std::string to_string(TrainConfig::EmbeddingLrMode mode);
TrainConfig::EmbeddingLrMode embedding_lr_mode_from_string(const std::string& name);

struct OptimizerState {
  std::vector<Tensor> rms_cache;  // aligned with store entries; empty for embeddings
  std::size_t epoch = 0;
  double lr = 0.0;

  static OptimizerState fresh(const ParamStore& store, const TrainConfig& cfg);
};

// cache <- d*cache + (1-d)*g^2 ; p <- p - lr*g/sqrt(cache + eps), element-wise
void rmsprop_update(Tensor& param, const Tensor& grad, Tensor& cache, double lr, double rms_decay,
                    double epsilon);

// One embedding row: p <- p - rate*g where rate is lr/sqrt(eps) (paper
// literal) or lr (tied).
void embedding_sgd_update(std::span<double> row, std::span<const double> grad_row, double lr,
                          double epsilon, TrainConfig::EmbeddingLrMode mode);

struct EpochMetrics {
  double mean_loss = 0.0;  // mean over batches of the batch mean-per-token loss
  double max_abs_grad = 0.0;
  std::size_t batches = 0;
  std::size_t sentences = 0;
};

// One pass over the data: seeded shuffle, batches of batch_size, gradient
// accumulation (mean-per-token per sentence, averaged over the batch),
// element-wise clipping, rmsprop for dense parameters and sparse SGD for
// embedding rows, then the learning-rate decay. Random split indices are
// drawn from `rng` as sentences are consumed.
EpochMetrics train_epoch(Model& model, std::span<const Sentence> data, const TrainConfig& cfg,
                         OptimizerState& opt, DetRng& rng);

struct TrainProgress {
  std::size_t epoch = 0;
  double best_val_ppl = std::numeric_limits<double>::infinity();
  std::size_t best_epoch = 0;
};

struct TrainRunResult {
  std::size_t epochs_run = 0;
  double best_val_ppl = std::numeric_limits<double>::infinity();
  double final_train_loss = 0.0;
  std::string best_path;
  std::string latest_path;
  bool stopped_early = false;
};

// Full training driver with per-epoch validation, early stopping and
// best/latest checkpointing. `out_dir` may be empty to skip checkpoints.
// On a non-finite loss the latest good checkpoint is kept and NumericFault
// is rethrown.
TrainRunResult run_training(Model& model, const std::vector<Sentence>& train,
                            const std::vector<Sentence>* validation, const TrainConfig& cfg,
                            OptimizerState& opt, TrainProgress& progress, DetRng& rng,
                            const std::string& out_dir, const std::string& vocab_hash,
                            std::ostream& log);

}  // namespace bflm
