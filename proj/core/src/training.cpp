#include "bflm/training.hpp"

#include <cmath>
#include <filesystem>
#include <ostream>

#include "bflm/checkpoint.hpp"
#include "bflm/errors.hpp"
#include "bflm/evaluation.hpp"
#include "bflm/nn.hpp"

namespace bflm {

void TrainConfig::validate() const {
  if (batch_size == 0) throw ContractViolation("batch_size must be positive");
  if (!(lr_decay > 0.0 && lr_decay <= 1.0)) throw ContractViolation("lr_decay must be in (0, 1]");
  if (!(rms_decay > 0.0 && rms_decay < 1.0)) throw ContractViolation("rms_decay must be in (0, 1)");
  if (!(epsilon > 0.0)) throw ContractViolation("epsilon must be positive");
  if (!(clip > 0.0)) throw ContractViolation("clip must be positive");
}

std::string to_string(TrainConfig::EmbeddingLrMode mode) {
  return mode == TrainConfig::EmbeddingLrMode::PaperLiteral ? "paper-literal" : "tied";
}

TrainConfig::EmbeddingLrMode embedding_lr_mode_from_string(const std::string& name) {
  if (name == "paper-literal") return TrainConfig::EmbeddingLrMode::PaperLiteral;
  if (name == "tied") return TrainConfig::EmbeddingLrMode::Tied;
  throw DataError("unknown embedding-lr mode: " + name);
}

OptimizerState OptimizerState::fresh(const ParamStore& store, const TrainConfig& cfg) {
  OptimizerState opt;
  opt.lr = cfg.lr0;
  opt.rms_cache.resize(store.size());
  for (std::size_t i = 0; i < store.size(); ++i)
    if (store.entry(i).tag == ParamStore::Tag::Dense)
      opt.rms_cache[i] = Tensor(store.value(i).dims());
  return opt;
}

void rmsprop_update(Tensor& param, const Tensor& grad, Tensor& cache, double lr, double rms_decay,
                    double epsilon) {
  if (!param.same_shape(grad) || !param.same_shape(cache))
    throw ContractViolation("rmsprop_update: shape mismatch");
  double* p = param.data();
  const double* g = grad.data();
  double* c = cache.data();
  for (std::size_t i = 0; i < param.size(); ++i) {
    c[i] = rms_decay * c[i] + (1.0 - rms_decay) * g[i] * g[i];
    p[i] -= lr * g[i] / std::sqrt(c[i] + epsilon);
  }
}

void embedding_sgd_update(std::span<double> row, std::span<const double> grad_row, double lr,
                          double epsilon, TrainConfig::EmbeddingLrMode mode) {
  const double rate =
      mode == TrainConfig::EmbeddingLrMode::PaperLiteral ? lr / std::sqrt(epsilon) : lr;
  for (std::size_t i = 0; i < row.size(); ++i) row[i] -= rate * grad_row[i];
}

namespace {

void apply_updates(Model& model, const TrainConfig& cfg, OptimizerState& opt) {
  ParamStore& store = model.params();
  for (std::size_t i = 0; i < store.size(); ++i) {
    ParamStore::Entry& e = store.entry(i);
    if (e.tag == ParamStore::Tag::Dense) {
      rmsprop_update(e.value, e.grad, opt.rms_cache[i], opt.lr, cfg.rms_decay, cfg.epsilon);
      if (!e.value.all_finite())
        throw NumericFault("rmsprop produced a non-finite value in " + e.name);
    } else {
      // sparse: rows whose gradient is exactly zero are left untouched
      for (std::size_t r = 0; r < e.value.dim(0); ++r) {
        auto g = e.grad.row(r);
        bool touched = false;
        for (double v : g)
          if (v != 0.0) {
            touched = true;
            break;
          }
        if (!touched) continue;
        embedding_sgd_update(e.value.row(r), g, opt.lr, cfg.epsilon, cfg.embedding_lr_mode);
      }
      if (!e.value.all_finite())
        throw NumericFault("embedding update produced a non-finite value in " + e.name);
    }
  }
}

}  // namespace

EpochMetrics train_epoch(Model& model, std::span<const Sentence> data, const TrainConfig& cfg,
                         OptimizerState& opt, DetRng& rng) {
  cfg.validate();
  if (data.empty()) throw ContractViolation("train_epoch: empty data");
  if (opt.rms_cache.size() != model.params().size())
    throw ContractViolation("optimizer state does not match the model");

  std::vector<std::size_t> order(data.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  rng.shuffle(order);

  EpochMetrics metrics;
  ParamStore& store = model.params();

  for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
    const std::size_t end = std::min(order.size(), start + cfg.batch_size);
    const double inv_batch = 1.0 / double(end - start);
    store.zero_grads();

    double batch_loss = 0.0;
    for (std::size_t k = start; k < end; ++k) {
      const Sentence& sent = data[order[k]];
      SplitSentence split = assign_split(sent, cfg.split_policy, &rng);
      ForwardTrace trace = model.forward(split);
      const double loss = trace.mean_nll();
      if (!std::isfinite(loss))
        throw NumericFault("training loss became non-finite at epoch " +
                           std::to_string(opt.epoch + 1));
      batch_loss += loss * inv_batch;
      model.backward(trace, inv_batch);
      ++metrics.sentences;
    }

    clip_elementwise(store, cfg.clip);
    for (std::size_t i = 0; i < store.size(); ++i)
      for (double v : store.grad(i).flat())
        metrics.max_abs_grad = std::max(metrics.max_abs_grad, std::abs(v));

    apply_updates(model, cfg, opt);
    metrics.mean_loss += batch_loss;
    ++metrics.batches;
  }

  metrics.mean_loss /= double(metrics.batches);
  opt.lr *= cfg.lr_decay;
  ++opt.epoch;
  return metrics;
}

TrainRunResult run_training(Model& model, const std::vector<Sentence>& train,
                            const std::vector<Sentence>* validation, const TrainConfig& cfg,
                            OptimizerState& opt, TrainProgress& progress, DetRng& rng,
                            const std::string& out_dir, const std::string& vocab_hash,
                            std::ostream& log) {
  cfg.validate();
  TrainRunResult result;
  const bool checkpointing = !out_dir.empty();
  if (checkpointing) std::filesystem::create_directories(out_dir);
  const std::string latest = checkpointing ? out_dir + "/latest.ckpt" : "";
  const std::string best = checkpointing ? out_dir + "/best.ckpt" : "";

  // Validation splits are drawn once from a stream derived from the train
  // seed, so every epoch scores the same split assignment.
  const std::uint64_t eval_seed = cfg.seed ^ 0x9e3779b97f4a7c15ull;

  std::size_t since_best = progress.epoch - progress.best_epoch;
  while (progress.epoch < cfg.max_epochs) {
    EpochMetrics em;
    try {
      em = train_epoch(model, train, cfg, opt, rng);
    } catch (const NumericFault&) {
      // keep whatever checkpoint the previous epoch left behind
      throw;
    }
    progress.epoch = opt.epoch;
    result.epochs_run++;
    result.final_train_loss = em.mean_loss;

    double val_ppl = std::numeric_limits<double>::quiet_NaN();
    if (validation && !validation->empty()) {
      DetRng eval_rng(eval_seed);
      EvalReport rep = evaluate(model, *validation, false, SplitPolicy::random(), &eval_rng);
      val_ppl = rep.overall_ppl;
    }

    log << "epoch=" << progress.epoch << " train_loss=" << em.mean_loss << " lr=" << opt.lr;
    if (!std::isnan(val_ppl)) log << " val_ppl=" << val_ppl;

    bool is_best = false;
    if (!std::isnan(val_ppl) && val_ppl < progress.best_val_ppl) {
      progress.best_val_ppl = val_ppl;
      progress.best_epoch = progress.epoch;
      since_best = 0;
      is_best = true;
    } else if (!std::isnan(val_ppl)) {
      ++since_best;
    }
    log << " best=" << (is_best ? 1 : 0) << "\n";

    if (checkpointing) {
      save_checkpoint(latest, model, opt, cfg, progress, rng, vocab_hash);
      result.latest_path = latest;
      if (is_best || (!validation && progress.epoch == cfg.max_epochs)) {
        save_checkpoint(best, model, opt, cfg, progress, rng, vocab_hash);
        result.best_path = best;
      }
    }

    if (validation && !validation->empty() && since_best >= cfg.patience) {
      result.stopped_early = true;
      log << "early_stop=1 best_epoch=" << progress.best_epoch
          << " best_val_ppl=" << progress.best_val_ppl << "\n";
      break;
    }
  }

  if (checkpointing && result.best_path.empty()) {
    // no validation set: the final model is the best we know
    save_checkpoint(best, model, opt, cfg, progress, rng, vocab_hash);
    result.best_path = best;
  }
  result.best_val_ppl = progress.best_val_ppl;
  return result;
}

}  // namespace bflm
