#pragma once

#include <string>

#include "bflm/model.hpp"
#include "bflm/rng.hpp"
#include "bflm/training.hpp"

namespace bflm {

// Checkpoint container: everything needed to resume training bit-exactly.
//
// File layout (all integers little-endian):
//   "BFLM" | u32 version=1 | u64 metadata length | metadata (UTF-8 JSON)
//   | tensor table | u32 CRC-32 of all preceding bytes
// Each tensor table record is: u32 name length, name bytes, u32 rank,
// u64 dims[rank], IEEE-754 float64 data. The metadata carries the model
// config, vocabulary hash, optimizer hyperparameters, progress counters,
// the RNG state and the tensor count.
struct Checkpoint {
  ModelConfig model_config;
  TrainConfig train_config;
  TrainProgress progress;
  std::string vocab_hash;
  std::string rng_state;
  double lr = 0.0;
  std::size_t opt_epoch = 0;

  // Filled on load, consumed to rebuild Model/OptimizerState.
  std::vector<std::pair<std::string, Tensor>> tensors;
};

void save_checkpoint(const std::string& path, const Model& model, const OptimizerState& opt,
                     const TrainConfig& train_cfg, const TrainProgress& progress,
                     const DetRng& rng, const std::string& vocab_hash);

// Validates magic, version and the trailing checksum; throws DataError
// naming the failing section on corruption. No partial result is returned.
Checkpoint read_checkpoint(const std::string& path);

struct LoadedModel {
  Model model;
  OptimizerState opt;
  TrainConfig train_config;
  TrainProgress progress;
  DetRng rng;
  std::string vocab_hash;
};

// Rebuilds the model and optimizer from a checkpoint file.
LoadedModel load_checkpoint(const std::string& path);

}  // namespace bflm
