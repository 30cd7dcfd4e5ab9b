#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "mse2d/adam.hpp"
#include "mse2d/encoder.hpp"
#include "mse2d/objectives.hpp"
#include "mse2d/vocab.hpp"

namespace mse2d {

struct TrainExample {
  std::string query;
  std::string positive;
};

struct TrainConfig {
  ObjectiveConfig objective;
  EncoderConfig encoder;
  double learning_rate = 1e-3;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  int steps = 100;
  int batch_size = 16;
  uint64_t seed = 0;
  int log_every = 10;

  void validate() const;
};

struct Checkpoint {
  TrainConfig config;
  double final_loss = 0.0;
  std::vector<std::pair<std::string, Tensor<float>>> tensors;  // named, stable order
};

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<double> loss_history;  // one entry per step
};

// Deterministic training loop: shuffle once per epoch with the run seed,
// encode queries and documents, assemble the configured objective, backward,
// Adam. Identical config + dataset gives a byte-identical checkpoint.
TrainResult train(const TrainConfig& cfg, const std::vector<TrainExample>& dataset,
                  const Vocabulary& vocab, std::ostream* log = nullptr);

// Binary checkpoint file; see save format notes in trainer.cpp.
void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

// Reconstructs constant (inference) or trainable parameter leaves.
EncoderParams<float> params_from_checkpoint(const Checkpoint& ckpt, bool trainable = false);

}  // namespace mse2d
