#pragma once

#include <functional>
#include <ostream>
#include <vector>

#include "uniq/noise_train.hpp"

namespace uniq {

// Balanced consecutive partition of the trainable layers into N blocks,
// plus the stage budget and the number of restart iterations.
struct StagePlan {
  std::vector<std::vector<std::size_t>> blocks;  // qlayer indices per block
  std::size_t epochs_per_stage = 1;
  std::size_t restart_iterations = 2;
  bool freeze_future = false;  // blocks after the current one keep training
  double stage_lr_mult = 1.0;  // multiplier on lr during noisy stages
};

// Partitions layer_count consecutive layers into N balanced blocks; earlier
// blocks receive the extra layer when layer_count % N != 0.
std::vector<std::vector<std::size_t>> make_blocks(std::size_t layer_count,
                                                  std::size_t n_blocks);

// A labelled minibatch.
struct Batch {
  Tensor input;
  std::vector<int> labels;
};

using BatchList = std::vector<Batch>;

// One structured log record per (iteration, stage, epoch).
struct StageRecord {
  std::size_t iteration = 0;
  std::size_t stage = 0;
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double eval_accuracy = 0.0;
};

void write_stage_csv(std::ostream& os, const std::vector<StageRecord>& records);

// Trains one epoch with per-layer quantization state applied: frozen layers
// keep their installed quantized weights, noisy layers receive fresh noise
// every forward pass with density-ratio gradient scaling. Returns the mean
// minibatch loss. `step` numbers forward passes for the noise streams.
double train_epoch(QuantModel& model, SgdState& sgd, const BatchList& data,
                   std::size_t* step);

// Top-1 accuracy with noise disabled (frozen weights quantized, others at
// shadow precision).
double evaluate(const QuantModel& model, const BatchList& data);

// Freezes one quantization layer: fits its model, installs quantized
// weights, and attaches its activation quantizer (calibrated on the given
// batches) at the layer's activation site.
void freeze_layer(QuantModel& model, std::size_t qlayer,
                  const std::vector<Tensor>& calibration_inputs);

// Restores every layer to its shadow full-precision weights.
void unfreeze_all(QuantModel& model);

// Stage i (1-based): blocks 1..i-1 frozen and quantized, block i noisy,
// later blocks untouched. Trains plan.epochs_per_stage epochs.
void run_stage(QuantModel& model, const StagePlan& plan, std::size_t stage,
               const BatchList& train_data, SgdState& sgd,
               const std::vector<Tensor>& calibration_inputs,
               std::vector<StageRecord>* log = nullptr,
               const BatchList* eval_data = nullptr, std::size_t iteration = 1,
               std::size_t* step = nullptr);

// Full schedule: N stages per iteration, restart_iterations times; restarts
// unfreeze back to shadow weights and re-stage. Ends with every quantization
// layer frozen.
void run_schedule(QuantModel& model, const StagePlan& plan,
                  const BatchList& train_data, SgdState& sgd,
                  const std::vector<Tensor>& calibration_inputs,
                  std::vector<StageRecord>* log = nullptr,
                  const BatchList* eval_data = nullptr);

}  // namespace uniq
