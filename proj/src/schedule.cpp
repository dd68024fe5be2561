#include "uniq/schedule.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace uniq {

std::vector<std::vector<std::size_t>> make_blocks(std::size_t layer_count,
                                                  std::size_t n_blocks) {
  if (n_blocks < 1 || n_blocks > layer_count)
    throw std::invalid_argument("make_blocks: need 1 <= N <= layer_count");
  std::vector<std::vector<std::size_t>> blocks(n_blocks);
  const std::size_t base = layer_count / n_blocks;
  const std::size_t extra = layer_count % n_blocks;
  std::size_t next = 0;
  for (std::size_t b = 0; b < n_blocks; ++b) {
    std::size_t sz = base + (b < extra ? 1 : 0);  // earlier blocks get the extra
    for (std::size_t j = 0; j < sz; ++j) blocks[b].push_back(next++);
  }
  return blocks;
}

void write_stage_csv(std::ostream& os, const std::vector<StageRecord>& records) {
  os << "iteration,stage,epoch,train_loss,eval_accuracy\n";
  for (const auto& r : records)
    os << r.iteration << ',' << r.stage << ',' << r.epoch << ','
       << r.train_loss << ',' << r.eval_accuracy << '\n';
}

namespace {

// Effective-weight swap for one training forward/backward pass: noisy layers
// get fresh per-scalar noise, with the density-ratio gradient kept for the
// backward scaling.
struct NoisySwap {
  std::size_t layer;
  Tensor shadow;
  Tensor grad_scale;
};

}  // namespace

double train_epoch(QuantModel& model, SgdState& sgd, const BatchList& data,
                   std::size_t* step) {
  if (data.empty()) throw std::invalid_argument("train_epoch: no batches");
  Network& net = model.net;

  // Update mask: frozen layers never update; future blocks follow the flag
  // handled by the caller via mode untouched (updates allowed by default).
  std::vector<std::uint8_t> mask(net.layers.size(), 1);
  for (const auto& q : model.qlayers)
    if (q.mode == LayerMode::frozen_quantized) mask[q.layer] = 0;

  double loss_sum = 0.0;
  for (const Batch& batch : data) {
    const std::size_t pass = step ? (*step)++ : 0;

    std::vector<NoisySwap> swaps;
    for (auto& q : model.qlayers) {
      if (q.mode != LayerMode::noisy) continue;
      LayerNode& l = net.layers[q.layer];
      NoisySwap swap;
      swap.layer = q.layer;
      swap.shadow = l.weight;
      swap.grad_scale = Tensor::zeros_like(l.weight);
      Rng rng(Rng::mix(model.seed, Rng::mix(q.layer, pass)));
      const DistModel& dist = *q.dist;
      for (Eigen::Index j = 0; j < l.weight.data.size(); ++j) {
        double w = swap.shadow.data[j];
        double w_hat, g;
        if (q.uniform_domain_spec) {
          w_hat = noisy_bin_weight(*q.uniform_domain_spec, dist, w, rng, &g);
        } else {
          double e = sample_noise(model.k_w, rng);
          w_hat = noisy_weight(dist, w, e);
          g = noisy_weight_grad(dist, w, e);
        }
        l.weight.data[j] = w_hat;
        swap.grad_scale.data[j] = g;
      }
      swaps.push_back(std::move(swap));
    }

    Gradients grads = net.zero_gradients();
    loss_sum += net.loss_and_gradients(batch.input, batch.labels, &grads);

    for (auto& swap : swaps) {
      net.layers[swap.layer].weight = std::move(swap.shadow);
      grads.weight[swap.layer].data.array() *= swap.grad_scale.data.array();
    }

    sgd_step(sgd, net, grads, mask);
  }
  return loss_sum / static_cast<double>(data.size());
}

double evaluate(const QuantModel& model, const BatchList& data) {
  std::size_t correct = 0, total = 0;
  for (const Batch& batch : data) {
    Tensor logits = model.net.forward(batch.input);
    const std::size_t classes =
        logits.shape[1] * logits.shape[2] * logits.shape[3];
    for (std::size_t b = 0; b < batch.labels.size(); ++b) {
      const double* row = logits.data.data() + b * classes;
      std::size_t arg = static_cast<std::size_t>(
          std::max_element(row, row + classes) - row);
      correct += (static_cast<int>(arg) == batch.labels[b]);
      ++total;
    }
  }
  return total ? static_cast<double>(correct) / static_cast<double>(total) : 0.0;
}

void freeze_layer(QuantModel& model, std::size_t qi,
                  const std::vector<Tensor>& calibration_inputs) {
  QuantLayerState& q = model.qlayers.at(qi);
  LayerNode& l = model.net.layers[q.layer];
  q.shadow = l.weight;
  q.dist = fit_layer_dist(model.net, q.layer, model.empirical_dist);
  q.weight_spec =
      build_weight_spec(model.net, q.layer, *q.dist, model.method, model.k_w);
  for (Eigen::Index j = 0; j < l.weight.data.size(); ++j)
    l.weight.data[j] = apply(*q.weight_spec, q.shadow.data[j]);
  q.mode = LayerMode::frozen_quantized;
  q.uniform_domain_spec.reset();

  if (q.act_site && !calibration_inputs.empty()) {
    auto acts = calibrate_activations(model.net, calibration_inputs,
                                      {*q.act_site}, model.k_a);
    q.act = std::move(acts.front());
    model.net.layers[*q.act_site].output_quantizer = &q.act->spec;
  }
}

void unfreeze_all(QuantModel& model) {
  for (auto& q : model.qlayers) {
    if (q.mode == LayerMode::frozen_quantized) {
      model.net.layers[q.layer].weight = q.shadow;
      if (q.act_site) model.net.layers[*q.act_site].output_quantizer = nullptr;
      q.act.reset();
      q.weight_spec.reset();
    }
    q.mode = LayerMode::untouched;
    q.uniform_domain_spec.reset();
    q.dist.reset();
  }
}

namespace {

void enter_noisy(QuantModel& model, std::size_t qi) {
  QuantLayerState& q = model.qlayers.at(qi);
  q.dist = fit_layer_dist(model.net, q.layer, model.empirical_dist);
  if (model.method != QuantMethod::kquantile) {
    QuantizerSpec real =
        build_weight_spec(model.net, q.layer, *q.dist, model.method, model.k_w);
    q.uniform_domain_spec = to_uniform_domain(real, *q.dist);
  } else {
    q.uniform_domain_spec.reset();
  }
  q.mode = LayerMode::noisy;
}

}  // namespace

void run_stage(QuantModel& model, const StagePlan& plan, std::size_t stage,
               const BatchList& train_data, SgdState& sgd,
               const std::vector<Tensor>& calibration_inputs,
               std::vector<StageRecord>* log, const BatchList* eval_data,
               std::size_t iteration, std::size_t* step) {
  if (stage < 1 || stage > plan.blocks.size())
    throw std::invalid_argument("run_stage: stage out of range");

  // Freeze the block trained in the previous stage.
  if (stage > 1)
    for (std::size_t qi : plan.blocks[stage - 2])
      if (model.qlayers[qi].mode != LayerMode::frozen_quantized)
        freeze_layer(model, qi, calibration_inputs);

  for (std::size_t qi : plan.blocks[stage - 1]) enter_noisy(model, qi);

  // Future blocks: untouched, optionally excluded from updates.
  std::vector<std::uint8_t> saved_trainable;
  if (plan.freeze_future) {
    saved_trainable.resize(model.net.layers.size(), 0);
    for (std::size_t b = stage; b < plan.blocks.size(); ++b)
      for (std::size_t qi : plan.blocks[b]) {
        std::size_t li = model.qlayers[qi].layer;
        saved_trainable[li] = model.net.layers[li].trainable;
        model.net.layers[li].trainable = false;
      }
  }

  const double saved_lr = sgd.lr;
  sgd.lr = saved_lr * plan.stage_lr_mult;
  std::size_t local_step = 0;
  if (!step) step = &local_step;
  for (std::size_t e = 0; e < plan.epochs_per_stage; ++e) {
    double loss = train_epoch(model, sgd, train_data, step);
    if (log) {
      StageRecord r;
      r.iteration = iteration;
      r.stage = stage;
      r.epoch = e + 1;
      r.train_loss = loss;
      r.eval_accuracy = eval_data ? evaluate(model, *eval_data) : 0.0;
      log->push_back(r);
    }
  }
  sgd.lr = saved_lr;

  if (plan.freeze_future)
    for (std::size_t b = stage; b < plan.blocks.size(); ++b)
      for (std::size_t qi : plan.blocks[b]) {
        std::size_t li = model.qlayers[qi].layer;
        model.net.layers[li].trainable = saved_trainable[li];
      }
}

void run_schedule(QuantModel& model, const StagePlan& plan,
                  const BatchList& train_data, SgdState& sgd,
                  const std::vector<Tensor>& calibration_inputs,
                  std::vector<StageRecord>* log, const BatchList* eval_data) {
  if (plan.blocks.empty()) throw std::invalid_argument("run_schedule: no blocks");
  std::size_t step = 0;
  for (std::size_t iter = 1; iter <= plan.restart_iterations; ++iter) {
    if (iter > 1) unfreeze_all(model);
    for (std::size_t stage = 1; stage <= plan.blocks.size(); ++stage)
      run_stage(model, plan, stage, train_data, sgd, calibration_inputs, log,
                eval_data, iter, &step);
    // Close the iteration: the last block ends frozen and quantized.
    for (std::size_t qi : plan.blocks.back())
      if (model.qlayers[qi].mode != LayerMode::frozen_quantized)
        freeze_layer(model, qi, calibration_inputs);
  }
}

}  // namespace uniq
