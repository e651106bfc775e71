#pragma once

#include <cstdint>
#include <span>
#include <variant>
#include <vector>

#include "sparsenet/netcore.hpp"
#include "sparsenet/tasks.hpp"

namespace sparsenet {

enum class TrainLoss { mse, softmax_cross_entropy };

struct SgdConfig {
  double lr = 0.01;
  double momentum = 0.0;
};

struct AdamConfig {
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct LrDecay {
  enum class Kind { none, exponential_per_epoch, step_drop };
  Kind kind = Kind::none;
  double factor = 1.0;           // multiplier per epoch (exponential) or per drop
  std::vector<int> drop_epochs;  // step_drop only
};

struct TrainConfig {
  int epochs = 10;
  int batch_size = 32;
  std::variant<SgdConfig, AdamConfig> optimizer = AdamConfig{};
  LrDecay lr_decay;
  TrainLoss loss = TrainLoss::mse;
  std::uint64_t seed = 0;

  void validate() const;  // throws std::invalid_argument
};

struct TrainReport {
  struct EpochRow {
    int epoch = 0;  // 1-based
    double train_loss = 0.0;
    double eval_loss = 0.0;
    double eval_accuracy = 0.0;  // NaN for regression losses
  };
  std::vector<EpochRow> epochs;
  double final_train_loss = 0.0;
  double final_eval_loss = 0.0;
  double final_eval_accuracy = 0.0;
};

// Batch activations, batch-major: activations[ul][b * width + u]. Layer 0
// holds the inputs, hidden layers the post-ReLU values, the last layer the
// linear outputs. preacts[l] caches hidden pre-activations for the ReLU
// subgradient (ReLU'(0) = 0).
struct ForwardPass {
  std::vector<std::vector<double>> activations;
  std::vector<std::vector<double>> preacts;
  int batch = 0;
};

// Masked forward pass for dense architectures (hidden ReLU, linear output).
ForwardPass forward(const SparseNet& net, std::span<const double> inputs,
                    int batch);

double loss_value(TrainLoss loss, std::span<const double> outputs,
                  std::span<const double> targets, int batch, int dim);

// d loss / d outputs, same shape as outputs.
std::vector<double> loss_gradient(TrainLoss loss, std::span<const double> outputs,
                                  std::span<const double> targets, int batch,
                                  int dim);

// Per-edge gradients, shape-congruent with the weight store; exactly zero
// wherever the mask is zero.
std::vector<std::vector<double>> backward(const SparseNet& net,
                                          const ForwardPass& pass,
                                          std::span<const double> output_grad);

struct TrainOutcome {
  SparseNet net;
  TrainReport report;
};

// Mini-batch training with a fixed seeded shuffle order per epoch. The mask
// is invariant throughout (updates multiplied by the mask; optimizer state
// exists only for active parameters). Throws DivergenceError with the epoch
// index on a non-finite loss.
TrainOutcome train(const SparseNet& net, const Dataset& train_data,
                   const Dataset& eval_data, const TrainConfig& config);

double evaluate_loss(const SparseNet& net, const Dataset& data, TrainLoss loss);
double evaluate_accuracy(const SparseNet& net, const Dataset& data);

}  // namespace sparsenet
