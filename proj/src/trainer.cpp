#include "sparsenet/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>

#include "sparsenet/errors.hpp"

namespace sparsenet {

void TrainConfig::validate() const {
  if (epochs < 0) throw std::invalid_argument("epochs must be >= 0");
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (const auto* sgd = std::get_if<SgdConfig>(&optimizer)) {
    if (!(sgd->lr > 0.0)) throw std::invalid_argument("lr must be > 0");
    if (sgd->momentum < 0.0 || sgd->momentum >= 1.0)
      throw std::invalid_argument("momentum must be in [0, 1)");
  } else {
    const auto& adam = std::get<AdamConfig>(optimizer);
    if (!(adam.lr > 0.0)) throw std::invalid_argument("lr must be > 0");
  }
}

void Dataset::validate() const {
  if (input_dim < 1 || target_dim < 1)
    throw std::invalid_argument("dataset dims must be positive");
  if (inputs.size() % static_cast<std::size_t>(input_dim) != 0 ||
      targets.size() % static_cast<std::size_t>(target_dim) != 0)
    throw std::invalid_argument("dataset storage not a whole number of rows");
  if (static_cast<std::int64_t>(targets.size()) / target_dim != count())
    throw std::invalid_argument("dataset input/target row counts differ");
  for (double v : inputs)
    if (!std::isfinite(v)) throw std::invalid_argument("non-finite dataset input");
  for (double v : targets)
    if (!std::isfinite(v)) throw std::invalid_argument("non-finite dataset target");
}

ForwardPass forward(const SparseNet& net, std::span<const double> inputs,
                    int batch) {
  const Architecture& arch = net.arch;
  if (!arch.all_dense())
    throw std::invalid_argument("forward: dense architectures only");
  if (inputs.size() != static_cast<std::size_t>(batch) * arch.input_dim())
    throw std::invalid_argument("forward: input size " + std::to_string(inputs.size()) +
                                " does not match batch " + std::to_string(batch) +
                                " x D " + std::to_string(arch.input_dim()));

  const int layers = arch.parametrized_layer_count();
  ForwardPass pass;
  pass.batch = batch;
  pass.activations.resize(layers + 1);
  pass.preacts.resize(layers);
  pass.activations[0].assign(inputs.begin(), inputs.end());

  for (int l = 0; l < layers; ++l) {
    const int n_in = arch.layer_sizes[l];
    const int n_out = arch.layer_sizes[l + 1];
    const bool is_output = l == layers - 1;
    std::vector<double>& z = pass.preacts[l];
    z.assign(static_cast<std::size_t>(batch) * n_out, 0.0);
    const std::vector<double>& prev = pass.activations[l];
    for (int b = 0; b < batch; ++b) {
      const double* x = prev.data() + static_cast<std::size_t>(b) * n_in;
      double* out = z.data() + static_cast<std::size_t>(b) * n_out;
      for (int o = 0; o < n_out; ++o) {
        const std::size_t row = net.entry_index(l, o, 0);
        double sum = 0.0;
        for (int i = 0; i < n_in; ++i)
          if (net.mask[l][row + i]) sum += net.weights[l][row + i] * x[i];
        out[o] = sum;
      }
    }
    if (is_output) {
      pass.activations[l + 1] = z;
    } else {
      pass.activations[l + 1].resize(z.size());
      for (std::size_t i = 0; i < z.size(); ++i)
        pass.activations[l + 1][i] = z[i] > 0.0 ? z[i] : 0.0;
    }
  }
  return pass;
}

double loss_value(TrainLoss loss, std::span<const double> outputs,
                  std::span<const double> targets, int batch, int dim) {
  const std::size_t n = static_cast<std::size_t>(batch) * dim;
  if (outputs.size() != n || targets.size() != n)
    throw std::invalid_argument("loss_value: shape mismatch");
  if (loss == TrainLoss::mse) {
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double d = outputs[i] - targets[i];
      sum += d * d;
    }
    return sum / static_cast<double>(n);
  }
  // Softmax cross entropy, mean over the batch; targets are one-hot rows.
  double total = 0.0;
  for (int b = 0; b < batch; ++b) {
    const double* y = outputs.data() + static_cast<std::size_t>(b) * dim;
    const double* t = targets.data() + static_cast<std::size_t>(b) * dim;
    const double hi = *std::max_element(y, y + dim);
    double z = 0.0;
    for (int k = 0; k < dim; ++k) z += std::exp(y[k] - hi);
    const double logz = std::log(z) + hi;
    for (int k = 0; k < dim; ++k) total += t[k] * (logz - y[k]);
  }
  return total / batch;
}

std::vector<double> loss_gradient(TrainLoss loss, std::span<const double> outputs,
                                  std::span<const double> targets, int batch,
                                  int dim) {
  const std::size_t n = static_cast<std::size_t>(batch) * dim;
  std::vector<double> grad(n);
  if (loss == TrainLoss::mse) {
    const double scale = 2.0 / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) grad[i] = scale * (outputs[i] - targets[i]);
    return grad;
  }
  for (int b = 0; b < batch; ++b) {
    const double* y = outputs.data() + static_cast<std::size_t>(b) * dim;
    const double* t = targets.data() + static_cast<std::size_t>(b) * dim;
    double* g = grad.data() + static_cast<std::size_t>(b) * dim;
    const double hi = *std::max_element(y, y + dim);
    double z = 0.0;
    for (int k = 0; k < dim; ++k) z += std::exp(y[k] - hi);
    for (int k = 0; k < dim; ++k)
      g[k] = (std::exp(y[k] - hi) / z - t[k]) / batch;
  }
  return grad;
}

std::vector<std::vector<double>> backward(const SparseNet& net,
                                          const ForwardPass& pass,
                                          std::span<const double> output_grad) {
  const Architecture& arch = net.arch;
  const int layers = arch.parametrized_layer_count();
  const int batch = pass.batch;

  std::vector<std::vector<double>> grads(layers);
  std::vector<double> delta(output_grad.begin(), output_grad.end());
  for (int l = layers - 1; l >= 0; --l) {
    const int n_in = arch.layer_sizes[l];
    const int n_out = arch.layer_sizes[l + 1];
    grads[l].assign(net.weights[l].size(), 0.0);
    const std::vector<double>& prev = pass.activations[l];

    for (int b = 0; b < batch; ++b) {
      const double* x = prev.data() + static_cast<std::size_t>(b) * n_in;
      const double* d = delta.data() + static_cast<std::size_t>(b) * n_out;
      for (int o = 0; o < n_out; ++o) {
        if (d[o] == 0.0) continue;
        const std::size_t row = net.entry_index(l, o, 0);
        for (int i = 0; i < n_in; ++i)
          if (net.mask[l][row + i]) grads[l][row + i] += d[o] * x[i];
      }
    }

    if (l == 0) break;
    // delta_prev = W^T delta, gated by the ReLU subgradient (0 at 0).
    std::vector<double> next(static_cast<std::size_t>(batch) * n_in, 0.0);
    const std::vector<double>& z_prev = pass.preacts[l - 1];
    for (int b = 0; b < batch; ++b) {
      const double* d = delta.data() + static_cast<std::size_t>(b) * n_out;
      const double* z = z_prev.data() + static_cast<std::size_t>(b) * n_in;
      double* nd = next.data() + static_cast<std::size_t>(b) * n_in;
      for (int o = 0; o < n_out; ++o) {
        if (d[o] == 0.0) continue;
        const std::size_t row = net.entry_index(l, o, 0);
        for (int i = 0; i < n_in; ++i)
          if (net.mask[l][row + i] && z[i] > 0.0)
            nd[i] += net.weights[l][row + i] * d[o];
      }
    }
    delta = std::move(next);
  }
  return grads;
}

double evaluate_loss(const SparseNet& net, const Dataset& data, TrainLoss loss) {
  const int b = static_cast<int>(data.count());
  const ForwardPass pass = forward(net, data.inputs, b);
  return loss_value(loss, pass.activations.back(), data.targets, b, data.target_dim);
}

double evaluate_accuracy(const SparseNet& net, const Dataset& data) {
  const int b = static_cast<int>(data.count());
  const ForwardPass pass = forward(net, data.inputs, b);
  const std::vector<double>& y = pass.activations.back();
  std::int64_t hits = 0;
  for (int r = 0; r < b; ++r) {
    const double* yr = y.data() + static_cast<std::size_t>(r) * data.target_dim;
    const double* tr = data.target_row(r);
    const int pred = static_cast<int>(std::max_element(yr, yr + data.target_dim) - yr);
    const int truth = static_cast<int>(std::max_element(tr, tr + data.target_dim) - tr);
    hits += pred == truth;
  }
  return static_cast<double>(hits) / b;
}

namespace {

// Flat list of active entries; optimizer state exists only for these.
struct ActiveIndex {
  std::vector<std::pair<int, std::size_t>> entries;  // (layer, index)

  explicit ActiveIndex(const SparseNet& net) {
    for (std::size_t l = 0; l < net.mask.size(); ++l)
      for (std::size_t i = 0; i < net.mask[l].size(); ++i)
        if (net.mask[l][i]) entries.emplace_back(static_cast<int>(l), i);
  }
};

}  // namespace

TrainOutcome train(const SparseNet& net, const Dataset& train_data,
                   const Dataset& eval_data, const TrainConfig& config) {
  config.validate();
  train_data.validate();
  eval_data.validate();
  if (train_data.count() == 0) throw std::invalid_argument("train: empty dataset");
  if (train_data.input_dim != net.arch.input_dim() ||
      train_data.target_dim != net.arch.output_dim())
    throw std::invalid_argument("train: dataset dims do not match the architecture");

  TrainOutcome outcome;
  outcome.net = net;
  SparseNet& model = outcome.net;

  const ActiveIndex active(model);
  const bool use_adam = std::holds_alternative<AdamConfig>(config.optimizer);
  const SgdConfig sgd = use_adam ? SgdConfig{} : std::get<SgdConfig>(config.optimizer);
  const AdamConfig adam = use_adam ? std::get<AdamConfig>(config.optimizer) : AdamConfig{};

  std::vector<double> velocity;   // SGD momentum
  std::vector<double> m1, m2;     // Adam moments
  if (use_adam) {
    m1.assign(active.entries.size(), 0.0);
    m2.assign(active.entries.size(), 0.0);
  } else if (sgd.momentum > 0.0) {
    velocity.assign(active.entries.size(), 0.0);
  }

  const std::int64_t count = train_data.count();
  std::vector<std::int64_t> order(static_cast<std::size_t>(count));
  std::iota(order.begin(), order.end(), 0);

  double base_lr = use_adam ? adam.lr : sgd.lr;
  std::int64_t adam_t = 0;
  Rng shuffle_root(config.seed);

  std::vector<double> batch_in, batch_tg;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    double lr = base_lr;
    switch (config.lr_decay.kind) {
      case LrDecay::Kind::none:
        break;
      case LrDecay::Kind::exponential_per_epoch:
        lr = base_lr * std::pow(config.lr_decay.factor, epoch);
        break;
      case LrDecay::Kind::step_drop: {
        int drops = 0;
        for (int at : config.lr_decay.drop_epochs)
          if (epoch >= at) ++drops;
        lr = base_lr * std::pow(config.lr_decay.factor, drops);
        break;
      }
    }

    // Deterministic Fisher-Yates shuffle per epoch.
    Rng shuffle = shuffle_root.split(static_cast<std::uint64_t>(epoch));
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[shuffle.uniform_index(i)]);

    double epoch_loss = 0.0;
    for (std::int64_t begin = 0; begin < count; begin += config.batch_size) {
      const int b =
          static_cast<int>(std::min<std::int64_t>(config.batch_size, count - begin));
      batch_in.resize(static_cast<std::size_t>(b) * train_data.input_dim);
      batch_tg.resize(static_cast<std::size_t>(b) * train_data.target_dim);
      for (int r = 0; r < b; ++r) {
        const std::int64_t src = order[static_cast<std::size_t>(begin + r)];
        std::copy_n(train_data.input_row(src), train_data.input_dim,
                    batch_in.begin() + static_cast<std::size_t>(r) * train_data.input_dim);
        std::copy_n(train_data.target_row(src), train_data.target_dim,
                    batch_tg.begin() + static_cast<std::size_t>(r) * train_data.target_dim);
      }

      const ForwardPass pass = forward(model, batch_in, b);
      const double batch_loss = loss_value(config.loss, pass.activations.back(),
                                           batch_tg, b, train_data.target_dim);
      if (!std::isfinite(batch_loss))
        throw DivergenceError("training diverged (non-finite loss) at epoch " +
                                  std::to_string(epoch + 1),
                              epoch + 1);
      epoch_loss += batch_loss * b;

      const std::vector<double> dout = loss_gradient(
          config.loss, pass.activations.back(), batch_tg, b, train_data.target_dim);
      const auto grads = backward(model, pass, dout);

      if (use_adam) {
        ++adam_t;
        const double bc1 = 1.0 - std::pow(adam.beta1, static_cast<double>(adam_t));
        const double bc2 = 1.0 - std::pow(adam.beta2, static_cast<double>(adam_t));
        for (std::size_t e = 0; e < active.entries.size(); ++e) {
          const auto [l, i] = active.entries[e];
          const double g = grads[static_cast<std::size_t>(l)][i];
          m1[e] = adam.beta1 * m1[e] + (1.0 - adam.beta1) * g;
          m2[e] = adam.beta2 * m2[e] + (1.0 - adam.beta2) * g * g;
          model.weights[static_cast<std::size_t>(l)][i] -=
              lr * (m1[e] / bc1) / (std::sqrt(m2[e] / bc2) + adam.eps);
        }
      } else if (sgd.momentum > 0.0) {
        for (std::size_t e = 0; e < active.entries.size(); ++e) {
          const auto [l, i] = active.entries[e];
          velocity[e] = sgd.momentum * velocity[e] + grads[static_cast<std::size_t>(l)][i];
          model.weights[static_cast<std::size_t>(l)][i] -= lr * velocity[e];
        }
      } else {
        for (const auto& [l, i] : active.entries)
          model.weights[static_cast<std::size_t>(l)][i] -=
              lr * grads[static_cast<std::size_t>(l)][i];
      }
    }

    TrainReport::EpochRow row;
    row.epoch = epoch + 1;
    row.train_loss = epoch_loss / static_cast<double>(count);
    row.eval_loss = evaluate_loss(model, eval_data, config.loss);
    row.eval_accuracy = config.loss == TrainLoss::softmax_cross_entropy
                            ? evaluate_accuracy(model, eval_data)
                            : std::numeric_limits<double>::quiet_NaN();
    outcome.report.epochs.push_back(row);
  }

  if (!outcome.report.epochs.empty()) {
    const auto& last = outcome.report.epochs.back();
    outcome.report.final_train_loss = last.train_loss;
    outcome.report.final_eval_loss = last.eval_loss;
    outcome.report.final_eval_accuracy = last.eval_accuracy;
  } else {
    outcome.report.final_train_loss = std::numeric_limits<double>::quiet_NaN();
    outcome.report.final_eval_loss = evaluate_loss(model, eval_data, config.loss);
    outcome.report.final_eval_accuracy =
        config.loss == TrainLoss::softmax_cross_entropy
            ? evaluate_accuracy(model, eval_data)
            : std::numeric_limits<double>::quiet_NaN();
  }
  return outcome;
}

}  // namespace sparsenet
