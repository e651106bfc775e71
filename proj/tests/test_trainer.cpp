#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "oracles.hpp"
#include "sparsenet/errors.hpp"
#include "sparsenet/trainer.hpp"

using namespace sparsenet;

namespace {

Dataset random_dataset(int rows, int in_dim, int out_dim, std::uint64_t seed) {
  Dataset data;
  data.input_dim = in_dim;
  data.target_dim = out_dim;
  Rng rng(seed);
  for (int i = 0; i < rows * in_dim; ++i) data.inputs.push_back(rng.normal(0.0, 1.0));
  for (int i = 0; i < rows * out_dim; ++i) data.targets.push_back(rng.normal(0.0, 1.0));
  return data;
}

SparseNet random_masked(std::vector<int> sizes, std::uint64_t seed, double keep) {
  SparseNet net = build_network(dense_mlp(std::move(sizes)), InitSpec{}, seed);
  Rng rng(seed + 77);
  for (auto& layer : net.mask)
    for (auto& bit : layer) bit = rng.uniform01() < keep;
  return net;
}

}  // namespace

TEST_CASE("forward basics") {
  SparseNet net = build_network(dense_mlp({2, 3, 2}), InitSpec{}, 1);

  SUBCASE("zero weights give zero outputs") {
    for (auto& layer : net.weights) layer.assign(layer.size(), 0.0);
    const std::vector<double> x = {1.3, -0.4};
    const ForwardPass pass = forward(net, x, 1);
    for (double y : pass.activations.back()) CHECK(y == 0.0);
  }

  SUBCASE("a single all-ones path passes positive scalars through") {
    for (auto& layer : net.mask) layer.assign(layer.size(), 0);
    for (auto& layer : net.weights) layer.assign(layer.size(), 1.0);
    net.mask[0][net.entry_index(0, 2, 0)] = 1;
    net.mask[1][net.entry_index(1, 1, 2)] = 1;
    const std::vector<double> x = {0.7, 0.0};
    const ForwardPass pass = forward(net, x, 1);
    CHECK(pass.activations.back()[0] == 0.0);
    CHECK(pass.activations.back()[1] == 0.7);
  }

  SUBCASE("shape mismatch throws") {
    const std::vector<double> bad = {1.0, 2.0, 3.0};
    CHECK_THROWS_AS(forward(net, bad, 1), std::invalid_argument);
  }
}

TEST_CASE("forward equals the path-sum decomposition") {
  for (std::uint64_t seed = 0; seed < 8; ++seed) {
    const SparseNet net = random_masked({2, 3, 2}, seed, seed % 2 ? 0.8 : 1.0);
    Rng rng(seed + 9);
    const std::vector<double> x = {rng.normal(0.0, 1.0), rng.normal(0.0, 1.0)};
    const ForwardPass pass = forward(net, x, 1);
    const std::vector<double> oracle = oracles::path_sum_forward(net, x);
    for (int k = 0; k < 2; ++k)
      CHECK(std::abs(pass.activations.back()[k] - oracle[k]) <=
            1e-9 * std::max(1.0, std::abs(oracle[k])));
  }
}

TEST_CASE("gradients vanish on masked edges and at the optimum") {
  const SparseNet net = random_masked({3, 5, 3}, 4, 0.6);
  const Dataset batch = random_dataset(6, 3, 3, 2);
  const ForwardPass pass = forward(net, batch.inputs, 6);
  const auto dout = loss_gradient(TrainLoss::mse, pass.activations.back(),
                                  batch.targets, 6, 3);
  const auto grads = backward(net, pass, dout);
  for (std::size_t l = 0; l < grads.size(); ++l)
    for (std::size_t i = 0; i < grads[l].size(); ++i)
      if (!net.mask[l][i]) CHECK(grads[l][i] == 0.0);

  // Output == target: every gradient is zero.
  Dataset perfect = batch;
  perfect.targets = pass.activations.back();
  const auto dzero = loss_gradient(TrainLoss::mse, pass.activations.back(),
                                   perfect.targets, 6, 3);
  const auto zero_grads = backward(net, pass, dzero);
  for (const auto& layer : zero_grads)
    for (double g : layer) CHECK(g == 0.0);
}

TEST_CASE("backprop matches central finite differences") {
  const SparseNet net = random_masked({4, 6, 5, 4}, 11, 0.75);
  const Dataset batch = random_dataset(5, 4, 4, 3);

  const ForwardPass pass = forward(net, batch.inputs, 5);
  const auto dout = loss_gradient(TrainLoss::mse, pass.activations.back(),
                                  batch.targets, 5, 4);
  const auto grads = backward(net, pass, dout);

  auto loss_of = [&](const SparseNet& n) {
    return evaluate_loss(n, batch, TrainLoss::mse);
  };
  Rng pick(3);
  int checked = 0;
  while (checked < 20) {
    const int l = static_cast<int>(pick.uniform_index(net.weights.size()));
    const std::size_t i = pick.uniform_index(net.weights[l].size());
    if (!net.mask[l][i]) continue;
    const double fd = oracles::finite_difference(net, l, i, loss_of);
    if (std::abs(fd) < 1e-10) continue;
    CHECK(oracles::rel_err(grads[l][i], fd) < 1e-5);
    ++checked;
  }
}

TEST_CASE("softmax cross entropy gradient matches finite differences") {
  const SparseNet net = random_masked({3, 6, 4}, 6, 1.0);
  Dataset batch = random_dataset(4, 3, 4, 5);
  batch.targets.assign(16, 0.0);
  for (int r = 0; r < 4; ++r) batch.targets[r * 4 + r % 4] = 1.0;

  const ForwardPass pass = forward(net, batch.inputs, 4);
  const auto dout = loss_gradient(TrainLoss::softmax_cross_entropy,
                                  pass.activations.back(), batch.targets, 4, 4);
  const auto grads = backward(net, pass, dout);
  auto loss_of = [&](const SparseNet& n) {
    return evaluate_loss(n, batch, TrainLoss::softmax_cross_entropy);
  };
  Rng pick(8);
  for (int checked = 0; checked < 10;) {
    const int l = static_cast<int>(pick.uniform_index(net.weights.size()));
    const std::size_t i = pick.uniform_index(net.weights[l].size());
    const double fd = oracles::finite_difference(net, l, i, loss_of);
    if (std::abs(fd) < 1e-10) continue;
    CHECK(oracles::rel_err(grads[l][i], fd) < 1e-5);
    ++checked;
  }
}

TEST_CASE("training a linear map reduces the loss monotonically") {
  // y = 2x with a 1-1 "MLP" (single linear weight): a convex quadratic.
  SparseNet net = build_network(dense_mlp({1, 1}), InitSpec{}, 2);
  net.weights[0][0] = 0.1;
  Dataset data;
  data.input_dim = 1;
  data.target_dim = 1;
  Rng rng(1);
  for (int i = 0; i < 64; ++i) {
    const double x = rng.uniform(-1.0, 1.0);
    data.inputs.push_back(x);
    data.targets.push_back(2.0 * x);
  }
  TrainConfig config;
  config.epochs = 5;
  config.batch_size = 8;
  config.optimizer = SgdConfig{0.05, 0.0};
  config.loss = TrainLoss::mse;
  config.seed = 3;
  const TrainOutcome outcome = train(net, data, data, config);
  REQUIRE(outcome.report.epochs.size() == 5);
  for (std::size_t e = 1; e < outcome.report.epochs.size(); ++e)
    CHECK(outcome.report.epochs[e].train_loss <
          outcome.report.epochs[e - 1].train_loss);
  CHECK(outcome.report.final_eval_loss < 0.5);
}

TEST_CASE("zero epochs leave the weights untouched") {
  const SparseNet net = random_masked({3, 4, 3}, 8, 0.7);
  const Dataset data = random_dataset(10, 3, 3, 4);
  TrainConfig config;
  config.epochs = 0;
  const TrainOutcome outcome = train(net, data, data, config);
  CHECK(outcome.net.weights == net.weights);
  CHECK(outcome.net.mask == net.mask);
  CHECK(std::isnan(outcome.report.final_train_loss));
}

TEST_CASE("mask and density are invariant through training") {
  const SparseNet net = random_masked({4, 8, 4}, 9, 0.5);
  const double rho = density(net);
  const Dataset data = random_dataset(40, 4, 4, 6);
  TrainConfig config;
  config.epochs = 3;
  config.batch_size = 8;
  config.optimizer = AdamConfig{0.01};
  config.seed = 4;
  const TrainOutcome outcome = train(net, data, data, config);
  CHECK(outcome.net.mask == net.mask);
  CHECK(density(outcome.net) == rho);
  // Masked-out weights were never updated.
  for (std::size_t l = 0; l < net.weights.size(); ++l)
    for (std::size_t i = 0; i < net.weights[l].size(); ++i)
      if (!net.mask[l][i]) CHECK(outcome.net.weights[l][i] == net.weights[l][i]);
}

TEST_CASE("training is deterministic") {
  const SparseNet net = random_masked({4, 8, 4}, 10, 0.6);
  const Dataset data = random_dataset(32, 4, 4, 7);
  TrainConfig config;
  config.epochs = 4;
  config.batch_size = 8;
  config.optimizer = AdamConfig{0.005};
  config.lr_decay.kind = LrDecay::Kind::exponential_per_epoch;
  config.lr_decay.factor = 0.95;
  config.seed = 12;
  const TrainOutcome a = train(net, data, data, config);
  const TrainOutcome b = train(net, data, data, config);
  CHECK(a.net.weights == b.net.weights);
  REQUIRE(a.report.epochs.size() == b.report.epochs.size());
  for (std::size_t e = 0; e < a.report.epochs.size(); ++e) {
    CHECK(a.report.epochs[e].train_loss == b.report.epochs[e].train_loss);
    CHECK(a.report.epochs[e].eval_loss == b.report.epochs[e].eval_loss);
  }
}

TEST_CASE("divergence raises with the epoch index") {
  const SparseNet net = random_masked({2, 4, 2}, 3, 1.0);
  const Dataset data = random_dataset(16, 2, 2, 2);
  TrainConfig config;
  config.epochs = 50;
  config.batch_size = 4;
  config.optimizer = SgdConfig{1e12, 0.0};  // guaranteed blow-up
  config.seed = 1;
  CHECK_THROWS_AS(train(net, data, data, config), DivergenceError);
}

TEST_CASE("momentum and step decay run") {
  const SparseNet net = random_masked({3, 6, 3}, 5, 0.8);
  const Dataset data = random_dataset(24, 3, 3, 3);
  TrainConfig config;
  config.epochs = 6;
  config.batch_size = 8;
  config.optimizer = SgdConfig{0.01, 0.9};
  config.lr_decay.kind = LrDecay::Kind::step_drop;
  config.lr_decay.factor = 0.1;
  config.lr_decay.drop_epochs = {3, 5};
  config.seed = 2;
  const TrainOutcome outcome = train(net, data, data, config);
  CHECK(outcome.report.epochs.size() == 6);
  for (const auto& row : outcome.report.epochs) CHECK(std::isfinite(row.train_loss));
}

TEST_CASE("config validation") {
  TrainConfig config;
  config.batch_size = 0;
  CHECK_THROWS_AS(config.validate(), std::invalid_argument);
  config.batch_size = 8;
  config.optimizer = SgdConfig{0.1, 1.0};
  CHECK_THROWS_AS(config.validate(), std::invalid_argument);
  config.optimizer = SgdConfig{-0.1, 0.0};
  CHECK_THROWS_AS(config.validate(), std::invalid_argument);
}
