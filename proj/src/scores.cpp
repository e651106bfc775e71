#include "sparsenet/scores.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "sparsenet/errors.hpp"

namespace sparsenet {

namespace {

constexpr double kOverflowGuard = 1e300;

void check_finite(const std::vector<double>& values, const char* what) {
  for (double v : values)
    if (!std::isfinite(v) || v > kOverflowGuard)
      throw OverflowError(std::string(what) +
                          " accumulator left the double range; reduce depth/width "
                          "or use the log-domain objective");
}

// Effective |edge|^power between channel units u -> v: sum over active kernel
// entries (single entry for dense).
double edge_power(const SparseNet& net, int layer, int out, int in, int power) {
  const int area = net.arch.layer_kinds[layer].kernel_area();
  double sum = 0.0;
  for (int k = 0; k < area; ++k) {
    const std::size_t idx = net.entry_index(layer, out, in, k);
    if (!net.mask[layer][idx]) continue;
    const double a = std::abs(net.weights[layer][idx]);
    sum += power == 1 ? a : a * a;
  }
  return sum;
}

}  // namespace

TraceAccumulators trace_accumulators(const SparseNet& net, int power) {
  if (power != 1 && power != 2)
    throw std::invalid_argument("trace_accumulators: power must be 1 or 2");
  const Architecture& arch = net.arch;
  const int layers = arch.parametrized_layer_count();

  TraceAccumulators acc;
  acc.forward.resize(arch.unit_layer_count());
  acc.backward.resize(arch.unit_layer_count());
  acc.forward[0].assign(arch.input_dim(), 1.0);
  for (int l = 0; l < layers; ++l) {
    const int n_in = arch.layer_sizes[l];
    const int n_out = arch.layer_sizes[l + 1];
    acc.forward[l + 1].assign(n_out, 0.0);
    for (int o = 0; o < n_out; ++o) {
      double sum = 0.0;
      for (int i = 0; i < n_in; ++i)
        sum += edge_power(net, l, o, i, power) * acc.forward[l][i];
      acc.forward[l + 1][o] = sum;
    }
    check_finite(acc.forward[l + 1], "forward");
  }
  acc.backward[layers].assign(arch.output_dim(), 1.0);
  for (int l = layers - 1; l >= 0; --l) {
    const int n_in = arch.layer_sizes[l];
    const int n_out = arch.layer_sizes[l + 1];
    acc.backward[l].assign(n_in, 0.0);
    for (int i = 0; i < n_in; ++i) {
      double sum = 0.0;
      for (int o = 0; o < n_out; ++o)
        sum += edge_power(net, l, o, i, power) * acc.backward[l + 1][o];
      acc.backward[l][i] = sum;
    }
    check_finite(acc.backward[l], "backward");
  }
  return acc;
}

double synflow_objective(const SparseNet& net, int power) {
  const TraceAccumulators acc = trace_accumulators(net, power);
  double total = 0.0;
  for (double f : acc.forward.back()) total += f;
  if (!std::isfinite(total))
    throw OverflowError("synflow objective overflowed; use synflow_log_objective");
  return total;
}

double synflow_log_objective(const SparseNet& net, int power) {
  // log-sum-exp sweep: lf(v) = logsumexp over in-edges of (log edge + lf(u)).
  const Architecture& arch = net.arch;
  const int layers = arch.parametrized_layer_count();
  constexpr double kNegInf = -std::numeric_limits<double>::infinity();

  std::vector<double> lf(arch.input_dim(), 0.0);
  for (int l = 0; l < layers; ++l) {
    const int n_in = arch.layer_sizes[l];
    const int n_out = arch.layer_sizes[l + 1];
    std::vector<double> next(n_out, kNegInf);
    for (int o = 0; o < n_out; ++o) {
      double hi = kNegInf;
      std::vector<double> terms;
      terms.reserve(n_in);
      for (int i = 0; i < n_in; ++i) {
        const double e = edge_power(net, l, o, i, power);
        if (e <= 0.0 || lf[i] == kNegInf) continue;
        const double t = std::log(e) + lf[i];
        terms.push_back(t);
        hi = std::max(hi, t);
      }
      if (terms.empty()) continue;
      double s = 0.0;
      for (double t : terms) s += std::exp(t - hi);
      next[o] = hi + std::log(s);
    }
    lf = std::move(next);
  }
  double hi = kNegInf;
  for (double v : lf) hi = std::max(hi, v);
  if (hi == kNegInf) return kNegInf;  // no active complete path
  double s = 0.0;
  for (double v : lf)
    if (v != kNegInf) s += std::exp(v - hi);
  return hi + std::log(s);
}

double path_kernel_trace(const SparseNet& net) {
  const TraceAccumulators acc = trace_accumulators(net, 2);
  const Architecture& arch = net.arch;
  double trace = 0.0;
  for (int l = 0; l < arch.parametrized_layer_count(); ++l) {
    const int n_in = arch.layer_sizes[l];
    const int n_out = arch.layer_sizes[l + 1];
    const int area = arch.layer_kinds[l].kernel_area();
    for (int o = 0; o < n_out; ++o) {
      for (int i = 0; i < n_in; ++i) {
        std::int64_t active_entries = 0;
        for (int k = 0; k < area; ++k)
          active_entries += net.mask[l][net.entry_index(l, o, i, k)];
        if (!active_entries) continue;
        // (pi_p / theta_e)^2 does not involve the entry's own weight, so each
        // active entry of the kernel contributes the same F * B product.
        trace += static_cast<double>(active_entries) * acc.forward[l][i] *
                 acc.backward[l + 1][o];
      }
    }
  }
  if (!std::isfinite(trace)) throw OverflowError("path kernel trace overflowed");
  return trace;
}

ScoreMap synflow_score(const SparseNet& net, int power) {
  const TraceAccumulators acc = trace_accumulators(net, power);
  const Architecture& arch = net.arch;
  ScoreMap scores;
  scores.values.resize(arch.parametrized_layer_count());
  for (int l = 0; l < arch.parametrized_layer_count(); ++l) {
    const int n_in = arch.layer_sizes[l];
    const int n_out = arch.layer_sizes[l + 1];
    const int area = arch.layer_kinds[l].kernel_area();
    scores.values[l].assign(net.weights[l].size(), 0.0);
    for (int o = 0; o < n_out; ++o) {
      for (int i = 0; i < n_in; ++i) {
        const double fb = acc.forward[l][i] * acc.backward[l + 1][o];
        for (int k = 0; k < area; ++k) {
          const std::size_t idx = net.entry_index(l, o, i, k);
          if (!net.mask[l][idx]) continue;
          scores.values[l][idx] = std::abs(net.weights[l][idx]) * fb;
        }
      }
    }
    check_finite(scores.values[l], "score");
  }
  return scores;
}

ScoreMap snip_score(const SparseNet& net, const Dataset& batch, TrainLoss loss,
                    int batch_size) {
  if (batch.count() == 0)
    throw std::invalid_argument("snip_score: empty batch");
  if (batch_size < 1) throw std::invalid_argument("snip_score: batch_size >= 1");

  ScoreMap scores;
  scores.values.resize(net.weights.size());
  for (std::size_t l = 0; l < net.weights.size(); ++l)
    scores.values[l].assign(net.weights[l].size(), 0.0);

  for (std::int64_t begin = 0; begin < batch.count(); begin += batch_size) {
    const int b = static_cast<int>(std::min<std::int64_t>(batch_size, batch.count() - begin));
    std::span<const double> in(batch.input_row(begin),
                               static_cast<std::size_t>(b) * batch.input_dim);
    std::span<const double> tg(batch.target_row(begin),
                               static_cast<std::size_t>(b) * batch.target_dim);
    const ForwardPass pass = forward(net, in, b);
    const std::vector<double> dout =
        loss_gradient(loss, pass.activations.back(), tg, b, batch.target_dim);
    const auto grads = backward(net, pass, dout);
    for (std::size_t l = 0; l < grads.size(); ++l)
      for (std::size_t i = 0; i < grads[l].size(); ++i)
        scores.values[l][i] += std::abs(grads[l][i] * net.weights[l][i]);
  }
  return scores;
}

ScoreMap magnitude_score(const SparseNet& net) {
  ScoreMap scores;
  scores.values.resize(net.weights.size());
  for (std::size_t l = 0; l < net.weights.size(); ++l) {
    scores.values[l].resize(net.weights[l].size());
    for (std::size_t i = 0; i < net.weights[l].size(); ++i)
      scores.values[l][i] = std::abs(net.weights[l][i]);
  }
  return scores;
}

ScoreMap random_score(const SparseNet& net, std::uint64_t seed) {
  ScoreMap scores;
  scores.values.resize(net.weights.size());
  Rng rng(seed);
  for (std::size_t l = 0; l < net.weights.size(); ++l) {
    scores.values[l].resize(net.weights[l].size());
    for (auto& v : scores.values[l]) v = rng.uniform01();
  }
  return scores;
}

SparseNet prune_by_score(const SparseNet& net, const Scorer& scorer,
                         const PruneSchedule& schedule, double target_density) {
  if (!(target_density > 0.0 && target_density <= 1.0))
    throw std::invalid_argument("prune_by_score: target density must be in (0, 1]");
  if (schedule.iterations < 1)
    throw std::invalid_argument("prune_by_score: iterations must be >= 1");

  const std::int64_t total = net.arch.total_param_count();
  const std::int64_t target_m = target_param_count(target_density, total);

  SparseNet current = net;
  std::int64_t active = current.active_param_count();
  for (int t = 1; t <= schedule.iterations; ++t) {
    const double step_density =
        std::pow(target_density, static_cast<double>(t) / schedule.iterations);
    const std::int64_t keep =
        std::max(target_m, target_param_count(step_density, total));
    if (active <= keep) continue;

    const ScoreMap scores = scorer(current);
    // Rank active entries only; pruned entries are out of the running.
    std::vector<std::pair<double, std::int64_t>> ranked;
    ranked.reserve(static_cast<std::size_t>(active));
    std::int64_t offset = 0;
    for (std::size_t l = 0; l < current.mask.size(); ++l) {
      for (std::size_t i = 0; i < current.mask[l].size(); ++i)
        if (current.mask[l][i])
          ranked.emplace_back(scores.values[l][i], offset + static_cast<std::int64_t>(i));
      offset += static_cast<std::int64_t>(current.mask[l].size());
    }
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
      if (a.first != b.first) return a.first > b.first;
      return a.second < b.second;  // ties keep the lower flat index
    });

    std::vector<std::uint8_t> keep_flat(static_cast<std::size_t>(total), 0);
    for (std::int64_t r = 0; r < keep; ++r)
      keep_flat[static_cast<std::size_t>(ranked[static_cast<std::size_t>(r)].second)] = 1;
    offset = 0;
    for (std::size_t l = 0; l < current.mask.size(); ++l) {
      for (std::size_t i = 0; i < current.mask[l].size(); ++i)
        current.mask[l][i] =
            current.mask[l][i] && keep_flat[static_cast<std::size_t>(offset + static_cast<std::int64_t>(i))];
      offset += static_cast<std::int64_t>(current.mask[l].size());
    }
    active = keep;
  }
  return current;
}

}  // namespace sparsenet
