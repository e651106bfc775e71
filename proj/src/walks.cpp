#include "sparsenet/walks.hpp"

#include <cmath>
#include <cstdio>
#include <stdexcept>
#include <string>

#include "sparsenet/errors.hpp"

namespace sparsenet {

std::vector<double> transition_probs(std::span<const double> magnitudes,
                                     WalkBias bias) {
  if (magnitudes.empty())
    throw std::invalid_argument("transition_probs: empty magnitude vector");
  const std::size_t n = magnitudes.size();
  std::vector<double> probs(n);
  switch (bias) {
    case WalkBias::uniform: {
      const double p = 1.0 / static_cast<double>(n);
      for (auto& v : probs) v = p;
      return probs;
    }
    case WalkBias::weight_biased: {
      double total = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        probs[i] = std::abs(magnitudes[i]);
        total += probs[i];
      }
      if (total == 0.0)
        throw DegenerateDistributionError(
            "weight-biased transition over an all-zero magnitude vector");
      for (auto& v : probs) v /= total;
      return probs;
    }
    case WalkBias::inverse_weight_biased: {
      constexpr double kEps = 1e-12;
      double total = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        probs[i] = 1.0 / (std::abs(magnitudes[i]) + kEps);
        total += probs[i];
      }
      for (auto& v : probs) v /= total;
      return probs;
    }
  }
  throw std::logic_error("unreachable");
}

namespace {

// Inverse-CDF draw; the final index absorbs any floating-point leftover.
std::size_t sample_from(const std::vector<double>& probs, Rng& rng) {
  const double u = rng.uniform01();
  double acc = 0.0;
  for (std::size_t i = 0; i + 1 < probs.size(); ++i) {
    acc += probs[i];
    if (u < acc) return i;
  }
  return probs.size() - 1;
}

std::vector<double> probs_with_fallback(const std::vector<double>& magnitudes,
                                        WalkBias bias) {
  try {
    return transition_probs(magnitudes, bias);
  } catch (const DegenerateDistributionError&) {
    // Cannot happen after a random init, only under adversarial weights; the
    // walk still has to terminate.
    std::fprintf(stderr,
                 "warning: all-zero magnitudes at a walk hop, using uniform\n");
    return transition_probs(magnitudes, WalkBias::uniform);
  }
}

int pick_kernel_entry(std::span<const double> kernel, Rng& rng) {
  std::vector<double> mags(kernel.begin(), kernel.end());
  std::vector<double> probs;
  try {
    probs = transition_probs(mags, WalkBias::weight_biased);
  } catch (const DegenerateDistributionError&) {
    probs = transition_probs(mags, WalkBias::uniform);
  }
  return static_cast<int>(sample_from(probs, rng));
}

}  // namespace

WalkRecord run_walk(const SparseNet& net, bool forward, int start_unit,
                    WalkBias bias, Rng& rng, bool conserve_kernel) {
  const Architecture& arch = net.arch;
  const int layers = arch.parametrized_layer_count();
  const int boundary = forward ? arch.input_dim() : arch.output_dim();
  if (start_unit < 0 || start_unit >= boundary)
    throw std::invalid_argument("run_walk: start unit " + std::to_string(start_unit) +
                                " out of range for boundary width " +
                                std::to_string(boundary));

  WalkRecord rec;
  rec.forward = forward;
  rec.start_unit = start_unit;
  rec.steps.reserve(layers);

  int unit = start_unit;
  for (int h = 0; h < layers; ++h) {
    const int l = forward ? h : layers - 1 - h;
    const int n_in = arch.layer_sizes[l];
    const int n_out = arch.layer_sizes[l + 1];
    const int area = arch.layer_kinds[l].kernel_area();
    const int candidates = forward ? n_out : n_in;

    // Per-candidate-edge magnitude: |theta| for dense, kernel L1 norm for conv.
    std::vector<double> mags(candidates);
    for (int c = 0; c < candidates; ++c) {
      const int out = forward ? c : unit;
      const int in = forward ? unit : c;
      double mag = 0.0;
      for (int k = 0; k < area; ++k)
        mag += std::abs(net.weights[l][net.entry_index(l, out, in, k)]);
      mags[c] = mag;
    }
    const int chosen = static_cast<int>(sample_from(probs_with_fallback(mags, bias), rng));

    WalkStep step;
    step.layer = l;
    step.from_unit = forward ? unit : chosen;
    step.to_unit = forward ? chosen : unit;
    if (arch.layer_kinds[l].kind == LayerKind::conv_channel) {
      if (conserve_kernel) {
        step.kernel_entry = -1;
      } else {
        const std::size_t base = net.entry_index(l, step.to_unit, step.from_unit, 0);
        step.kernel_entry = pick_kernel_entry(
            std::span<const double>(net.weights[l].data() + base,
                                    static_cast<std::size_t>(area)),
            rng);
      }
    } else {
      step.kernel_entry = 0;
    }
    rec.steps.push_back(step);
    unit = chosen;
  }
  return rec;
}

namespace {

// Activates a walk's entries in the mask; returns the number of newly
// activated parameters.
std::int64_t activate_walk(SparseNet& net, const WalkRecord& walk) {
  std::int64_t fresh = 0;
  for (const WalkStep& step : walk.steps) {
    const int area = net.arch.layer_kinds[step.layer].kernel_area();
    if (step.kernel_entry < 0) {
      for (int k = 0; k < area; ++k) {
        auto& bit = net.mask[step.layer][net.entry_index(step.layer, step.to_unit,
                                                         step.from_unit, k)];
        fresh += bit == 0;
        bit = 1;
      }
    } else {
      auto& bit = net.mask[step.layer][net.entry_index(
          step.layer, step.to_unit, step.from_unit, step.kernel_entry)];
      fresh += bit == 0;
      bit = 1;
    }
  }
  return fresh;
}

}  // namespace

PhewResult phew_prune(const SparseNet& net, double target_density,
                      WalkBias bias, std::uint64_t seed, bool conserve_kernel) {
  const double rho_min = min_density(net.arch);
  if (target_density < rho_min || target_density > 1.0)
    throw std::invalid_argument(
        "phew_prune: target density " + std::to_string(target_density) +
        " outside [rho_min, 1] with rho_min = L/M = " + std::to_string(rho_min));

  const std::int64_t total = net.arch.total_param_count();
  const std::int64_t target_m = target_param_count(target_density, total);

  PhewResult result;
  result.net = net;
  for (auto& layer : result.net.mask) layer.assign(layer.size(), 0);
  result.budget.target_density = target_density;
  result.budget.forward_start_counts.assign(net.arch.input_dim(), 0);
  result.budget.backward_start_counts.assign(net.arch.output_dim(), 0);

  Rng rng(seed);
  std::int64_t active = 0;
  std::int64_t next_forward = 0;
  std::int64_t next_backward = 0;
  while (active < target_m) {
    const bool forward = result.budget.achieved_walk_count % 2 == 0;
    int start;
    if (forward) {
      start = static_cast<int>(next_forward % net.arch.input_dim());
      ++next_forward;
      ++result.budget.forward_start_counts[start];
    } else {
      start = static_cast<int>(next_backward % net.arch.output_dim());
      ++next_backward;
      ++result.budget.backward_start_counts[start];
    }
    WalkRecord walk = run_walk(net, forward, start, bias, rng, conserve_kernel);
    active += activate_walk(result.net, walk);
    result.log.walks.push_back(std::move(walk));
    ++result.budget.achieved_walk_count;
  }
  return result;
}

WalkTraceLog run_balanced_walks(const SparseNet& net, std::int64_t walk_count,
                                WalkBias bias, std::uint64_t seed) {
  WalkTraceLog log;
  log.walks.reserve(static_cast<std::size_t>(walk_count));
  Rng rng(seed);
  std::int64_t next_forward = 0;
  std::int64_t next_backward = 0;
  for (std::int64_t w = 0; w < walk_count; ++w) {
    const bool forward = w % 2 == 0;
    const int start = forward
                          ? static_cast<int>(next_forward++ % net.arch.input_dim())
                          : static_cast<int>(next_backward++ % net.arch.output_dim());
    log.walks.push_back(run_walk(net, forward, start, bias, rng));
  }
  return log;
}

std::vector<std::vector<std::int64_t>> walk_unit_histogram(
    const WalkTraceLog& log, const Architecture& arch) {
  std::vector<std::vector<std::int64_t>> counts(arch.unit_layer_count());
  for (int ul = 0; ul < arch.unit_layer_count(); ++ul)
    counts[ul].assign(arch.layer_sizes[ul], 0);
  for (const WalkRecord& walk : log.walks) {
    for (const WalkStep& step : walk.steps) {
      // Source unit of the walk's first step covers that unit layer; every
      // step then covers its destination-side unit layer.
      if (&step == &walk.steps.front()) {
        const int ul = walk.forward ? step.layer : step.layer + 1;
        const int unit = walk.forward ? step.from_unit : step.to_unit;
        ++counts[ul][unit];
      }
      const int ul = walk.forward ? step.layer + 1 : step.layer;
      const int unit = walk.forward ? step.to_unit : step.from_unit;
      ++counts[ul][unit];
    }
  }
  return counts;
}

SparseNet mask_from_walks(const SparseNet& net, const WalkTraceLog& log) {
  SparseNet out = net;
  for (auto& layer : out.mask) layer.assign(layer.size(), 0);
  for (const WalkRecord& walk : log.walks) activate_walk(out, walk);
  return out;
}

double path_trace_contribution(const SparseNet& net, const WalkRecord& walk) {
  // sum_e prod_{e' != e} theta^2, accumulated without dividing so a zero
  // weight on the path stays well-defined.
  const std::size_t n = walk.steps.size();
  std::vector<double> sq(n);
  for (std::size_t i = 0; i < n; ++i) {
    const WalkStep& s = walk.steps[i];
    const int entry = s.kernel_entry < 0 ? 0 : s.kernel_entry;
    const double w =
        net.weights[s.layer][net.entry_index(s.layer, s.to_unit, s.from_unit, entry)];
    sq[i] = w * w;
  }
  std::vector<double> prefix(n + 1, 1.0), suffix(n + 1, 1.0);
  for (std::size_t i = 0; i < n; ++i) prefix[i + 1] = prefix[i] * sq[i];
  for (std::size_t i = n; i-- > 0;) suffix[i] = suffix[i + 1] * sq[i];
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) total += prefix[i] * suffix[i + 1];
  return total;
}

}  // namespace sparsenet
