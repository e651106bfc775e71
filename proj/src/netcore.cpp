#include "sparsenet/netcore.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace sparsenet {

std::int64_t Architecture::total_param_count() const {
  std::int64_t total = 0;
  for (int l = 0; l < parametrized_layer_count(); ++l) total += layer_param_count(l);
  return total;
}

bool Architecture::all_dense() const {
  for (const auto& spec : layer_kinds)
    if (spec.kind != LayerKind::dense) return false;
  return true;
}

void Architecture::validate() const {
  if (layer_sizes.size() < 2)
    throw std::invalid_argument("architecture needs at least 2 unit layers, got " +
                                std::to_string(layer_sizes.size()));
  for (int n : layer_sizes)
    if (n < 1)
      throw std::invalid_argument("layer size must be >= 1, got " + std::to_string(n));
  if (layer_kinds.size() != layer_sizes.size() - 1)
    throw std::invalid_argument("expected one layer kind per parametrized layer (" +
                                std::to_string(layer_sizes.size() - 1) + "), got " +
                                std::to_string(layer_kinds.size()));
  for (const auto& spec : layer_kinds)
    if (spec.kind == LayerKind::conv_channel && (spec.kernel_h < 1 || spec.kernel_w < 1))
      throw std::invalid_argument("conv kernel dimensions must be positive");
  if (total_param_count() <= 0) throw std::invalid_argument("zero-parameter architecture");
}

Architecture dense_mlp(std::vector<int> layer_sizes) {
  Architecture arch;
  arch.layer_sizes = std::move(layer_sizes);
  arch.layer_kinds.assign(arch.layer_sizes.size() - 1, LayerSpec{});
  arch.validate();
  return arch;
}

std::int64_t SparseNet::layer_offset(int layer) const {
  std::int64_t offset = 0;
  for (int l = 0; l < layer; ++l) offset += arch.layer_param_count(l);
  return offset;
}

std::int64_t SparseNet::active_param_count() const {
  std::int64_t m = 0;
  for (const auto& layer : mask)
    m += std::accumulate(layer.begin(), layer.end(), std::int64_t{0});
  return m;
}

std::int64_t SparseNet::layer_active_count(int layer) const {
  return std::accumulate(mask[layer].begin(), mask[layer].end(), std::int64_t{0});
}

namespace {

// Per-layer sampler std-dev. Kaiming follows sigma_l^2 = 2/N_l with N_l the
// width of the layer the weights feed into.
double layer_stddev(const Architecture& arch, const InitSpec& init, int layer) {
  switch (init.scheme) {
    case InitSpec::Scheme::kaiming:
      return std::sqrt(2.0 / arch.layer_sizes[layer + 1]);
    case InitSpec::Scheme::normal_fixed:
      return init.normal_std;
    case InitSpec::Scheme::xavier_uniform:
      return 0.0;  // handled separately (uniform, not normal)
  }
  return 0.0;
}

double xavier_bound(const Architecture& arch, int layer) {
  const double fan_in =
      static_cast<double>(arch.layer_sizes[layer]) * arch.layer_kinds[layer].kernel_area();
  const double fan_out =
      static_cast<double>(arch.layer_sizes[layer + 1]) * arch.layer_kinds[layer].kernel_area();
  return std::sqrt(6.0 / (fan_in + fan_out));
}

}  // namespace

SparseNet build_network(const Architecture& arch, const InitSpec& init,
                        std::uint64_t seed) {
  arch.validate();
  if (init.scheme == InitSpec::Scheme::normal_fixed && !(init.normal_std > 0.0))
    throw std::invalid_argument("normal_fixed init requires a positive std");

  SparseNet net;
  net.arch = arch;
  net.rng_seed = seed;
  const int layers = arch.parametrized_layer_count();
  net.weights.resize(layers);
  net.mask.resize(layers);
  Rng root(seed);
  for (int l = 0; l < layers; ++l) {
    const auto count = static_cast<std::size_t>(arch.layer_param_count(l));
    net.weights[l].resize(count);
    net.mask[l].assign(count, 1);
    Rng rng = root.split(static_cast<std::uint64_t>(l));
    if (init.scheme == InitSpec::Scheme::xavier_uniform) {
      const double a = xavier_bound(arch, l);
      for (auto& w : net.weights[l]) w = rng.uniform(-a, a);
    } else {
      const double sd = layer_stddev(arch, init, l);
      for (auto& w : net.weights[l]) w = rng.normal(0.0, sd);
    }
  }
  return net;
}

double density(const SparseNet& net) {
  return static_cast<double>(net.active_param_count()) /
         static_cast<double>(net.arch.total_param_count());
}

double min_density(const Architecture& arch) {
  return static_cast<double>(arch.parametrized_layer_count()) /
         static_cast<double>(arch.total_param_count());
}

SparseNet apply_mask(const SparseNet& net) {
  SparseNet out = net;
  for (std::size_t l = 0; l < out.weights.size(); ++l)
    for (std::size_t i = 0; i < out.weights[l].size(); ++i)
      if (!out.mask[l][i]) out.weights[l][i] = 0.0;
  return out;
}

SparseNet reinitialize(const SparseNet& net, ReinitScheme scheme,
                       std::uint64_t seed, const InitSpec& init) {
  if (scheme == ReinitScheme::dense) {
    SparseNet fresh = build_network(net.arch, init, seed);
    fresh.mask = net.mask;
    return fresh;
  }

  SparseNet out = net;
  out.rng_seed = seed;
  Rng root(seed);
  const int layers = net.arch.parametrized_layer_count();
  for (int l = 0; l < layers; ++l) {
    const int n_in = net.arch.layer_sizes[l];
    const int n_out = net.arch.layer_sizes[l + 1];
    const int area = net.arch.layer_kinds[l].kernel_area();
    const double dense_fan_in = static_cast<double>(n_in) * area;
    Rng rng = root.split(static_cast<std::uint64_t>(l));

    // Active incoming entry count per destination unit.
    std::vector<std::int64_t> fan_in(n_out, 0);
    for (int o = 0; o < n_out; ++o)
      for (int i = 0; i < n_in; ++i)
        for (int k = 0; k < area; ++k)
          fan_in[o] += net.mask[l][net.entry_index(l, o, i, k)];

    const std::int64_t layer_active = net.layer_active_count(l);
    const double mean_fan_in = static_cast<double>(layer_active) / n_out;

    // Sampler keeps the init family: normal schemes stay normal with the
    // variance rescaled to the active fan-in; xavier stays uniform with a
    // rescaled bound.
    auto sample = [&](double active_fan) -> double {
      if (active_fan <= 0.0) return 0.0;
      switch (init.scheme) {
        case InitSpec::Scheme::kaiming:
          return rng.normal(0.0, std::sqrt(2.0 / active_fan));
        case InitSpec::Scheme::normal_fixed:
          return rng.normal(0.0, init.normal_std * std::sqrt(dense_fan_in / active_fan));
        case InitSpec::Scheme::xavier_uniform: {
          const double a = xavier_bound(net.arch, l) * std::sqrt(dense_fan_in / active_fan);
          return rng.uniform(-a, a);
        }
      }
      return 0.0;
    };

    for (int o = 0; o < n_out; ++o) {
      const double fan = scheme == ReinitScheme::layerwise_sparse
                             ? mean_fan_in
                             : static_cast<double>(fan_in[o]);
      for (int i = 0; i < n_in; ++i) {
        for (int k = 0; k < area; ++k) {
          const std::size_t idx = net.entry_index(l, o, i, k);
          out.weights[l][idx] = net.mask[l][idx] ? sample(fan) : 0.0;
        }
      }
    }
  }
  return out;
}

std::int64_t target_param_count(double density, std::int64_t total) {
  const double t = density * static_cast<double>(total);
  const double r = std::nearbyint(t);
  if (std::abs(t - r) < 1e-9 * std::max(1.0, std::abs(t)))
    return static_cast<std::int64_t>(r);
  return static_cast<std::int64_t>(std::ceil(t));
}

}  // namespace sparsenet
