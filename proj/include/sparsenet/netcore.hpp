#pragma once

#include <cstdint>
#include <vector>

#include "sparsenet/rng.hpp"

namespace sparsenet {

enum class LayerKind { dense, conv_channel };

struct LayerSpec {
  LayerKind kind = LayerKind::dense;
  int kernel_h = 1;
  int kernel_w = 1;

  int kernel_area() const {
    return kind == LayerKind::dense ? 1 : kernel_h * kernel_w;
  }
  bool operator==(const LayerSpec&) const = default;
};

// Layer widths N_0..N_L plus one LayerSpec per parametrized layer.
// Parametrized layer l (0-based, l = 0..L-1) connects unit layer l (source,
// width layer_sizes[l]) to unit layer l+1 (destination, width
// layer_sizes[l+1]). Reports use 1-based layer numbers; code never relies on
// a bare "L" since the hidden-layer and parametrized-layer counts differ.
struct Architecture {
  std::vector<int> layer_sizes;
  std::vector<LayerSpec> layer_kinds;

  int unit_layer_count() const { return static_cast<int>(layer_sizes.size()); }
  int parametrized_layer_count() const { return unit_layer_count() - 1; }
  int hidden_layer_count() const { return unit_layer_count() - 2; }
  int input_dim() const { return layer_sizes.front(); }
  int output_dim() const { return layer_sizes.back(); }

  std::int64_t layer_param_count(int layer) const {
    return static_cast<std::int64_t>(layer_sizes[layer]) *
           layer_sizes[layer + 1] * layer_kinds[layer].kernel_area();
  }
  std::int64_t total_param_count() const;  // M
  bool all_dense() const;

  // Throws std::invalid_argument on bad dimensions.
  void validate() const;

  bool operator==(const Architecture&) const = default;
};

// Convenience constructor for an all-dense MLP.
Architecture dense_mlp(std::vector<int> layer_sizes);

struct InitSpec {
  enum class Scheme { kaiming, normal_fixed, xavier_uniform };
  Scheme scheme = Scheme::kaiming;
  double normal_std = 0.1;  // normal_fixed only

  bool operator==(const InitSpec&) const = default;
};

// Masked layered network; the single source of truth for every method.
//
// Weight entry (out, in, k) of parametrized layer l lives at flat position
// ((out * N_in) + in) * kernel_area + k inside weights[l]; mask is
// shape-congruent with entries in {0, 1}. Anything that reads a weight for a
// forward pass or a score must read weight * mask.
//
// Values are treated as immutable after construction: operations return new
// nets, so sharing a SparseNet read-only across threads is safe.
struct SparseNet {
  Architecture arch;
  std::vector<std::vector<double>> weights;
  std::vector<std::vector<std::uint8_t>> mask;
  std::uint64_t rng_seed = 0;

  std::size_t entry_index(int layer, int out, int in, int k = 0) const {
    const auto n_in = static_cast<std::size_t>(arch.layer_sizes[layer]);
    const auto area = static_cast<std::size_t>(arch.layer_kinds[layer].kernel_area());
    return (static_cast<std::size_t>(out) * n_in + static_cast<std::size_t>(in)) * area +
           static_cast<std::size_t>(k);
  }

  // Flat index of the layer's first entry in the whole-network ordering used
  // for deterministic tie-breaking.
  std::int64_t layer_offset(int layer) const;

  double masked_weight(int layer, std::size_t idx) const {
    return mask[layer][idx] ? weights[layer][idx] : 0.0;
  }

  std::int64_t active_param_count() const;  // m
  std::int64_t layer_active_count(int layer) const;
};

// Builds a dense (all-ones mask) network with weights sampled per the init
// scheme. A pure function of (arch, init, seed): each parametrized layer
// draws from its own child stream so layouts never shift between layers.
SparseNet build_network(const Architecture& arch, const InitSpec& init,
                        std::uint64_t seed);

// m / M.
double density(const SparseNet& net);

// rho_min = L / M: one conserved input-output path, one entry per layer.
double min_density(const Architecture& arch);

// Zeroes weights wherever the mask is zero. Idempotent.
SparseNet apply_mask(const SparseNet& net);

enum class ReinitScheme { dense, layerwise_sparse, neuronwise_sparse };

// Resamples weights while keeping the mask bit-identical.
//   dense            - original per-layer variance, every entry resampled;
//                      on an all-ones mask this equals build_network(seed).
//   layerwise_sparse - per-layer variance rescaled to the layer's mean active
//                      fan-in; only active entries are sampled.
//   neuronwise_sparse- per-destination-unit variance from that unit's active
//                      fan-in; a unit with zero active fan-in keeps zero
//                      weights.
SparseNet reinitialize(const SparseNet& net, ReinitScheme scheme,
                       std::uint64_t seed, const InitSpec& init = {});

// ceil(density * total) with a relative epsilon so exact decimal targets such
// as 0.1 * 38800 do not round up from binary representation error.
std::int64_t target_param_count(double density, std::int64_t total);

}  // namespace sparsenet
