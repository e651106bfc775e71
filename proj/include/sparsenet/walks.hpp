#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "sparsenet/netcore.hpp"
#include "sparsenet/rng.hpp"

namespace sparsenet {

enum class WalkBias { weight_biased, uniform, inverse_weight_biased };

// One hop of a walk. layer is the 0-based parametrized layer; kernel_entry is
// the selected entry inside the conv kernel (always 0 for dense layers, -1
// when the whole kernel was conserved).
struct WalkStep {
  int layer = 0;
  int from_unit = 0;  // unit in the layer's source unit layer
  int to_unit = 0;    // unit in the layer's destination unit layer
  int kernel_entry = 0;
};

// One input-output path in traversal order: backward walks store their steps
// from the output layer down. Every walk has exactly one step per
// parametrized layer.
struct WalkRecord {
  bool forward = true;
  int start_unit = 0;
  std::vector<WalkStep> steps;
};

struct WalkTraceLog {
  std::vector<WalkRecord> walks;
};

struct WalkBudget {
  double target_density = 1.0;
  std::int64_t achieved_walk_count = 0;  // W
  std::vector<std::int64_t> forward_start_counts;   // per input unit
  std::vector<std::int64_t> backward_start_counts;  // per output unit
};

// Normalizes a magnitude vector into next-hop probabilities.
//   weight_biased         ~ |theta|
//   uniform               = 1/n each
//   inverse_weight_biased ~ 1/(|theta| + 1e-12)
// Throws DegenerateDistributionError for an all-zero vector under
// weight_biased; the walk loop falls back to uniform in that case.
std::vector<double> transition_probs(std::span<const double> magnitudes,
                                     WalkBias bias);

// Samples one input-output path on the unpruned weight store. Forward walks
// pick the next unit ~ bias over outgoing magnitudes, backward walks over
// incoming magnitudes of the previous layer. Conv layers hop in two steps:
// the kernel by bias over per-kernel L1 norms, then one kernel entry
// proportional to its absolute value (skipped with conserve_kernel).
WalkRecord run_walk(const SparseNet& net, bool forward, int start_unit,
                    WalkBias bias, Rng& rng, bool conserve_kernel = false);

struct PhewResult {
  SparseNet net;
  WalkBudget budget;
  WalkTraceLog log;
};

// PHEW mask construction: alternating forward/backward walks (forward first)
// with round-robin start units, stopping at the first walk after which the
// unique active parameter count reaches ceil(target_density * M). The mask is
// exactly the union of the logged walks' entries; the last walk is kept whole
// so the achieved density may overshoot by at most one walk's parameters.
// Rejects target_density below min_density(arch) naming the rho_min value.
PhewResult phew_prune(const SparseNet& net, double target_density,
                      WalkBias bias, std::uint64_t seed,
                      bool conserve_kernel = false);

// Fixed number of balanced bidirectional walks with the same alternation and
// round-robin rules as phew_prune; used by the walk-distribution checks.
WalkTraceLog run_balanced_walks(const SparseNet& net, std::int64_t walk_count,
                                WalkBias bias, std::uint64_t seed);

// Per-unit-layer visit counts; every walk contributes exactly one visit per
// unit layer, so each layer's counts sum to the number of walks.
std::vector<std::vector<std::int64_t>> walk_unit_histogram(
    const WalkTraceLog& log, const Architecture& arch);

// Union of the logged walks' entries applied on top of an all-zero mask.
SparseNet mask_from_walks(const SparseNet& net, const WalkTraceLog& log);

// Path kernel trace contribution of a single walk's path:
// sum over path edges e of prod_{e' != e} theta_{e'}^2.
double path_trace_contribution(const SparseNet& net, const WalkRecord& walk);

}  // namespace sparsenet
