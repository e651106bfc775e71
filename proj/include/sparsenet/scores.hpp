#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "sparsenet/netcore.hpp"
#include "sparsenet/trainer.hpp"

namespace sparsenet {

// Per-entry nonnegative saliency values, shape-congruent with the mask.
// Values at pruned entries are ignored by prune_by_score.
struct ScoreMap {
  std::vector<std::vector<double>> values;
};

// Forward/backward path-sum vectors over unit layers (index 0..L):
// forward[u] sums prod |theta|^power over active partial paths input->u
// (1 on inputs), backward[v] symmetrically toward the outputs (1 on outputs).
// Conv kernels contribute the sum of |entry|^power over active entries, i.e.
// each kernel entry is an independent edge on the channel graph.
struct TraceAccumulators {
  std::vector<std::vector<double>> forward;
  std::vector<std::vector<double>> backward;
};

// Throws OverflowError when any accumulator leaves the double range.
TraceAccumulators trace_accumulators(const SparseNet& net, int power);

// R = 1^T (prod_l |masked W_l|^power) 1 = sum over active paths of
// |pi_p|^power. Equals the output-layer sum of the forward accumulator.
double synflow_objective(const SparseNet& net, int power);

// log(R) computed in the log domain; usable when synflow_objective overflows.
double synflow_log_objective(const SparseNet& net, int power);

// Tr(Pi_theta) = sum over active entries e=(u->v) of F2(u) * B2(v).
double path_kernel_trace(const SparseNet& net);

// SynFlow saliency: |theta_e| * F(u) * B(v) with power-1 accumulators for
// SynFlow and power-2 accumulators for SynFlow-L2. Saliencies are ranked by
// absolute value, hence always nonnegative.
ScoreMap synflow_score(const SparseNet& net, int power);

// |d loss / d theta  *  theta| from the trainer's backprop on the masked net,
// evaluated over `batch` in slices of batch_size and summed across slices.
ScoreMap snip_score(const SparseNet& net, const Dataset& batch, TrainLoss loss,
                    int batch_size = 32);

ScoreMap magnitude_score(const SparseNet& net);

// i.i.d. Uniform(0,1) per entry, seeded.
ScoreMap random_score(const SparseNet& net, std::uint64_t seed);

// Iterative schedule: density at iteration t of T is rho^(t/T), reaching the
// target exactly at t = T. One-shot scorers use iterations = 1.
struct PruneSchedule {
  int iterations = 100;
};

using Scorer = std::function<ScoreMap(const SparseNet&)>;

// At each schedule step recomputes scores on the current mask and removes the
// globally lowest-scoring active entries down to that step's parameter count.
// Ties keep the entry with the lower flat parameter index.
SparseNet prune_by_score(const SparseNet& net, const Scorer& scorer,
                         const PruneSchedule& schedule, double target_density);

}  // namespace sparsenet
