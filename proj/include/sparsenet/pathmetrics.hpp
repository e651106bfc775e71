#pragma once

#include <boost/multiprecision/cpp_int.hpp>
#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "sparsenet/netcore.hpp"

namespace sparsenet {

using BigInt = boost::multiprecision::cpp_int;

// Exact input-output path count by dynamic programming over unit layers:
// paths(v) = sum over active in-edges (u->v) of paths(u), inputs seeded with
// 1. Conv kernels contribute one edge per active entry.
BigInt count_paths(const SparseNet& net);

// -inf for zero paths.
double log10_big(const BigInt& value);

// Active unit count per unit layer 0..L. A unit is active when it has at
// least one active incoming AND one active outgoing parameter; boundary
// layers only require their single applicable side.
std::vector<int> layer_widths(const SparseNet& net);

struct CollapseInfo {
  bool collapsed = false;
  int first_collapsed_layer = 0;  // 1-based parametrized layer; 0 when none
  bool empty_network = false;     // every layer empty: not collapse by definition
};

// Collapse: some layer has zero active parameters while another still has
// connections.
CollapseInfo detect_layer_collapse(const SparseNet& net);

// Closed-form optimal hidden widths for two hidden layers:
// n1 = n2 = sqrt(D^2 + m) - D (real-valued; rounding is the caller's choice).
double max_paths_width(int input_dim, std::int64_t m);

enum class MaskObjective { trace, paths };

struct BruteForceResult {
  std::vector<std::vector<std::uint8_t>> mask;
  double trace_value = 0.0;  // trace objective only
  BigInt path_count = 0;
};

// Exhaustive search over masks with exactly m active entries, maximizing the
// objective. Under the paths objective candidates must keep at least one
// outgoing connection per input unit and one incoming per output unit. Ties
// keep the lexicographically lowest mask (flat entry order, 0 before 1).
//
// The direct scan is guarded at C(M, m) <= 10^6 candidates. For the paths
// objective on two-hidden-layer MLPs beyond that bound, the search runs over
// an exactly equivalent quotient: the path count only depends on the first
// layer's row sums, the middle layer, and the last layer's column sums, so
// enumerating (row sums, middle masks, column sums) is still exhaustive.
BruteForceResult brute_force_best_mask(const SparseNet& net, std::int64_t m,
                                       MaskObjective objective);

struct StructureReport {
  struct LayerRow {
    int layer = 0;  // 1-based parametrized layer
    int unpruned_width = 0;
    int active_width = 0;  // destination-side unit layer
    std::int64_t active_params = 0;
    std::int64_t total_params = 0;
    double density = 0.0;
    double width_group_density = 0.0;  // mean density over layers sharing unpruned_width
  };
  std::vector<LayerRow> layers;
  int input_width = 0;
  int input_active_width = 0;
  std::int64_t active_params = 0;
  std::int64_t total_params = 0;
  double density = 0.0;
  BigInt total_paths = 0;
  double log10_paths = 0.0;
  double trace = 0.0;
  bool trace_available = true;
  CollapseInfo collapse;
  int hidden_layer_count = 0;
  int parametrized_layer_count = 0;
};

StructureReport structure_report(const SparseNet& net);
std::string structure_csv(const StructureReport& report);
nlohmann::json structure_json(const StructureReport& report);

}  // namespace sparsenet
