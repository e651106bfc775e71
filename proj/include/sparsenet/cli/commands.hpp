#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "sparsenet/cli/config.hpp"
#include "sparsenet/netcore.hpp"
#include "sparsenet/tasks.hpp"

namespace sparsenet::cli {

// Per-layer mask-width increase by entry redistribution. For each layer
// matrix the row (destination) and column (source) widths are raised to
// w' = round(w + factor * (W - w)) by moving active entries out of
// multiply-occupied rows/columns into empty ones; per-layer active counts are
// preserved exactly. Infeasible targets stop at the best reachable width.
SparseNet shuffle_mask_width(const SparseNet& net, double factor,
                             std::uint64_t seed);

// One row of the lemma verification table.
struct LemmaRow {
  std::string name;
  double expected = 0.0;
  double measured = 0.0;
  bool pass = false;
  std::string note;
};

struct LemmaOptions {
  std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  std::int64_t walk_count = 10000;  // walk-distribution check
  std::int64_t path_count = 10000;  // biased/uniform trace ratio
};

std::vector<LemmaRow> verify_lemmas(const LemmaOptions& options);

struct PruneOutcome {
  SparseNet net;
  std::int64_t walk_count = -1;  // PHEW variants only
};

// Shared method dispatch; snip_data may be null for methods that ignore it.
PruneOutcome prune_with_method(const SparseNet& dense, const std::string& method,
                               double target_density, std::uint64_t method_seed,
                               const ExperimentConfig& config,
                               const Dataset* snip_data);

// Stable per-cell stream derivation.
std::uint64_t derive_seed(std::uint64_t base, const std::string& tag);

// Subcommand bodies; all return a process exit code (0 ok, 1 any cell
// failed). Config-level problems throw ConfigError (exit code 2 in main).
int run_prune(const ExperimentConfig& config);
int run_compare(const ExperimentConfig& config);
int run_shuffle_width(const ExperimentConfig& config, const std::string& mask_path,
                      double factor, std::uint64_t seed);
int run_verify_lemmas(const LemmaOptions& options, const std::string& out_dir);
int run_trace(const ExperimentConfig* config, const std::string& mask_path,
              const std::string& out_dir);
int run_train(const ExperimentConfig& config, const std::string& mask_path);

}  // namespace sparsenet::cli
