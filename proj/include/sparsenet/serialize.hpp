#pragma once

#include <string>

#include "json.hpp"
#include "sparsenet/netcore.hpp"
#include "sparsenet/scores.hpp"
#include "sparsenet/walks.hpp"

namespace sparsenet {

// Versioned JSON document:
//   {"format_version": 1, "layer_sizes": [...], "layer_kinds": [...],
//    "seed": ..., "mask": [[run-lengths]...], "weights": [[hex64]...]}
// Masks are run-length encoded per layer as alternating runs starting with
// the run of ones (possibly zero-length); weights are 16-hex-digit IEEE-754
// bit patterns, most significant nibble first, so round-trips are bit-exact.
nlohmann::json net_to_json(const SparseNet& net);
SparseNet net_from_json(const nlohmann::json& j);

void save_net(const SparseNet& net, const std::string& path);
SparseNet load_net(const std::string& path);

// Same layered hex layout as the weight store.
nlohmann::json score_map_to_json(const ScoreMap& scores);
ScoreMap score_map_from_json(const nlohmann::json& j);

// Newline-delimited JSON, one record per walk, for test replay.
std::string walk_log_to_ndjson(const WalkTraceLog& log);
WalkTraceLog walk_log_from_ndjson(const std::string& text);

}  // namespace sparsenet
