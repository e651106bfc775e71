#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "sparsenet/netcore.hpp"
#include "sparsenet/tasks.hpp"
#include "sparsenet/trainer.hpp"

namespace sparsenet::cli {

// The methods accepted in config "methods" lists.
const std::vector<std::string>& known_methods();

struct TaskSpec {
  enum class Kind { none, transform, idx };
  Kind kind = Kind::none;
  TransformTask transform;
  std::uint64_t seed = 7;
  std::string train_images, train_labels, test_images, test_labels;  // idx
};

struct ExperimentConfig {
  Architecture arch;
  InitSpec init;
  std::vector<std::string> methods;
  std::vector<double> densities;
  std::vector<std::uint64_t> seeds;
  int synflow_iterations = 100;
  int snip_examples = 320;
  TaskSpec task;
  TrainConfig train;
  bool has_train = false;
  std::string output_dir = "out";
  int workers = 1;
};

// Parses and schema-validates a JSON config file. Parse errors carry the byte
// offset reported by the JSON parser; semantic errors name the JSON pointer
// of the offending value. Throws ConfigError.
ExperimentConfig parse_config_file(const std::string& path);
ExperimentConfig parse_config_json(const nlohmann::json& j,
                                   const std::string& source_name);

// Canonical JSON image of the resolved config (after flag overrides); key
// order is sorted, so its hash is stable.
nlohmann::json resolved_config_json(const ExperimentConfig& config);
std::string config_hash(const ExperimentConfig& config);

}  // namespace sparsenet::cli
