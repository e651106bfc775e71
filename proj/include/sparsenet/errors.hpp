#pragma once

#include <stdexcept>
#include <string>

namespace sparsenet {

// An accumulator or product left the double range. Callers that only need the
// SynFlow objective can retry via synflow_log_objective(); trace and scores
// have no log-domain form and must be reported as unavailable.
class OverflowError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Weight-biased transition requested over an all-zero magnitude vector.
class DegenerateDistributionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Training produced a non-finite loss.
class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(const std::string& what, int epoch)
      : std::runtime_error(what), epoch(epoch) {}
  int epoch;
};

// A serialized input (JSON document, IDX file, binary container) is malformed.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Experiment configuration failed schema validation.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace sparsenet
