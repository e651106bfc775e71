#include "sparsenet/serialize.hpp"

#include <bit>
#include <cstdint>
#include <cstdio>
#include <sstream>

#include "sparsenet/errors.hpp"
#include "sparsenet/io.hpp"

namespace sparsenet {

namespace {

std::string double_to_hex(double v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llX",
                static_cast<unsigned long long>(std::bit_cast<std::uint64_t>(v)));
  return buf;
}

double hex_to_double(const std::string& hex) {
  if (hex.size() != 16)
    throw FormatError("weight hex literal must have 16 digits, got '" + hex + "'");
  std::uint64_t bits = 0;
  for (char c : hex) {
    bits <<= 4;
    if (c >= '0' && c <= '9')
      bits |= static_cast<std::uint64_t>(c - '0');
    else if (c >= 'A' && c <= 'F')
      bits |= static_cast<std::uint64_t>(c - 'A' + 10);
    else if (c >= 'a' && c <= 'f')
      bits |= static_cast<std::uint64_t>(c - 'a' + 10);
    else
      throw FormatError("invalid hex digit in weight literal '" + hex + "'");
  }
  return std::bit_cast<double>(bits);
}

// Alternating run lengths, first run counts ones.
nlohmann::json rle_encode(const std::vector<std::uint8_t>& bits) {
  nlohmann::json runs = nlohmann::json::array();
  std::uint8_t expect = 1;
  std::size_t i = 0;
  while (i < bits.size()) {
    std::size_t run = 0;
    while (i < bits.size() && bits[i] == expect) {
      ++run;
      ++i;
    }
    runs.push_back(run);
    expect ^= 1;
  }
  if (runs.empty()) runs.push_back(0);
  return runs;
}

std::vector<std::uint8_t> rle_decode(const nlohmann::json& runs, std::size_t expected) {
  std::vector<std::uint8_t> bits;
  bits.reserve(expected);
  std::uint8_t value = 1;
  for (const auto& r : runs) {
    const auto run = r.get<std::int64_t>();
    if (run < 0) throw FormatError("negative run length in mask encoding");
    bits.insert(bits.end(), static_cast<std::size_t>(run), value);
    value ^= 1;
  }
  if (bits.size() != expected)
    throw FormatError("mask run lengths decode to " + std::to_string(bits.size()) +
                      " bits, expected " + std::to_string(expected));
  return bits;
}

nlohmann::json layer_kind_to_json(const LayerSpec& spec) {
  if (spec.kind == LayerKind::dense) return "dense";
  return nlohmann::json{
      {"conv_channel", {{"kernel_h", spec.kernel_h}, {"kernel_w", spec.kernel_w}}}};
}

LayerSpec layer_kind_from_json(const nlohmann::json& j) {
  LayerSpec spec;
  if (j.is_string() && j.get<std::string>() == "dense") return spec;
  if (j.is_object() && j.contains("conv_channel")) {
    spec.kind = LayerKind::conv_channel;
    spec.kernel_h = j["conv_channel"].at("kernel_h").get<int>();
    spec.kernel_w = j["conv_channel"].at("kernel_w").get<int>();
    return spec;
  }
  throw FormatError("unrecognized layer kind: " + j.dump());
}

}  // namespace

nlohmann::json net_to_json(const SparseNet& net) {
  nlohmann::json j;
  j["format_version"] = 1;
  j["layer_sizes"] = net.arch.layer_sizes;
  j["layer_kinds"] = nlohmann::json::array();
  for (const auto& spec : net.arch.layer_kinds)
    j["layer_kinds"].push_back(layer_kind_to_json(spec));
  j["seed"] = net.rng_seed;
  j["mask"] = nlohmann::json::array();
  for (const auto& layer : net.mask) j["mask"].push_back(rle_encode(layer));
  j["weights"] = nlohmann::json::array();
  for (const auto& layer : net.weights) {
    nlohmann::json hex = nlohmann::json::array();
    for (double w : layer) hex.push_back(double_to_hex(w));
    j["weights"].push_back(std::move(hex));
  }
  return j;
}

SparseNet net_from_json(const nlohmann::json& j) {
  if (!j.contains("format_version") || j["format_version"].get<int>() != 1)
    throw FormatError("unsupported network format version");
  SparseNet net;
  net.arch.layer_sizes = j.at("layer_sizes").get<std::vector<int>>();
  for (const auto& kind : j.at("layer_kinds"))
    net.arch.layer_kinds.push_back(layer_kind_from_json(kind));
  net.arch.validate();
  net.rng_seed = j.at("seed").get<std::uint64_t>();

  const int layers = net.arch.parametrized_layer_count();
  const auto& mask_json = j.at("mask");
  const auto& weight_json = j.at("weights");
  if (static_cast<int>(mask_json.size()) != layers ||
      static_cast<int>(weight_json.size()) != layers)
    throw FormatError("mask/weight layer counts do not match the architecture");

  net.mask.resize(layers);
  net.weights.resize(layers);
  for (int l = 0; l < layers; ++l) {
    const auto count = static_cast<std::size_t>(net.arch.layer_param_count(l));
    net.mask[l] = rle_decode(mask_json[l], count);
    if (weight_json[l].size() != count)
      throw FormatError("layer " + std::to_string(l + 1) + " weight count mismatch");
    net.weights[l].resize(count);
    for (std::size_t i = 0; i < count; ++i)
      net.weights[l][i] = hex_to_double(weight_json[l][i].get<std::string>());
  }
  return net;
}

void save_net(const SparseNet& net, const std::string& path) {
  write_file_atomic(path, net_to_json(net).dump(2) + "\n");
}

SparseNet load_net(const std::string& path) {
  try {
    return net_from_json(nlohmann::json::parse(read_file(path)));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("cannot parse network file " + path + ": " + e.what());
  }
}

nlohmann::json score_map_to_json(const ScoreMap& scores) {
  nlohmann::json j;
  j["format_version"] = 1;
  j["scores"] = nlohmann::json::array();
  for (const auto& layer : scores.values) {
    nlohmann::json hex = nlohmann::json::array();
    for (double v : layer) hex.push_back(double_to_hex(v));
    j["scores"].push_back(std::move(hex));
  }
  return j;
}

ScoreMap score_map_from_json(const nlohmann::json& j) {
  if (!j.contains("format_version") || j["format_version"].get<int>() != 1)
    throw FormatError("unsupported score map format version");
  ScoreMap scores;
  for (const auto& layer : j.at("scores")) {
    std::vector<double> values;
    values.reserve(layer.size());
    for (const auto& hex : layer) values.push_back(hex_to_double(hex.get<std::string>()));
    scores.values.push_back(std::move(values));
  }
  return scores;
}

std::string walk_log_to_ndjson(const WalkTraceLog& log) {
  std::ostringstream out;
  for (const WalkRecord& walk : log.walks) {
    nlohmann::json j;
    j["direction"] = walk.forward ? "forward" : "backward";
    j["start"] = walk.start_unit;
    j["steps"] = nlohmann::json::array();
    for (const WalkStep& step : walk.steps)
      j["steps"].push_back({{"layer", step.layer},
                            {"from", step.from_unit},
                            {"to", step.to_unit},
                            {"kentry", step.kernel_entry}});
    out << j.dump() << '\n';
  }
  return out.str();
}

WalkTraceLog walk_log_from_ndjson(const std::string& text) {
  WalkTraceLog log;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(std::string("cannot parse walk record: ") + e.what());
    }
    WalkRecord walk;
    walk.forward = j.at("direction").get<std::string>() == "forward";
    walk.start_unit = j.at("start").get<int>();
    for (const auto& s : j.at("steps")) {
      WalkStep step;
      step.layer = s.at("layer").get<int>();
      step.from_unit = s.at("from").get<int>();
      step.to_unit = s.at("to").get<int>();
      step.kernel_entry = s.at("kentry").get<int>();
      walk.steps.push_back(step);
    }
    log.walks.push_back(std::move(walk));
  }
  return log;
}

}  // namespace sparsenet
