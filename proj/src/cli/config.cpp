#include "sparsenet/cli/config.hpp"

#include <algorithm>

#include "sparsenet/errors.hpp"
#include "sparsenet/io.hpp"

namespace sparsenet::cli {

const std::vector<std::string>& known_methods() {
  static const std::vector<std::string> methods = {
      "phew",    "phew-uniform", "phew-inverse", "phew-kernel", "synflow",
      "synflow-l2", "snip",      "magnitude",    "random"};
  return methods;
}

namespace {

[[noreturn]] void fail(const std::string& pointer, const std::string& message) {
  throw ConfigError("config error at " + (pointer.empty() ? "/" : pointer) + ": " + message);
}

const nlohmann::json& require(const nlohmann::json& j, const std::string& pointer,
                              const char* key) {
  if (!j.contains(key)) fail(pointer + "/" + key, "missing required key");
  return j[key];
}

template <typename T>
T as(const nlohmann::json& j, const std::string& pointer) {
  try {
    return j.get<T>();
  } catch (const nlohmann::json::exception&) {
    fail(pointer, "wrong type (got " + std::string(j.type_name()) + ")");
  }
}

void check_known_keys(const nlohmann::json& j, const std::string& pointer,
                      std::initializer_list<const char*> keys) {
  for (const auto& [key, value] : j.items()) {
    if (std::none_of(keys.begin(), keys.end(),
                     [&](const char* k) { return key == k; }))
      fail(pointer + "/" + key, "unknown key");
  }
}

Architecture parse_arch(const nlohmann::json& j, const std::string& pointer) {
  if (!j.is_object()) fail(pointer, "expected an object");
  check_known_keys(j, pointer, {"layer_sizes", "layer_kinds"});
  Architecture arch;
  arch.layer_sizes = as<std::vector<int>>(require(j, pointer, "layer_sizes"),
                                          pointer + "/layer_sizes");
  if (j.contains("layer_kinds")) {
    int idx = 0;
    for (const auto& kind : j["layer_kinds"]) {
      const std::string kp = pointer + "/layer_kinds/" + std::to_string(idx++);
      LayerSpec spec;
      if (kind.is_string()) {
        if (kind.get<std::string>() != "dense") fail(kp, "unknown layer kind");
      } else if (kind.is_object() && kind.contains("conv_channel")) {
        spec.kind = LayerKind::conv_channel;
        spec.kernel_h = as<int>(require(kind["conv_channel"], kp, "kernel_h"), kp);
        spec.kernel_w = as<int>(require(kind["conv_channel"], kp, "kernel_w"), kp);
      } else {
        fail(kp, "expected \"dense\" or {\"conv_channel\": {...}}");
      }
      arch.layer_kinds.push_back(spec);
    }
  } else {
    arch.layer_kinds.assign(arch.layer_sizes.size() - 1, LayerSpec{});
  }
  try {
    arch.validate();
  } catch (const std::exception& e) {
    fail(pointer, e.what());
  }
  return arch;
}

InitSpec parse_init(const nlohmann::json& j, const std::string& pointer) {
  InitSpec init;
  if (!j.is_object()) fail(pointer, "expected an object");
  check_known_keys(j, pointer, {"scheme", "std"});
  const std::string scheme =
      as<std::string>(require(j, pointer, "scheme"), pointer + "/scheme");
  if (scheme == "kaiming")
    init.scheme = InitSpec::Scheme::kaiming;
  else if (scheme == "normal_fixed")
    init.scheme = InitSpec::Scheme::normal_fixed;
  else if (scheme == "xavier_uniform")
    init.scheme = InitSpec::Scheme::xavier_uniform;
  else
    fail(pointer + "/scheme", "unknown init scheme '" + scheme + "'");
  if (j.contains("std")) init.normal_std = as<double>(j["std"], pointer + "/std");
  return init;
}

TaskSpec parse_task(const nlohmann::json& j, const std::string& pointer) {
  TaskSpec task;
  if (!j.is_object()) fail(pointer, "expected an object");
  const std::string type = as<std::string>(require(j, pointer, "type"), pointer + "/type");
  if (type == "transform") {
    task.kind = TaskSpec::Kind::transform;
    check_known_keys(j, pointer,
                     {"type", "image_side", "classes", "train_per_class",
                      "test_per_class", "seed"});
    if (j.contains("image_side"))
      task.transform.image_side = as<int>(j["image_side"], pointer + "/image_side");
    if (j.contains("classes"))
      task.transform.classes = as<int>(j["classes"], pointer + "/classes");
    if (j.contains("train_per_class"))
      task.transform.train_per_class =
          as<int>(j["train_per_class"], pointer + "/train_per_class");
    if (j.contains("test_per_class"))
      task.transform.test_per_class =
          as<int>(j["test_per_class"], pointer + "/test_per_class");
    if (j.contains("seed"))
      task.seed = as<std::uint64_t>(j["seed"], pointer + "/seed");
  } else if (type == "idx") {
    task.kind = TaskSpec::Kind::idx;
    check_known_keys(j, pointer,
                     {"type", "train_images", "train_labels", "test_images",
                      "test_labels"});
    task.train_images = as<std::string>(require(j, pointer, "train_images"),
                                        pointer + "/train_images");
    task.train_labels = as<std::string>(require(j, pointer, "train_labels"),
                                        pointer + "/train_labels");
    task.test_images = as<std::string>(require(j, pointer, "test_images"),
                                       pointer + "/test_images");
    task.test_labels = as<std::string>(require(j, pointer, "test_labels"),
                                       pointer + "/test_labels");
  } else {
    fail(pointer + "/type", "unknown task type '" + type + "'");
  }
  return task;
}

TrainConfig parse_train(const nlohmann::json& j, const std::string& pointer) {
  TrainConfig train;
  if (!j.is_object()) fail(pointer, "expected an object");
  check_known_keys(j, pointer,
                   {"epochs", "batch_size", "optimizer", "lr_decay", "loss", "seed"});
  if (j.contains("epochs")) train.epochs = as<int>(j["epochs"], pointer + "/epochs");
  if (j.contains("batch_size"))
    train.batch_size = as<int>(j["batch_size"], pointer + "/batch_size");
  if (j.contains("seed")) train.seed = as<std::uint64_t>(j["seed"], pointer + "/seed");

  if (j.contains("optimizer")) {
    const auto& opt = j["optimizer"];
    const std::string op = pointer + "/optimizer";
    const std::string type = as<std::string>(require(opt, op, "type"), op + "/type");
    if (type == "sgd") {
      SgdConfig sgd;
      check_known_keys(opt, op, {"type", "lr", "momentum"});
      if (opt.contains("lr")) sgd.lr = as<double>(opt["lr"], op + "/lr");
      if (opt.contains("momentum"))
        sgd.momentum = as<double>(opt["momentum"], op + "/momentum");
      train.optimizer = sgd;
    } else if (type == "adam") {
      AdamConfig adam;
      check_known_keys(opt, op, {"type", "lr", "beta1", "beta2", "eps"});
      if (opt.contains("lr")) adam.lr = as<double>(opt["lr"], op + "/lr");
      if (opt.contains("beta1")) adam.beta1 = as<double>(opt["beta1"], op + "/beta1");
      if (opt.contains("beta2")) adam.beta2 = as<double>(opt["beta2"], op + "/beta2");
      if (opt.contains("eps")) adam.eps = as<double>(opt["eps"], op + "/eps");
      train.optimizer = adam;
    } else {
      fail(op + "/type", "unknown optimizer '" + type + "'");
    }
  }

  if (j.contains("lr_decay")) {
    const auto& decay = j["lr_decay"];
    const std::string dp = pointer + "/lr_decay";
    const std::string type = as<std::string>(require(decay, dp, "type"), dp + "/type");
    if (type == "none") {
      train.lr_decay.kind = LrDecay::Kind::none;
    } else if (type == "exponential") {
      train.lr_decay.kind = LrDecay::Kind::exponential_per_epoch;
      train.lr_decay.factor =
          as<double>(require(decay, dp, "factor"), dp + "/factor");
    } else if (type == "step") {
      train.lr_decay.kind = LrDecay::Kind::step_drop;
      train.lr_decay.factor =
          as<double>(require(decay, dp, "factor"), dp + "/factor");
      train.lr_decay.drop_epochs = as<std::vector<int>>(
          require(decay, dp, "drop_epochs"), dp + "/drop_epochs");
    } else {
      fail(dp + "/type", "unknown lr decay '" + type + "'");
    }
  }

  if (j.contains("loss")) {
    const std::string loss = as<std::string>(j["loss"], pointer + "/loss");
    if (loss == "mse")
      train.loss = TrainLoss::mse;
    else if (loss == "softmax_cross_entropy")
      train.loss = TrainLoss::softmax_cross_entropy;
    else
      fail(pointer + "/loss", "unknown loss '" + loss + "'");
  }

  try {
    train.validate();
  } catch (const std::exception& e) {
    fail(pointer, e.what());
  }
  return train;
}

}  // namespace

ExperimentConfig parse_config_json(const nlohmann::json& j,
                                   const std::string& source_name) {
  if (!j.is_object()) fail("", source_name + ": top level must be an object");
  check_known_keys(j, "",
                   {"architecture", "init", "methods", "densities", "seeds",
                    "synflow_iterations", "snip_examples", "task", "train",
                    "output_dir", "workers"});

  ExperimentConfig config;
  config.arch = parse_arch(require(j, "", "architecture"), "/architecture");
  if (j.contains("init")) config.init = parse_init(j["init"], "/init");

  if (j.contains("methods")) {
    int idx = 0;
    for (const auto& m : j["methods"]) {
      const std::string mp = "/methods/" + std::to_string(idx++);
      const std::string name = as<std::string>(m, mp);
      const auto& known = known_methods();
      if (std::find(known.begin(), known.end(), name) == known.end()) {
        std::string expected;
        for (const auto& k : known) expected += (expected.empty() ? "" : ", ") + k;
        fail(mp, "unknown method '" + name + "' (expected one of: " + expected + ")");
      }
      config.methods.push_back(name);
    }
  }

  if (j.contains("densities")) {
    int idx = 0;
    for (const auto& d : j["densities"]) {
      const std::string dp = "/densities/" + std::to_string(idx++);
      const double density = as<double>(d, dp);
      if (!(density > 0.0 && density <= 1.0)) fail(dp, "density must be in (0, 1]");
      config.densities.push_back(density);
    }
  }

  if (j.contains("seeds"))
    config.seeds = as<std::vector<std::uint64_t>>(j["seeds"], "/seeds");

  if (j.contains("synflow_iterations")) {
    config.synflow_iterations = as<int>(j["synflow_iterations"], "/synflow_iterations");
    if (config.synflow_iterations < 1) fail("/synflow_iterations", "must be >= 1");
  }
  if (j.contains("snip_examples")) {
    config.snip_examples = as<int>(j["snip_examples"], "/snip_examples");
    if (config.snip_examples < 1) fail("/snip_examples", "must be >= 1");
  }

  if (j.contains("task")) config.task = parse_task(j["task"], "/task");
  if (j.contains("train")) {
    config.train = parse_train(j["train"], "/train");
    config.has_train = true;
  }
  if (j.contains("output_dir"))
    config.output_dir = as<std::string>(j["output_dir"], "/output_dir");
  if (j.contains("workers")) {
    config.workers = as<int>(j["workers"], "/workers");
    if (config.workers < 1) fail("/workers", "must be >= 1");
  }
  return config;
}

ExperimentConfig parse_config_file(const std::string& path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    // e.byte is the 1-based byte offset of the failure.
    throw ConfigError("config parse error in " + path + " at byte " +
                      std::to_string(e.byte) + ": " + e.what());
  }
  return parse_config_json(j, path);
}

nlohmann::json resolved_config_json(const ExperimentConfig& config) {
  nlohmann::json j;
  j["architecture"]["layer_sizes"] = config.arch.layer_sizes;
  j["architecture"]["layer_kinds"] = nlohmann::json::array();
  for (const auto& spec : config.arch.layer_kinds) {
    if (spec.kind == LayerKind::dense)
      j["architecture"]["layer_kinds"].push_back("dense");
    else
      j["architecture"]["layer_kinds"].push_back(
          {{"conv_channel",
            {{"kernel_h", spec.kernel_h}, {"kernel_w", spec.kernel_w}}}});
  }
  switch (config.init.scheme) {
    case InitSpec::Scheme::kaiming:
      j["init"] = {{"scheme", "kaiming"}};
      break;
    case InitSpec::Scheme::normal_fixed:
      j["init"] = {{"scheme", "normal_fixed"}, {"std", config.init.normal_std}};
      break;
    case InitSpec::Scheme::xavier_uniform:
      j["init"] = {{"scheme", "xavier_uniform"}};
      break;
  }
  j["methods"] = config.methods;
  j["densities"] = config.densities;
  j["seeds"] = config.seeds;
  j["synflow_iterations"] = config.synflow_iterations;
  j["snip_examples"] = config.snip_examples;

  switch (config.task.kind) {
    case TaskSpec::Kind::none:
      break;
    case TaskSpec::Kind::transform:
      j["task"] = {{"type", "transform"},
                   {"image_side", config.task.transform.image_side},
                   {"classes", config.task.transform.classes},
                   {"train_per_class", config.task.transform.train_per_class},
                   {"test_per_class", config.task.transform.test_per_class},
                   {"seed", config.task.seed}};
      break;
    case TaskSpec::Kind::idx:
      j["task"] = {{"type", "idx"},
                   {"train_images", config.task.train_images},
                   {"train_labels", config.task.train_labels},
                   {"test_images", config.task.test_images},
                   {"test_labels", config.task.test_labels}};
      break;
  }

  if (config.has_train) {
    nlohmann::json t;
    t["epochs"] = config.train.epochs;
    t["batch_size"] = config.train.batch_size;
    t["seed"] = config.train.seed;
    if (const auto* sgd = std::get_if<SgdConfig>(&config.train.optimizer))
      t["optimizer"] = {{"type", "sgd"}, {"lr", sgd->lr}, {"momentum", sgd->momentum}};
    else {
      const auto& adam = std::get<AdamConfig>(config.train.optimizer);
      t["optimizer"] = {{"type", "adam"},
                        {"lr", adam.lr},
                        {"beta1", adam.beta1},
                        {"beta2", adam.beta2},
                        {"eps", adam.eps}};
    }
    switch (config.train.lr_decay.kind) {
      case LrDecay::Kind::none:
        t["lr_decay"] = {{"type", "none"}};
        break;
      case LrDecay::Kind::exponential_per_epoch:
        t["lr_decay"] = {{"type", "exponential"}, {"factor", config.train.lr_decay.factor}};
        break;
      case LrDecay::Kind::step_drop:
        t["lr_decay"] = {{"type", "step"},
                         {"factor", config.train.lr_decay.factor},
                         {"drop_epochs", config.train.lr_decay.drop_epochs}};
        break;
    }
    t["loss"] =
        config.train.loss == TrainLoss::mse ? "mse" : "softmax_cross_entropy";
    j["train"] = t;
  }
  j["output_dir"] = config.output_dir;
  j["workers"] = config.workers;
  return j;
}

std::string config_hash(const ExperimentConfig& config) {
  return hex_u64(fnv1a64(resolved_config_json(config).dump()));
}

}  // namespace sparsenet::cli
