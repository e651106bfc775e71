#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "sparsenet/cli/commands.hpp"
#include "sparsenet/cli/config.hpp"
#include "sparsenet/errors.hpp"
#include "sparsenet/io.hpp"
#include "sparsenet/pathmetrics.hpp"
#include "sparsenet/serialize.hpp"
#include "sparsenet/walks.hpp"

using namespace sparsenet;
using namespace sparsenet::cli;

namespace {

namespace fs = std::filesystem;

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name)
      : path(fs::temp_directory_path() / ("sparsenet_cli_" + name)) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string str() const { return path.string(); }
};

nlohmann::json base_config_json(const std::string& out_dir) {
  nlohmann::json j;
  j["architecture"]["layer_sizes"] = {6, 10, 6};
  j["init"] = {{"scheme", "kaiming"}};
  j["methods"] = {"phew", "synflow-l2", "random", "magnitude"};
  j["densities"] = {0.25};
  j["seeds"] = {1, 2};
  j["output_dir"] = out_dir;
  return j;
}

bool same_file_bytes(const fs::path& a, const fs::path& b) {
  return read_file(a.string()) == read_file(b.string());
}

}  // namespace

TEST_CASE("config parsing validates the schema with positions") {
  nlohmann::json j = base_config_json("out");
  const ExperimentConfig config = parse_config_json(j, "test");
  CHECK(config.arch.layer_sizes == std::vector<int>{6, 10, 6});
  CHECK(config.methods.size() == 4);
  CHECK(config.workers == 1);

  SUBCASE("unknown method names its pointer") {
    j["methods"] = {"phew", "frobnicate"};
    CHECK_THROWS_WITH_AS(parse_config_json(j, "test"),
                         doctest::Contains("/methods/1"), ConfigError);
  }
  SUBCASE("bad density range") {
    j["densities"] = {0.0};
    CHECK_THROWS_WITH_AS(parse_config_json(j, "test"),
                         doctest::Contains("/densities/0"), ConfigError);
  }
  SUBCASE("unknown keys are rejected") {
    j["densitles"] = {0.1};
    CHECK_THROWS_WITH_AS(parse_config_json(j, "test"),
                         doctest::Contains("densitles"), ConfigError);
  }
  SUBCASE("wrong type names its pointer") {
    j["seeds"] = "not-a-list";
    CHECK_THROWS_AS(parse_config_json(j, "test"), ConfigError);
  }
  SUBCASE("parse errors carry the byte offset") {
    TempDir dir("badcfg");
    const std::string path = (dir.path / "bad.json").string();
    std::ofstream(path) << "{\"architecture\": }";
    CHECK_THROWS_WITH_AS(parse_config_file(path), doctest::Contains("byte"),
                         ConfigError);
  }
}

TEST_CASE("config hash is stable and sensitive") {
  const ExperimentConfig a = parse_config_json(base_config_json("out"), "test");
  const ExperimentConfig b = parse_config_json(base_config_json("out"), "test");
  CHECK(config_hash(a) == config_hash(b));
  nlohmann::json changed = base_config_json("out");
  changed["densities"] = {0.5};
  const ExperimentConfig c = parse_config_json(changed, "test");
  CHECK(config_hash(a) != config_hash(c));
}

TEST_CASE("shuffle_mask_width preserves counts and hits width targets") {
  const Architecture arch = dense_mlp({8, 24, 24, 8});
  const SparseNet dense = build_network(arch, InitSpec{}, 3);
  const SparseNet narrow = prune_by_score(
      dense, [](const SparseNet& n) { return synflow_score(n, 2); },
      PruneSchedule{100}, 0.15);

  SUBCASE("factor zero is the identity") {
    const SparseNet same = shuffle_mask_width(narrow, 0.0, 9);
    CHECK(same.mask == narrow.mask);
  }

  SUBCASE("factor one reaches full width when counts permit") {
    const SparseNet wide = shuffle_mask_width(narrow, 1.0, 9);
    for (int l = 0; l < arch.parametrized_layer_count(); ++l)
      CHECK(wide.layer_active_count(l) == narrow.layer_active_count(l));
    const std::vector<int> widths = layer_widths(wide);
    for (int ul = 0; ul < arch.unit_layer_count(); ++ul) {
      // Count >= width on every side here, so full width is reachable.
      CHECK(widths[ul] == arch.layer_sizes[ul]);
    }
  }

  SUBCASE("intermediate factors are deterministic and count preserving") {
    const SparseNet a = shuffle_mask_width(narrow, 0.5, 4);
    const SparseNet b = shuffle_mask_width(narrow, 0.5, 4);
    CHECK(a.mask == b.mask);
    for (int l = 0; l < arch.parametrized_layer_count(); ++l)
      CHECK(a.layer_active_count(l) == narrow.layer_active_count(l));
    const SparseNet c = shuffle_mask_width(narrow, 0.5, 5);
    CHECK(a.mask != c.mask);
  }
}

TEST_CASE("prune_with_method covers the whole method set") {
  const ExperimentConfig config = parse_config_json(base_config_json("out"), "test");
  const SparseNet dense = build_network(config.arch, config.init, 1);
  for (const auto& method : known_methods()) {
    if (method == "snip") continue;  // needs data, covered below
    const PruneOutcome full =
        prune_with_method(dense, method, 1.0, 11, config, nullptr);
    CHECK(density(full.net) == 1.0);
    const PruneOutcome pruned =
        prune_with_method(dense, method, 0.5, 11, config, nullptr);
    CHECK(pruned.net.active_param_count() >=
          target_param_count(0.5, config.arch.total_param_count()));
  }
  CHECK_THROWS_AS(prune_with_method(dense, "snip", 0.5, 11, config, nullptr),
                  std::invalid_argument);
  CHECK_THROWS_AS(prune_with_method(dense, "nope", 0.5, 11, config, nullptr),
                  std::invalid_argument);
}

TEST_CASE("run_prune writes deterministic cell outputs") {
  TempDir dir_a("prune_a");
  TempDir dir_b("prune_b");
  nlohmann::json j = base_config_json(dir_a.str());
  ExperimentConfig config = parse_config_json(j, "test");
  CHECK(run_prune(config) == 0);

  // Every cell produced a mask and a structure report.
  for (const auto& method : config.methods)
    for (std::uint64_t seed : config.seeds) {
      const std::string stem = method + "_d0.25_s" + std::to_string(seed);
      CHECK(fs::exists(dir_a.path / "masks" / (stem + ".json")));
      CHECK(fs::exists(dir_a.path / "structure" / (stem + ".csv")));
    }
  CHECK(fs::exists(dir_a.path / "manifest.json"));
  CHECK(fs::exists(dir_a.path / "report.csv"));

  // Re-run into a second directory: byte-identical outputs except timing.
  config.output_dir = dir_b.str();
  CHECK(run_prune(config) == 0);
  for (const auto& entry : fs::recursive_directory_iterator(dir_a.path)) {
    if (!entry.is_regular_file()) continue;
    const auto rel = fs::relative(entry.path(), dir_a.path);
    if (rel.filename() == "timing.csv" || rel.filename() == "manifest.json") continue;
    CHECK(same_file_bytes(entry.path(), dir_b.path / rel));
  }

  // Masks load back and match the advertised density.
  const SparseNet loaded =
      load_net((dir_a.path / "masks" / "phew_d0.25_s1.json").string());
  CHECK(loaded.active_param_count() >=
        target_param_count(0.25, loaded.arch.total_param_count()));
}

TEST_CASE("run_prune records per-cell failures without aborting siblings") {
  TempDir dir("prune_fail");
  nlohmann::json j = base_config_json(dir.str());
  j["methods"] = {"phew", "magnitude"};
  j["densities"] = {0.002};  // below rho_min = 2/120 for phew
  const ExperimentConfig config = parse_config_json(j, "test");
  CHECK(run_prune(config) == 1);
  const std::string report = read_file((dir.path / "report.csv").string());
  CHECK(report.find("failed") != std::string::npos);
  CHECK(report.find("rho_min") != std::string::npos);
  // magnitude cells still completed
  CHECK(fs::exists(dir.path / "masks" / "magnitude_d0.002_s1.json"));
}

TEST_CASE("run_compare trains every cell and aggregates") {
  TempDir dir("compare");
  nlohmann::json j = base_config_json(dir.str());
  j["architecture"]["layer_sizes"] = {16, 12, 16};
  j["methods"] = {"phew", "random"};
  j["densities"] = {0.3, 0.6};
  j["seeds"] = {1, 2, 3};
  j["task"] = {{"type", "transform"}, {"image_side", 4},   {"classes", 2},
               {"train_per_class", 6}, {"test_per_class", 2}, {"seed", 5}};
  j["train"] = {{"epochs", 2},
                {"batch_size", 4},
                {"optimizer", {{"type", "adam"}, {"lr", 0.001}}},
                {"lr_decay", {{"type", "exponential"}, {"factor", 0.95}}},
                {"loss", "mse"},
                {"seed", 9}};
  const ExperimentConfig config = parse_config_json(j, "test");
  CHECK(run_compare(config) == 0);

  const std::string report = read_file((dir.path / "report.csv").string());
  // 2 methods x 2 densities x 3 seeds = 12 cell rows + 4 mean + 4 std rows.
  const auto count_prefix = [&](const std::string& prefix) {
    std::size_t n = 0, pos = 0;
    while ((pos = report.find(prefix, pos)) != std::string::npos) {
      ++n;
      pos += prefix.size();
    }
    return n;
  };
  CHECK(count_prefix("\ncell,") == 12);
  CHECK(count_prefix("\nmean,") == 4);
  CHECK(count_prefix("\nstd,") == 4);

  // Aggregate std exists and equals zero when there is one seed.
  TempDir dir1("compare_one_seed");
  nlohmann::json j1 = j;
  j1["seeds"] = {1};
  j1["densities"] = {0.5};
  j1["methods"] = {"magnitude"};
  j1["output_dir"] = dir1.str();
  CHECK(run_compare(parse_config_json(j1, "test")) == 0);
  const std::string rep1 = read_file((dir1.path / "report.csv").string());
  const std::size_t std_pos = rep1.find("\nstd,magnitude");
  REQUIRE(std_pos != std::string::npos);
  const std::string std_row = rep1.substr(std_pos + 1, rep1.find('\n', std_pos + 1) - std_pos - 1);
  CHECK(std_row.find(",0,") != std::string::npos);
}

TEST_CASE("snip flows through compare when a task is present") {
  TempDir dir("snip");
  nlohmann::json j = base_config_json(dir.str());
  j["methods"] = {"snip"};
  j["densities"] = {0.4};
  j["seeds"] = {1};
  j["task"] = {{"type", "transform"}, {"image_side", 4},   {"classes", 2},
               {"train_per_class", 8}, {"test_per_class", 2}, {"seed", 3}};
  j["architecture"]["layer_sizes"] = {16, 8, 16};
  j["train"] = {{"epochs", 1}, {"batch_size", 4}, {"loss", "mse"}, {"seed", 2}};
  const ExperimentConfig config = parse_config_json(j, "test");
  CHECK(run_compare(config) == 0);
  const std::string report = read_file((dir.path / "report.csv").string());
  CHECK(report.find("snip,0.4,1,ok") != std::string::npos);
}

TEST_CASE("verify_lemmas passes at reduced sizes") {
  LemmaOptions options;
  options.seeds = {1, 2, 3};
  options.walk_count = 4000;
  options.path_count = 4000;
  const std::vector<LemmaRow> rows = verify_lemmas(options);
  CHECK(rows.size() >= 10);
  for (const LemmaRow& row : rows) {
    INFO(row.name, " expected ", row.expected, " measured ", row.measured);
    CHECK(row.pass);
  }
}

#ifdef SPARSENET_CLI_BINARY
TEST_CASE("the installed binary honors exit code conventions") {
  TempDir dir("binary");
  const std::string bin = SPARSENET_CLI_BINARY;

  // Invalid config: exit 2.
  const std::string bad = (dir.path / "bad.json").string();
  std::ofstream(bad) << "{\"methods\": [\"nope\"]}";
  const int invalid = std::system((bin + " prune --config " + bad + " 2>/dev/null").c_str());
  CHECK(WEXITSTATUS(invalid) == 2);

  // Valid config: exit 0 and files land in --out.
  const std::string good = (dir.path / "good.json").string();
  nlohmann::json j = base_config_json((dir.path / "out").string());
  j["methods"] = {"magnitude"};
  std::ofstream(good) << j.dump(2);
  const int ok = std::system((bin + " prune --config " + good + " 2>/dev/null").c_str());
  CHECK(WEXITSTATUS(ok) == 0);
  CHECK(fs::exists(dir.path / "out" / "report.csv"));

  // --seeds flag overrides the config seed list.
  const int seeded = std::system(
      (bin + " prune --config " + good + " --seeds 9 --out " + (dir.path / "out2").string() +
       " 2>/dev/null")
          .c_str());
  CHECK(WEXITSTATUS(seeded) == 0);
  CHECK(fs::exists(dir.path / "out2" / "masks" / "magnitude_d0.25_s9.json"));
}
#endif
