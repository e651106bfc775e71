#include <cstdio>
#include <cstdlib>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "sparsenet/cli/commands.hpp"
#include "sparsenet/cli/config.hpp"
#include "sparsenet/errors.hpp"
#include "sparsenet/version.hpp"

namespace {

using sparsenet::cli::ExperimentConfig;

// Flags override config-file values; SPARSENET_WORKERS overrides --workers.
struct CommonFlags {
  std::string config_path;
  std::string out_dir;
  std::vector<std::uint64_t> seeds;
  int workers = 0;
};

void add_common(CLI::App* cmd, CommonFlags& flags, bool config_required) {
  auto* opt = cmd->add_option("--config", flags.config_path, "experiment config (JSON)");
  if (config_required) opt->required();
  cmd->add_option("--out", flags.out_dir, "output directory (overrides config)");
  cmd->add_option("--seeds", flags.seeds, "seed list (overrides config)")
      ->delimiter(',');
  cmd->add_option("--workers", flags.workers, "parallel cells (overrides config)");
}

ExperimentConfig resolve(const CommonFlags& flags) {
  ExperimentConfig config = sparsenet::cli::parse_config_file(flags.config_path);
  if (!flags.out_dir.empty()) config.output_dir = flags.out_dir;
  if (!flags.seeds.empty()) config.seeds = flags.seeds;
  if (flags.workers > 0) config.workers = flags.workers;
  if (const char* env = std::getenv("SPARSENET_WORKERS")) {
    const int w = std::atoi(env);
    if (w > 0) config.workers = w;
  }
  return config;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"sparse network construction at initialization"};
  app.set_version_flag("--version", sparsenet::kToolVersion);
  app.require_subcommand(1);

  CommonFlags prune_flags, compare_flags, shuffle_flags, trace_flags, train_flags;
  CommonFlags lemma_flags;

  auto* prune = app.add_subcommand("prune", "construct masks for a method grid");
  add_common(prune, prune_flags, true);

  auto* compare =
      app.add_subcommand("compare", "prune, train and evaluate a method grid");
  add_common(compare, compare_flags, true);

  std::string shuffle_mask;
  double shuffle_factor = 1.0;
  std::uint64_t shuffle_seed = 1;
  auto* shuffle = app.add_subcommand(
      "shuffle-width", "redistribute mask entries to widen layers");
  add_common(shuffle, shuffle_flags, false);
  shuffle->add_option("--mask", shuffle_mask, "mask file to shuffle")->required();
  shuffle->add_option("--factor", shuffle_factor, "width factor x in [0, 1]")
      ->required();
  shuffle->add_option("--seed", shuffle_seed, "shuffle seed");

  sparsenet::cli::LemmaOptions lemma_options;
  std::string lemma_out = "out";
  auto* lemmas = app.add_subcommand("verify-lemmas",
                                    "run the closed-form and statistical checks");
  lemmas->add_option("--out", lemma_out, "output directory");
  lemmas->add_option("--seeds", lemma_options.seeds,
                     "seeds for the trace-argmax trials")
      ->delimiter(',');
  lemmas->add_option("--walks", lemma_options.walk_count,
                     "walk count for the distribution check");
  lemmas->add_option("--paths", lemma_options.path_count,
                     "path count for the trace-ratio check");

  std::string trace_mask;
  auto* trace = app.add_subcommand("trace", "structural report for a mask or config");
  add_common(trace, trace_flags, false);
  trace->add_option("--mask", trace_mask, "mask file to analyze");

  std::string train_mask;
  auto* train = app.add_subcommand("train", "train a dense or pruned network");
  add_common(train, train_flags, true);
  train->add_option("--mask", train_mask, "mask file to train (default: dense)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (prune->parsed()) return sparsenet::cli::run_prune(resolve(prune_flags));
    if (compare->parsed()) return sparsenet::cli::run_compare(resolve(compare_flags));
    if (shuffle->parsed()) {
      ExperimentConfig config;
      if (!shuffle_flags.config_path.empty()) {
        config = resolve(shuffle_flags);
      } else if (!shuffle_flags.out_dir.empty()) {
        config.output_dir = shuffle_flags.out_dir;
      }
      if (!shuffle_flags.out_dir.empty()) config.output_dir = shuffle_flags.out_dir;
      return sparsenet::cli::run_shuffle_width(config, shuffle_mask, shuffle_factor,
                                               shuffle_seed);
    }
    if (lemmas->parsed())
      return sparsenet::cli::run_verify_lemmas(lemma_options, lemma_out);
    if (trace->parsed()) {
      if (!trace_flags.config_path.empty()) {
        const ExperimentConfig config = resolve(trace_flags);
        return sparsenet::cli::run_trace(
            &config, trace_mask,
            trace_flags.out_dir.empty() ? config.output_dir : trace_flags.out_dir);
      }
      if (trace_mask.empty()) {
        std::fprintf(stderr, "trace: need --mask or --config\n");
        return 2;
      }
      return sparsenet::cli::run_trace(
          nullptr, trace_mask,
          trace_flags.out_dir.empty() ? "out" : trace_flags.out_dir);
    }
    if (train->parsed()) return sparsenet::cli::run_train(resolve(train_flags), train_mask);
  } catch (const sparsenet::ConfigError& e) {
    std::fprintf(stderr, "%s\n", e.what());
    return 2;
  } catch (const sparsenet::FormatError& e) {
    std::fprintf(stderr, "%s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 2;
}
