// Command-line driver for the full experiment pipeline.
//
// Exit codes: 0 success, 2 configuration error, 3 missing artifact
// dependency, 4 numerical failure.

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <optional>
#include <string>

#include "codir/pipeline.hpp"

namespace {

struct CommonArgs {
  std::string config_path;
  std::string run_dir = "runs/default";
  std::optional<std::uint64_t> seed;
};

codir::RunConfig resolve_config(const CommonArgs& args) {
  codir::RunConfig cfg;
  if (!args.config_path.empty()) cfg = codir::load_config(args.config_path);
  if (args.seed) {
    cfg.seed = *args.seed;
    codir::validate_config(cfg);
  }
  return cfg;
}

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config_path, "key = value config file");
  cmd->add_option("--run-dir", args.run_dir, "run directory for artifacts");
  cmd->add_option("--seed", args.seed, "override the config seed");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"structured decomposable representation experiments"};
  app.require_subcommand(1);

  CommonArgs args;
  std::size_t k = 5;
  std::size_t query_count = 200;
  std::size_t rank_count = 1000, rank_rows = 3, rank_cols = 48;
  std::size_t probe_label = 0;
  bool probe_label_set = false;

  auto* gen = app.add_subcommand("gen", "generate the dataset");
  add_common(gen, args);
  auto* train = app.add_subcommand("train", "train the configured model");
  add_common(train, args);
  auto* fit = app.add_subcommand("fit", "fit templates and thresholds");
  add_common(fit, args);
  auto* eval = app.add_subcommand("eval", "classification report on the test split");
  add_common(eval, args);
  std::size_t eval_k = 0;
  eval->add_option("--k", eval_k, "evaluate rank-k compressed representations");
  auto* dump = app.add_subcommand("dump-reps", "write test-split representations");
  add_common(dump, args);
  auto* retrieve = app.add_subcommand("retrieve", "NN / M-NN retrieval report");
  add_common(retrieve, args);
  retrieve->add_option("--queries", query_count, "number of retrieval queries");
  auto* compose = app.add_subcommand("compose", "single-sample class-swap demo");
  add_common(compose, args);
  auto* compress = app.add_subcommand("compress", "rank-k compression of stored reps");
  add_common(compress, args);
  compress->add_option("--k", k, "retained rank");
  auto* rank = app.add_subcommand("rank", "effective rank of stacked representations");
  add_common(rank, args);
  rank->add_option("--count", rank_count, "representations to stack");
  rank->add_option("--rows", rank_rows, "class rows per representation");
  rank->add_option("--cols", rank_cols, "environment columns per representation");
  auto* probe = app.add_subcommand("probe", "held-out label probing experiment");
  add_common(probe, args);
  probe->add_option("--label", probe_label, "context label index to hold out")
      ->each([&](const std::string&) { probe_label_set = true; });
  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient check");
  add_common(gradcheck, args);

  CLI11_PARSE(app, argc, argv);

  const auto t0 = std::chrono::steady_clock::now();
  try {
    const codir::RunConfig cfg = resolve_config(args);
    const std::filesystem::path run_dir = args.run_dir;
    std::string command;

    if (gen->parsed()) {
      command = "gen";
      codir::cmd_gen(cfg, run_dir);
    } else if (train->parsed()) {
      command = "train";
      codir::cmd_train(cfg, run_dir);
    } else if (fit->parsed()) {
      command = "fit";
      codir::cmd_fit(cfg, run_dir);
    } else if (eval->parsed()) {
      command = "eval";
      const auto report = codir::cmd_eval(cfg, run_dir, eval_k);
      std::printf("precision=%.4f recall=%.4f f1=%.4f\n", report.precision, report.recall,
                  report.f1);
    } else if (dump->parsed()) {
      command = "dump-reps";
      codir::cmd_dump_reps(cfg, run_dir);
    } else if (retrieve->parsed()) {
      command = "retrieve";
      const auto report = codir::cmd_retrieve(cfg, run_dir, query_count);
      std::printf("nn_f1=%.4f mnn_f1=%.4f mnn_prec=%.4f f1_pct=%.2f\n", report.nn_f1,
                  report.mnn_f1, report.mnn_prec, report.f1_pct);
    } else if (compose->parsed()) {
      command = "compose";
      codir::cmd_compose_demo(cfg, run_dir);
    } else if (compress->parsed()) {
      command = "compress";
      codir::cmd_compress(cfg, run_dir, k);
    } else if (rank->parsed()) {
      command = "rank";
      const std::size_t r = codir::cmd_rank(cfg, run_dir, rank_count, rank_rows, rank_cols);
      std::printf("rank=%zu\n", r);
    } else if (probe->parsed()) {
      command = "probe";
      if (!probe_label_set)
        probe_label = codir::scene_label_index(cfg.dataset_spec(), codir::kSceneBlur);
      const auto results = codir::cmd_probe(cfg, run_dir, probe_label);
      for (const auto& r : results)
        std::printf("%s mean_f1=%.4f std=%.4f\n", r.method.c_str(), r.mean, r.stddev);
    } else if (gradcheck->parsed()) {
      command = "gradcheck";
      const auto report = codir::cmd_gradcheck(cfg, run_dir);
      std::printf("head_err=%.3e conv_err=%.3e\n", report.head_err, report.conv_err);
    }

    const double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    codir::write_manifest(cfg, run_dir, command, wall);
  } catch (const codir::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const codir::DependencyError& e) {
    std::fprintf(stderr, "dependency error: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 4;
  }
  return 0;
}
