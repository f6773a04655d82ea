#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <string>

#include "codir/pipeline.hpp"

using namespace codir;
namespace fs = std::filesystem;

namespace {

RunConfig tiny_config() {
  RunConfig cfg;
  cfg.n_classes = 2;
  cfg.n_context = 12;
  cfg.height = 8;
  cfg.width = 8;
  cfg.n_train = 96;
  cfg.n_val = 24;
  cfg.n_test = 48;
  cfg.n_envs = 3;
  cfg.max_labels = 2;
  cfg.batch_size = 32;
  cfg.epochs = 1;
  cfg.seed = 5;
  return cfg;
}

std::string tiny_config_text() {
  return "n_classes = 2\nn_context = 12\nheight = 8\nwidth = 8\n"
         "n_train = 96\nn_val = 24\nn_test = 48\nn_envs = 3\nmax_labels = 2\n"
         "batch_size = 32\nepochs = 1\nseed = 5\n";
}

struct TempRunDir {
  fs::path path;
  explicit TempRunDir(const std::string& name)
      : path(fs::temp_directory_path() / ("codir_" + name)) {
    fs::remove_all(path);
  }
  ~TempRunDir() { fs::remove_all(path); }
};

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(is), {});
}

}  // namespace

TEST_CASE("empty config text yields all defaults") {
  RunConfig defaults;
  CHECK(parse_config("") == defaults);
  CHECK(parse_config("# just a comment\n\n") == defaults);
}

TEST_CASE("config echo round-trips through the parser") {
  RunConfig cfg = tiny_config();
  CHECK(parse_config(config_echo(cfg)) == cfg);

  RunConfig other;
  other.n_envs = 48;
  CHECK(parse_config(config_echo(other)).n_envs == 48);
}

TEST_CASE("config errors carry line numbers") {
  CHECK_THROWS_WITH_AS(parse_config("n_envs = 48\nbogus_key = 1\n"),
                       doctest::Contains("line 2"), ConfigError);
  CHECK_THROWS_WITH_AS(parse_config("n_envs = -1\n"), doctest::Contains("line 1"),
                       ConfigError);
  CHECK_THROWS_WITH_AS(parse_config("epochs\n"), doctest::Contains("line 1"), ConfigError);
  CHECK_THROWS_WITH_AS(parse_config("method = sgd\n"), doctest::Contains("line 1"),
                       ConfigError);
  CHECK_THROWS_AS(parse_config("n_classes = 3\n"), ConfigError);  // breaks 2*n_c+8
}

TEST_CASE("load_config reads files and rejects missing ones") {
  const auto path = fs::temp_directory_path() / "codir_test_cfg.txt";
  std::ofstream(path) << tiny_config_text();
  CHECK(load_config(path) == tiny_config());
  fs::remove(path);
  CHECK_THROWS_AS(load_config(path), ConfigError);
}

TEST_CASE("dependency errors name the missing step") {
  TempRunDir run("deps");
  RunConfig cfg = tiny_config();
  CHECK_THROWS_WITH_AS(cmd_train(cfg, run.path), doctest::Contains("gen"), DependencyError);
  cmd_gen(cfg, run.path);
  CHECK_THROWS_WITH_AS(cmd_fit(cfg, run.path), doctest::Contains("train"), DependencyError);
  cmd_train(cfg, run.path);
  CHECK_THROWS_WITH_AS(cmd_eval(cfg, run.path), doctest::Contains("fit"), DependencyError);
  CHECK_THROWS_WITH_AS(cmd_retrieve(cfg, run.path, 2), doctest::Contains("fit"),
                       DependencyError);
}

TEST_CASE("gen is deterministic for a fixed seed") {
  TempRunDir a("gen_a"), b("gen_b");
  RunConfig cfg = tiny_config();
  cmd_gen(cfg, a.path);
  cmd_gen(cfg, b.path);
  CHECK(slurp(dataset_path(a.path)) == slurp(dataset_path(b.path)));

  cfg.seed = 6;
  TempRunDir c("gen_c");
  cmd_gen(cfg, c.path);
  CHECK(slurp(dataset_path(a.path)) != slurp(dataset_path(c.path)));
}

TEST_CASE("codir pipeline: gen, train, fit, eval, dump, compress, rank") {
  TempRunDir run("smoke");
  RunConfig cfg = tiny_config();
  cmd_gen(cfg, run.path);
  cmd_train(cfg, run.path);
  CHECK(fs::exists(checkpoint_path(run.path)));
  CHECK(fs::exists(run.path / "train_log.csv"));

  cmd_fit(cfg, run.path);
  CHECK(fs::exists(templates_path(run.path)));

  auto report = cmd_eval(cfg, run.path);
  CHECK(report.f1 >= 0.0);
  CHECK(report.f1 <= 1.0);
  CHECK(fs::exists(reports_dir(run.path) / "eval.csv"));

  cmd_dump_reps(cfg, run.path);
  auto reps = read_reps(reps_path(run.path));
  CHECK(reps.size() == cfg.n_test);
  CHECK(reps.front().d.rows == cfg.n_classes);
  CHECK(reps.front().d.cols == cfg.n_envs);

  cmd_compress(cfg, run.path, 2);
  auto compressed = read_compressed(compressed_path(run.path));
  CHECK(compressed.size() == cfg.n_test);
  CHECK(compressed.front().k == 2);

  const std::size_t rank = cmd_rank(cfg, run.path, 32, 2, 3);
  CHECK(rank >= 1);
  CHECK(rank <= 6);
  CHECK(fs::exists(reports_dir(run.path) / "rank.csv"));

  auto k_report = cmd_eval(cfg, run.path, 2);
  CHECK(fs::exists(reports_dir(run.path) / "eval_k2.csv"));
  CHECK(k_report.f1 == doctest::Approx(report.f1).epsilon(0.5));  // same model family

  write_manifest(cfg, run.path, "eval", 1.5);
  const std::string manifest = slurp(run.path / "manifest.txt");
  CHECK(manifest.find("command = eval") != std::string::npos);
  CHECK(manifest.find("n_envs = 3") != std::string::npos);
}

TEST_CASE("bxent pipeline: train, fit thresholds, eval") {
  TempRunDir run("bxent");
  RunConfig cfg = tiny_config();
  cfg.method = Method::kBxent;
  cmd_gen(cfg, run.path);
  cmd_train(cfg, run.path);
  cmd_fit(cfg, run.path);
  CHECK(fs::exists(bxent_thresholds_path(run.path)));
  auto report = cmd_eval(cfg, run.path);
  CHECK(report.f1 >= 0.0);
  CHECK(report.f1 <= 1.0);
}

TEST_CASE("retrieval and composition demo run on a tiny trained model") {
  TempRunDir run("retr");
  RunConfig cfg = tiny_config();
  // Enough scale that the fitted thresholds are finite and some predictions
  // satisfy the composition preconditions.
  cfg.height = 16;
  cfg.width = 16;
  cfg.n_train = 256;
  cfg.n_val = 64;
  cfg.n_test = 96;
  cfg.n_envs = 4;
  cfg.max_labels = 3;
  cfg.epochs = 6;
  cmd_gen(cfg, run.path);
  cmd_train(cfg, run.path);
  cmd_fit(cfg, run.path);
  cmd_dump_reps(cfg, run.path);

  auto report = cmd_retrieve(cfg, run.path, 4);
  CHECK(report.nn_f1 >= 0.0);
  CHECK(report.nn_f1 <= 1.0);
  CHECK(fs::exists(reports_dir(run.path) / "queries.csv"));
  CHECK(fs::exists(reports_dir(run.path) / "retrieval.csv"));

  cmd_compose_demo(cfg, run.path);
  CHECK(fs::exists(reports_dir(run.path) / "compose.csv"));
}

TEST_CASE("probe experiment runs end to end on the tiny config") {
  TempRunDir run("probe");
  RunConfig cfg = tiny_config();
  cmd_gen(cfg, run.path);
  const std::size_t blur = scene_label_index(cfg.dataset_spec(), kSceneBlur);
  auto results = cmd_probe(cfg, run.path, blur);
  REQUIRE(results.size() == 4);  // codir, ccodir, sem, permutation control
  for (const auto& r : results) {
    CHECK(r.fold_f1.size() == 5);
    CHECK(r.mean >= 0.0);
    CHECK(r.mean <= 1.0);
  }
  CHECK(fs::exists(reports_dir(run.path) / "probe.csv"));
  CHECK_THROWS_AS(cmd_probe(cfg, run.path, 99), ConfigError);
}

TEST_CASE("gradcheck command reports small errors") {
  TempRunDir run("gc");
  RunConfig cfg = tiny_config();
  auto report = cmd_gradcheck(cfg, run.path);
  CHECK(report.head_err < 1e-4);
  CHECK(report.conv_err < 1e-4);
  CHECK(fs::exists(reports_dir(run.path) / "gradcheck.csv"));
}

TEST_CASE("full pipeline is bitwise deterministic for a fixed seed") {
  TempRunDir a("det_a"), b("det_b");
  RunConfig cfg = tiny_config();
  for (const auto& run : {a.path, b.path}) {
    cmd_gen(cfg, run);
    cmd_train(cfg, run);
    cmd_fit(cfg, run);
    cmd_eval(cfg, run);
    cmd_dump_reps(cfg, run);
  }
  CHECK(slurp(dataset_path(a.path)) == slurp(dataset_path(b.path)));
  CHECK(slurp(checkpoint_path(a.path)) == slurp(checkpoint_path(b.path)));
  CHECK(slurp(templates_path(a.path)) == slurp(templates_path(b.path)));
  CHECK(slurp(reps_path(a.path)) == slurp(reps_path(b.path)));
  CHECK(slurp(reports_dir(a.path) / "eval.csv") == slurp(reports_dir(b.path) / "eval.csv"));
}
