#include "codir/pipeline.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace codir {

namespace fs = std::filesystem;

std::filesystem::path dataset_path(const fs::path& run_dir) { return run_dir / "dataset.cdir"; }
std::filesystem::path checkpoint_path(const fs::path& run_dir) { return run_dir / "model.cdmw"; }
std::filesystem::path templates_path(const fs::path& run_dir) {
  return run_dir / "templates.cdts";
}
std::filesystem::path reps_path(const fs::path& run_dir) { return run_dir / "reps.cdrep"; }
std::filesystem::path compressed_path(const fs::path& run_dir) {
  return run_dir / "compressed.cdck";
}
std::filesystem::path bxent_thresholds_path(const fs::path& run_dir) {
  return run_dir / "bxent_thresholds.txt";
}
std::filesystem::path reports_dir(const fs::path& run_dir) { return run_dir / "reports"; }

namespace {

constexpr std::uint64_t kEnvStream = 0x454e5653;    // environment sampling
constexpr std::uint64_t kModelStream = 0x4d4f444c;  // weight init
constexpr std::uint64_t kSplitStream = 0x53504c54;  // template/threshold split

void require_artifact(const fs::path& path, const std::string& producer) {
  if (!fs::exists(path))
    throw DependencyError("missing " + path.filename().string() + " — run '" + producer +
                          "' first");
}

Dataset load_dataset(const fs::path& run_dir) {
  require_artifact(dataset_path(run_dir), "gen");
  return read_dataset(dataset_path(run_dir));
}

Checkpoint load_model(const fs::path& run_dir) {
  require_artifact(checkpoint_path(run_dir), "train");
  return read_checkpoint(checkpoint_path(run_dir));
}

TemplateSet load_templates(const fs::path& run_dir) {
  require_artifact(templates_path(run_dir), "fit");
  return read_templates(templates_path(run_dir));
}

std::vector<RepRecord> load_reps(const fs::path& run_dir) {
  require_artifact(reps_path(run_dir), "dump-reps");
  return read_reps(reps_path(run_dir));
}

ModelConfig model_config(const RunConfig& cfg, const Dataset& ds) {
  ModelConfig mc;
  mc.height = ds.height;
  mc.width = ds.width;
  mc.in_channels = ds.channels;
  mc.n_classes = ds.n_classes;
  mc.n_envs = cfg.n_envs;
  if (cfg.method == Method::kCodir) {
    mc.head = HeadType::kCodir;
    mc.head_out = ds.n_classes * cfg.n_envs;
  } else {
    mc.head = cfg.bxent_head;
    mc.head_out = bxent_head_out(ds, cfg.bxent_head);
  }
  return mc;
}

EnvironmentSpec sample_run_environments(const RunConfig& cfg, std::size_t n_labels) {
  Rng rng = Rng(cfg.seed).child(kEnvStream);
  return sample_environments(n_labels, cfg.n_envs, cfg.max_labels, rng);
}

void write_prf_csv(const fs::path& path, const PrfReport& report) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open for writing: " + path.string());
  os << "precision,recall,f1\n";
  os << report.precision << ',' << report.recall << ',' << report.f1 << '\n';
}

LabelSet class_set_of(const Dataset& ds, std::size_t id) {
  LabelSet out;
  for (std::size_t i = 0; i < ds.n_classes; ++i)
    if (ds.class_labels[id][i]) out.push_back(i);
  return out;
}

std::string git_describe() {
  std::array<char, 128> buf{};
  std::string out = "unknown";
  if (FILE* pipe = popen("git describe --always --dirty 2>/dev/null", "r")) {
    if (fgets(buf.data(), buf.size(), pipe)) {
      out = buf.data();
      while (!out.empty() && (out.back() == '\n' || out.back() == '\r')) out.pop_back();
    }
    pclose(pipe);
  }
  return out.empty() ? "unknown" : out;
}

}  // namespace

const std::vector<std::vector<std::uint8_t>>& env_label_rows(const Dataset& ds,
                                                             const RunConfig& cfg) {
  return cfg.env_source == EnvSource::kClass ? ds.class_labels : ds.context_labels;
}

void cmd_gen(const RunConfig& cfg, const fs::path& run_dir) {
  fs::create_directories(run_dir);
  write_dataset(generate(cfg.dataset_spec()), dataset_path(run_dir));
}

void cmd_train(const RunConfig& cfg, const fs::path& run_dir) {
  Dataset ds = load_dataset(run_dir);
  EnvironmentSpec env = sample_run_environments(cfg, cfg.env_label_count());

  Rng mrng = Rng(cfg.seed).child(kModelStream);
  Model model = init_model(model_config(cfg, ds), mrng);

  TrainConfig tcfg;
  tcfg.batch_size = cfg.batch_size;
  tcfg.epochs = cfg.epochs;
  tcfg.lr = cfg.lr;
  tcfg.rho = cfg.rho;
  tcfg.seed = cfg.seed;

  if (cfg.method == Method::kCodir) {
    auto result = train(model, ds, env_label_rows(ds, cfg), env, tcfg);
    write_train_log(run_dir / "train_log.csv", result.log);
  } else {
    auto log = bxent_train(model, ds, tcfg);
    std::ofstream os(run_dir / "train_log.csv");
    os << "epoch,loss,val_loss,wall_seconds\n";
    for (const auto& e : log)
      os << e.epoch << ',' << e.loss << ',' << e.val_loss << ',' << e.wall_seconds << '\n';
  }
  write_checkpoint(checkpoint_path(run_dir), {model, env, cfg.seed});
}

void cmd_fit(const RunConfig& cfg, const fs::path& run_dir) {
  Dataset ds = load_dataset(run_dir);
  Checkpoint ck = load_model(run_dir);

  if (cfg.method == Method::kBxent) {
    auto thresholds = fit_bxent_thresholds(ck.model, ds, ds.indices_of(Split::kVal));
    std::ofstream os(bxent_thresholds_path(run_dir));
    os.precision(17);
    for (double t : thresholds) os << t << '\n';
    return;
  }

  auto [templ_ids, thresh_ids] =
      split_template_threshold(ds.indices_of(Split::kTrain), Rng(cfg.seed).child(kSplitStream).seed());
  TemplateSet ts = fit_templates(ck.model, ds, env_label_rows(ds, cfg), ck.env, templ_ids);
  fit_thresholds(ck.model, ds, thresh_ids, ts);
  write_templates(templates_path(run_dir), ts);
}

PrfReport cmd_eval(const RunConfig& cfg, const fs::path& run_dir, std::size_t k) {
  Dataset ds = load_dataset(run_dir);
  Checkpoint ck = load_model(run_dir);
  const auto test_ids = ds.indices_of(Split::kTest);

  std::vector<LabelSet> pred, truth;
  if (cfg.method == Method::kBxent) {
    require_artifact(bxent_thresholds_path(run_dir), "fit");
    std::ifstream is(bxent_thresholds_path(run_dir));
    std::vector<double> thresholds;
    double t;
    while (is >> t) thresholds.push_back(t);
    for (std::size_t id : test_ids) {
      pred.push_back(bxent_classify(ck.model, ds.images[id], thresholds));
      truth.push_back(class_set_of(ds, id));
    }
  } else {
    TemplateSet ts = load_templates(run_dir);
    auto reps = instance_reps(ck.model, ds, test_ids, ts.ebar);
    for (std::size_t n = 0; n < test_ids.size(); ++n) {
      Matrix d = k > 0 ? decompress(compress(reps[n], k)) : reps[n];
      pred.push_back(classify(d, ts));
      truth.push_back(class_set_of(ds, test_ids[n]));
    }
  }
  PrfReport report = example_prf(pred, truth);
  fs::create_directories(reports_dir(run_dir));
  const std::string name = k > 0 ? "eval_k" + std::to_string(k) + ".csv" : "eval.csv";
  write_prf_csv(reports_dir(run_dir) / name, report);
  return report;
}

void cmd_dump_reps(const RunConfig& cfg, const fs::path& run_dir) {
  Dataset ds = load_dataset(run_dir);
  Checkpoint ck = load_model(run_dir);
  if (cfg.method != Method::kCodir)
    throw ConfigError("dump-reps requires method = codir");
  TemplateSet ts = load_templates(run_dir);

  const auto test_ids = ds.indices_of(Split::kTest);
  auto mats = instance_reps(ck.model, ds, test_ids, ts.ebar);
  std::vector<RepRecord> records(test_ids.size());
  for (std::size_t n = 0; n < test_ids.size(); ++n) {
    records[n].sample_id = static_cast<std::uint32_t>(test_ids[n]);
    records[n].d = std::move(mats[n]);
    records[n].class_labels = ds.class_labels[test_ids[n]];
    records[n].context_labels = ds.context_labels[test_ids[n]];
  }
  write_reps(reps_path(run_dir), records);
}

std::vector<RetrievalQuery> composable_queries(const Dataset& ds,
                                               const std::vector<RepRecord>& corpus,
                                               const TemplateSet& templates, std::size_t count,
                                               std::uint64_t seed) {
  std::vector<RetrievalQuery> accepted;
  // Oversample candidates, keep only references the classifier agrees are
  // composable (c_plus predicted, c_minus not, at least one class left to
  // average), widening the pool until enough survive.
  for (std::size_t round = 0; round < 8 && accepted.size() < count; ++round) {
    accepted.clear();
    const auto candidates = make_queries(ds, count * (4 << round), seed);
    for (const auto& q : candidates) {
      const RepRecord* ref = nullptr;
      for (const auto& r : corpus)
        if (r.sample_id == q.ref_id) {
          ref = &r;
          break;
        }
      if (!ref) continue;
      const LabelSet predicted = classify(ref->d, templates);
      const bool has_plus =
          std::find(predicted.begin(), predicted.end(), q.c_plus) != predicted.end();
      const bool has_minus =
          std::find(predicted.begin(), predicted.end(), q.c_minus) != predicted.end();
      if (!has_plus || has_minus || predicted.size() >= ds.n_classes) continue;
      accepted.push_back(q);
      if (accepted.size() == count) break;
    }
  }
  if (accepted.size() < count)
    throw std::runtime_error("composable_queries: only " + std::to_string(accepted.size()) +
                             " of " + std::to_string(count) + " queries are composable");
  return accepted;
}

RetrievalReport cmd_retrieve(const RunConfig& cfg, const fs::path& run_dir,
                             std::size_t query_count) {
  Dataset ds = load_dataset(run_dir);
  TemplateSet ts = load_templates(run_dir);
  auto corpus = load_reps(run_dir);

  auto queries = composable_queries(ds, corpus, ts, query_count, cfg.seed);
  std::vector<QueryResult> results;
  results.reserve(queries.size());
  for (auto q : queries) {
    q.mode = RetrievalMode::kNn;
    const auto nn = retrieve(q, corpus, ts);
    q.mode = RetrievalMode::kMnn;
    const auto mnn = retrieve(q, corpus, ts);
    results.push_back({nn.front(), mnn.front()});
  }
  RetrievalReport report = retrieval_metrics(queries, results, ds);
  fs::create_directories(reports_dir(run_dir));
  write_queries_csv(reports_dir(run_dir) / "queries.csv", queries);
  write_retrieval_report_csv(reports_dir(run_dir) / "retrieval.csv", report);
  return report;
}

void cmd_compose_demo(const RunConfig& cfg, const fs::path& run_dir) {
  Dataset ds = load_dataset(run_dir);
  TemplateSet ts = load_templates(run_dir);
  auto corpus = load_reps(run_dir);

  const auto queries = composable_queries(ds, corpus, ts, 1, cfg.seed);
  const auto& q = queries.front();
  const RepRecord* ref = nullptr;
  for (const auto& r : corpus)
    if (r.sample_id == q.ref_id) ref = &r;

  const Matrix swapped = compose_swap(ref->d, q.c_plus, q.c_minus, ts, classify(ref->d, ts));
  fs::create_directories(reports_dir(run_dir));
  std::ofstream os(reports_dir(run_dir) / "compose.csv");
  os << "ref_id,c_plus,c_minus,cos_plus_before,cos_plus_after,cos_minus_before,cos_minus_"
        "after\n";
  os << q.ref_id << ',' << q.c_plus << ',' << q.c_minus << ','
     << cosine(ref->d.row(q.c_plus), ts.templates.row(q.c_plus)) << ','
     << cosine(swapped.row(q.c_plus), ts.templates.row(q.c_plus)) << ','
     << cosine(ref->d.row(q.c_minus), ts.templates.row(q.c_minus)) << ','
     << cosine(swapped.row(q.c_minus), ts.templates.row(q.c_minus)) << '\n';
}

void cmd_compress(const RunConfig& cfg, const fs::path& run_dir, std::size_t k) {
  auto records = load_reps(run_dir);
  std::vector<CompressedRep> compressed;
  compressed.reserve(records.size());
  double mean_err = 0.0;
  for (const auto& r : records) {
    compressed.push_back(compress(r.d, k));
    Matrix back = decompress(compressed.back());
    double acc = 0.0;
    for (std::size_t i = 0; i < back.data.size(); ++i) {
      const double d = back.data[i] - r.d.data[i];
      acc += d * d;
    }
    mean_err += std::sqrt(acc);
  }
  mean_err /= static_cast<double>(records.size());
  write_compressed(compressed_path(run_dir), compressed);

  fs::create_directories(reports_dir(run_dir));
  std::ofstream os(reports_dir(run_dir) / "compress.csv");
  os << "k,storage_ratio,mean_frobenius_error\n";
  os << k << ','
     << compression_ratio(records.front().d.rows, records.front().d.cols, k) << ','
     << mean_err << '\n';
  (void)cfg;
}

std::size_t cmd_rank(const RunConfig& cfg, const fs::path& run_dir, std::size_t count,
                     std::size_t rows, std::size_t cols) {
  auto records = load_reps(run_dir);
  if (records.size() < count)
    throw ConfigError("rank: corpus has " + std::to_string(records.size()) +
                      " representations, need " + std::to_string(count));
  std::vector<Matrix> reps;
  reps.reserve(count);
  for (std::size_t n = 0; n < count; ++n) reps.push_back(records[n].d);
  const std::size_t rank = representation_rank(reps, rows, cols);

  fs::create_directories(reports_dir(run_dir));
  std::ofstream os(reports_dir(run_dir) / "rank.csv");
  os << "count,rows,cols,rank\n";
  os << count << ',' << rows << ',' << cols << ',' << rank << '\n';
  (void)cfg;
  return rank;
}

std::vector<ProbeMethodResult> cmd_probe(const RunConfig& cfg, const fs::path& run_dir,
                                         std::size_t holdout_label) {
  Dataset full = load_dataset(run_dir);
  if (holdout_label >= full.n_context)
    throw ConfigError("probe: holdout label " + std::to_string(holdout_label) +
                      " out of range");
  auto [ds, holdout_bits] = holdout_context_label(full, holdout_label);

  // Both pre-training runs see only the reduced label set.
  EnvironmentSpec env = sample_run_environments(cfg, ds.n_context);
  check_holdout_exclusion(env, ds.n_context);

  TrainConfig tcfg;
  tcfg.batch_size = cfg.batch_size;
  tcfg.epochs = cfg.epochs;
  tcfg.lr = cfg.lr;
  tcfg.rho = cfg.rho;
  tcfg.seed = cfg.seed;

  RunConfig codir_cfg = cfg;
  codir_cfg.method = Method::kCodir;
  codir_cfg.env_source = EnvSource::kContext;
  Rng mrng = Rng(cfg.seed).child(kModelStream);
  Model codir_model = init_model(model_config(codir_cfg, ds), mrng);
  train(codir_model, ds, ds.context_labels, env, tcfg);

  auto [templ_ids, thresh_ids] =
      split_template_threshold(ds.indices_of(Split::kTrain), Rng(cfg.seed).child(kSplitStream).seed());
  TemplateSet ts = fit_templates(codir_model, ds, ds.context_labels, env, templ_ids);

  ModelConfig bc;
  bc.height = ds.height;
  bc.width = ds.width;
  bc.n_classes = ds.n_classes;
  bc.n_envs = cfg.n_envs;
  bc.head = HeadType::kBxentJoint;
  bc.head_out = bxent_head_out(ds, HeadType::kBxentJoint);
  bc.c1 = 24;
  bc.c2 = 48;
  bc.c3 = 96;
  Rng brng = Rng(cfg.seed).child(kModelStream + 1);
  Model sem_model = init_model(bc, brng);
  bxent_train(sem_model, ds, tcfg);

  const auto test_ids = ds.indices_of(Split::kTest);
  const std::size_t kc = std::min<std::size_t>(5, std::min(ds.n_classes, cfg.n_envs));
  auto mats = instance_reps(codir_model, ds, test_ids, ts.ebar);

  std::vector<std::vector<double>> codir_feats, ccodir_feats, sem_feats;
  std::vector<std::uint8_t> targets;
  for (std::size_t n = 0; n < test_ids.size(); ++n) {
    codir_feats.push_back(mats[n].data);
    // Probe the rank-k reconstruction rather than the factor entries: a
    // linear probe on (U, S, V) coordinates cannot express linear functionals
    // of D, so factor features cap well below the dense probe.
    ccodir_feats.push_back(decompress(compress(mats[n], kc)).data);
    sem_feats.push_back(sem_representation(sem_model, ds.images[test_ids[n]]));
    targets.push_back(holdout_bits[test_ids[n]]);
  }

  // Control: codir features with sample alignment destroyed. A probe on these
  // should sit at chance, bounding how much of the real probes' F1 is signal.
  std::vector<std::vector<double>> perm_feats = codir_feats;
  Rng prng = Rng(cfg.seed).child(0x5045524d);
  for (std::size_t n = perm_feats.size(); n > 1; --n)
    std::swap(perm_feats[n - 1], perm_feats[prng.uniform_int(n)]);

  auto results = probe_experiment({{"codir", codir_feats},
                                   {"ccodir" + std::to_string(kc), ccodir_feats},
                                   {"sem", sem_feats},
                                   {"perm", perm_feats}},
                                  targets, 5, cfg.seed);
  fs::create_directories(reports_dir(run_dir));
  write_probe_report_csv(reports_dir(run_dir) / "probe.csv", results);
  return results;
}

GradcheckReport cmd_gradcheck(const RunConfig& cfg, const fs::path& run_dir) {
  ModelConfig mc;
  mc.height = 8;
  mc.width = 8;
  mc.c1 = 4;
  mc.c2 = 4;
  mc.c3 = 4;
  mc.n_classes = 2;
  mc.n_envs = 3;
  mc.head_out = 6;
  Rng rng = Rng(cfg.seed).child(kModelStream);
  Model model = init_model(mc, rng);

  const std::size_t n_b = 4, n_l = 5;
  Rng drng = Rng(cfg.seed).child(0x47524144);
  auto env = sample_environments(n_l, mc.n_envs, 2, drng);
  std::vector<std::vector<float>> images;
  std::vector<std::vector<std::uint8_t>> class_labels, env_labels;
  for (std::size_t k = 0; k < n_b; ++k) {
    std::vector<float> img(64);
    for (auto& p : img) p = static_cast<float>(drng.uniform());
    images.push_back(img);
    std::vector<std::uint8_t> cb(mc.n_classes), lb(n_l);
    for (auto& b : cb) b = drng.uniform() < 0.5 ? 1 : 0;
    for (auto& b : lb) b = drng.uniform() < 0.5 ? 1 : 0;
    class_labels.push_back(cb);
    env_labels.push_back(lb);
  }
  LagrangeState lag(mc.n_classes, mc.n_envs, cfg.rho);
  for (auto& l : lag.lambda.data) l = drng.uniform() - 0.5;

  GradcheckReport report = loss_gradcheck(model, images, class_labels, env_labels, env, lag,
                                          /*conv_samples=*/30, drng);
  fs::create_directories(reports_dir(run_dir));
  std::ofstream os(reports_dir(run_dir) / "gradcheck.csv");
  os << "head_err,conv_err\n" << report.head_err << ',' << report.conv_err << '\n';
  return report;
}

void write_manifest(const RunConfig& cfg, const fs::path& run_dir, const std::string& command,
                    double wall_seconds) {
  fs::create_directories(run_dir);
  std::ofstream os(run_dir / "manifest.txt");
  os << "command = " << command << '\n';
  os << "git = " << git_describe() << '\n';
  os << "wall_seconds = " << wall_seconds << '\n';
  os << config_echo(cfg);
}

}  // namespace codir
