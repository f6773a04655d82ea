#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "codir/baseline.hpp"
#include "codir/compose.hpp"
#include "codir/config.hpp"
#include "codir/fisher.hpp"
#include "codir/metrics.hpp"
#include "codir/probe.hpp"
#include "codir/repr.hpp"
#include "codir/retrieval.hpp"

namespace codir {

// Artifact locations inside a run directory.
std::filesystem::path dataset_path(const std::filesystem::path& run_dir);
std::filesystem::path checkpoint_path(const std::filesystem::path& run_dir);
std::filesystem::path templates_path(const std::filesystem::path& run_dir);
std::filesystem::path reps_path(const std::filesystem::path& run_dir);
std::filesystem::path compressed_path(const std::filesystem::path& run_dir);
std::filesystem::path bxent_thresholds_path(const std::filesystem::path& run_dir);
std::filesystem::path reports_dir(const std::filesystem::path& run_dir);

// Subcommands. Each reads its inputs from and writes its outputs into the run
// directory; a missing input raises DependencyError naming the prior step.
void cmd_gen(const RunConfig& cfg, const std::filesystem::path& run_dir);
void cmd_train(const RunConfig& cfg, const std::filesystem::path& run_dir);
void cmd_fit(const RunConfig& cfg, const std::filesystem::path& run_dir);
// k = 0 evaluates dense representations; k > 0 evaluates rank-k compressions.
PrfReport cmd_eval(const RunConfig& cfg, const std::filesystem::path& run_dir,
                   std::size_t k = 0);
void cmd_dump_reps(const RunConfig& cfg, const std::filesystem::path& run_dir);
RetrievalReport cmd_retrieve(const RunConfig& cfg, const std::filesystem::path& run_dir,
                             std::size_t query_count = 200);
void cmd_compose_demo(const RunConfig& cfg, const std::filesystem::path& run_dir);
void cmd_compress(const RunConfig& cfg, const std::filesystem::path& run_dir, std::size_t k);
std::size_t cmd_rank(const RunConfig& cfg, const std::filesystem::path& run_dir,
                     std::size_t count, std::size_t rows, std::size_t cols);
std::vector<ProbeMethodResult> cmd_probe(const RunConfig& cfg,
                                         const std::filesystem::path& run_dir,
                                         std::size_t holdout_label);
GradcheckReport cmd_gradcheck(const RunConfig& cfg, const std::filesystem::path& run_dir);

void write_manifest(const RunConfig& cfg, const std::filesystem::path& run_dir,
                    const std::string& command, double wall_seconds);

// Environment label rows for the configured source (class bits or the full
// context mask).
const std::vector<std::vector<std::uint8_t>>& env_label_rows(const Dataset& ds,
                                                             const RunConfig& cfg);

// Queries whose reference representation satisfies the composition
// preconditions under the fitted classifier; used by retrieve/compose.
std::vector<RetrievalQuery> composable_queries(const Dataset& ds,
                                               const std::vector<RepRecord>& corpus,
                                               const TemplateSet& templates, std::size_t count,
                                               std::uint64_t seed);

}  // namespace codir
