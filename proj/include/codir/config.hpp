#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>

#include "codir/net.hpp"
#include "codir/synthdata.hpp"

namespace codir {

// Bad flags or config file contents; maps to exit code 2.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A required artifact from an earlier pipeline step is missing; exit code 3.
struct DependencyError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class Method : std::uint8_t { kCodir = 0, kBxent = 1 };

// Label pool feeding the environments: class bits only ("class" variant) or
// the full context mask ("capt" analog).
enum class EnvSource : std::uint8_t { kClass = 0, kContext = 1 };

struct RunConfig {
  std::uint64_t seed = 0;
  std::size_t n_classes = 8;
  std::size_t n_context = 24;
  std::size_t height = 32;
  std::size_t width = 32;
  std::size_t n_train = 4096;
  std::size_t n_val = 1024;
  std::size_t n_test = 1024;
  std::size_t n_envs = 48;
  std::size_t max_labels = 8;  // R
  Method method = Method::kCodir;
  EnvSource env_source = EnvSource::kContext;
  HeadType bxent_head = HeadType::kBxentJoint;
  double lr = 5e-3;
  double rho = 1e-2;
  std::size_t batch_size = 64;
  std::size_t epochs = 20;

  DatasetSpec dataset_spec() const;
  // Environment label pool width after applying env_source.
  std::size_t env_label_count() const;
  bool operator==(const RunConfig&) const = default;
};

// key = value lines; '#' starts a comment; unknown keys and malformed values
// are reported with their line number. Absent keys keep defaults.
RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::filesystem::path& path);

void validate_config(const RunConfig& cfg);

// The effective configuration as parseable key = value lines (manifest echo).
std::string config_echo(const RunConfig& cfg);

}  // namespace codir
