#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "codir/numerics.hpp"

namespace codir {

// Fixed randomized mapping from context labels to environments. Column j of
// the selection matrix V holds exactly sizes[j] ones; everything is frozen at
// sampling time.
struct EnvironmentSpec {
  std::size_t n_labels = 0;
  std::size_t n_envs = 0;
  std::size_t max_labels = 0;                 // R
  std::vector<std::uint16_t> sizes;           // r_j, each in [1, R]
  std::vector<std::uint8_t> selection;        // V, n_labels x n_envs, row-major

  std::uint8_t v(std::size_t label, std::size_t env) const {
    return selection[label * n_envs + env];
  }
  bool operator==(const EnvironmentSpec&) const = default;
};

EnvironmentSpec sample_environments(std::size_t n_labels, std::size_t n_envs,
                                    std::size_t max_labels, Rng& rng);

void write_environment_spec(std::ostream& os, const EnvironmentSpec& spec);
EnvironmentSpec read_environment_spec(std::istream& is);

// Batch masks over the (n_b, n_c, n_e) output grid, flattened row-major.
struct MaskPair {
  std::size_t n_batch = 0;
  std::size_t n_classes = 0;
  std::size_t n_envs = 0;
  std::vector<double> mc;  // class-membership indicator, broadcast across envs
  std::vector<double> me;  // environment label-match counts, broadcast across classes

  std::size_t at(std::size_t k, std::size_t i, std::size_t j) const {
    return (k * n_classes + i) * n_envs + j;
  }
};

// Mc_{k,i,j} = class_labels[k][i] for all j.
std::vector<double> class_mask(const std::vector<std::vector<std::uint8_t>>& class_labels,
                               std::size_t n_envs);

// Me_{k,i,j} = (L_b V)_{k,j} for all i; entries count matched labels.
std::vector<double> env_mask(const std::vector<std::vector<std::uint8_t>>& context_labels,
                             const EnvironmentSpec& spec, std::size_t n_classes);

MaskPair make_masks(const std::vector<std::vector<std::uint8_t>>& class_labels,
                    const std::vector<std::vector<std::uint8_t>>& context_labels,
                    const EnvironmentSpec& spec);

}  // namespace codir
