#include "codir/envmask.hpp"

#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>

namespace codir {

EnvironmentSpec sample_environments(std::size_t n_labels, std::size_t n_envs,
                                    std::size_t max_labels, Rng& rng) {
  if (n_envs == 0) throw std::invalid_argument("sample_environments: n_envs must be positive");
  if (max_labels == 0 || max_labels > n_labels)
    throw std::invalid_argument("sample_environments: need 1 <= R <= n_labels, got R=" +
                                std::to_string(max_labels) +
                                ", n_labels=" + std::to_string(n_labels));
  EnvironmentSpec spec;
  spec.n_labels = n_labels;
  spec.n_envs = n_envs;
  spec.max_labels = max_labels;
  spec.sizes.resize(n_envs);
  spec.selection.assign(n_labels * n_envs, 0);
  for (std::size_t j = 0; j < n_envs; ++j) {
    const std::size_t r = 1 + rng.uniform_int(max_labels);
    spec.sizes[j] = static_cast<std::uint16_t>(r);
    for (std::size_t label : sample_without_replacement(n_labels, r, rng))
      spec.selection[label * n_envs + j] = 1;
  }
  return spec;
}

namespace {

template <typename T>
void put(std::ostream& os, T value) {
  os.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T get(std::istream& is) {
  T value{};
  is.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!is) throw std::runtime_error("environment spec block truncated");
  return value;
}

}  // namespace

void write_environment_spec(std::ostream& os, const EnvironmentSpec& spec) {
  put<std::uint32_t>(os, static_cast<std::uint32_t>(spec.n_labels));
  put<std::uint32_t>(os, static_cast<std::uint32_t>(spec.n_envs));
  put<std::uint32_t>(os, static_cast<std::uint32_t>(spec.max_labels));
  for (std::uint16_t r : spec.sizes) put<std::uint16_t>(os, r);
  // Column-major packed bitmatrix.
  std::uint8_t byte = 0;
  int nbits = 0;
  for (std::size_t j = 0; j < spec.n_envs; ++j)
    for (std::size_t l = 0; l < spec.n_labels; ++l) {
      if (spec.v(l, j)) byte |= static_cast<std::uint8_t>(1u << nbits);
      if (++nbits == 8) {
        put<std::uint8_t>(os, byte);
        byte = 0;
        nbits = 0;
      }
    }
  if (nbits > 0) put<std::uint8_t>(os, byte);
}

EnvironmentSpec read_environment_spec(std::istream& is) {
  EnvironmentSpec spec;
  spec.n_labels = get<std::uint32_t>(is);
  spec.n_envs = get<std::uint32_t>(is);
  spec.max_labels = get<std::uint32_t>(is);
  spec.sizes.resize(spec.n_envs);
  for (auto& r : spec.sizes) r = get<std::uint16_t>(is);
  spec.selection.assign(spec.n_labels * spec.n_envs, 0);
  std::uint8_t byte = 0;
  int nbits = 8;
  for (std::size_t j = 0; j < spec.n_envs; ++j)
    for (std::size_t l = 0; l < spec.n_labels; ++l) {
      if (nbits == 8) {
        byte = get<std::uint8_t>(is);
        nbits = 0;
      }
      spec.selection[l * spec.n_envs + j] = (byte >> nbits) & 1u;
      ++nbits;
    }
  return spec;
}

std::vector<double> class_mask(const std::vector<std::vector<std::uint8_t>>& class_labels,
                               std::size_t n_envs) {
  const std::size_t n_b = class_labels.size();
  const std::size_t n_c = n_b ? class_labels[0].size() : 0;
  std::vector<double> mc(n_b * n_c * n_envs);
  for (std::size_t k = 0; k < n_b; ++k)
    for (std::size_t i = 0; i < n_c; ++i) {
      const double bit = class_labels[k][i] ? 1.0 : 0.0;
      for (std::size_t j = 0; j < n_envs; ++j) mc[(k * n_c + i) * n_envs + j] = bit;
    }
  return mc;
}

std::vector<double> env_mask(const std::vector<std::vector<std::uint8_t>>& context_labels,
                             const EnvironmentSpec& spec, std::size_t n_classes) {
  const std::size_t n_b = context_labels.size();
  std::vector<double> me(n_b * n_classes * spec.n_envs);
  for (std::size_t k = 0; k < n_b; ++k) {
    if (context_labels[k].size() != spec.n_labels)
      throw std::invalid_argument("env_mask: context label width does not match spec");
    // counts_j = (L_b V)_{k,j}
    std::vector<double> counts(spec.n_envs, 0.0);
    for (std::size_t l = 0; l < spec.n_labels; ++l) {
      if (!context_labels[k][l]) continue;
      for (std::size_t j = 0; j < spec.n_envs; ++j) counts[j] += spec.v(l, j);
    }
    for (std::size_t i = 0; i < n_classes; ++i)
      for (std::size_t j = 0; j < spec.n_envs; ++j)
        me[(k * n_classes + i) * spec.n_envs + j] = counts[j];
  }
  return me;
}

MaskPair make_masks(const std::vector<std::vector<std::uint8_t>>& class_labels,
                    const std::vector<std::vector<std::uint8_t>>& context_labels,
                    const EnvironmentSpec& spec) {
  MaskPair out;
  out.n_batch = class_labels.size();
  out.n_classes = out.n_batch ? class_labels[0].size() : 0;
  out.n_envs = spec.n_envs;
  out.mc = class_mask(class_labels, spec.n_envs);
  out.me = env_mask(context_labels, spec, out.n_classes);
  return out;
}

}  // namespace codir
