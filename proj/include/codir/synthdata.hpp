#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "codir/numerics.hpp"

namespace codir {

enum class Split : std::uint8_t { kTrain = 0, kVal = 1, kTest = 2 };

struct DatasetSpec {
  std::size_t n_classes = 8;
  std::size_t n_context = 24;  // 2 implication labels per class + 8 scene labels
  std::size_t height = 32;
  std::size_t width = 32;
  std::size_t channels = 1;
  std::size_t n_train = 4096;
  std::size_t n_val = 1024;
  std::size_t n_test = 1024;
  std::uint64_t seed = 0;
};

// Multi-label glyph images. Each sample carries 1..3 class glyphs, noisy
// per-class implication bits and independently drawn scene-transform bits.
struct Dataset {
  std::size_t n_classes = 0;
  std::size_t n_context = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 0;
  std::vector<std::vector<float>> images;            // H*W*C, values in [0,1]
  std::vector<std::vector<std::uint8_t>> class_labels;
  std::vector<std::vector<std::uint8_t>> context_labels;
  std::vector<Split> splits;

  std::size_t size() const { return images.size(); }
  std::vector<std::size_t> indices_of(Split s) const;
  bool operator==(const Dataset&) const = default;
};

// Scene-label slots within the context mask (offsets past the 2*n_c
// implication bits).
enum SceneLabel : std::size_t {
  kSceneBackground = 0,
  kSceneNoise = 1,
  kSceneBlur = 2,
  kSceneInvert = 3,
  kSceneFrame = 4,
  kSceneGradientH = 5,
  kSceneGradientV = 6,
  kSceneDim = 7,
  kSceneCount = 8,
};

inline std::size_t scene_label_index(const DatasetSpec& spec, SceneLabel s) {
  return 2 * spec.n_classes + static_cast<std::size_t>(s);
}

Dataset generate(const DatasetSpec& spec);

void write_dataset(const Dataset& ds, const std::filesystem::path& path);
Dataset read_dataset(const std::filesystem::path& path);

// Removes context label k from every mask; returns the reduced dataset and
// the original bit per sample for probing.
std::pair<Dataset, std::vector<std::uint8_t>> holdout_context_label(const Dataset& ds,
                                                                    std::size_t k);

}  // namespace codir
