#pragma once

#include <string>
#include <vector>

#include "xvseg/synth.hpp"

namespace xvseg {

struct DatasetEntry {
  std::uint64_t id = 0;
  std::string split;  // train | val
  Difficulty difficulty = Difficulty::medium;
  int query_index = 0;
  Affine2d transform;  // source -> target, ground truth for tracking/eval
  std::string img_s, img_t, mask_s, mask_t;  // PNG paths
};

struct DatasetManifest {
  int canvas = 0;
  std::uint64_t seed = 0;
  std::vector<DatasetEntry> entries;

  std::vector<const DatasetEntry*> split_entries(const std::string& split) const;
};

// Writes images/<split>/<id>_{s,t}.png, masks/<split>/<id>_{s,t}.png and
// manifest.txt. The first floor(n * train_ratio) ids are the train split.
// Re-export with the same arguments is bit-identical.
DatasetManifest export_dataset(int n, const std::string& dir, double train_ratio,
                               Difficulty difficulty, int canvas, std::uint64_t seed);

DatasetManifest load_dataset(const std::string& dir);

struct LoadedPair {
  Image i_s, i_t;
  MaskGrid m_s, m_t;
};
LoadedPair load_pair(const DatasetEntry& e);

}  // namespace xvseg
