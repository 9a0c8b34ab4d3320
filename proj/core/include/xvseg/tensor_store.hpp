#pragma once

#include <map>
#include <string>
#include <vector>

#include "xvseg/nn.hpp"
#include "xvseg/tensor.hpp"

namespace xvseg {

// On-disk tensor bundle: a directory holding
//   manifest.txt  one line per tensor: name + shape/dtype/offset metadata
//   params.bin    little-endian IEEE-754 doubles, concatenated per manifest
// Checkpoints add a config.txt (key = value) next to these.
struct StoredTensor {
  std::string name;
  std::string group;
  bool trainable = true;
  Tensor t;
};

void save_tensor_store(const std::string& dir, const std::vector<StoredTensor>& tensors);
std::vector<StoredTensor> load_tensor_store(const std::string& dir);

// ParamStore adapters. load_params matches by name and requires identical
// shapes (build the store from the same RunConfig first).
void save_params(const ParamStore& ps, const std::string& dir);
void load_params(ParamStore& ps, const std::string& dir);

// Plain key = value files (config snapshots, manifests).
void write_kv_file(const std::string& path, const std::map<std::string, std::string>& kv);
std::map<std::string, std::string> read_kv_file(const std::string& path);

}  // namespace xvseg
