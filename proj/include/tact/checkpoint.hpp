#pragma once

#include <map>
#include <string>

#include "tact/tensor.hpp"

namespace tact {

// Checkpoint file: u32 manifest length, JSON manifest (config hash, RNG
// seed, tensor name -> byte offset into the blob), then the tensor blob
// in the "TACT" dump format.
struct Checkpoint {
  std::string config_hash;
  uint64_t seed = 0;
  std::map<std::string, Tensor> tensors;
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

// FNV-1a over a canonical string; used to tie checkpoints to configs.
std::string content_hash(const std::string& canonical);

}  // namespace tact
