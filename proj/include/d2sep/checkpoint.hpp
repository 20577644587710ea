#pragma once

#include <string>

#include "d2sep/model.hpp"
#include "d2sep/stft.hpp"

namespace d2sep {

struct CheckpointMeta {
  long epoch = 0;
  double val_loss = 0.0;
  std::uint64_t seed = 0;
};

struct Checkpoint {
  ModelF net;
  StftConfig stft;
  CheckpointMeta meta;
};

// Text manifest (config fields, parameter names/shapes/offsets, metadata)
// followed by the raw little-endian float32 arrays in manifest order.
// save(load(f)) reproduces f byte for byte.
void save_checkpoint(const std::string& path, const ModelF& net,
                     const StftConfig& stft, const CheckpointMeta& meta);

Checkpoint load_checkpoint(const std::string& path);

}  // namespace d2sep
