#pragma once

#include <string>
#include <vector>

#include "d2sep/common.hpp"

namespace d2sep {

struct Wave {
  double sample_rate = 8000.0;
  std::vector<std::vector<double>> channels;  // deinterleaved

  std::size_t frames() const { return channels.empty() ? 0 : channels[0].size(); }
  std::size_t channel_count() const { return channels.size(); }
};

// PCM 16-bit or IEEE float 32-bit RIFF/WAVE, 1-2 channels.
Wave load_wav(const std::string& path);

// bits: 32 writes IEEE float (lossless for float32 data), 16 writes PCM.
void save_wav(const std::string& path, const Wave& wave, int bits = 32);

}  // namespace d2sep
