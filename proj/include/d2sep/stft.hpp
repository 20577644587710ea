#pragma once

#include <complex>
#include <cstddef>
#include <vector>

#include "d2sep/common.hpp"
#include "d2sep/tensor.hpp"

namespace d2sep {

// Analysis/synthesis geometry. The window is a periodic Hann, which satisfies
// constant squared-overlap-add at hop = window/4 (and window/2).
struct StftConfig {
  std::size_t window_size = 128;
  std::size_t hop = 32;
  double sample_rate = 8000.0;

  std::size_t bins() const { return window_size / 2 + 1; }

  void validate() const {
    if (window_size < 2) throw config_error("stft window_size must be >= 2");
    if (hop < 1 || hop > window_size)
      throw config_error("stft hop must be in [1, window_size]");
    if (window_size % 2 != 0) throw config_error("stft window_size must be even");
  }

  static StftConfig desk() { return StftConfig{128, 32, 8000.0}; }
  static StftConfig paper() { return StftConfig{4096, 1024, 44100.0}; }
};

// One-sided complex spectrogram, one plane per audio channel. Plane layout is
// row-major [bins x frames] so a plane lines up with feature tensors.
struct Spectrogram {
  StftConfig config;
  std::size_t bins = 0;
  std::size_t frames = 0;
  std::size_t channels = 0;
  std::vector<std::complex<double>> data;

  std::size_t plane_size() const { return bins * frames; }
  std::complex<double>* plane(std::size_t c) { return data.data() + c * plane_size(); }
  const std::complex<double>* plane(std::size_t c) const {
    return data.data() + c * plane_size();
  }
  std::complex<double>& at(std::size_t c, std::size_t d, std::size_t t) {
    return data[c * plane_size() + d * frames + t];
  }
  std::complex<double> at(std::size_t c, std::size_t d, std::size_t t) const {
    return data[c * plane_size() + d * frames + t];
  }
};

// Periodic Hann window of length n.
std::vector<double> hann_window(std::size_t n);

// Number of analysis frames for a signal of the given length: ceil(len/hop).
std::size_t stft_num_frames(std::size_t length, std::size_t hop);

// Max deviation of sum_m w^2(n - m*hop) from its interior mean. ~0 for COLA
// configurations.
double cola_deviation(const StftConfig& cfg);

Spectrogram stft(const std::vector<double>& wave, const StftConfig& cfg);
Spectrogram stft_multi(const std::vector<std::vector<double>>& channels,
                       const StftConfig& cfg);

// Weighted overlap-add synthesis of one channel; the result is trimmed or
// zero-padded to `length` samples (0 keeps the natural padded length).
std::vector<double> istft(const Spectrogram& spec, std::size_t channel,
                          std::size_t length = 0);

// log(1 + magnitude) of one channel plane, row-major [bins x frames].
std::vector<double> features(const Spectrogram& spec, std::size_t channel);

// expm1 with clamp-to-zero first: inverse of the feature map for model output.
std::vector<double> invert_features(const std::vector<double>& feat);

Tensor<float> features_tensor(const Spectrogram& spec, std::size_t channel);

}  // namespace d2sep
