#include "d2sep/stft.hpp"

#include <fftw3.h>

#include <cmath>
#include <cstring>
#include <mutex>

namespace d2sep {

namespace {

// FFTW plan creation is not thread-safe; execution with new-array interface is.
std::mutex& fftw_mutex() {
  static std::mutex m;
  return m;
}

struct FftPlans {
  std::size_t n = 0;
  fftw_plan fwd = nullptr;
  fftw_plan inv = nullptr;
  double* real = nullptr;
  fftw_complex* cplx = nullptr;

  explicit FftPlans(std::size_t window) : n(window) {
    std::lock_guard<std::mutex> lock(fftw_mutex());
    real = fftw_alloc_real(n);
    cplx = fftw_alloc_complex(n / 2 + 1);
    fwd = fftw_plan_dft_r2c_1d(static_cast<int>(n), real, cplx, FFTW_ESTIMATE);
    inv = fftw_plan_dft_c2r_1d(static_cast<int>(n), cplx, real, FFTW_ESTIMATE);
  }
  ~FftPlans() {
    std::lock_guard<std::mutex> lock(fftw_mutex());
    fftw_destroy_plan(fwd);
    fftw_destroy_plan(inv);
    fftw_free(real);
    fftw_free(cplx);
  }
  FftPlans(const FftPlans&) = delete;
  FftPlans& operator=(const FftPlans&) = delete;
};

}  // namespace

std::vector<double> hann_window(std::size_t n) {
  std::vector<double> w(n);
  const double twopi = 6.283185307179586476925286766559;
  for (std::size_t i = 0; i < n; ++i)
    w[i] = 0.5 - 0.5 * std::cos(twopi * static_cast<double>(i) / static_cast<double>(n));
  return w;
}

std::size_t stft_num_frames(std::size_t length, std::size_t hop) {
  if (hop == 0) throw config_error("hop must be positive");
  return (length + hop - 1) / hop;
}

double cola_deviation(const StftConfig& cfg) {
  cfg.validate();
  const auto w = hann_window(cfg.window_size);
  // squared-window overlap sum over one hop period, deep inside the overlap
  std::vector<double> acc(cfg.hop, 0.0);
  for (std::size_t start = 0; start < cfg.window_size; start += cfg.hop)
    for (std::size_t i = 0; i < cfg.hop && start + i < cfg.window_size; ++i)
      acc[i] += w[start + i] * w[start + i];
  double mean = 0.0;
  for (double v : acc) mean += v;
  mean /= static_cast<double>(cfg.hop);
  double dev = 0.0;
  for (double v : acc) dev = std::max(dev, std::abs(v - mean));
  return dev;
}

Spectrogram stft_multi(const std::vector<std::vector<double>>& channels,
                       const StftConfig& cfg) {
  cfg.validate();
  if (channels.empty() || channels[0].empty())
    throw shape_error("stft: input signal is empty");
  const std::size_t len = channels[0].size();
  for (const auto& c : channels)
    if (c.size() != len) throw shape_error("stft: channel lengths differ");

  const std::size_t W = cfg.window_size;
  const std::size_t T = stft_num_frames(len, cfg.hop);
  const std::size_t D = cfg.bins();
  const auto win = hann_window(W);

  Spectrogram spec;
  spec.config = cfg;
  spec.bins = D;
  spec.frames = T;
  spec.channels = channels.size();
  spec.data.assign(spec.plane_size() * spec.channels, {0.0, 0.0});

  FftPlans plans(W);
  for (std::size_t c = 0; c < channels.size(); ++c) {
    const double* x = channels[c].data();
    for (std::size_t m = 0; m < T; ++m) {
      const std::size_t start = m * cfg.hop;
      for (std::size_t i = 0; i < W; ++i) {
        const std::size_t idx = start + i;
        plans.real[i] = idx < len ? win[i] * x[idx] : 0.0;
      }
      fftw_execute(plans.fwd);
      auto* out = spec.plane(c);
      for (std::size_t d = 0; d < D; ++d)
        out[d * T + m] = {plans.cplx[d][0], plans.cplx[d][1]};
      // real input: DC and Nyquist bins are purely real
      out[0 * T + m] = {out[0 * T + m].real(), 0.0};
      out[(D - 1) * T + m] = {out[(D - 1) * T + m].real(), 0.0};
    }
  }
  return spec;
}

Spectrogram stft(const std::vector<double>& wave, const StftConfig& cfg) {
  return stft_multi({wave}, cfg);
}

std::vector<double> istft(const Spectrogram& spec, std::size_t channel,
                          std::size_t length) {
  const StftConfig& cfg = spec.config;
  cfg.validate();
  if (cola_deviation(cfg) > 1e-8)
    throw config_error("istft: window/hop does not satisfy COLA");
  if (channel >= spec.channels) throw shape_error("istft: channel out of range");

  const std::size_t W = cfg.window_size;
  const std::size_t T = spec.frames;
  const std::size_t D = spec.bins;
  const auto win = hann_window(W);
  const std::size_t padded = (T > 0 ? (T - 1) * cfg.hop : 0) + W;

  std::vector<double> acc(padded, 0.0);
  std::vector<double> wsq(padded, 0.0);

  FftPlans plans(W);
  const auto* plane = spec.plane(channel);
  for (std::size_t m = 0; m < T; ++m) {
    for (std::size_t d = 0; d < D; ++d) {
      plans.cplx[d][0] = plane[d * T + m].real();
      plans.cplx[d][1] = plane[d * T + m].imag();
    }
    fftw_execute(plans.inv);  // unnormalized: scales by W
    const std::size_t start = m * cfg.hop;
    for (std::size_t i = 0; i < W; ++i) {
      const double frame_val = plans.real[i] / static_cast<double>(W);
      acc[start + i] += win[i] * frame_val;
      wsq[start + i] += win[i] * win[i];
    }
  }
  for (std::size_t i = 0; i < padded; ++i) {
    if (wsq[i] > 1e-12) acc[i] /= wsq[i];
  }
  if (length == 0) length = padded;
  acc.resize(length, 0.0);
  return acc;
}

std::vector<double> features(const Spectrogram& spec, std::size_t channel) {
  if (channel >= spec.channels) throw shape_error("features: channel out of range");
  const auto* plane = spec.plane(channel);
  std::vector<double> out(spec.plane_size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::log1p(std::abs(plane[i]));
  return out;
}

std::vector<double> invert_features(const std::vector<double>& feat) {
  std::vector<double> out(feat.size());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = std::expm1(feat[i] > 0.0 ? feat[i] : 0.0);
  return out;
}

Tensor<float> features_tensor(const Spectrogram& spec, std::size_t channel) {
  const auto f = features(spec, channel);
  Tensor<float> t = Tensor<float>::zeros({spec.bins, spec.frames});
  for (std::size_t i = 0; i < f.size(); ++i) t.data()[i] = static_cast<float>(f[i]);
  return t;
}

}  // namespace d2sep
