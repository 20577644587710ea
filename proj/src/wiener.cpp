#include "d2sep/wiener.hpp"

#include <cmath>

namespace d2sep {

std::vector<std::vector<double>> wiener_masks(
    const std::vector<std::vector<double>>& powers, double epsilon) {
  if (powers.empty()) throw shape_error("wiener_masks: no sources");
  const std::size_t n = powers[0].size();
  for (const auto& p : powers)
    if (p.size() != n) throw shape_error("wiener_masks: source plane sizes differ");
  const std::size_t ns = powers.size();
  std::vector<std::vector<double>> masks(ns, std::vector<double>(n));
  const double eps_per_source = epsilon / static_cast<double>(ns);
  for (std::size_t i = 0; i < n; ++i) {
    double denom = epsilon;
    for (std::size_t s = 0; s < ns; ++s) denom += powers[s][i];
    for (std::size_t s = 0; s < ns; ++s)
      masks[s][i] = (powers[s][i] + eps_per_source) / denom;
  }
  return masks;
}

std::vector<Spectrogram> wiener_filter(
    const std::vector<std::vector<std::vector<double>>>& est_mags,
    const Spectrogram& mix, double epsilon) {
  const std::size_t ns = est_mags.size();
  if (ns == 0) throw shape_error("wiener_filter: no sources");
  const std::size_t plane = mix.plane_size();
  for (const auto& src : est_mags) {
    if (src.size() != mix.channels)
      throw shape_error("wiener_filter: channel count mismatch");
    for (const auto& ch : src)
      if (ch.size() != plane)
        throw shape_error("wiener_filter: magnitude plane size mismatch");
  }

  std::vector<Spectrogram> out(ns);
  for (auto& s : out) {
    s.config = mix.config;
    s.bins = mix.bins;
    s.frames = mix.frames;
    s.channels = mix.channels;
    s.data.assign(mix.data.size(), {0.0, 0.0});
  }

  std::vector<std::vector<double>> powers(ns, std::vector<double>(plane));
  for (std::size_t c = 0; c < mix.channels; ++c) {
    for (std::size_t s = 0; s < ns; ++s) {
      const auto& m = est_mags[s][c];
      for (std::size_t i = 0; i < plane; ++i) powers[s][i] = m[i] * m[i];
    }
    const auto masks = wiener_masks(powers, epsilon);
    const auto* x = mix.plane(c);
    for (std::size_t s = 0; s < ns; ++s) {
      auto* dst = out[s].plane(c);
      const auto& mk = masks[s];
      for (std::size_t i = 0; i < plane; ++i) dst[i] = mk[i] * x[i];
    }
  }
  return out;
}

}  // namespace d2sep
