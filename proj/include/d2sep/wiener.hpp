#pragma once

#include <vector>

#include "d2sep/stft.hpp"

namespace d2sep {

// Per-bin ratio masks over source power estimates. Masks are in [0,1] and sum
// to exactly 1 per bin; an all-zero power bin splits evenly across sources.
// powers: one [plane_size] buffer per source. Returns one mask buffer per source.
std::vector<std::vector<double>> wiener_masks(
    const std::vector<std::vector<double>>& powers, double epsilon = 1e-10);

// Multi-channel (channel-wise) Wiener post-filter: every source receives
// mask_s * X where mask_s = est_mag_s^2 / sum of squared magnitudes.
// est_mags[source][channel] is a [bins x frames] magnitude plane.
std::vector<Spectrogram> wiener_filter(
    const std::vector<std::vector<std::vector<double>>>& est_mags,
    const Spectrogram& mix, double epsilon = 1e-10);

}  // namespace d2sep
