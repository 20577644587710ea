#pragma once

#include <string>
#include <vector>

#include "d2sep/common.hpp"
#include "d2sep/wav.hpp"

namespace d2sep {

// One multitrack item: equal-length mono stems sharing a sample rate. The
// mixture is defined as the sample-wise sum of the stems.
struct SourceSet {
  std::vector<std::string> names;
  std::vector<std::vector<double>> sources;
  double sample_rate = 8000.0;

  std::size_t length() const { return sources.empty() ? 0 : sources[0].size(); }

  std::vector<double> mixture() const {
    std::vector<double> mix(length(), 0.0);
    for (const auto& s : sources)
      for (std::size_t i = 0; i < mix.size(); ++i) mix[i] += s[i];
    return mix;
  }
};

inline const std::vector<std::string>& default_sources() {
  static const std::vector<std::string> s = {"vocals", "drums", "bass", "other"};
  return s;
}

// Four spectrally distinct synthetic stems per track:
//   vocals - vibrato harmonic tones, drums - band-passed noise bursts,
//   bass - low sinusoids under 200 Hz, other - mid-band chords.
// Deterministic per seed.
std::vector<SourceSet> synth_corpus(std::uint64_t seed, std::size_t n_tracks,
                                    double seconds, double sample_rate = 8000.0);

// Permutes each source stream independently across tracks; mixtures of the
// result sum mismatched stems. Mixed-length tracks are cropped to the
// shortest picked stem.
std::vector<SourceSet> shuffle_augment(const std::vector<SourceSet>& tracks,
                                       std::uint64_t epoch_seed);

// <dir>/<track>/<source>.wav layout. Stereo stems are downmixed to mono.
std::vector<SourceSet> load_corpus_dir(const std::string& dir,
                                       const std::vector<std::string>& sources =
                                           default_sources());
void save_corpus_dir(const std::string& dir, const std::vector<SourceSet>& tracks,
                     int bits = 32);

}  // namespace d2sep
