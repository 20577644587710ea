#pragma once

#include <vector>

#include "d2sep/corpus.hpp"
#include "d2sep/stft.hpp"
#include "d2sep/tensor.hpp"

namespace d2sep {

struct TrainConfig {
  double clip_seconds = 5.0;
  std::size_t batch_size = 20;
  std::size_t epochs = 50;
  double validation_fraction = 0.1;
  std::uint64_t seed = 17;
  double learning_rate = 1e-3;
  double grad_clip = 5.0;  // 0 disables clipping
  int workers = 1;

  // 20 for 5-sec clips, 5 for 20-sec clips: batch_size * clip_seconds stays
  // constant so both settings take about the same number of weight updates.
  static std::size_t default_batch_for_clip(double clip_seconds) {
    const double b = 100.0 / clip_seconds;
    return b < 1.0 ? 1 : static_cast<std::size_t>(b + 0.5);
  }
};

// One training example: mixture features [D x T] and per-source target
// features stacked as [|S| x D x T].
struct Clip {
  Tensor<float> mix;
  Tensor<float> target;
};

struct Batch {
  std::vector<Clip> clips;
};

struct SplitIndices {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
};

// Splits whole tracks; the tail tracks become validation. At least one track
// stays on each side.
SplitIndices split_tracks(std::size_t n_tracks, double validation_fraction);

// Cuts non-overlapping clip_seconds subclips from each track and featurizes
// mixture and stems.
std::vector<Clip> cut_clips(const std::vector<SourceSet>& tracks,
                            const StftConfig& stft_cfg, double clip_seconds);

std::vector<Batch> make_batches(std::vector<Clip> clips, std::size_t batch_size,
                                Rng& order_rng);

}  // namespace d2sep
