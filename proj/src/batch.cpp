#include "d2sep/batch.hpp"

#include <algorithm>
#include <cmath>

namespace d2sep {

SplitIndices split_tracks(std::size_t n_tracks, double validation_fraction) {
  if (n_tracks < 2) throw config_error("need at least 2 tracks to split");
  std::size_t n_val = static_cast<std::size_t>(
      std::lround(validation_fraction * static_cast<double>(n_tracks)));
  n_val = std::max<std::size_t>(1, std::min(n_val, n_tracks - 1));
  SplitIndices s;
  for (std::size_t i = 0; i < n_tracks - n_val; ++i) s.train.push_back(i);
  for (std::size_t i = n_tracks - n_val; i < n_tracks; ++i) s.val.push_back(i);
  return s;
}

std::vector<Clip> cut_clips(const std::vector<SourceSet>& tracks,
                            const StftConfig& stft_cfg, double clip_seconds) {
  std::vector<Clip> clips;
  for (const auto& track : tracks) {
    const std::size_t clip_len =
        static_cast<std::size_t>(clip_seconds * track.sample_rate);
    if (clip_len < stft_cfg.window_size)
      throw config_error("clip (" + std::to_string(clip_len) +
                         " samples) shorter than stft window (" +
                         std::to_string(stft_cfg.window_size) + ")");
    const std::size_t ns = track.sources.size();
    const auto mix = track.mixture();
    for (std::size_t start = 0; start + clip_len <= track.length();
         start += clip_len) {
      Clip clip;
      {
        std::vector<double> seg(mix.begin() + start, mix.begin() + start + clip_len);
        clip.mix = features_tensor(stft(seg, stft_cfg), 0);
      }
      const std::size_t d = clip.mix.shape()[0];
      const std::size_t t = clip.mix.shape()[1];
      clip.target = Tensor<float>::zeros({ns, d, t});
      for (std::size_t s = 0; s < ns; ++s) {
        std::vector<double> seg(track.sources[s].begin() + start,
                                track.sources[s].begin() + start + clip_len);
        Tensor<float> f = features_tensor(stft(seg, stft_cfg), 0);
        std::copy(f.data(), f.data() + f.size(), clip.target.data() + s * d * t);
      }
      clips.push_back(std::move(clip));
    }
  }
  return clips;
}

std::vector<Batch> make_batches(std::vector<Clip> clips, std::size_t batch_size,
                                Rng& order_rng) {
  if (batch_size < 1) throw config_error("batch_size must be >= 1");
  const auto perm = order_rng.permutation(clips.size());
  std::vector<Batch> batches;
  Batch cur;
  for (std::size_t i = 0; i < clips.size(); ++i) {
    cur.clips.push_back(std::move(clips[perm[i]]));
    if (cur.clips.size() == batch_size) {
      batches.push_back(std::move(cur));
      cur = Batch{};
    }
  }
  if (!cur.clips.empty()) batches.push_back(std::move(cur));
  return batches;
}

}  // namespace d2sep
