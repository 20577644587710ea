#pragma once

#include <string>
#include <vector>

#include "d2sep/common.hpp"

namespace d2sep {

// dB ceiling for exact or near-exact estimates; -cap floors the other end.
inline constexpr double kMetricDbCap = 300.0;

// Framewise signal-to-distortion ratio: per frame 10*log10(|s|^2/|s-est|^2),
// median over frames with a non-silent reference. NaN when every frame is
// silent (excluded from downstream medians).
double sdr(const std::vector<double>& reference, const std::vector<double>& estimate,
           double frame_seconds, double sample_rate);

struct BssResult {
  double sdr = 0.0;
  double sir = 0.0;
  double sar = 0.0;
  double isr = 0.0;
  bool regularized = false;  // a rank-deficient reference frame was hit
};

// Framewise least-squares decomposition of the estimate against the reference
// subspace: est = s_img + e_spat + e_interf + e_artif with
//   s_img    = the target reference itself,
//   e_spat   = projection onto the target minus s_img,
//   e_interf = projection onto all references minus the target projection,
//   e_artif  = estimate minus the full projection.
BssResult bss_decompose(const std::vector<std::vector<double>>& references,
                        std::size_t target_index, const std::vector<double>& estimate,
                        double frame_seconds, double sample_rate);

struct TrackScores {
  std::string track_id;
  std::vector<std::string> sources;
  std::vector<double> sdr, sir, sar, isr;  // one entry per source, NaN = undefined
};

struct AggregateScores {
  std::vector<std::string> sources;
  std::vector<double> median_sdr, median_sir, median_sar, median_isr;
  std::size_t tracks = 0;
};

// NaN-excluded median; NaN when no finite values remain.
double median_excluding_nan(std::vector<double> values);

AggregateScores aggregate(const std::vector<TrackScores>& tracks);

// "track <tab> source <tab> metric <tab> value" rows.
std::string render_report_tsv(const std::vector<TrackScores>& tracks);
// JSON summary object with per-source medians.
std::string render_summary_json(const AggregateScores& agg);
// matrix of per-track SDRs: one row per track, one column per source.
std::string render_heatmap_tsv(const std::vector<TrackScores>& tracks);

}  // namespace d2sep
