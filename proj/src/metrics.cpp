#include "d2sep/metrics.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace d2sep {

namespace {

double to_db(double num, double den) {
  if (den <= 0.0) return kMetricDbCap;
  if (num <= 0.0) return -kMetricDbCap;
  const double db = 10.0 * std::log10(num / den);
  return std::min(kMetricDbCap, std::max(-kMetricDbCap, db));
}

double energy(const double* x, std::size_t n) {
  double e = 0.0;
  for (std::size_t i = 0; i < n; ++i) e += x[i] * x[i];
  return e;
}

}  // namespace

double median_excluding_nan(std::vector<double> values) {
  values.erase(std::remove_if(values.begin(), values.end(),
                              [](double v) { return !std::isfinite(v); }),
               values.end());
  if (values.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

double sdr(const std::vector<double>& reference, const std::vector<double>& estimate,
           double frame_seconds, double sample_rate) {
  if (reference.size() != estimate.size())
    throw shape_error("sdr: reference and estimate lengths differ");
  if (!(frame_seconds > 0.0)) throw config_error("sdr: frame_seconds must be positive");
  const std::size_t frame = std::max<std::size_t>(
      1, static_cast<std::size_t>(frame_seconds * sample_rate));
  std::vector<double> per_frame;
  for (std::size_t start = 0; start < reference.size(); start += frame) {
    const std::size_t n = std::min(frame, reference.size() - start);
    const double es = energy(reference.data() + start, n);
    if (es <= 0.0) continue;  // silent reference frame, excluded
    double ed = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double d = reference[start + i] - estimate[start + i];
      ed += d * d;
    }
    per_frame.push_back(to_db(es, ed));
  }
  return median_excluding_nan(per_frame);
}

BssResult bss_decompose(const std::vector<std::vector<double>>& references,
                        std::size_t target_index, const std::vector<double>& estimate,
                        double frame_seconds, double sample_rate) {
  const std::size_t J = references.size();
  if (J == 0) throw shape_error("bss_decompose: no references");
  if (target_index >= J) throw shape_error("bss_decompose: target index out of range");
  const std::size_t n = estimate.size();
  for (const auto& r : references)
    if (r.size() != n) throw shape_error("bss_decompose: length mismatch");
  if (!(frame_seconds > 0.0))
    throw config_error("bss_decompose: frame_seconds must be positive");

  const std::size_t frame = std::max<std::size_t>(
      1, static_cast<std::size_t>(frame_seconds * sample_rate));

  std::vector<double> f_sdr, f_sir, f_sar, f_isr;
  bool regularized = false;

  for (std::size_t start = 0; start < n; start += frame) {
    const std::size_t m = std::min(frame, n - start);
    const double e_target = energy(references[target_index].data() + start, m);
    if (e_target <= 0.0) continue;

    // Gram system over the reference frame
    Eigen::MatrixXd gram(J, J);
    Eigen::VectorXd rhs(J);
    for (std::size_t a = 0; a < J; ++a) {
      for (std::size_t b = 0; b <= a; ++b) {
        double dot = 0.0;
        for (std::size_t i = 0; i < m; ++i)
          dot += references[a][start + i] * references[b][start + i];
        gram(a, b) = dot;
        gram(b, a) = dot;
      }
      double dot = 0.0;
      for (std::size_t i = 0; i < m; ++i)
        dot += references[a][start + i] * estimate[start + i];
      rhs(a) = dot;
    }
    Eigen::LDLT<Eigen::MatrixXd> ldlt(gram);
    Eigen::VectorXd coeff;
    const double trace = gram.trace();
    if (ldlt.info() != Eigen::Success || gram.determinant() <=
        1e-12 * std::pow(trace / static_cast<double>(J), static_cast<double>(J))) {
      // rank-deficient: ridge-regularized solve
      regularized = true;
      Eigen::MatrixXd reg = gram;
      reg.diagonal().array() += 1e-10 * std::max(trace, 1.0);
      coeff = reg.ldlt().solve(rhs);
    } else {
      coeff = ldlt.solve(rhs);
    }
    const double c_target = e_target > 0.0 ? rhs(target_index) / e_target : 0.0;

    double e_spat = 0.0, e_interf = 0.0, e_artif = 0.0, e_img = 0.0, e_dist = 0.0;
    double e_target_plus_spat = 0.0, e_no_artif = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      double p_all = 0.0;
      for (std::size_t a = 0; a < J; ++a) p_all += coeff(a) * references[a][start + i];
      const double s_img = references[target_index][start + i];
      const double p_t = c_target * s_img;
      const double spat = p_t - s_img;
      const double interf = p_all - p_t;
      const double artif = estimate[start + i] - p_all;
      e_img += s_img * s_img;
      e_spat += spat * spat;
      e_interf += interf * interf;
      e_artif += artif * artif;
      const double dist = spat + interf + artif;
      e_dist += dist * dist;
      e_target_plus_spat += p_t * p_t;
      const double na = p_all;
      e_no_artif += na * na;
    }
    f_sdr.push_back(to_db(e_img, e_dist));
    f_isr.push_back(to_db(e_img, e_spat));
    f_sir.push_back(to_db(e_target_plus_spat, e_interf));
    f_sar.push_back(to_db(e_no_artif, e_artif));
  }

  BssResult r;
  r.sdr = median_excluding_nan(f_sdr);
  r.sir = median_excluding_nan(f_sir);
  r.sar = median_excluding_nan(f_sar);
  r.isr = median_excluding_nan(f_isr);
  r.regularized = regularized;
  return r;
}

AggregateScores aggregate(const std::vector<TrackScores>& tracks) {
  if (tracks.empty()) throw config_error("aggregate: need at least one track");
  AggregateScores agg;
  agg.sources = tracks[0].sources;
  agg.tracks = tracks.size();
  const std::size_t ns = agg.sources.size();
  for (std::size_t s = 0; s < ns; ++s) {
    std::vector<double> vs, vi, va, vr;
    for (const auto& t : tracks) {
      if (s < t.sdr.size()) vs.push_back(t.sdr[s]);
      if (s < t.sir.size()) vi.push_back(t.sir[s]);
      if (s < t.sar.size()) va.push_back(t.sar[s]);
      if (s < t.isr.size()) vr.push_back(t.isr[s]);
    }
    agg.median_sdr.push_back(median_excluding_nan(vs));
    agg.median_sir.push_back(median_excluding_nan(vi));
    agg.median_sar.push_back(median_excluding_nan(va));
    agg.median_isr.push_back(median_excluding_nan(vr));
  }
  return agg;
}

std::string render_report_tsv(const std::vector<TrackScores>& tracks) {
  std::ostringstream os;
  os << "track\tsource\tmetric\tvalue\n";
  const char* metrics[] = {"SDR", "SIR", "SAR", "ISR"};
  for (const auto& t : tracks) {
    for (std::size_t s = 0; s < t.sources.size(); ++s) {
      const std::vector<double>* vals[] = {&t.sdr, &t.sir, &t.sar, &t.isr};
      for (int m = 0; m < 4; ++m) {
        if (s >= vals[m]->size()) continue;
        os << t.track_id << '\t' << t.sources[s] << '\t' << metrics[m] << '\t'
           << (*vals[m])[s] << '\n';
      }
    }
  }
  return os.str();
}

std::string render_summary_json(const AggregateScores& agg) {
  std::ostringstream os;
  os << "{\n  \"tracks\": " << agg.tracks << ",\n  \"median\": {\n";
  for (std::size_t s = 0; s < agg.sources.size(); ++s) {
    os << "    \"" << agg.sources[s] << "\": {\"SDR\": " << agg.median_sdr[s]
       << ", \"SIR\": " << agg.median_sir[s] << ", \"SAR\": " << agg.median_sar[s]
       << ", \"ISR\": " << agg.median_isr[s] << "}";
    os << (s + 1 < agg.sources.size() ? ",\n" : "\n");
  }
  os << "  }\n}\n";
  return os.str();
}

std::string render_heatmap_tsv(const std::vector<TrackScores>& tracks) {
  std::ostringstream os;
  os << "track";
  if (!tracks.empty())
    for (const auto& s : tracks[0].sources) os << '\t' << s;
  os << '\n';
  for (const auto& t : tracks) {
    os << t.track_id;
    for (double v : t.sdr) os << '\t' << v;
    os << '\n';
  }
  return os.str();
}

}  // namespace d2sep
