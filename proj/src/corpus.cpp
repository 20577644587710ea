#include "d2sep/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>

namespace d2sep {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

void set_rms(std::vector<double>& x, double target) {
  double sq = 0.0;
  for (double v : x) sq += v * v;
  const double rms = std::sqrt(sq / static_cast<double>(x.size()));
  if (rms < 1e-9) return;
  const double s = target / rms;
  for (double& v : x) v *= s;
}

// attack/release trapezoid envelope
double env(double t, double dur, double attack, double release) {
  if (t < 0.0 || t > dur) return 0.0;
  double e = 1.0;
  if (t < attack) e = t / attack;
  const double tail = dur - t;
  if (tail < release) e = std::min(e, tail / release);
  return e;
}

std::vector<double> gen_vocals(Rng& rng, std::size_t n, double fs) {
  std::vector<double> x(n, 0.0);
  double t = rng.uniform(0.0, 0.3);
  while (t * fs < static_cast<double>(n)) {
    const double dur = rng.uniform(0.35, 0.8);
    if (rng.uniform(0.0, 1.0) < 0.18) {  // rest between phrases
      t += dur * 0.6;
      continue;
    }
    const double f0 = rng.uniform(220.0, 520.0);
    const double vib_rate = rng.uniform(4.5, 6.5);
    const double vib_depth = rng.uniform(0.012, 0.025);
    const double vib_phase = rng.uniform(0.0, kTwoPi);
    const std::size_t i0 = static_cast<std::size_t>(t * fs);
    const std::size_t i1 =
        std::min(n, static_cast<std::size_t>((t + dur) * fs));
    double phase[6] = {0, 0, 0, 0, 0, 0};
    for (std::size_t i = i0; i < i1; ++i) {
      const double tt = static_cast<double>(i) / fs - t;
      const double f = f0 * (1.0 + vib_depth * std::sin(kTwoPi * vib_rate * tt + vib_phase));
      const double e = env(tt, dur, 0.03, 0.08);
      double v = 0.0;
      for (int h = 1; h <= 6; ++h) {
        phase[h - 1] += kTwoPi * f * h / fs;
        v += std::sin(phase[h - 1]) / std::sqrt(static_cast<double>(h));
      }
      x[i] += e * v;
    }
    t += dur + rng.uniform(0.02, 0.12);
  }
  set_rms(x, 0.085);
  return x;
}

std::vector<double> gen_drums(Rng& rng, std::size_t n, double fs) {
  std::vector<double> x(n, 0.0);
  // RBJ bandpass biquad
  const double f0 = rng.uniform(2200.0, std::min(3300.0, 0.42 * fs));
  const double q = rng.uniform(1.0, 2.0);
  const double w0 = kTwoPi * f0 / fs;
  const double alpha = std::sin(w0) / (2.0 * q);
  const double a0 = 1.0 + alpha;
  const double b0 = alpha / a0, b2 = -alpha / a0;
  const double a1 = -2.0 * std::cos(w0) / a0, a2 = (1.0 - alpha) / a0;

  double t = rng.uniform(0.0, 0.15);
  while (t * fs < static_cast<double>(n)) {
    const double decay = rng.uniform(0.04, 0.1);
    const double amp = rng.uniform(0.6, 1.0);
    const std::size_t i0 = static_cast<std::size_t>(t * fs);
    const std::size_t len = static_cast<std::size_t>(3.0 * decay * fs);
    double x1 = 0, x2 = 0, y1 = 0, y2 = 0;
    for (std::size_t j = 0; j < len && i0 + j < n; ++j) {
      const double noise = rng.uniform(-1.0, 1.0);
      const double y = b0 * noise + b2 * x2 - a1 * y1 - a2 * y2;
      x2 = x1;
      x1 = noise;
      y2 = y1;
      y1 = y;
      x[i0 + j] += amp * y * std::exp(-static_cast<double>(j) / (decay * fs));
    }
    t += rng.uniform(0.22, 0.42);
  }
  set_rms(x, 0.07);
  return x;
}

std::vector<double> gen_bass(Rng& rng, std::size_t n, double fs) {
  std::vector<double> x(n, 0.0);
  double t = 0.0;
  while (t * fs < static_cast<double>(n)) {
    const double dur = rng.uniform(0.4, 0.9);
    const double f = rng.uniform(55.0, 180.0);
    const std::size_t i0 = static_cast<std::size_t>(t * fs);
    const std::size_t i1 = std::min(n, static_cast<std::size_t>((t + dur) * fs));
    double phase = 0.0;
    for (std::size_t i = i0; i < i1; ++i) {
      const double tt = static_cast<double>(i) / fs - t;
      phase += kTwoPi * f / fs;
      x[i] += env(tt, dur, 0.02, 0.08) * std::sin(phase);
    }
    t += dur;
  }
  set_rms(x, 0.08);
  return x;
}

std::vector<double> gen_other(Rng& rng, std::size_t n, double fs) {
  std::vector<double> x(n, 0.0);
  double t = 0.0;
  while (t * fs < static_cast<double>(n)) {
    const double dur = rng.uniform(0.9, 1.8);
    const double root = rng.uniform(250.0, 650.0);
    const double notes[3] = {root, root * rng.uniform(1.18, 1.27),
                             root * rng.uniform(1.45, 1.55)};
    const std::size_t i0 = static_cast<std::size_t>(t * fs);
    const std::size_t i1 = std::min(n, static_cast<std::size_t>((t + dur) * fs));
    double phase[3] = {rng.uniform(0.0, kTwoPi), rng.uniform(0.0, kTwoPi),
                       rng.uniform(0.0, kTwoPi)};
    for (std::size_t i = i0; i < i1; ++i) {
      const double tt = static_cast<double>(i) / fs - t;
      const double e = env(tt, dur, 0.12, 0.25);
      double v = 0.0;
      for (int j = 0; j < 3; ++j) {
        phase[j] += kTwoPi * notes[j] / fs;
        v += std::sin(phase[j]);
      }
      x[i] += e * v;
    }
    t += dur;
  }
  set_rms(x, 0.075);
  return x;
}

}  // namespace

std::vector<SourceSet> synth_corpus(std::uint64_t seed, std::size_t n_tracks,
                                    double seconds, double sample_rate) {
  if (n_tracks < 2) throw config_error("synth_corpus requires at least 2 tracks");
  if (seconds <= 0.0) throw config_error("synth_corpus track length must be positive");
  Rng master(seed);
  std::vector<std::uint64_t> track_seeds(n_tracks);
  for (auto& s : track_seeds) s = master.next_u64();

  const std::size_t n = static_cast<std::size_t>(seconds * sample_rate);
  std::vector<SourceSet> out;
  out.reserve(n_tracks);
  for (std::size_t tr = 0; tr < n_tracks; ++tr) {
    Rng rng(track_seeds[tr]);
    SourceSet set;
    set.names = default_sources();
    set.sample_rate = sample_rate;
    set.sources.push_back(gen_vocals(rng, n, sample_rate));
    set.sources.push_back(gen_drums(rng, n, sample_rate));
    set.sources.push_back(gen_bass(rng, n, sample_rate));
    set.sources.push_back(gen_other(rng, n, sample_rate));
    out.push_back(std::move(set));
  }
  return out;
}

std::vector<SourceSet> shuffle_augment(const std::vector<SourceSet>& tracks,
                                       std::uint64_t epoch_seed) {
  if (tracks.empty()) return {};
  const std::size_t n = tracks.size();
  const std::size_t ns = tracks[0].names.size();
  for (const auto& t : tracks)
    if (t.names != tracks[0].names)
      throw config_error("shuffle_augment: tracks disagree on source names");

  Rng rng(epoch_seed);
  std::vector<std::vector<std::size_t>> perms;
  for (std::size_t s = 0; s < ns; ++s) perms.push_back(rng.permutation(n));

  std::vector<SourceSet> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    SourceSet set;
    set.names = tracks[0].names;
    set.sample_rate = tracks[0].sample_rate;
    std::size_t min_len = SIZE_MAX;
    for (std::size_t s = 0; s < ns; ++s)
      min_len = std::min(min_len, tracks[perms[s][i]].sources[s].size());
    for (std::size_t s = 0; s < ns; ++s) {
      const auto& src = tracks[perms[s][i]].sources[s];
      set.sources.emplace_back(src.begin(), src.begin() + min_len);
    }
    out.push_back(std::move(set));
  }
  return out;
}

std::vector<SourceSet> load_corpus_dir(const std::string& dir,
                                       const std::vector<std::string>& sources) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw io_error("corpus directory '" + dir + "' not found");
  std::vector<fs::path> track_dirs;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_directory()) track_dirs.push_back(e.path());
  std::sort(track_dirs.begin(), track_dirs.end());
  if (track_dirs.empty()) throw io_error("corpus directory '" + dir + "' has no tracks");

  std::vector<SourceSet> out;
  for (const auto& td : track_dirs) {
    SourceSet set;
    set.names = sources;
    std::size_t min_len = SIZE_MAX;
    for (const auto& s : sources) {
      const auto path = td / (s + ".wav");
      if (!fs::exists(path))
        throw io_error("missing stem '" + path.string() + "'");
      Wave w = load_wav(path.string());
      set.sample_rate = w.sample_rate;
      std::vector<double> mono(w.frames(), 0.0);
      for (const auto& ch : w.channels)
        for (std::size_t i = 0; i < mono.size(); ++i)
          mono[i] += ch[i] / static_cast<double>(w.channel_count());
      min_len = std::min(min_len, mono.size());
      set.sources.push_back(std::move(mono));
    }
    for (auto& s : set.sources) s.resize(min_len);
    out.push_back(std::move(set));
  }
  return out;
}

void save_corpus_dir(const std::string& dir, const std::vector<SourceSet>& tracks,
                     int bits) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  for (std::size_t i = 0; i < tracks.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "track%03zu", i);
    const auto td = fs::path(dir) / name;
    fs::create_directories(td);
    const auto& t = tracks[i];
    for (std::size_t s = 0; s < t.names.size(); ++s) {
      Wave w;
      w.sample_rate = t.sample_rate;
      w.channels = {t.sources[s]};
      save_wav((td / (t.names[s] + ".wav")).string(), w, bits);
    }
    Wave mix;
    mix.sample_rate = t.sample_rate;
    mix.channels = {t.mixture()};
    save_wav((td / "mixture.wav").string(), mix, bits);
  }
}

}  // namespace d2sep
