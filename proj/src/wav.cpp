#include "d2sep/wav.hpp"

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

namespace d2sep {

namespace {

struct Reader {
  std::ifstream f;
  explicit Reader(const std::string& path) : f(path, std::ios::binary) {
    if (!f) throw io_error("cannot open wav file '" + path + "'");
  }
  void raw(void* dst, std::size_t n) {
    f.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
    if (f.gcount() != static_cast<std::streamsize>(n))
      throw io_error("truncated wav file");
  }
  std::uint32_t u32() {
    std::uint8_t b[4];
    raw(b, 4);
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) |
           (static_cast<std::uint32_t>(b[3]) << 24);
  }
  std::uint16_t u16() {
    std::uint8_t b[2];
    raw(b, 2);
    return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
  }
  std::string tag() {
    char b[5] = {0};
    raw(b, 4);
    return std::string(b, 4);
  }
  void skip(std::size_t n) { f.seekg(static_cast<std::streamoff>(n), std::ios::cur); }
};

struct Writer {
  std::ofstream f;
  explicit Writer(const std::string& path) : f(path, std::ios::binary) {
    if (!f) throw io_error("cannot create wav file '" + path + "'");
  }
  void raw(const void* src, std::size_t n) {
    f.write(static_cast<const char*>(src), static_cast<std::streamsize>(n));
  }
  void u32(std::uint32_t v) {
    std::uint8_t b[4] = {static_cast<std::uint8_t>(v), static_cast<std::uint8_t>(v >> 8),
                         static_cast<std::uint8_t>(v >> 16),
                         static_cast<std::uint8_t>(v >> 24)};
    raw(b, 4);
  }
  void u16(std::uint16_t v) {
    std::uint8_t b[2] = {static_cast<std::uint8_t>(v), static_cast<std::uint8_t>(v >> 8)};
    raw(b, 2);
  }
  void tag(const char* t) { raw(t, 4); }
};

}  // namespace

Wave load_wav(const std::string& path) {
  Reader r(path);
  if (r.tag() != "RIFF") throw io_error("malformed wav header: missing RIFF");
  r.u32();  // riff size
  if (r.tag() != "WAVE") throw io_error("malformed wav header: missing WAVE");

  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  bool have_fmt = false;
  Wave wave;

  while (true) {
    char tagbuf[4];
    r.f.read(tagbuf, 4);
    if (r.f.gcount() != 4) break;
    std::string id(tagbuf, 4);
    std::uint32_t size = r.u32();
    if (id == "fmt ") {
      format = r.u16();
      channels = r.u16();
      rate = r.u32();
      r.u32();  // byte rate
      r.u16();  // block align
      bits = r.u16();
      if (size > 16) r.skip(size - 16);
      have_fmt = true;
    } else if (id == "data") {
      if (!have_fmt) throw io_error("malformed wav: data before fmt");
      if (channels < 1 || channels > 2)
        throw io_error("unsupported wav channel count " + std::to_string(channels));
      const bool pcm16 = (format == 1 && bits == 16);
      const bool f32 = (format == 3 && bits == 32);
      if (!pcm16 && !f32)
        throw io_error("unsupported wav codec: format " + std::to_string(format) +
                       ", " + std::to_string(bits) + " bits");
      const std::size_t bytes_per = bits / 8;
      const std::size_t total = size / (bytes_per * channels);
      wave.sample_rate = rate;
      wave.channels.assign(channels, std::vector<double>(total));
      std::vector<std::uint8_t> buf(size);
      r.raw(buf.data(), size);
      for (std::size_t i = 0; i < total; ++i) {
        for (std::size_t c = 0; c < channels; ++c) {
          const std::uint8_t* p = buf.data() + (i * channels + c) * bytes_per;
          if (pcm16) {
            std::int16_t v;
            std::memcpy(&v, p, 2);
            wave.channels[c][i] = static_cast<double>(v) / 32768.0;
          } else {
            float v;
            std::memcpy(&v, p, 4);
            wave.channels[c][i] = static_cast<double>(v);
          }
        }
      }
      if (size % 2 == 1) r.skip(1);
      return wave;
    } else {
      r.skip(size + (size % 2));
    }
  }
  throw io_error("malformed wav: no data chunk");
}

void save_wav(const std::string& path, const Wave& wave, int bits) {
  if (bits != 16 && bits != 32)
    throw io_error("save_wav supports 16 (PCM) or 32 (float) bits");
  const std::size_t channels = wave.channel_count();
  if (channels < 1 || channels > 2)
    throw io_error("save_wav supports 1-2 channels, got " + std::to_string(channels));
  const std::size_t frames = wave.frames();
  for (const auto& c : wave.channels)
    if (c.size() != frames) throw io_error("save_wav: channel lengths differ");

  const std::uint16_t fmt = bits == 16 ? 1 : 3;
  const std::size_t bytes_per = bits / 8;
  const std::uint32_t data_size =
      static_cast<std::uint32_t>(frames * channels * bytes_per);
  const bool fact = fmt == 3;
  const std::uint32_t riff_size = 4 + (8 + 16) + (fact ? 8 + 4 : 0) + (8 + data_size);

  Writer w(path);
  w.tag("RIFF");
  w.u32(riff_size);
  w.tag("WAVE");
  w.tag("fmt ");
  w.u32(16);
  w.u16(fmt);
  w.u16(static_cast<std::uint16_t>(channels));
  w.u32(static_cast<std::uint32_t>(std::lround(wave.sample_rate)));
  w.u32(static_cast<std::uint32_t>(std::lround(wave.sample_rate)) *
        static_cast<std::uint32_t>(channels * bytes_per));
  w.u16(static_cast<std::uint16_t>(channels * bytes_per));
  w.u16(static_cast<std::uint16_t>(bits));
  if (fact) {
    w.tag("fact");
    w.u32(4);
    w.u32(static_cast<std::uint32_t>(frames));
  }
  w.tag("data");
  w.u32(data_size);
  for (std::size_t i = 0; i < frames; ++i) {
    for (std::size_t c = 0; c < channels; ++c) {
      const double v = wave.channels[c][i];
      if (bits == 16) {
        double scaled = std::round(v * 32768.0);
        if (scaled > 32767.0) scaled = 32767.0;
        if (scaled < -32768.0) scaled = -32768.0;
        const std::int16_t s = static_cast<std::int16_t>(scaled);
        w.raw(&s, 2);
      } else {
        const float s = static_cast<float>(v);
        w.raw(&s, 4);
      }
    }
  }
}

}  // namespace d2sep
