#include "covbeam/wav.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace covbeam {

namespace {

struct FmtChunk {
  uint16_t format = 0;
  uint16_t channels = 0;
  uint32_t sample_rate = 0;
  uint16_t bits = 0;
};

template <typename T>
T read_le(const uint8_t* p) {
  T v;
  std::memcpy(&v, p, sizeof(T));
  return v;  // little-endian host assumed
}

template <typename T>
void append_le(std::vector<uint8_t>& out, T v) {
  uint8_t buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.insert(out.end(), buf, buf + sizeof(T));
}

}  // namespace

Waveform read_wav(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open wav file: " + path);
  std::vector<uint8_t> data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (data.size() < 12 || std::memcmp(data.data(), "RIFF", 4) != 0 ||
      std::memcmp(data.data() + 8, "WAVE", 4) != 0)
    throw std::runtime_error("not a RIFF/WAVE file: " + path);

  FmtChunk fmt;
  bool have_fmt = false;
  std::size_t data_off = 0, data_len = 0;
  std::size_t pos = 12;
  while (pos + 8 <= data.size()) {
    char id[5] = {0};
    std::memcpy(id, data.data() + pos, 4);
    uint32_t len = read_le<uint32_t>(data.data() + pos + 4);
    std::size_t body = pos + 8;
    if (std::memcmp(id, "fmt ", 4) == 0) {
      if (body + 16 > data.size()) throw std::runtime_error("truncated fmt chunk: " + path);
      fmt.format = read_le<uint16_t>(data.data() + body);
      fmt.channels = read_le<uint16_t>(data.data() + body + 2);
      fmt.sample_rate = read_le<uint32_t>(data.data() + body + 4);
      fmt.bits = read_le<uint16_t>(data.data() + body + 14);
      have_fmt = true;
    } else if (std::memcmp(id, "data", 4) == 0) {
      data_off = body;
      data_len = len;
    }
    pos = body + len + (len & 1);
  }
  if (!have_fmt || data_off == 0) throw std::runtime_error("missing fmt/data chunk: " + path);
  if (fmt.channels == 0 || fmt.sample_rate == 0) throw std::runtime_error("bad fmt chunk: " + path);
  if (data_off + data_len > data.size()) throw std::runtime_error("truncated data chunk: " + path);

  // WAVE_FORMAT_EXTENSIBLE carries the real format in a sub-chunk; the two
  // encodings handled here are plain PCM16 and IEEE float32.
  bool pcm16 = fmt.format == 1 && fmt.bits == 16;
  bool f32 = fmt.format == 3 && fmt.bits == 32;
  if (!pcm16 && !f32)
    throw std::runtime_error("unsupported wav encoding (want PCM16 or float32): " + path);

  std::size_t bytes_per = fmt.bits / 8;
  std::size_t frame_bytes = bytes_per * fmt.channels;
  if (data_len % frame_bytes != 0) throw std::runtime_error("data chunk not frame-aligned: " + path);
  std::size_t frames = data_len / frame_bytes;

  Waveform w;
  w.sample_rate_hz = static_cast<int>(fmt.sample_rate);
  w.samples.assign(fmt.channels, std::vector<double>(frames));
  const uint8_t* p = data.data() + data_off;
  for (std::size_t i = 0; i < frames; ++i) {
    for (uint16_t ch = 0; ch < fmt.channels; ++ch) {
      if (pcm16) {
        int16_t v = read_le<int16_t>(p);
        w.samples[ch][i] = static_cast<double>(v) / 32768.0;
        p += 2;
      } else {
        float v = read_le<float>(p);
        w.samples[ch][i] = static_cast<double>(v);
        p += 4;
      }
    }
  }
  return w;
}

void write_wav(const std::string& path, const Waveform& w, WavEncoding encoding) {
  validate(w);
  uint16_t channels = static_cast<uint16_t>(w.channels());
  std::size_t frames = w.length();
  bool f32 = encoding == WavEncoding::kFloat32;
  uint16_t bits = f32 ? 32 : 16;
  uint32_t byte_rate = static_cast<uint32_t>(w.sample_rate_hz) * channels * bits / 8;
  uint16_t block_align = channels * bits / 8;
  uint32_t data_len = static_cast<uint32_t>(frames * block_align);

  std::vector<uint8_t> out;
  out.reserve(44 + data_len);
  out.insert(out.end(), {'R', 'I', 'F', 'F'});
  append_le<uint32_t>(out, 36 + data_len);
  out.insert(out.end(), {'W', 'A', 'V', 'E', 'f', 'm', 't', ' '});
  append_le<uint32_t>(out, 16);
  append_le<uint16_t>(out, f32 ? 3 : 1);
  append_le<uint16_t>(out, channels);
  append_le<uint32_t>(out, static_cast<uint32_t>(w.sample_rate_hz));
  append_le<uint32_t>(out, byte_rate);
  append_le<uint16_t>(out, block_align);
  append_le<uint16_t>(out, bits);
  out.insert(out.end(), {'d', 'a', 't', 'a'});
  append_le<uint32_t>(out, data_len);

  for (std::size_t i = 0; i < frames; ++i) {
    for (uint16_t ch = 0; ch < channels; ++ch) {
      double v = w.samples[ch][i];
      if (f32) {
        append_le<float>(out, static_cast<float>(v));
      } else {
        double scaled = std::round(v * 32768.0);
        scaled = std::clamp(scaled, -32768.0, 32767.0);
        append_le<int16_t>(out, static_cast<int16_t>(scaled));
      }
    }
  }

  std::ofstream of(path, std::ios::binary | std::ios::trunc);
  if (!of) throw std::runtime_error("cannot write wav file: " + path);
  of.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
  if (!of) throw std::runtime_error("short write: " + path);
}

}  // namespace covbeam
