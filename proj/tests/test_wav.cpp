#include <cstdio>
#include <filesystem>
#include <fstream>

#include "covbeam/rng.hpp"
#include "covbeam/wav.hpp"
#include "doctest.h"

using namespace covbeam;

namespace {

std::string tmp_path(const char* name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

Waveform float_valued_wave(int channels, std::size_t len, uint64_t seed) {
  Rng rng(seed);
  Waveform w = Waveform::zeros(channels, len);
  for (auto& ch : w.samples)
    for (auto& v : ch) v = static_cast<float>(0.8 * rng.normal());
  return w;
}

}  // namespace

TEST_CASE("float32 wav round trip is exact") {
  Waveform w = float_valued_wave(3, 1000, 1);
  std::string path = tmp_path("covbeam_f32.wav");
  write_wav(path, w, WavEncoding::kFloat32);
  Waveform r = read_wav(path);
  REQUIRE(r.channels() == 3);
  REQUIRE(r.length() == 1000);
  CHECK(r.sample_rate_hz == w.sample_rate_hz);
  for (int m = 0; m < 3; ++m)
    for (std::size_t i = 0; i < 1000; ++i) CHECK(r.samples[m][i] == w.samples[m][i]);
  std::remove(path.c_str());
}

TEST_CASE("pcm16 round trip stays within one quantization step") {
  Rng rng(2);
  Waveform w = Waveform::zeros(2, 500);
  for (auto& ch : w.samples)
    for (auto& v : ch) v = rng.uniform(-1.0, 1.0);
  std::string path = tmp_path("covbeam_pcm16.wav");
  write_wav(path, w, WavEncoding::kPcm16);
  Waveform r = read_wav(path);
  for (int m = 0; m < 2; ++m)
    for (std::size_t i = 0; i < 500; ++i)
      CHECK(std::abs(r.samples[m][i] - w.samples[m][i]) <= 1.0 / 32768.0);
  std::remove(path.c_str());
}

TEST_CASE("truncated file raises and yields no waveform") {
  Waveform w = float_valued_wave(2, 400, 3);
  std::string path = tmp_path("covbeam_trunc.wav");
  write_wav(path, w);
  auto size = std::filesystem::file_size(path);
  std::filesystem::resize_file(path, size / 2);
  CHECK_THROWS(read_wav(path));
  std::remove(path.c_str());
}

TEST_CASE("unsupported encoding is rejected") {
  std::string path = tmp_path("covbeam_alaw.wav");
  // minimal header claiming A-law (format 6)
  std::ofstream of(path, std::ios::binary);
  const unsigned char hdr[] = {
      'R', 'I', 'F', 'F', 40, 0, 0, 0, 'W', 'A', 'V', 'E',
      'f', 'm', 't', ' ', 16, 0, 0, 0, 6, 0, 1, 0,
      0x80, 0x3e, 0, 0, 0x80, 0x3e, 0, 0, 1, 0, 8, 0,
      'd', 'a', 't', 'a', 4, 0, 0, 0, 1, 2, 3, 4};
  of.write(reinterpret_cast<const char*>(hdr), sizeof(hdr));
  of.close();
  CHECK_THROWS(read_wav(path));
  std::remove(path.c_str());
}

TEST_CASE("garbage file is rejected") {
  std::string path = tmp_path("covbeam_garbage.wav");
  std::ofstream of(path, std::ios::binary);
  of << "this is not audio";
  of.close();
  CHECK_THROWS(read_wav(path));
  std::remove(path.c_str());
}
