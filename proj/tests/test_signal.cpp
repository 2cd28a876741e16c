#include <cmath>
#include <numbers>

#include "covbeam/rng.hpp"
#include "covbeam/signal.hpp"
#include "doctest.h"

using namespace covbeam;

namespace {

Waveform random_wave(int channels, std::size_t len, uint64_t seed) {
  Rng rng(seed);
  Waveform w = Waveform::zeros(channels, len);
  for (auto& ch : w.samples)
    for (auto& v : ch) v = rng.normal();
  return w;
}

// Textbook O(n^2) DFT, the oracle for the FFT and the stft frame content.
std::vector<cplx> naive_dft(const std::vector<cplx>& x) {
  std::size_t n = x.size();
  std::vector<cplx> out(n, cplx(0, 0));
  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t i = 0; i < n; ++i) {
      double ang = -2.0 * std::numbers::pi * static_cast<double>(k * i) / static_cast<double>(n);
      out[k] += x[i] * cplx(std::cos(ang), std::sin(ang));
    }
  return out;
}

double rel_rms(const std::vector<double>& a, const std::vector<double>& b, std::size_t lo,
               std::size_t hi) {
  double err = 0.0, ref = 0.0;
  for (std::size_t i = lo; i < hi; ++i) {
    err += (a[i] - b[i]) * (a[i] - b[i]);
    ref += b[i] * b[i];
  }
  return std::sqrt(err / (ref + 1e-300));
}

}  // namespace

TEST_CASE("fft matches naive dft for pow2 and odd sizes") {
  Rng rng(7);
  for (int n : {8, 64, 512, 12, 100, 27}) {
    std::vector<cplx> x(n);
    for (auto& v : x) v = cplx(rng.normal(), rng.normal());
    auto ref = naive_dft(x);
    auto got = x;
    fft::transform(got, false);
    double scale = 0.0;
    for (auto& v : ref) scale = std::max(scale, std::abs(v));
    for (int i = 0; i < n; ++i) CHECK(std::abs(got[i] - ref[i]) <= 1e-9 * scale);
    fft::transform(got, true);
    for (int i = 0; i < n; ++i) CHECK(std::abs(got[i] - x[i]) <= 1e-12 * (1.0 + std::abs(x[i])));
  }
}

TEST_CASE("stft of all-zero waveform is all zero") {
  StftConfig c;
  Waveform w = Waveform::zeros(2, 4000);
  Spectrogram s = stft(w, c);
  CHECK(s.frames == 1 + (4000 - 512 + 255) / 256);
  for (const auto& v : s.bins) CHECK(std::abs(v) == 0.0);
}

TEST_CASE("stft frame equals windowed dft; sinusoid peaks at its bin") {
  StftConfig c;
  int fs = 16000;
  double f0 = 10.0 * fs / c.window_len;  // exactly bin 10
  Waveform w = Waveform::zeros(1, 2048, fs);
  for (std::size_t n = 0; n < w.length(); ++n)
    w.samples[0][n] = std::sin(2.0 * std::numbers::pi * f0 * static_cast<double>(n) / fs);
  Spectrogram s = stft(w, c);

  auto win = make_window(c);
  std::vector<cplx> frame(c.window_len);
  for (int n = 0; n < c.window_len; ++n) frame[n] = cplx(w.samples[0][n] * win[n], 0.0);
  auto ref = naive_dft(frame);
  double scale = 0.0;
  for (int f = 0; f < s.freqs; ++f) scale = std::max(scale, std::abs(ref[f]));
  for (int f = 0; f < s.freqs; ++f) CHECK(std::abs(s.at(0, 0, f) - ref[f]) <= 1e-9 * scale);

  int peak = 0;
  for (int f = 1; f < s.freqs; ++f)
    if (std::abs(s.at(0, 0, f)) > std::abs(s.at(0, 0, peak))) peak = f;
  CHECK(peak == 10);
  // Hann leakage: adjacent bins at half the peak, two bins away near zero
  CHECK(std::abs(s.at(0, 0, 9)) == doctest::Approx(0.5 * std::abs(s.at(0, 0, 10))).epsilon(0.01));
  CHECK(std::abs(s.at(0, 0, 12)) < 0.01 * std::abs(s.at(0, 0, 10)));
}

TEST_CASE("stft errors on too-short input") {
  StftConfig c;
  Waveform w = Waveform::zeros(1, 100);
  CHECK_THROWS(stft(w, c));
}

TEST_CASE("istft of zero spectrogram is zero") {
  StftConfig c;
  Spectrogram s = Spectrogram::zeros(1, 5, c);
  Waveform w = istft(s);
  for (double v : w.samples[0]) CHECK(v == 0.0);
}

TEST_CASE("istft round trip on random noise, interior error under 1e-6") {
  StftConfig c;
  Waveform w = random_wave(2, 16000, 21);
  Spectrogram s = stft(w, c);
  Waveform r = istft(s);
  for (int m = 0; m < 2; ++m) {
    std::vector<double> rec(r.samples[m].begin(), r.samples[m].begin() + w.length());
    CHECK(rel_rms(rec, w.samples[m], c.window_len, w.length() - c.window_len) <= 1e-6);
  }
}

TEST_CASE("single nonzero frame stays inside its window span") {
  StftConfig c;
  Spectrogram s = Spectrogram::zeros(1, 6, c);
  Rng rng(3);
  std::vector<double> frame(c.window_len);
  for (auto& v : frame) v = rng.normal();
  auto spec = fft::rfft(frame, c.window_len);
  for (int f = 0; f < s.freqs; ++f) s.at(0, 3, f) = spec[f];
  Waveform w = istft(s);
  for (std::size_t n = 0; n < w.length(); ++n) {
    bool inside = n >= 3u * c.hop && n < 3u * c.hop + c.window_len;
    if (!inside) CHECK(std::abs(w.samples[0][n]) <= 1e-12);
  }
}

TEST_CASE("stft is linear") {
  StftConfig c;
  Waveform x = random_wave(1, 4096, 5), y = random_wave(1, 4096, 6);
  Waveform z = Waveform::zeros(1, 4096);
  double a = 0.7, b = -1.3;
  for (std::size_t n = 0; n < 4096; ++n)
    z.samples[0][n] = a * x.samples[0][n] + b * y.samples[0][n];
  Spectrogram sx = stft(x, c), sy = stft(y, c), sz = stft(z, c);
  double scale = 0.0;
  for (auto& v : sz.bins) scale = std::max(scale, std::abs(v));
  for (std::size_t i = 0; i < sz.bins.size(); ++i)
    CHECK(std::abs(sz.bins[i] - (a * sx.bins[i] + b * sy.bins[i])) <= 1e-10 * scale);
}

TEST_CASE("per-frame parseval identity") {
  StftConfig c;
  Waveform w = random_wave(1, 2048, 9);
  Spectrogram s = stft(w, c);
  auto win = make_window(c);
  for (int t = 0; t < 2; ++t) {
    double time_energy = 0.0;
    for (int n = 0; n < c.window_len; ++n) {
      double v = w.samples[0][t * c.hop + n] * win[n];
      time_energy += v * v;
    }
    double spec_energy = std::norm(s.at(0, t, 0)) + std::norm(s.at(0, t, s.freqs - 1));
    for (int f = 1; f < s.freqs - 1; ++f) spec_energy += 2.0 * std::norm(s.at(0, t, f));
    spec_energy /= c.window_len;
    CHECK(time_energy == doctest::Approx(spec_energy).epsilon(1e-8));
  }
}

TEST_CASE("overlap profile is constant at quarter-window hop") {
  StftConfig c;
  c.window_len = 512;
  c.hop = 128;
  auto d = overlap_profile(c, 12);
  for (std::size_t n = c.window_len; n + c.window_len < d.size(); ++n)
    CHECK(d[n] == doctest::Approx(d[c.window_len]).epsilon(1e-10));
}

TEST_CASE("round trip holds across window/hop variants") {
  for (auto [win, hop] : std::vector<std::pair<int, int>>{{512, 256}, {1024, 256}, {512, 128},
                                                          {1024, 512}, {256, 128}}) {
    StftConfig c{win, hop};
    Waveform w = random_wave(1, 8000, 100 + win + hop);
    Waveform r = istft(stft(w, c));
    std::vector<double> rec(r.samples[0].begin(), r.samples[0].begin() + w.length());
    CHECK(rel_rms(rec, w.samples[0], win, w.length() - win) <= 1e-10);
  }
}

TEST_CASE("stft config validation") {
  CHECK_THROWS(validate(StftConfig{511, 256}));
  CHECK_THROWS(validate(StftConfig{512, 0}));
  CHECK_THROWS(validate(StftConfig{512, 600}));
  CHECK_NOTHROW(validate(StftConfig{512, 256}));
}
