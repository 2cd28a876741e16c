#include "covbeam/signal.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace covbeam {

Waveform Waveform::zeros(int channels, std::size_t length, int rate) {
  Waveform w;
  w.sample_rate_hz = rate;
  w.samples.assign(channels, std::vector<double>(length, 0.0));
  return w;
}

void validate(const Waveform& w) {
  if (w.sample_rate_hz <= 0) throw std::invalid_argument("sample rate must be positive");
  if (w.samples.empty()) throw std::invalid_argument("waveform has no channels");
  std::size_t len = w.samples[0].size();
  for (const auto& ch : w.samples) {
    if (ch.size() != len) throw std::invalid_argument("channels differ in length");
    for (double v : ch) {
      if (!std::isfinite(v)) throw std::invalid_argument("waveform contains non-finite samples");
    }
  }
}

void validate(const StftConfig& c) {
  if (c.window_len <= 0 || c.window_len % 2 != 0)
    throw std::invalid_argument("window_len must be positive and even");
  if (c.hop <= 0 || c.hop > c.window_len)
    throw std::invalid_argument("hop must be in (0, window_len]");
  auto profile = overlap_profile(c, 8);
  double peak = *std::max_element(profile.begin(), profile.end());
  // interior samples of an 8-frame span
  for (int n = c.window_len; n < 7 * c.hop; ++n) {
    if (profile[n] < 1e-6 * peak)
      throw std::invalid_argument("window/hop pair leaves uncovered samples");
  }
}

Spectrogram Spectrogram::zeros(int channels, int frames, const StftConfig& c) {
  Spectrogram s;
  s.channels = channels;
  s.frames = frames;
  s.freqs = c.freqs();
  s.config = c;
  s.bins.assign(static_cast<std::size_t>(channels) * frames * s.freqs, cplx(0.0, 0.0));
  return s;
}

std::vector<double> make_window(const StftConfig& c) {
  std::vector<double> w(c.window_len);
  for (int n = 0; n < c.window_len; ++n)
    w[n] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * n / c.window_len);
  return w;
}

std::vector<double> overlap_profile(const StftConfig& c, int frames) {
  std::vector<double> win = make_window(c);
  std::vector<double> d(static_cast<std::size_t>(frames - 1) * c.hop + c.window_len, 0.0);
  for (int t = 0; t < frames; ++t)
    for (int n = 0; n < c.window_len; ++n) d[t * c.hop + n] += win[n] * win[n];
  return d;
}

static int frame_count(std::size_t len, const StftConfig& c) {
  if (len < static_cast<std::size_t>(c.window_len))
    throw std::invalid_argument("waveform shorter than one analysis window");
  std::size_t extra = len - c.window_len;
  return 1 + static_cast<int>((extra + c.hop - 1) / c.hop);
}

Spectrogram stft(const Waveform& w, const StftConfig& c) {
  validate(c);
  if (w.channels() == 0 || w.length() == 0) throw std::invalid_argument("empty waveform");
  int frames = frame_count(w.length(), c);
  Spectrogram s = Spectrogram::zeros(w.channels(), frames, c);
  std::vector<double> win = make_window(c);
  std::vector<double> buf(c.window_len);
  for (int m = 0; m < w.channels(); ++m) {
    const auto& ch = w.samples[m];
    for (int t = 0; t < frames; ++t) {
      std::size_t off = static_cast<std::size_t>(t) * c.hop;
      for (int n = 0; n < c.window_len; ++n) {
        double v = (off + n < ch.size()) ? ch[off + n] : 0.0;
        buf[n] = v * win[n];
      }
      auto spec = fft::rfft(buf, c.window_len);
      std::copy(spec.begin(), spec.end(), s.bins.begin() + (static_cast<std::size_t>(m) * frames + t) * s.freqs);
    }
  }
  return s;
}

Waveform istft(const Spectrogram& s) {
  validate(s.config);
  if (s.channels <= 0 || s.frames <= 0) throw std::invalid_argument("empty spectrogram");
  if (s.freqs != s.config.freqs()) throw std::invalid_argument("spectrogram freqs/config mismatch");
  const StftConfig& c = s.config;
  std::size_t out_len = static_cast<std::size_t>(s.frames - 1) * c.hop + c.window_len;
  Waveform w = Waveform::zeros(s.channels, out_len);
  std::vector<double> win = make_window(c);
  std::vector<double> denom = overlap_profile(c, s.frames);
  for (int m = 0; m < s.channels; ++m) {
    auto& out = w.samples[m];
    for (int t = 0; t < s.frames; ++t) {
      std::span<const cplx> spec(&s.bins[(static_cast<std::size_t>(m) * s.frames + t) * s.freqs],
                                 static_cast<std::size_t>(s.freqs));
      std::vector<double> frame = fft::irfft(spec, c.window_len);
      std::size_t off = static_cast<std::size_t>(t) * c.hop;
      for (int n = 0; n < c.window_len; ++n) out[off + n] += frame[n] * win[n];
    }
    for (std::size_t n = 0; n < out_len; ++n) out[n] = denom[n] > 1e-12 ? out[n] / denom[n] : 0.0;
  }
  return w;
}

namespace fft {

static bool is_pow2(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

static void fft_pow2(std::vector<cplx>& a, bool inverse) {
  const std::size_t n = a.size();
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    double ang = 2.0 * std::numbers::pi / static_cast<double>(len) * (inverse ? 1.0 : -1.0);
    cplx wl(std::cos(ang), std::sin(ang));
    for (std::size_t i = 0; i < n; i += len) {
      cplx w(1.0, 0.0);
      for (std::size_t k = 0; k < len / 2; ++k) {
        cplx u = a[i + k];
        cplx v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
        w *= wl;
      }
    }
  }
  if (inverse) {
    for (auto& x : a) x /= static_cast<double>(n);
  }
}

// Bluestein chirp-z: expresses an arbitrary-length DFT as a circular
// convolution of power-of-two size.
static void fft_bluestein(std::vector<cplx>& a, bool inverse) {
  const std::size_t n = a.size();
  const double sign = inverse ? 1.0 : -1.0;
  std::vector<cplx> chirp(n);
  for (std::size_t k = 0; k < n; ++k) {
    // k^2 mod 2n keeps the phase argument bounded
    std::size_t idx = (k * k) % (2 * n);
    double ang = sign * std::numbers::pi * static_cast<double>(idx) / static_cast<double>(n);
    chirp[k] = cplx(std::cos(ang), std::sin(ang));
  }
  std::size_t m = 1;
  while (m < 2 * n - 1) m <<= 1;
  std::vector<cplx> p(m, cplx(0, 0)), q(m, cplx(0, 0));
  for (std::size_t k = 0; k < n; ++k) p[k] = a[k] * chirp[k];
  q[0] = std::conj(chirp[0]);
  for (std::size_t k = 1; k < n; ++k) q[k] = q[m - k] = std::conj(chirp[k]);
  fft_pow2(p, false);
  fft_pow2(q, false);
  for (std::size_t k = 0; k < m; ++k) p[k] *= q[k];
  fft_pow2(p, true);
  for (std::size_t k = 0; k < n; ++k) a[k] = p[k] * chirp[k];
  if (inverse) {
    for (auto& x : a) x /= static_cast<double>(n);
  }
}

void transform(std::vector<cplx>& a, bool inverse) {
  if (a.size() <= 1) return;
  if (is_pow2(a.size()))
    fft_pow2(a, inverse);
  else
    fft_bluestein(a, inverse);
}

std::vector<cplx> rfft(std::span<const double> x, int n) {
  std::vector<cplx> a(static_cast<std::size_t>(n), cplx(0, 0));
  std::size_t copy = std::min<std::size_t>(x.size(), static_cast<std::size_t>(n));
  for (std::size_t i = 0; i < copy; ++i) a[i] = cplx(x[i], 0.0);
  transform(a, false);
  a.resize(static_cast<std::size_t>(n) / 2 + 1);
  return a;
}

std::vector<double> irfft(std::span<const cplx> spec, int n) {
  if (n % 2 != 0) throw std::invalid_argument("irfft requires even n");
  std::size_t freqs = static_cast<std::size_t>(n) / 2 + 1;
  if (spec.size() != freqs) throw std::invalid_argument("irfft spectrum size mismatch");
  std::vector<cplx> a(static_cast<std::size_t>(n));
  a[0] = cplx(spec[0].real(), 0.0);
  a[n / 2] = cplx(spec[n / 2].real(), 0.0);
  for (std::size_t f = 1; f < freqs - 1; ++f) {
    a[f] = spec[f];
    a[n - f] = std::conj(spec[f]);
  }
  transform(a, true);
  std::vector<double> out(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) out[i] = a[i].real();
  return out;
}

std::vector<double> convolve(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty()) return {};
  std::size_t out_len = a.size() + b.size() - 1;
  std::size_t m = 1;
  while (m < out_len) m <<= 1;
  std::vector<cplx> fa(m, cplx(0, 0)), fb(m, cplx(0, 0));
  for (std::size_t i = 0; i < a.size(); ++i) fa[i] = cplx(a[i], 0.0);
  for (std::size_t i = 0; i < b.size(); ++i) fb[i] = cplx(b[i], 0.0);
  transform(fa, false);
  transform(fb, false);
  for (std::size_t i = 0; i < m; ++i) fa[i] *= fb[i];
  transform(fa, true);
  std::vector<double> out(out_len);
  for (std::size_t i = 0; i < out_len; ++i) out[i] = fa[i].real();
  return out;
}

}  // namespace fft

}  // namespace covbeam
