#pragma once

#include <complex>
#include <cstdint>
#include <span>
#include <vector>

namespace covbeam {

using cplx = std::complex<double>;

// Multichannel time-domain signal. All channels have equal length.
struct Waveform {
  std::vector<std::vector<double>> samples;  // [channel][sample]
  int sample_rate_hz = 16000;

  int channels() const { return static_cast<int>(samples.size()); }
  std::size_t length() const { return samples.empty() ? 0 : samples[0].size(); }
  static Waveform zeros(int channels, std::size_t length, int rate = 16000);
};

// Throws std::invalid_argument on ragged channels, non-positive rate, or
// non-finite values.
void validate(const Waveform& w);

enum class WindowKind { kHann };

struct StftConfig {
  int window_len = 512;
  int hop = 256;
  WindowKind window_kind = WindowKind::kHann;

  int freqs() const { return window_len / 2 + 1; }
};

// window_len must be even and positive, hop in (0, window_len]. Also checks
// that the analysis/synthesis pair covers every sample at this hop.
void validate(const StftConfig& c);

// One-sided complex STFT, indexed [channel, frame, frequency].
struct Spectrogram {
  int channels = 0;
  int frames = 0;
  int freqs = 0;
  StftConfig config;
  std::vector<cplx> bins;  // channel-major, then frame, then frequency

  cplx& at(int m, int t, int f) {
    return bins[(static_cast<std::size_t>(m) * frames + t) * freqs + f];
  }
  cplx at(int m, int t, int f) const {
    return bins[(static_cast<std::size_t>(m) * frames + t) * freqs + f];
  }
  static Spectrogram zeros(int channels, int frames, const StftConfig& c);
};

// Analysis: periodic Hann window, textbook DFT scaling (no 1/N on analysis).
// Frame count T = 1 + ceil((len - window_len) / hop); the final partial frame
// is zero-padded. Throws if the waveform is shorter than one window.
Spectrogram stft(const Waveform& w, const StftConfig& c);

// Synthesis: windowed overlap-add normalized per sample by the summed squared
// window, so reconstruction is exact wherever at least one window overlaps.
// Output length is (T-1)*hop + window_len; callers truncate to the span they
// analyzed.
Waveform istft(const Spectrogram& s);

// Periodic window of the configured kind.
std::vector<double> make_window(const StftConfig& c);

// Per-sample sum of squared windows over `frames` hops (the iSTFT
// normalizer). Exposed for COLA checks.
std::vector<double> overlap_profile(const StftConfig& c, int frames);

namespace fft {

// In-place complex FFT of any length (radix-2, Bluestein for the rest).
void transform(std::vector<cplx>& a, bool inverse);

// Real input, one-sided output of n/2+1 bins; x is zero-padded/truncated to n.
std::vector<cplx> rfft(std::span<const double> x, int n);

// Inverse of rfft for an even n; imaginary parts of DC/Nyquist are ignored.
std::vector<double> irfft(std::span<const cplx> spec, int n);

// Full linear convolution via FFT.
std::vector<double> convolve(std::span<const double> a, std::span<const double> b);

}  // namespace fft

}  // namespace covbeam
