#pragma once

#include "covbeam/complexops.hpp"
#include "covbeam/signal.hpp"

namespace covbeam::ad {

// Differentiable synthesis: one-sided spectra per frame -> time signal
// [1, (T-1)*hop + window]. Forward runs the same windowed overlap-add with
// per-sample normalization as covbeam::istft. The op is linear, so backward
// is its adjoint: per frame, window and normalize the incoming gradient
// segment and take its real FFT; DC/Nyquist imaginary parts receive zero.
template <typename T>
Tensor<T> istft_graph(const std::vector<CTensor<T>>& frames, const StftConfig& config) {
  if (frames.empty()) throw std::invalid_argument("istft_graph: no frames");
  const int freqs = config.freqs();
  const int frame_count = static_cast<int>(frames.size());
  for (const auto& fr : frames)
    if (fr.rows() != freqs || fr.cols() != 1)
      throw std::invalid_argument("istft_graph: frames must be [freqs, 1]");

  const int n = config.window_len;
  const std::size_t out_len = static_cast<std::size_t>(frame_count - 1) * config.hop + n;
  std::vector<double> window = make_window(config);
  std::vector<double> denom = overlap_profile(config, frame_count);

  Tensor<T> out = Tensor<T>::make(1, static_cast<int>(out_len));
  {
    std::vector<cplx> spec(freqs);
    std::vector<double> acc(out_len, 0.0);
    for (int t = 0; t < frame_count; ++t) {
      for (int f = 0; f < freqs; ++f)
        spec[f] = cplx(static_cast<double>(frames[t].re.values()[f]),
                       static_cast<double>(frames[t].im.values()[f]));
      std::vector<double> frame = fft::irfft(spec, n);
      std::size_t off = static_cast<std::size_t>(t) * config.hop;
      for (int k = 0; k < n; ++k) acc[off + k] += frame[k] * window[k];
    }
    for (std::size_t i = 0; i < out_len; ++i)
      out.values()[i] = static_cast<T>(denom[i] > 1e-12 ? acc[i] / denom[i] : 0.0);
  }

  bool need = false;
  if (g_grad_enabled)
    for (const auto& fr : frames)
      if (fr.re.requires_grad() || fr.im.requires_grad()) need = true;
  if (!need) return out;

  out.node()->requires_grad = true;
  for (const auto& fr : frames) {
    out.node()->parents.push_back(fr.re.node());
    out.node()->parents.push_back(fr.im.node());
  }
  Node<T>* on = out.node().get();
  StftConfig cfg = config;
  out.node()->backprop = [on, cfg, window, denom, out_len, freqs, n]() {
    const int hop = cfg.hop;
    std::vector<double> seg(n);
    std::size_t frame_total = on->parents.size() / 2;
    for (std::size_t t = 0; t < frame_total; ++t) {
      std::size_t off = t * hop;
      for (int k = 0; k < n; ++k) {
        double g = static_cast<double>(on->grad[off + k]);
        seg[k] = denom[off + k] > 1e-12 ? g * window[k] / denom[off + k] : 0.0;
      }
      auto spec_grad = fft::rfft(seg, n);
      Node<T>* re_node = on->parents[2 * t].get();
      Node<T>* im_node = on->parents[2 * t + 1].get();
      const double inv_n = 1.0 / n;
      if (re_node->requires_grad) {
        re_node->ensure_grad();
        for (int f = 0; f < freqs; ++f) {
          double c = (f == 0 || f == n / 2) ? 1.0 : 2.0;
          re_node->grad[f] += static_cast<T>(c * inv_n * spec_grad[f].real());
        }
      }
      if (im_node->requires_grad) {
        im_node->ensure_grad();
        for (int f = 1; f < freqs - 1; ++f)
          im_node->grad[f] += static_cast<T>(2.0 * inv_n * spec_grad[f].imag());
      }
    }
  };
  return out;
}

}  // namespace covbeam::ad
