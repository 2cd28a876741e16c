#pragma once

#include <string>

#include "covbeam/nn.hpp"
#include "covbeam/scene.hpp"
#include "covbeam/signal.hpp"

namespace covbeam {

// Single-channel time-frequency mask in [0, 1], estimated at the reference
// mic and shared across channels.
struct Mask {
  int frames = 0, freqs = 0;
  std::vector<double> values;  // [frame, freq]

  double& at(int t, int f) { return values[static_cast<std::size_t>(t) * freqs + f]; }
  double at(int t, int f) const { return values[static_cast<std::size_t>(t) * freqs + f]; }
  static Mask zeros(int frames, int freqs) {
    return {frames, freqs, std::vector<double>(static_cast<std::size_t>(frames) * freqs, 0.0)};
  }
};

struct EnhancerOutput {
  Spectrogram speech_est;
  Spectrogram noise_est;
};

enum class IrmForm { kMagnitude, kPower };

// Ideal ratio mask |S| / (|S| + |X-S|) (or its power form). Bins where both
// terms vanish get mask 0.
Mask irm(const Spectrogram& reference, const Spectrogram& mixture,
         IrmForm form = IrmForm::kMagnitude);

// speech_est[m] = mask .* mixture[m]; noise_est[m] = mixture[m] - speech_est[m],
// which keeps speech_est + noise_est == mixture bit for bit.
EnhancerOutput apply_mask(const Mask& mask, const Spectrogram& mixture);

// speech_est = S, noise_est = X - S per bin.
EnhancerOutput oracle_split(const Spectrogram& mixture, const Spectrogram& speech_echoic);

// Causal recurrent mask estimator: log(1 + |X|) features over all bins per
// frame, a stack of unidirectional LSTM layers, sigmoid output per bin.
struct LstmMaskArch {
  int freqs = 257;
  int hidden = 256;
  int layers = 3;
};

template <typename T>
void init_lstm_mask_params(const LstmMaskArch& arch, const std::string& prefix,
                           ad::ParamStore<T>& params, Rng& rng) {
  int in = arch.freqs;
  for (int l = 0; l < arch.layers; ++l) {
    ad::add_lstm_layer(params, prefix + "lstm" + std::to_string(l), in, arch.hidden, rng);
    in = arch.hidden;
  }
  ad::add_linear(params, prefix + "out", arch.hidden, arch.freqs, rng);
}

template <typename T>
struct LstmMaskState {
  std::vector<ad::LstmState<T>> layers;
  static LstmMaskState zeros(const LstmMaskArch& arch) {
    LstmMaskState s;
    for (int l = 0; l < arch.layers; ++l)
      s.layers.push_back(ad::LstmState<T>::zeros(1, arch.hidden));
    return s;
  }
};

// One frame through the mask network; differentiable when params require
// grad. features: [1, F].
template <typename T>
ad::Tensor<T> lstm_mask_step(const LstmMaskArch& arch, const ad::ParamStore<T>& params,
                             const std::string& prefix, const ad::Tensor<T>& features,
                             LstmMaskState<T>& state) {
  ad::Tensor<T> x = features;
  for (int l = 0; l < arch.layers; ++l) {
    const std::string name = prefix + "lstm" + std::to_string(l);
    state.layers[l] = ad::lstm_cell(x, state.layers[l], params.at(name + ".w"), params.at(name + ".b"));
    x = state.layers[l].h;
  }
  return ad::sigmoid(ad::linear(x, params.at(prefix + "out.w"), params.at(prefix + "out.b")));
}

// Whole-utterance inference over the reference-mic spectrogram.
template <typename T>
Mask lstm_mask(const Spectrogram& mixture_ref, const LstmMaskArch& arch,
               const ad::ParamStore<T>& params, const std::string& prefix = "enh.") {
  if (mixture_ref.channels != 1) throw std::invalid_argument("lstm_mask: expects one channel");
  if (mixture_ref.freqs != arch.freqs)
    throw std::invalid_argument("lstm_mask: frequency count does not match the architecture");
  ad::NoGradGuard guard;
  Mask mask = Mask::zeros(mixture_ref.frames, mixture_ref.freqs);
  LstmMaskState<T> state = LstmMaskState<T>::zeros(arch);
  ad::Tensor<T> feat = ad::Tensor<T>::make(1, arch.freqs);
  for (int t = 0; t < mixture_ref.frames; ++t) {
    for (int f = 0; f < arch.freqs; ++f)
      feat.values()[f] = static_cast<T>(std::log1p(std::abs(mixture_ref.at(0, t, f))));
    ad::Tensor<T> m = lstm_mask_step(arch, params, prefix, feat, state);
    for (int f = 0; f < arch.freqs; ++f) mask.at(t, f) = static_cast<double>(m.values()[f]);
  }
  return mask;
}

}  // namespace covbeam
