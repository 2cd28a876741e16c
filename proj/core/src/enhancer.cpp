#include "covbeam/enhancer.hpp"

#include <cmath>
#include <stdexcept>

namespace covbeam {

Mask irm(const Spectrogram& reference, const Spectrogram& mixture, IrmForm form) {
  if (reference.channels != 1 || mixture.channels != 1)
    throw std::invalid_argument("irm: expects single-channel spectrograms");
  if (reference.frames != mixture.frames || reference.freqs != mixture.freqs)
    throw std::invalid_argument("irm: shape mismatch");
  Mask mask = Mask::zeros(mixture.frames, mixture.freqs);
  for (int t = 0; t < mixture.frames; ++t) {
    for (int f = 0; f < mixture.freqs; ++f) {
      double s = std::abs(reference.at(0, t, f));
      double n = std::abs(mixture.at(0, t, f) - reference.at(0, t, f));
      if (form == IrmForm::kPower) {
        s *= s;
        n *= n;
      }
      double den = s + n;
      mask.at(t, f) = den > 0.0 ? std::min(1.0, s / den) : 0.0;
    }
  }
  return mask;
}

EnhancerOutput apply_mask(const Mask& mask, const Spectrogram& mixture) {
  if (mask.frames != mixture.frames || mask.freqs != mixture.freqs)
    throw std::invalid_argument("apply_mask: shape mismatch");
  EnhancerOutput out;
  out.speech_est = mixture;
  out.noise_est = mixture;
  for (int m = 0; m < mixture.channels; ++m) {
    for (int t = 0; t < mixture.frames; ++t) {
      for (int f = 0; f < mixture.freqs; ++f) {
        cplx x = mixture.at(m, t, f);
        cplx s = mask.at(t, f) * x;
        out.speech_est.at(m, t, f) = s;
        out.noise_est.at(m, t, f) = x - s;
      }
    }
  }
  return out;
}

EnhancerOutput oracle_split(const Spectrogram& mixture, const Spectrogram& speech_echoic) {
  if (mixture.channels != speech_echoic.channels || mixture.frames != speech_echoic.frames ||
      mixture.freqs != speech_echoic.freqs)
    throw std::invalid_argument("oracle_split: shape mismatch");
  EnhancerOutput out;
  out.speech_est = speech_echoic;
  out.noise_est = mixture;
  for (std::size_t i = 0; i < mixture.bins.size(); ++i)
    out.noise_est.bins[i] = mixture.bins[i] - speech_echoic.bins[i];
  return out;
}

}  // namespace covbeam
