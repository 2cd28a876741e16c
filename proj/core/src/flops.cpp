#include "covbeam/flops.hpp"

namespace covbeam {

double estimator_macs_per_frame(const LearnedEstimatorArch& arch, int freqs) {
  double per_freq = 0.0;
  if (arch.f_info) {
    int c_in = 2 * arch.mics;
    for (int l = 0; l < arch.f_layers; ++l) {
      per_freq += 3.0 * c_in * arch.f_channels;
      c_in = arch.f_channels;
    }
  }
  int in = arch.input_dim();
  for (int l = 0; l < arch.layers; ++l) {
    per_freq += 4.0 * arch.hidden * (in + arch.hidden);
    in = arch.hidden;
  }
  per_freq += 2.0 * arch.hidden * arch.head_dim();  // re and im heads
  const double m = arch.mics;
  switch (arch.variant) {
    case CovVariant::kRank1:
      per_freq += 4.0 * m * m;  // complex outer product
      break;
    case CovVariant::kCholesky:
      per_freq += 4.0 * m * m * m;  // L L^H
      break;
    case CovVariant::kArbitrary:
      break;
  }
  return per_freq * freqs;
}

double lstm_mask_macs_per_frame(const LstmMaskArch& arch) {
  double macs = 0.0;
  int in = arch.freqs;
  for (int l = 0; l < arch.layers; ++l) {
    macs += 4.0 * arch.hidden * (in + arch.hidden);
    in = arch.hidden;
  }
  macs += static_cast<double>(arch.hidden) * arch.freqs;
  return macs;
}

double beamformer_macs_per_frame(int mics, int freqs) {
  double m = mics;
  return freqs * (4.0 * m * m + 8.0 * m);
}

}  // namespace covbeam
