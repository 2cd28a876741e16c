#pragma once

#include "covbeam/enhancer.hpp"
#include "covbeam/estimator.hpp"

namespace covbeam {

// Analytic multiply-accumulate counts per STFT frame. These are the numbers
// the bench command reports; counts follow the usual network-accounting
// convention of one "FLOP" per multiply-accumulate.

// One covariance-estimator module (conv stack + recurrent core + output heads
// + structuring) across all frequencies.
double estimator_macs_per_frame(const LearnedEstimatorArch& arch, int freqs);

double lstm_mask_macs_per_frame(const LstmMaskArch& arch);

// MVDR weights and filtering per frame (matvec, inner product, division,
// output combine), per frequency: ~4 M^2 + 8 M complex-multiply-adds worth.
double beamformer_macs_per_frame(int mics, int freqs);

}  // namespace covbeam
