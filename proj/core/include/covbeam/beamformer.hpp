#pragma once

#include <Eigen/Dense>
#include <limits>

#include "covbeam/estimator.hpp"
#include "covbeam/signal.hpp"

namespace covbeam {

enum class SteeringMode { kAuto, kFirstColumn, kPrincipal };

// Unit-norm first column of the target covariance. Throws when the column is
// (numerically) zero.
Eigen::VectorXcd steer_first_column(const MatXcCMap& phi_ss);
Eigen::VectorXcd steer_first_column(const MatXc& phi_ss);

struct PrincipalResult {
  Eigen::VectorXcd v;
  bool converged = true;  // false means the first-column fallback was used
};

// Dominant eigenvector by power iteration on the symmetrized matrix
// (A + A^H)/2, at most 100 iterations to 1e-8; phase fixed so component 0 is
// real and nonnegative.
PrincipalResult steer_principal(const MatXc& phi_ss);

struct MvdrResult {
  Eigen::VectorXcd w;
  bool stabilized = false;  // the denominator shift moved w by > 1e-3 relative
};

// w = Phi_nn^{-1} v / (v^H Phi_nn^{-1} v), with 1e-8 * (1 + |den|) added to
// the real part of the denominator before dividing.
MvdrResult mvdr_weights(const MatXcCMap& phi_nn_inv, const Eigen::VectorXcd& v);
MvdrResult mvdr_weights(const MatXc& phi_nn_inv, const Eigen::VectorXcd& v);

// y[t, f] = sum_m conj(w_m[t, f]) x_m[t, f]. weights: [frame][freq * mics].
Spectrogram apply_beamformer(const std::vector<std::vector<cplx>>& weights,
                             const Spectrogram& mixture);

struct BeamformerDiagnostics {
  long total_frames = 0;
  long stabilized_bins = 0;
  long fallback_bins = 0;  // principal-steering non-convergence
  long silent_bins = 0;    // zero target covariance, weights left at zero
  double min_denominator = std::numeric_limits<double>::infinity();
  double max_condition_proxy = 0.0;  // max over frames of Frobenius(phi_nn_inv)

  void merge(const BeamformerDiagnostics& other) {
    total_frames += other.total_frames;
    stabilized_bins += other.stabilized_bins;
    fallback_bins += other.fallback_bins;
    silent_bins += other.silent_bins;
    min_denominator = std::min(min_denominator, other.min_denominator);
    max_condition_proxy = std::max(max_condition_proxy, other.max_condition_proxy);
  }
};

// Weights for every frequency of one frame. mode kAuto is resolved by the
// caller; here it means kFirstColumn.
std::vector<cplx> beamform_frame(const CovarianceState& cov, SteeringMode mode,
                                 BeamformerDiagnostics* diag = nullptr);

}  // namespace covbeam
