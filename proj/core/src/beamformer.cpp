#include "covbeam/beamformer.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace covbeam {

namespace {

Eigen::VectorXcd first_column_impl(const Eigen::Ref<const MatXc>& phi_ss) {
  Eigen::VectorXcd col = phi_ss.col(0);
  double norm = col.norm();
  if (!(norm > 1e-300)) throw std::invalid_argument("steering: zero first column");
  return col / norm;
}

// Pure Eq.-4 division while the denominator is healthy; once |den| falls
// under 1e-8 of its natural scale |num||v| (near-singular estimates, e.g.
// from the unconstrained variant), a real shift of 1e-8 * (1 + |den|) keeps
// the weights finite and the frame is flagged.
MvdrResult mvdr_impl(const Eigen::Ref<const MatXc>& phi_nn_inv, const Eigen::VectorXcd& v) {
  Eigen::VectorXcd num = phi_nn_inv * v;
  cplx den = v.dot(num);  // Eigen's dot conjugates the left argument
  double scale = num.norm() * v.norm();

  MvdrResult out;
  if (std::abs(den) > 1e-8 * scale && std::abs(den) > 0.0) {
    out.w = num / den;
    out.stabilized = false;
    return out;
  }
  double delta = 1e-8 * (1.0 + std::abs(den));
  cplx den_shifted = den + cplx(delta, 0.0);
  out.w = num / den_shifted;
  if (std::abs(den) > 0.0) {
    Eigen::VectorXcd raw = num / den;
    double rel = (out.w - raw).norm() / std::max(raw.norm(), 1e-300);
    out.stabilized = rel > 1e-3;
  } else {
    out.stabilized = true;
  }
  return out;
}

}  // namespace

Eigen::VectorXcd steer_first_column(const MatXcCMap& phi_ss) { return first_column_impl(phi_ss); }
Eigen::VectorXcd steer_first_column(const MatXc& phi_ss) { return first_column_impl(phi_ss); }

PrincipalResult steer_principal(const MatXc& phi_ss) {
  const int m = static_cast<int>(phi_ss.rows());
  MatXc sym = 0.5 * (phi_ss + phi_ss.adjoint().eval());

  Eigen::VectorXcd v = Eigen::VectorXcd::Zero(m);
  v(0) = 1.0;
  // deterministic, slightly off-axis start
  for (int i = 1; i < m; ++i) v(i) = cplx(0.1 / (i + 1), 0.05 / (i + 1));
  v.normalize();

  PrincipalResult out;
  bool converged = false;
  for (int it = 0; it < 100; ++it) {
    Eigen::VectorXcd next = sym * v;
    double norm = next.norm();
    if (!(norm > 1e-300)) break;
    next /= norm;
    // eigenvector defined up to phase; compare via overlap
    if (1.0 - std::abs(v.dot(next)) < 1e-8) {
      v = next;
      converged = true;
      break;
    }
    v = next;
  }
  if (!converged) {
    out.converged = false;
    out.v = first_column_impl(phi_ss);
  } else {
    out.v = v;
  }
  // rotate so component 0 is real >= 0
  cplx c0 = out.v(0);
  if (std::abs(c0) > 1e-300) out.v *= std::conj(c0) / std::abs(c0);
  return out;
}

MvdrResult mvdr_weights(const MatXcCMap& phi_nn_inv, const Eigen::VectorXcd& v) {
  return mvdr_impl(phi_nn_inv, v);
}
MvdrResult mvdr_weights(const MatXc& phi_nn_inv, const Eigen::VectorXcd& v) {
  return mvdr_impl(phi_nn_inv, v);
}

Spectrogram apply_beamformer(const std::vector<std::vector<cplx>>& weights,
                             const Spectrogram& mixture) {
  if (static_cast<int>(weights.size()) != mixture.frames)
    throw std::invalid_argument("apply_beamformer: frame count mismatch");
  Spectrogram out = Spectrogram::zeros(1, mixture.frames, mixture.config);
  const int mics = mixture.channels;
  for (int t = 0; t < mixture.frames; ++t) {
    if (static_cast<int>(weights[t].size()) != mixture.freqs * mics)
      throw std::invalid_argument("apply_beamformer: weight length mismatch");
    for (int f = 0; f < mixture.freqs; ++f) {
      cplx y(0, 0);
      for (int m = 0; m < mics; ++m)
        y += std::conj(weights[t][static_cast<std::size_t>(f) * mics + m]) * mixture.at(m, t, f);
      out.at(0, t, f) = y;
    }
  }
  return out;
}

// Weights here carry the reference-mic convention: the raw MVDR weights have
// unit gain toward the unit-norm steering vector, which tilts each frequency
// by ||h|| / |h_0|; scaling by conj(v_0) restores unit gain on the reference
// channel so the output lines up with the mic-0 signal.
std::vector<cplx> beamform_frame(const CovarianceState& cov, SteeringMode mode,
                                 BeamformerDiagnostics* diag) {
  const int mics = cov.mics;
  std::vector<cplx> w(static_cast<std::size_t>(cov.freqs) * mics, cplx(0, 0));
  BeamformerDiagnostics local;
  local.total_frames = 1;
  local.min_denominator = std::numeric_limits<double>::infinity();
  for (int f = 0; f < cov.freqs; ++f) {
    // no target evidence in this bin (e.g. leading silence with an untrained
    // estimator): keep the weights at zero
    if (!(cov.phi_ss_at(f).norm() > 1e-30)) {
      local.silent_bins += 1;
      continue;
    }
    Eigen::VectorXcd v;
    if (mode == SteeringMode::kPrincipal) {
      PrincipalResult p = steer_principal(cov.phi_ss_at(f));
      if (!p.converged) local.fallback_bins += 1;
      v = p.v;
    } else {
      try {
        v = steer_first_column(cov.phi_ss_at(f));
      } catch (const std::invalid_argument&) {
        local.silent_bins += 1;
        continue;
      }
    }
    MvdrResult r = mvdr_weights(cov.phi_nn_inv_at(f), v);
    if (r.stabilized) local.stabilized_bins += 1;
    Eigen::VectorXcd num = cov.phi_nn_inv_at(f) * v;
    local.min_denominator = std::min(local.min_denominator, std::abs(v.dot(num)));
    local.max_condition_proxy =
        std::max(local.max_condition_proxy, cov.phi_nn_inv_at(f).norm());
    cplx ref_gain = std::conj(v(0));
    for (int m = 0; m < mics; ++m)
      w[static_cast<std::size_t>(f) * mics + m] = r.w(m) * ref_gain;
  }
  if (diag) diag->merge(local);
  return w;
}

}  // namespace covbeam
