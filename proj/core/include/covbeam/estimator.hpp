#pragma once

#include <Eigen/Dense>

#include <deque>
#include <string>

#include "covbeam/complexops.hpp"
#include "covbeam/enhancer.hpp"
#include "covbeam/nn.hpp"

namespace covbeam {

using MatXc = Eigen::Matrix<cplx, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatXcMap = Eigen::Map<MatXc>;
using MatXcCMap = Eigen::Map<const MatXc>;

// Per-frequency speech covariance and inverse noise covariance, each an M x M
// flattened row-major block per frequency. Rank-1 and Cholesky estimators
// produce Hermitian PSD blocks; the Arbitrary estimator's structure is
// whatever the network emits.
struct CovarianceState {
  int mics = 0, freqs = 0;
  std::vector<cplx> phi_ss;
  std::vector<cplx> phi_nn_inv;

  static CovarianceState zeros(int mics, int freqs) {
    CovarianceState s;
    s.mics = mics;
    s.freqs = freqs;
    s.phi_ss.assign(static_cast<std::size_t>(freqs) * mics * mics, cplx(0, 0));
    s.phi_nn_inv.assign(static_cast<std::size_t>(freqs) * mics * mics, cplx(0, 0));
    return s;
  }
  MatXcMap phi_ss_at(int f) {
    return MatXcMap(phi_ss.data() + static_cast<std::size_t>(f) * mics * mics, mics, mics);
  }
  MatXcCMap phi_ss_at(int f) const {
    return MatXcCMap(phi_ss.data() + static_cast<std::size_t>(f) * mics * mics, mics, mics);
  }
  MatXcMap phi_nn_inv_at(int f) {
    return MatXcMap(phi_nn_inv.data() + static_cast<std::size_t>(f) * mics * mics, mics, mics);
  }
  MatXcCMap phi_nn_inv_at(int f) const {
    return MatXcCMap(phi_nn_inv.data() + static_cast<std::size_t>(f) * mics * mics, mics, mics);
  }
};

// One spectrogram frame gathered as [F, M].
std::vector<cplx> gather_frame(const Spectrogram& spec, int frame);

// Hermitian inverse with diagonal loading eps = 1e-6 * trace / M.
MatXc loaded_inverse(const MatXc& phi);

// Acausal whole-scene average: Phi = (1/T) sum_t v[t] v[t]^H per frequency
// for both enhancer outputs; the noise side is inverted with loading.
CovarianceState fixed_estimate(const EnhancerOutput& est);

// Causal sliding-window average over the last `window` frames with the same
// loading and inversion as the fixed estimate.
class BufferedCovariance {
 public:
  BufferedCovariance(int window, int mics, int freqs);
  void reset();
  // feeds frame t and returns the state at t
  const CovarianceState& step(std::span<const cplx> speech_frame,
                              std::span<const cplx> noise_frame);
  int window() const { return window_; }

  // pre-inversion window average of the noise outer products
  MatXcCMap noise_average_at(int f) const {
    return MatXcCMap(noise_avg_.data() + static_cast<std::size_t>(f) * mics_ * mics_, mics_,
                     mics_);
  }

 private:
  int window_, mics_, freqs_;
  std::deque<std::vector<cplx>> speech_frames_, noise_frames_;
  std::vector<cplx> speech_sum_, noise_sum_;
  std::vector<cplx> noise_avg_;
  CovarianceState state_;
};

// ---- learned estimators ----

enum class CovVariant { kRank1, kCholesky, kArbitrary };

const char* to_string(CovVariant v);

struct LearnedEstimatorArch {
  int mics = 6;
  int hidden = 128;  // D
  int layers = 2;
  CovVariant variant = CovVariant::kArbitrary;
  bool f_info = true;
  int f_channels = 64;
  int f_layers = 3;
  double rank1_init_eps = 1e-3;

  int input_dim() const { return 2 * mics + (f_info ? f_channels : 0); }
  int head_dim() const { return variant == CovVariant::kRank1 ? mics : mics * mics; }
};

// Registers one side's parameters (frequency-sharing conv stack, recurrent
// core, output heads) under `prefix`. Output heads start near zero so an
// untrained pipeline begins close to a reference-mic passthrough.
template <typename T>
void init_estimator_params(const LearnedEstimatorArch& arch, const std::string& prefix,
                           ad::ParamStore<T>& params, Rng& rng) {
  if (arch.f_info) {
    int c_in = 2 * arch.mics;
    for (int l = 0; l < arch.f_layers; ++l) {
      ad::add_conv(params, prefix + "fpsi" + std::to_string(l), c_in, arch.f_channels, rng);
      c_in = arch.f_channels;
    }
  }
  int in = arch.input_dim();
  for (int l = 0; l < arch.layers; ++l) {
    ad::add_lstm_layer(params, prefix + "lstm" + std::to_string(l), in, arch.hidden, rng);
    in = arch.hidden;
  }
  ad::add_linear(params, prefix + "head_re", arch.hidden, arch.head_dim(), rng, 0.01);
  ad::add_linear(params, prefix + "head_im", arch.hidden, arch.head_dim(), rng, 0.01);
}

template <typename T>
struct EstimatorSideState {
  std::vector<ad::LstmState<T>> lstm;
  ad::CTensor<T> accum;  // Rank-1 accumulator [F, M*M]

  static EstimatorSideState zeros(const LearnedEstimatorArch& arch, int freqs) {
    EstimatorSideState s;
    for (int l = 0; l < arch.layers; ++l)
      s.lstm.push_back(ad::LstmState<T>::zeros(freqs, arch.hidden));
    if (arch.variant == CovVariant::kRank1) {
      s.accum = ad::CTensor<T>::zeros(freqs, arch.mics * arch.mics);
      for (int f = 0; f < freqs; ++f)
        for (int i = 0; i < arch.mics; ++i)
          s.accum.re.values()[static_cast<std::size_t>(f) * arch.mics * arch.mics +
                              i * arch.mics + i] = static_cast<T>(arch.rank1_init_eps);
    }
    return s;
  }
};

// Frequency-information features: stacked re/im through the conv stack, tanh
// between layers, nothing after the last.
template <typename T>
ad::Tensor<T> f_psi(const LearnedEstimatorArch& arch, const ad::ParamStore<T>& params,
                    const std::string& prefix, const ad::Tensor<T>& stacked) {
  ad::Tensor<T> x = stacked;
  for (int l = 0; l < arch.f_layers; ++l) {
    const std::string name = prefix + "fpsi" + std::to_string(l);
    x = ad::conv1d_freq(x, params.at(name + ".w"), params.at(name + ".b"));
    if (l + 1 < arch.f_layers) x = ad::tanh_(x);
  }
  return x;
}

// Recurrent core and output heads for one frame: input [F, input_dim], state
// carried per frequency, raw head outputs [F, 2 * head_dim] as (re, im).
template <typename T>
ad::CTensor<T> g_theta_step(const LearnedEstimatorArch& arch, const ad::ParamStore<T>& params,
                            const std::string& prefix, const ad::Tensor<T>& input,
                            std::vector<ad::LstmState<T>>& lstm) {
  ad::Tensor<T> x = input;
  for (int l = 0; l < arch.layers; ++l) {
    const std::string name = prefix + "lstm" + std::to_string(l);
    lstm[l] = ad::lstm_cell(x, lstm[l], params.at(name + ".w"), params.at(name + ".b"));
    x = lstm[l].h;
  }
  return {ad::linear(x, params.at(prefix + "head_re.w"), params.at(prefix + "head_re.b")),
          ad::linear(x, params.at(prefix + "head_im.w"), params.at(prefix + "head_im.b"))};
}

namespace detail {

inline std::vector<int> diag_indices(int m) {
  std::vector<int> idx(m);
  for (int i = 0; i < m; ++i) idx[i] = i * m + i;
  return idx;
}

template <typename T>
ad::Tensor<T> strict_lower_mask(int m) {
  ad::Tensor<T> mask = ad::Tensor<T>::make(1, m * m);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j) mask.values()[i * m + j] = i > j ? T(1) : T(0);
  return mask;
}

template <typename T>
ad::Tensor<T> diag_scatter_matrix(int m) {
  ad::Tensor<T> s = ad::Tensor<T>::make(m, m * m);
  for (int i = 0; i < m; ++i) s.values()[static_cast<std::size_t>(i) * m * m + i * m + i] = T(1);
  return s;
}

}  // namespace detail

// Eq.-style structuring of raw head outputs into covariance blocks.

// Rank-1 symmetric update: accum <- accum + phi phi^H.
template <typename T>
ad::CTensor<T> rank1_update_graph(const ad::CTensor<T>& accum, const ad::CTensor<T>& phi) {
  return ad::c_add(accum, ad::c_outer(phi, phi));
}

// Zero above the diagonal, modulus on the diagonal, then L L^H.
template <typename T>
ad::CTensor<T> cholesky_structure_graph(const ad::CTensor<T>& raw, int m) {
  ad::Tensor<T> strict = detail::strict_lower_mask<T>(m);
  ad::Tensor<T> scatter = detail::diag_scatter_matrix<T>(m);
  ad::Tensor<T> dre = ad::gather_cols(raw.re, detail::diag_indices(m));
  ad::Tensor<T> dim = ad::gather_cols(raw.im, detail::diag_indices(m));
  ad::Tensor<T> mag =
      ad::sqrt_(ad::add_scalar(ad::add(ad::mul(dre, dre), ad::mul(dim, dim)), T(1e-30)));
  ad::CTensor<T> factor{ad::add(ad::mul_rowvec(raw.re, strict), ad::matmul(mag, scatter)),
                        ad::mul_rowvec(raw.im, strict)};
  return ad::c_row_matmul(factor, ad::c_row_herm(factor, m), m);
}

// One estimator side for one frame: enhancer-estimate frame in, covariance
// block out (speech side emits Phi_ss, noise side Phi_nn^{-1}).
template <typename T>
ad::CTensor<T> estimator_side_step(const LearnedEstimatorArch& arch,
                                   const ad::ParamStore<T>& params, const std::string& prefix,
                                   const ad::CTensor<T>& frame, EstimatorSideState<T>& state) {
  ad::Tensor<T> stacked = ad::concat_cols(frame.re, frame.im);
  ad::Tensor<T> input =
      arch.f_info ? ad::concat_cols(stacked, f_psi(arch, params, prefix, stacked)) : stacked;
  ad::CTensor<T> raw = g_theta_step(arch, params, prefix, input, state.lstm);
  switch (arch.variant) {
    case CovVariant::kRank1:
      state.accum = rank1_update_graph(state.accum, raw);
      return state.accum;
    case CovVariant::kCholesky:
      return cholesky_structure_graph(raw, arch.mics);
    case CovVariant::kArbitrary:
      return raw;
  }
  throw std::logic_error("unreachable");
}

// ---- single-matrix reference forms (Eigen, non-graph) ----

inline MatXc rank1_update(const MatXc& prev_inv, const Eigen::VectorXcd& phi) {
  return phi * phi.adjoint() + prev_inv;
}

// Returns the structured lower-triangular factor.
inline MatXc cholesky_factor(const MatXc& raw) {
  MatXc factor = MatXc::Zero(raw.rows(), raw.cols());
  for (int i = 0; i < raw.rows(); ++i) {
    for (int j = 0; j < i; ++j) factor(i, j) = raw(i, j);
    factor(i, i) = std::abs(raw(i, i));
  }
  return factor;
}

inline MatXc cholesky_structure(const MatXc& raw) {
  MatXc factor = cholesky_factor(raw);
  return factor * factor.adjoint();
}

inline MatXc arbitrary_structure(const MatXc& raw) { return raw; }

// ---- whole-scene learned covariance stream (inference) ----

template <typename T>
class LearnedCovariance {
 public:
  LearnedCovariance(const LearnedEstimatorArch& arch, const ad::ParamStore<T>* params, int freqs)
      : arch_(arch), params_(params), freqs_(freqs) {
    reset();
  }

  void reset() {
    speech_ = EstimatorSideState<T>::zeros(arch_, freqs_);
    noise_ = EstimatorSideState<T>::zeros(arch_, freqs_);
  }

  // Consumes one enhancer-output frame and fills `out`.
  void step(std::span<const cplx> speech_frame, std::span<const cplx> noise_frame,
            CovarianceState& out) {
    ad::NoGradGuard guard;
    ad::CTensor<T> s_in = to_ctensor(speech_frame);
    ad::CTensor<T> n_in = to_ctensor(noise_frame);
    ad::CTensor<T> phi_ss = estimator_side_step(arch_, *params_, "est.speech.", s_in, speech_);
    ad::CTensor<T> phi_nn_inv = estimator_side_step(arch_, *params_, "est.noise.", n_in, noise_);
    const int mm = arch_.mics * arch_.mics;
    for (int f = 0; f < freqs_; ++f) {
      for (int k = 0; k < mm; ++k) {
        std::size_t idx = static_cast<std::size_t>(f) * mm + k;
        out.phi_ss[idx] = cplx(phi_ss.re.values()[idx], phi_ss.im.values()[idx]);
        out.phi_nn_inv[idx] = cplx(phi_nn_inv.re.values()[idx], phi_nn_inv.im.values()[idx]);
      }
    }
  }

 private:
  ad::CTensor<T> to_ctensor(std::span<const cplx> frame) const {
    ad::CTensor<T> t = ad::CTensor<T>::zeros(freqs_, arch_.mics);
    for (std::size_t i = 0; i < frame.size(); ++i) {
      t.re.values()[i] = static_cast<T>(frame[i].real());
      t.im.values()[i] = static_cast<T>(frame[i].imag());
    }
    return t;
  }

  LearnedEstimatorArch arch_;
  const ad::ParamStore<T>* params_;
  int freqs_;
  EstimatorSideState<T> speech_, noise_;
};

}  // namespace covbeam
