#include "covbeam/estimator.hpp"

#include <stdexcept>

namespace covbeam {

const char* to_string(CovVariant v) {
  switch (v) {
    case CovVariant::kRank1: return "rank1";
    case CovVariant::kCholesky: return "cholesky";
    case CovVariant::kArbitrary: return "arbitrary";
  }
  return "?";
}

std::vector<cplx> gather_frame(const Spectrogram& spec, int frame) {
  std::vector<cplx> out(static_cast<std::size_t>(spec.freqs) * spec.channels);
  for (int f = 0; f < spec.freqs; ++f)
    for (int m = 0; m < spec.channels; ++m)
      out[static_cast<std::size_t>(f) * spec.channels + m] = spec.at(m, frame, f);
  return out;
}

MatXc loaded_inverse(const MatXc& phi) {
  const int m = static_cast<int>(phi.rows());
  double eps = 1e-6 * std::abs(phi.trace()) / m;
  if (eps <= 0.0) eps = 1e-12;
  MatXc loaded = phi + eps * MatXc::Identity(m, m);
  return loaded.ldlt().solve(MatXc::Identity(m, m));
}

namespace {

// sum of v v^H over frames, accumulated per frequency into [F * M * M]
void accumulate_outer(std::span<const cplx> frame, int mics, std::vector<cplx>& sums) {
  const int freqs = static_cast<int>(frame.size()) / mics;
  for (int f = 0; f < freqs; ++f) {
    const cplx* v = frame.data() + static_cast<std::size_t>(f) * mics;
    cplx* out = sums.data() + static_cast<std::size_t>(f) * mics * mics;
    for (int i = 0; i < mics; ++i)
      for (int j = 0; j < mics; ++j) out[i * mics + j] += v[i] * std::conj(v[j]);
  }
}

}  // namespace

CovarianceState fixed_estimate(const EnhancerOutput& est) {
  const Spectrogram& s = est.speech_est;
  if (s.frames == 0) throw std::invalid_argument("fixed_estimate: no frames");
  const int mics = s.channels, freqs = s.freqs;
  std::vector<cplx> speech_sum(static_cast<std::size_t>(freqs) * mics * mics, cplx(0, 0));
  std::vector<cplx> noise_sum = speech_sum;
  for (int t = 0; t < s.frames; ++t) {
    accumulate_outer(gather_frame(est.speech_est, t), mics, speech_sum);
    accumulate_outer(gather_frame(est.noise_est, t), mics, noise_sum);
  }
  CovarianceState state = CovarianceState::zeros(mics, freqs);
  for (int f = 0; f < freqs; ++f) {
    MatXcCMap ss(speech_sum.data() + static_cast<std::size_t>(f) * mics * mics, mics, mics);
    MatXcCMap nn(noise_sum.data() + static_cast<std::size_t>(f) * mics * mics, mics, mics);
    state.phi_ss_at(f) = ss / static_cast<double>(s.frames);
    state.phi_nn_inv_at(f) = loaded_inverse(nn / static_cast<double>(s.frames));
  }
  return state;
}

BufferedCovariance::BufferedCovariance(int window, int mics, int freqs)
    : window_(window), mics_(mics), freqs_(freqs) {
  if (window < 1) throw std::invalid_argument("buffer window must be >= 1");
  reset();
}

void BufferedCovariance::reset() {
  speech_frames_.clear();
  noise_frames_.clear();
  speech_sum_.assign(static_cast<std::size_t>(freqs_) * mics_ * mics_, cplx(0, 0));
  noise_sum_ = speech_sum_;
  noise_avg_ = speech_sum_;
  state_ = CovarianceState::zeros(mics_, freqs_);
}

// Sums are recomputed over the window each step (oldest frame first). The
// window is small, and a fresh sum keeps the stream free of the add/subtract
// drift a sliding sum would feed into the ill-conditioned inversions.
const CovarianceState& BufferedCovariance::step(std::span<const cplx> speech_frame,
                                                std::span<const cplx> noise_frame) {
  speech_frames_.emplace_back(speech_frame.begin(), speech_frame.end());
  noise_frames_.emplace_back(noise_frame.begin(), noise_frame.end());
  if (static_cast<int>(speech_frames_.size()) > window_) {
    speech_frames_.pop_front();
    noise_frames_.pop_front();
  }
  std::fill(speech_sum_.begin(), speech_sum_.end(), cplx(0, 0));
  std::fill(noise_sum_.begin(), noise_sum_.end(), cplx(0, 0));
  for (const auto& frame : speech_frames_) accumulate_outer(frame, mics_, speech_sum_);
  for (const auto& frame : noise_frames_) accumulate_outer(frame, mics_, noise_sum_);
  const double count = static_cast<double>(speech_frames_.size());
  for (int f = 0; f < freqs_; ++f) {
    MatXcCMap ss(speech_sum_.data() + static_cast<std::size_t>(f) * mics_ * mics_, mics_, mics_);
    MatXcCMap nn(noise_sum_.data() + static_cast<std::size_t>(f) * mics_ * mics_, mics_, mics_);
    state_.phi_ss_at(f) = ss / count;
    MatXcMap avg(noise_avg_.data() + static_cast<std::size_t>(f) * mics_ * mics_, mics_, mics_);
    avg = nn / count;
    state_.phi_nn_inv_at(f) = loaded_inverse(MatXc(avg));
  }
  return state_;
}

}  // namespace covbeam
