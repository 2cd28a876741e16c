#include <Eigen/Eigenvalues>

#include <cmath>

#include "covbeam/estimator.hpp"
#include "doctest.h"
#include "testutil.hpp"

using namespace covbeam;
using namespace covbeam::ad;
using covbeam::testutil::check_gradients;

namespace {

Spectrogram random_spec(int channels, int frames, int window, uint64_t seed) {
  StftConfig c{window, window / 2};
  Spectrogram s = Spectrogram::zeros(channels, frames, c);
  Rng rng(seed);
  for (auto& v : s.bins) v = cplx(rng.normal(), rng.normal());
  return s;
}

MatXc random_matrix(int m, Rng& rng) {
  MatXc a(m, m);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j) a(i, j) = cplx(rng.normal(), rng.normal());
  return a;
}

CTensor<double> frame_tensor(const std::vector<cplx>& frame, int freqs, int mics) {
  return CTensor<double>::from_complex(frame.data(), freqs, mics);
}

// Independent reference for the recurrent core: scalar loops per frequency,
// no shared code with the tensor implementation.
struct RefSide {
  int mics, hidden, layers, head_dim;
  const ParamStore<double>* params;
  std::string prefix;
  // [layer][freq][unit]
  std::vector<std::vector<std::vector<double>>> h, c;

  void reset(int freqs) {
    h.assign(layers, std::vector<std::vector<double>>(freqs, std::vector<double>(hidden, 0.0)));
    c = h;
  }

  static double sig(double x) { return 1.0 / (1.0 + std::exp(-x)); }

  // input: [freqs][in_dim]; returns per-frequency (re, im) head outputs
  std::vector<std::vector<cplx>> step(const std::vector<std::vector<double>>& input) {
    int freqs = static_cast<int>(input.size());
    std::vector<std::vector<double>> x = input;
    for (int l = 0; l < layers; ++l) {
      const auto& w = params->at(prefix + "lstm" + std::to_string(l) + ".w");
      const auto& b = params->at(prefix + "lstm" + std::to_string(l) + ".b");
      int in_dim = w.rows() - hidden;
      std::vector<std::vector<double>> next(freqs, std::vector<double>(hidden));
      for (int fq = 0; fq < freqs; ++fq) {
        std::vector<double> gates(4 * hidden, 0.0);
        for (int g = 0; g < 4 * hidden; ++g) {
          double acc = b.values()[g];
          for (int i = 0; i < in_dim; ++i) acc += x[fq][i] * w.values()[i * 4 * hidden + g];
          for (int i = 0; i < hidden; ++i)
            acc += h[l][fq][i] * w.values()[(in_dim + i) * 4 * hidden + g];
          gates[g] = acc;
        }
        for (int u = 0; u < hidden; ++u) {
          double gi = sig(gates[u]);
          double gf = sig(gates[hidden + u]);
          double gg = std::tanh(gates[2 * hidden + u]);
          double go = sig(gates[3 * hidden + u]);
          c[l][fq][u] = gf * c[l][fq][u] + gi * gg;
          next[fq][u] = go * std::tanh(c[l][fq][u]);
        }
        h[l][fq] = next[fq];
      }
      x = next;
    }
    const auto& wr = params->at(prefix + "head_re.w");
    const auto& br = params->at(prefix + "head_re.b");
    const auto& wi = params->at(prefix + "head_im.w");
    const auto& bi = params->at(prefix + "head_im.b");
    std::vector<std::vector<cplx>> out(freqs, std::vector<cplx>(head_dim));
    for (int fq = 0; fq < freqs; ++fq) {
      for (int k = 0; k < head_dim; ++k) {
        double re = br.values()[k], im = bi.values()[k];
        for (int u = 0; u < hidden; ++u) {
          re += x[fq][u] * wr.values()[u * head_dim + k];
          im += x[fq][u] * wi.values()[u * head_dim + k];
        }
        out[fq][k] = cplx(re, im);
      }
    }
    return out;
  }
};

}  // namespace

TEST_CASE("fixed estimate of a constant rank-1 noise field") {
  int mics = 3, frames = 7, window = 6;
  StftConfig c{window, window / 2};
  EnhancerOutput est;
  est.speech_est = Spectrogram::zeros(mics, frames, c);
  est.noise_est = Spectrogram::zeros(mics, frames, c);
  for (int t = 0; t < frames; ++t)
    for (int f = 0; f < est.noise_est.freqs; ++f) {
      est.noise_est.at(0, t, f) = 1.0;             // e1 every frame
      est.speech_est.at(2, t, f) = cplx(0.0, 2.0);  // e3-ish speech
    }
  CovarianceState state = fixed_estimate(est);
  for (int f = 0; f < state.freqs; ++f) {
    MatXc expected_nn = MatXc::Zero(mics, mics);
    expected_nn(0, 0) = 1.0;
    MatXc inv_ref = loaded_inverse(expected_nn);
    CHECK((state.phi_nn_inv_at(f) - inv_ref).norm() <= 1e-10);
    CHECK(std::abs(state.phi_ss_at(f)(2, 2) - cplx(4.0, 0.0)) <= 1e-12);
  }
}

TEST_CASE("fixed estimate converges to sigma^2 I on white channels") {
  int mics = 3, frames = 1000, window = 2;  // one frequency pair keeps it fast
  StftConfig c{window, 1};
  EnhancerOutput est;
  est.speech_est = Spectrogram::zeros(mics, frames, c);
  est.noise_est = Spectrogram::zeros(mics, frames, c);
  Rng rng(4);
  double sigma2 = 2.0;  // E|v|^2 with unit-variance re/im parts
  for (auto& v : est.noise_est.bins) v = cplx(rng.normal(), rng.normal());
  for (auto& v : est.speech_est.bins) v = cplx(rng.normal(), rng.normal());
  CovarianceState state = fixed_estimate(est);
  MatXc eye = MatXc::Identity(mics, mics);
  for (int f = 0; f < state.freqs; ++f) {
    CHECK((state.phi_nn_inv_at(f) - eye / sigma2).norm() <= 0.1 * (eye / sigma2).norm());
  }
}

TEST_CASE("identical speech and noise estimates stay consistent") {
  Spectrogram s = random_spec(2, 12, 8, 5);
  EnhancerOutput est{s, s};
  CovarianceState state = fixed_estimate(est);
  for (int f = 0; f < state.freqs; ++f) {
    MatXc inv_of_ss = loaded_inverse(MatXc(state.phi_ss_at(f)));
    CHECK((MatXc(state.phi_nn_inv_at(f)) - inv_of_ss).norm() <= 1e-10 * inv_of_ss.norm());
  }
}

TEST_CASE("buffered estimator matches brute-force window averaging") {
  int mics = 4, frames = 60, window = 6;
  Spectrogram speech = random_spec(mics, frames, window, 6);
  Spectrogram noise = random_spec(mics, frames, window, 7);
  const int freqs = speech.freqs;
  for (int b : {1, 5, 50}) {
    BufferedCovariance buffered(b, mics, freqs);
    for (int t = 0; t < frames; ++t) {
      const CovarianceState& got =
          buffered.step(gather_frame(speech, t), gather_frame(noise, t));
      int lo = std::max(0, t - b + 1);
      for (int f = 0; f < freqs; ++f) {
        MatXc ss = MatXc::Zero(mics, mics), nn = MatXc::Zero(mics, mics);
        for (int u = lo; u <= t; ++u) {
          Eigen::VectorXcd vs(mics), vn(mics);
          for (int m = 0; m < mics; ++m) {
            vs(m) = speech.at(m, u, f);
            vn(m) = noise.at(m, u, f);
          }
          ss += vs * vs.adjoint();
          nn += vn * vn.adjoint();
        }
        ss /= (t - lo + 1);
        nn /= (t - lo + 1);
        CHECK((MatXc(got.phi_ss_at(f)) - ss).norm() <= 1e-10 * std::max(1.0, ss.norm()));
        CHECK((MatXc(buffered.noise_average_at(f)) - nn).norm() <=
              1e-10 * std::max(1.0, nn.norm()));
        // inversion sensitivity: ulp-level average differences scale by the
        // condition number (~1e6 when the window is a single frame)
        MatXc inv_ref = loaded_inverse(nn);
        CHECK((MatXc(got.phi_nn_inv_at(f)) - inv_ref).norm() <= 1e-8 * std::max(1.0, inv_ref.norm()));
      }
    }
  }
}

TEST_CASE("buffer window covering the scene equals the fixed estimate") {
  Spectrogram speech = random_spec(3, 20, 6, 8);
  Spectrogram noise = random_spec(3, 20, 6, 9);
  EnhancerOutput est{speech, noise};
  CovarianceState fixed = fixed_estimate(est);
  BufferedCovariance buffered(64, 3, speech.freqs);
  const CovarianceState* last = nullptr;
  for (int t = 0; t < 20; ++t)
    last = &buffered.step(gather_frame(speech, t), gather_frame(noise, t));
  for (int f = 0; f < speech.freqs; ++f) {
    CHECK((MatXc(last->phi_ss_at(f)) - MatXc(fixed.phi_ss_at(f))).norm() <= 1e-10);
    CHECK((MatXc(last->phi_nn_inv_at(f)) - MatXc(fixed.phi_nn_inv_at(f))).norm() <= 1e-10);
  }
}

TEST_CASE("rank1_update closed forms and summation oracle") {
  Rng rng(10);
  int m = 3;
  SUBCASE("zero vector is a no-op") {
    MatXc prev = random_matrix(m, rng);
    prev = (prev * prev.adjoint()).eval();
    CHECK((rank1_update(prev, Eigen::VectorXcd::Zero(m)) - prev).norm() == 0.0);
  }
  SUBCASE("identity plus e1") {
    Eigen::VectorXcd e1 = Eigen::VectorXcd::Zero(m);
    e1(0) = 1.0;
    MatXc got = rank1_update(MatXc::Identity(m, m), e1);
    MatXc want = MatXc::Identity(m, m);
    want(0, 0) = 2.0;
    CHECK((got - want).norm() <= 1e-15);
  }
  SUBCASE("ten updates equal init plus the outer-product sum") {
    MatXc acc = 0.01 * MatXc::Identity(m, m);
    MatXc direct = acc;
    for (int t = 0; t < 10; ++t) {
      Eigen::VectorXcd phi(m);
      for (int i = 0; i < m; ++i) phi(i) = cplx(rng.normal(), rng.normal());
      acc = rank1_update(acc, phi);
      direct += phi * phi.adjoint();
    }
    CHECK((acc - direct).norm() <= 1e-12 * direct.norm());
  }
}

TEST_CASE("cholesky structuring: identity, nilpotent, and PSD guarantee") {
  Rng rng(11);
  SUBCASE("identity raw") {
    MatXc raw = MatXc::Identity(3, 3);
    CHECK((cholesky_factor(raw) - raw).norm() == 0.0);
    CHECK((cholesky_structure(raw) - raw).norm() == 0.0);
  }
  SUBCASE("strictly upper raw collapses to zero") {
    MatXc raw = MatXc::Zero(3, 3);
    raw(0, 1) = cplx(2, 1);
    raw(0, 2) = cplx(-1, 3);
    raw(1, 2) = cplx(0, 4);
    CHECK(cholesky_structure(raw).norm() == 0.0);
  }
  SUBCASE("random raw yields Hermitian PSD") {
    for (int trial = 0; trial < 20; ++trial) {
      MatXc raw = random_matrix(3, rng);
      MatXc phi = cholesky_structure(raw);
      CHECK((phi - phi.adjoint().eval()).norm() <= 1e-12 * phi.norm());
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> eig(phi);
      CHECK(eig.eigenvalues().minCoeff() >= -1e-10 * std::abs(phi.trace()));
    }
  }
}

TEST_CASE("arbitrary structuring passes through, even non-Hermitian") {
  Rng rng(12);
  MatXc raw = random_matrix(4, rng);
  MatXc out = arbitrary_structure(raw);
  CHECK((out - raw).norm() == 0.0);
  CHECK((out - out.adjoint().eval()).norm() > 1e-3);  // no silent symmetrization
}

TEST_CASE("g_theta_step with zero parameters emits zero") {
  LearnedEstimatorArch arch;
  arch.mics = 2;
  arch.hidden = 4;
  arch.f_info = false;
  arch.variant = CovVariant::kArbitrary;
  ParamStore<double> params;
  Rng rng(13);
  init_estimator_params(arch, "est.noise.", params, rng);
  for (const auto& name : params.names())
    for (auto& v : params.at(name).values()) v = 0.0;
  auto state = EstimatorSideState<double>::zeros(arch, 5);
  Spectrogram spec = random_spec(2, 1, 8, 14);
  CTensor<double> frame = frame_tensor(gather_frame(spec, 0), 5, 2);
  CTensor<double> out = estimator_side_step(arch, params, "est.noise.", frame, state);
  for (double v : out.re.values()) CHECK(v == 0.0);
  for (double v : out.im.values()) CHECK(v == 0.0);
}

TEST_CASE("estimator step is pure: same input and state, same output") {
  LearnedEstimatorArch arch;
  arch.mics = 2;
  arch.hidden = 4;
  arch.f_info = true;
  arch.f_channels = 6;
  arch.variant = CovVariant::kCholesky;
  ParamStore<double> params;
  Rng rng(15);
  init_estimator_params(arch, "est.noise.", params, rng);
  Spectrogram spec = random_spec(2, 1, 8, 16);
  CTensor<double> frame = frame_tensor(gather_frame(spec, 0), 5, 2);
  auto s1 = EstimatorSideState<double>::zeros(arch, 5);
  auto s2 = EstimatorSideState<double>::zeros(arch, 5);
  CTensor<double> a = estimator_side_step(arch, params, "est.noise.", frame, s1);
  CTensor<double> b = estimator_side_step(arch, params, "est.noise.", frame, s2);
  CHECK(a.re.values() == b.re.values());
  CHECK(a.im.values() == b.im.values());
}

TEST_CASE("recurrent core matches an independent scalar implementation") {
  LearnedEstimatorArch arch;
  arch.mics = 2;
  arch.hidden = 4;
  arch.layers = 2;
  arch.f_info = false;
  arch.variant = CovVariant::kArbitrary;
  ParamStore<double> params;
  Rng rng(17);
  init_estimator_params(arch, "est.noise.", params, rng);

  int freqs = 3;
  auto state = EstimatorSideState<double>::zeros(arch, freqs);
  RefSide ref{arch.mics, arch.hidden, arch.layers, arch.head_dim(), &params, "est.noise."};
  ref.reset(freqs);

  Rng data(18);
  for (int t = 0; t < 4; ++t) {
    std::vector<cplx> frame(freqs * arch.mics);
    for (auto& v : frame) v = cplx(data.normal(), data.normal());
    CTensor<double> in = frame_tensor(frame, freqs, arch.mics);
    CTensor<double> got = estimator_side_step(arch, params, "est.noise.", in, state);

    std::vector<std::vector<double>> ref_in(freqs, std::vector<double>(2 * arch.mics));
    for (int f = 0; f < freqs; ++f)
      for (int m = 0; m < arch.mics; ++m) {
        ref_in[f][m] = frame[f * arch.mics + m].real();
        ref_in[f][arch.mics + m] = frame[f * arch.mics + m].imag();
      }
    auto want = ref.step(ref_in);
    for (int f = 0; f < freqs; ++f)
      for (int k = 0; k < arch.head_dim(); ++k)
        CHECK(std::abs(got.at(f, k) - want[f][k]) <= 1e-12);
  }
}

TEST_CASE("f_psi: zero params give zero features; impulse stays local") {
  LearnedEstimatorArch arch;
  arch.mics = 2;
  arch.f_channels = 5;
  ParamStore<double> params;
  Rng rng(19);
  init_estimator_params(arch, "est.noise.", params, rng);

  int freqs = 16;
  SUBCASE("zero parameters") {
    ParamStore<double> zeros = params.clone();
    for (const auto& name : zeros.names())
      for (auto& v : zeros.at(name).values()) v = 0.0;
    Tensor<double> stacked = Tensor<double>::make(freqs, 4);
    covbeam::testutil::fill_random(stacked, rng);
    Tensor<double> feats = f_psi(arch, zeros, "est.noise.", stacked);
    for (double v : feats.values()) CHECK(v == 0.0);
  }
  SUBCASE("receptive field of three kernel-3 layers is +/-3") {
    // zero the conv biases so quiet frequencies produce exactly zero
    for (int l = 0; l < arch.f_layers; ++l)
      for (auto& v : params.at("est.noise.fpsi" + std::to_string(l) + ".b").values()) v = 0.0;
    Tensor<double> stacked = Tensor<double>::make(freqs, 4);
    int f0 = 8;
    for (int c = 0; c < 4; ++c) stacked.values()[f0 * 4 + c] = 1.0;
    Tensor<double> feats = f_psi(arch, params, "est.noise.", stacked);
    for (int f = 0; f < freqs; ++f) {
      double mag = 0.0;
      for (int c = 0; c < arch.f_channels; ++c)
        mag = std::max(mag, std::abs(feats.values()[f * arch.f_channels + c]));
      if (std::abs(f - f0) > 3) CHECK(mag == 0.0);
      if (f == f0) CHECK(mag > 0.0);
    }
  }
}

TEST_CASE("gradients flow through structuring and f_psi") {
  Rng rng(21);
  int freqs = 3, mics = 2;
  SUBCASE("rank1 chain") {
    CTensor<double> phi = CTensor<double>::zeros(freqs, mics);
    phi.re.set_requires_grad(true);
    phi.im.set_requires_grad(true);
    covbeam::testutil::fill_random(phi.re, rng);
    covbeam::testutil::fill_random(phi.im, rng);
    CTensor<double> init = CTensor<double>::zeros(freqs, mics * mics);
    auto build = [&] {
      CTensor<double> acc = rank1_update_graph(init, phi);
      acc = rank1_update_graph(acc, phi);
      return sum_all(c_abs_sq(acc));
    };
    CHECK(check_gradients({&phi.re, &phi.im}, build) <= 1e-6);
  }
  SUBCASE("cholesky structuring") {
    CTensor<double> raw = CTensor<double>::zeros(freqs, mics * mics);
    raw.re.set_requires_grad(true);
    raw.im.set_requires_grad(true);
    covbeam::testutil::fill_random(raw.re, rng);
    covbeam::testutil::fill_random(raw.im, rng);
    auto build = [&] { return sum_all(c_abs_sq(cholesky_structure_graph(raw, mics))); };
    CHECK(check_gradients({&raw.re, &raw.im}, build) <= 1e-5);
  }
  SUBCASE("f_psi parameters") {
    LearnedEstimatorArch arch;
    arch.mics = mics;
    arch.f_channels = 4;
    ParamStore<double> params;
    init_estimator_params(arch, "n.", params, rng);
    Tensor<double> stacked = Tensor<double>::make(6, 2 * mics);
    covbeam::testutil::fill_random(stacked, rng);
    std::vector<Tensor<double>*> leaves;
    for (int l = 0; l < 3; ++l) {
      leaves.push_back(&params.at("n.fpsi" + std::to_string(l) + ".w"));
      leaves.push_back(&params.at("n.fpsi" + std::to_string(l) + ".b"));
    }
    auto build = [&] { return sum_all(square(f_psi(arch, params, "n.", stacked))); };
    CHECK(check_gradients(leaves, build) <= 1e-5);
  }
}

TEST_CASE("rank-1 stream grows monotonically in the Loewner order") {
  LearnedEstimatorArch arch;
  arch.mics = 3;
  arch.hidden = 6;
  arch.f_info = false;
  arch.variant = CovVariant::kRank1;
  ParamStore<double> params;
  Rng rng(22);
  init_estimator_params(arch, "est.noise.", params, rng);
  // make head outputs non-trivial
  for (auto& v : params.at("est.noise.head_re.w").values()) v = rng.normal() * 0.3;
  for (auto& v : params.at("est.noise.head_im.w").values()) v = rng.normal() * 0.3;

  int freqs = 4;
  auto state = EstimatorSideState<double>::zeros(arch, freqs);
  MatXc init = arch.rank1_init_eps * MatXc::Identity(3, 3);
  Rng data(23);
  for (int t = 0; t < 8; ++t) {
    std::vector<cplx> frame(freqs * 3);
    for (auto& v : frame) v = cplx(data.normal(), data.normal());
    CTensor<double> in = frame_tensor(frame, freqs, 3);
    CTensor<double> out = estimator_side_step(arch, params, "est.noise.", in, state);
    for (int f = 0; f < freqs; ++f) {
      MatXc phi(3, 3);
      for (int i = 0; i < 9; ++i) phi(i / 3, i % 3) = out.at(f, i);
      MatXc diff = phi - init;
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> eig(diff);
      CHECK(eig.eigenvalues().minCoeff() >= -1e-8 * std::abs(phi.trace()));
    }
  }
}

TEST_CASE("learned estimators are causal and reset cleanly") {
  LearnedEstimatorArch arch;
  arch.mics = 2;
  arch.hidden = 4;
  arch.f_info = true;
  arch.f_channels = 4;
  arch.variant = CovVariant::kArbitrary;
  ParamStore<double> params;
  Rng rng(24);
  init_estimator_params(arch, "est.speech.", params, rng);
  init_estimator_params(arch, "est.noise.", params, rng);

  int freqs = 5, frames = 6;
  Spectrogram speech = random_spec(2, frames, 8, 25);
  Spectrogram noise = random_spec(2, frames, 8, 26);

  auto run = [&](int upto) {
    LearnedCovariance<double> cov(arch, &params, freqs);
    std::vector<CovarianceState> states;
    for (int t = 0; t < upto; ++t) {
      CovarianceState s = CovarianceState::zeros(2, freqs);
      cov.step(gather_frame(speech, t), gather_frame(noise, t), s);
      states.push_back(std::move(s));
    }
    return states;
  };

  auto full = run(frames);
  auto prefix = run(4);
  for (int t = 0; t < 4; ++t) {
    CHECK(full[t].phi_ss == prefix[t].phi_ss);
    CHECK(full[t].phi_nn_inv == prefix[t].phi_nn_inv);
  }
  // two identical scenes back to back give identical streams
  auto again = run(frames);
  for (int t = 0; t < frames; ++t) {
    CHECK(full[t].phi_ss == again[t].phi_ss);
    CHECK(full[t].phi_nn_inv == again[t].phi_nn_inv);
  }
}

TEST_CASE("per-frequency parameter sharing is permutation equivariant") {
  LearnedEstimatorArch arch;
  arch.mics = 2;
  arch.hidden = 4;
  arch.f_info = false;  // frequency coupling off
  arch.variant = CovVariant::kArbitrary;
  ParamStore<double> params;
  Rng rng(27);
  init_estimator_params(arch, "est.noise.", params, rng);

  int freqs = 6;
  Spectrogram spec = random_spec(2, 1, 10, 28);
  std::vector<cplx> frame = gather_frame(spec, 0);
  std::vector<int> perm{3, 0, 5, 1, 4, 2};
  std::vector<cplx> permuted(frame.size());
  for (int f = 0; f < freqs; ++f)
    for (int m = 0; m < 2; ++m) permuted[f * 2 + m] = frame[perm[f] * 2 + m];

  auto s1 = EstimatorSideState<double>::zeros(arch, freqs);
  auto s2 = EstimatorSideState<double>::zeros(arch, freqs);
  CTensor<double> base =
      estimator_side_step(arch, params, "est.noise.", frame_tensor(frame, freqs, 2), s1);
  CTensor<double> shuf =
      estimator_side_step(arch, params, "est.noise.", frame_tensor(permuted, freqs, 2), s2);
  for (int f = 0; f < freqs; ++f)
    for (int k = 0; k < 4; ++k)
      CHECK(std::abs(shuf.at(f, k) - base.at(perm[f], k)) == 0.0);
}
