#include <cmath>

#include "covbeam/metrics.hpp"
#include "covbeam/optim.hpp"
#include "doctest.h"
#include "testutil.hpp"

using namespace covbeam;
using namespace covbeam::ad;
using covbeam::testutil::check_gradients;

namespace {

std::vector<double> random_signal(std::size_t n, uint64_t seed) {
  Rng rng(seed);
  std::vector<double> x(n);
  for (auto& v : x) v = rng.normal();
  return x;
}

// Independent route: project the estimate onto the reference with explicit
// vector algebra and form the energy ratio directly.
double si_sdr_oracle(const std::vector<double>& est, const std::vector<double>& ref) {
  double rr = 0.0, er = 0.0;
  for (std::size_t i = 0; i < ref.size(); ++i) {
    rr += ref[i] * ref[i];
    er += est[i] * ref[i];
  }
  std::vector<double> target(ref.size()), noise(ref.size());
  for (std::size_t i = 0; i < ref.size(); ++i) {
    target[i] = (er / rr) * ref[i];
    noise[i] = est[i] - target[i];
  }
  double tn = 0.0, nn = 0.0;
  for (std::size_t i = 0; i < ref.size(); ++i) {
    tn += target[i] * target[i];
    nn += noise[i] * noise[i];
  }
  return 10.0 * std::log10(tn / nn);
}

}  // namespace

TEST_CASE("si_sdr caps at +60 for a perfect estimate") {
  auto ref = random_signal(256, 1);
  CHECK(si_sdr_db(ref, ref) == kSiSdrCapDb);
}

TEST_CASE("si_sdr is invariant to estimate gain") {
  auto ref = random_signal(256, 2);
  auto est = ref;
  for (auto& v : est) v *= 2.0;
  CHECK(si_sdr_db(est, ref) == kSiSdrCapDb);
}

TEST_CASE("si_sdr is invariant to reference gain") {
  auto ref = random_signal(300, 12);
  auto est = random_signal(300, 13);
  double base = si_sdr_db(est, ref);
  auto scaled = ref;
  for (auto& v : scaled) v *= -7.5;
  CHECK(si_sdr_db(est, scaled) == doctest::Approx(base).epsilon(1e-12));
}

TEST_CASE("orthogonal noise at reference energy gives 0 dB") {
  std::size_t n = 512;
  std::vector<double> ref(n, 0.0), noise(n, 0.0);
  for (std::size_t i = 0; i < n; i += 2) {
    ref[i] = 1.0;
    noise[i + 1] = 1.0;  // orthogonal, equal energy
  }
  std::vector<double> est(n);
  for (std::size_t i = 0; i < n; ++i) est[i] = ref[i] + noise[i];
  CHECK(si_sdr_db(est, ref) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("si_sdr rejects a zero reference") {
  std::vector<double> ref(64, 0.0), est = random_signal(64, 3);
  CHECK_THROWS(si_sdr_db(est, ref));
}

TEST_CASE("si_sdr matches the projection oracle on random pairs") {
  for (uint64_t seed = 10; seed < 20; ++seed) {
    auto ref = random_signal(400, seed);
    auto est = random_signal(400, seed + 100);
    CHECK(std::abs(si_sdr_db(est, ref) - si_sdr_oracle(est, ref)) <= 1e-9);
  }
}

TEST_CASE("neg_si_sdr_loss equals -si_sdr and caps at -60") {
  auto ref = random_signal(200, 30);
  auto est = random_signal(200, 31);
  Tensor<double> e = Tensor<double>::from(est, 1, 200, true);
  Tensor<double> r = Tensor<double>::from(ref, 1, 200);
  Tensor<double> loss = neg_si_sdr_loss(e, r);
  CHECK(loss.value() == doctest::Approx(-si_sdr_db(est, ref)).epsilon(1e-10));

  Tensor<double> perfect = Tensor<double>::from(ref, 1, 200, true);
  CHECK(neg_si_sdr_loss(perfect, r).value() == -kSiSdrCapDb);
}

TEST_CASE("neg_si_sdr_loss gradient matches finite differences") {
  auto ref = random_signal(64, 40);
  auto est = ref;
  Rng rng(41);
  for (std::size_t i = 0; i < est.size(); ++i) est[i] += 0.3 * rng.normal();
  Tensor<double> e = Tensor<double>::from(est, 1, 64, true);
  Tensor<double> r = Tensor<double>::from(ref, 1, 64);
  CHECK(check_gradients({&e}, [&] { return neg_si_sdr_loss(e, r); }) <= 1e-4);
}

TEST_CASE("optimizing the estimate directly with adam descends the loss") {
  auto ref = random_signal(128, 50);
  auto est = random_signal(128, 51);
  ParamStore<double> params;
  Tensor<double>& e = params.add("est", 1, 128);
  e.values() = est;
  Tensor<double> r = Tensor<double>::from(ref, 1, 128);
  AdamState<double> state = AdamState<double>::init(params);
  AdamConfig cfg;
  cfg.lr = 0.05;
  double prev = 1e9;
  for (int step = 0; step < 10; ++step) {
    params.zero_grads();
    Tensor<double> loss = neg_si_sdr_loss(e, r);
    backward(loss);
    adam_step(params, state, cfg);
    CHECK(loss.value() < prev);
    prev = loss.value();
  }
}
