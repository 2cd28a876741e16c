#include <cmath>

#include "covbeam/nn.hpp"
#include "covbeam/optim.hpp"
#include "doctest.h"
#include "testutil.hpp"

using namespace covbeam;
using namespace covbeam::ad;
using covbeam::testutil::check_gradients;
using covbeam::testutil::fill_random;

TEST_CASE("lstm cell: zero weights and state give zero outputs") {
  Tensor<double> x = Tensor<double>::full(2, 3, 0.7);
  LstmState<double> s = LstmState<double>::zeros(2, 4);
  Tensor<double> w = Tensor<double>::zeros(3 + 4, 16);
  Tensor<double> b = Tensor<double>::zeros(1, 16);
  auto out = lstm_cell(x, s, w, b);
  for (double v : out.h.values()) CHECK(v == 0.0);
  for (double v : out.c.values()) CHECK(v == 0.0);
}

TEST_CASE("lstm cell: saturated forget gate preserves the cell state") {
  int hidden = 4;
  Rng rng(2);
  Tensor<double> x = Tensor<double>::zeros(2, 3);
  fill_random(x, rng);
  LstmState<double> s = LstmState<double>::zeros(2, hidden);
  fill_random(s.c, rng);
  Tensor<double> w = Tensor<double>::zeros(3 + hidden, 4 * hidden);
  Tensor<double> b = Tensor<double>::zeros(1, 4 * hidden);
  for (int j = hidden; j < 2 * hidden; ++j) b.values()[j] = 50.0;  // forget ~= 1
  auto out = lstm_cell(x, s, w, b);
  for (std::size_t i = 0; i < out.c.size(); ++i)
    CHECK(out.c.values()[i] == doctest::Approx(s.c.values()[i]).epsilon(1e-12));
}

TEST_CASE("lstm cell gradients match finite differences") {
  Rng rng(3);
  int batch = 2, input = 3, hidden = 4;
  Tensor<double> x = Tensor<double>::zeros(batch, input, true);
  Tensor<double> h0 = Tensor<double>::zeros(batch, hidden, true);
  Tensor<double> c0 = Tensor<double>::zeros(batch, hidden, true);
  Tensor<double> w = Tensor<double>::zeros(input + hidden, 4 * hidden, true);
  Tensor<double> b = Tensor<double>::zeros(1, 4 * hidden, true);
  fill_random(x, rng);
  fill_random(h0, rng, 0.5);
  fill_random(c0, rng, 0.5);
  fill_random(w, rng, 0.5);
  fill_random(b, rng, 0.2);
  auto build = [&] {
    auto out = lstm_cell(x, LstmState<double>{h0, c0}, w, b);
    return sum_all(add(square(out.h), square(out.c)));
  };
  CHECK(check_gradients({&x, &h0, &c0, &w, &b}, build) <= 1e-4);
}

TEST_CASE("conv1d_freq identity kernel maps channels through") {
  int freqs = 6, cin = 2, cout = 2;
  Rng rng(4);
  Tensor<double> x = Tensor<double>::zeros(freqs, cin);
  fill_random(x, rng);
  // center tap = identity
  std::vector<double> kernels(cout * cin * 3, 0.0);
  for (int c = 0; c < cout; ++c) kernels[(c * cin + c) * 3 + 1] = 1.0;
  Tensor<double> w = pack_conv_kernels(kernels, cout, cin);
  Tensor<double> b = Tensor<double>::zeros(1, cout);
  Tensor<double> y = conv1d_freq(x, w, b);
  for (std::size_t i = 0; i < x.size(); ++i)
    CHECK(y.values()[i] == doctest::Approx(x.values()[i]));
}

TEST_CASE("conv1d_freq averaging kernel is constant on constant input") {
  int freqs = 8;
  Tensor<double> x = Tensor<double>::full(freqs, 1, 1.0);
  std::vector<double> kernels{1.0 / 3, 1.0 / 3, 1.0 / 3};
  Tensor<double> w = pack_conv_kernels(kernels, 1, 1);
  Tensor<double> b = Tensor<double>::zeros(1, 1);
  Tensor<double> y = conv1d_freq(x, w, b);
  for (int f = 1; f < freqs - 1; ++f) CHECK(y.values()[f] == doctest::Approx(1.0));
  // zero padding shows at the edges
  CHECK(y.values()[0] == doctest::Approx(2.0 / 3));
  CHECK(y.values()[freqs - 1] == doctest::Approx(2.0 / 3));
}

TEST_CASE("conv1d_freq gradients match finite differences") {
  Rng rng(5);
  Tensor<double> x = Tensor<double>::zeros(5, 2, true);
  Tensor<double> w = Tensor<double>::zeros(6, 3, true);
  Tensor<double> b = Tensor<double>::zeros(1, 3, true);
  fill_random(x, rng);
  fill_random(w, rng);
  fill_random(b, rng);
  auto build = [&] { return sum_all(square(conv1d_freq(x, w, b))); };
  CHECK(check_gradients({&x, &w, &b}, build) <= 1e-5);
}

TEST_CASE("adam: zero gradients leave parameters unchanged") {
  Rng rng(6);
  ParamStore<double> params;
  Tensor<double>& p = params.add("p", 2, 2);
  fill_random(p, rng);
  std::vector<double> before = p.values();
  AdamState<double> state = AdamState<double>::init(params);
  params.zero_grads();
  adam_step(params, state, {});
  CHECK(p.values() == before);
}

TEST_CASE("adam: first step moves by about -lr in the gradient direction") {
  ParamStore<double> params;
  Tensor<double>& p = params.add("p", 1, 3);
  p.values() = {1.0, -2.0, 0.5};
  AdamState<double> state = AdamState<double>::init(params);
  p.zero_grad();
  p.grad() = {0.3, -0.7, 2.0};
  AdamConfig cfg;
  cfg.lr = 1e-2;
  cfg.clip_norm = std::numeric_limits<double>::infinity();
  adam_step(params, state, cfg);
  CHECK(p.values()[0] == doctest::Approx(1.0 - 1e-2).epsilon(1e-4));
  CHECK(p.values()[1] == doctest::Approx(-2.0 + 1e-2).epsilon(1e-4));
  CHECK(p.values()[2] == doctest::Approx(0.5 - 1e-2).epsilon(1e-4));
}

TEST_CASE("adam: lr 0 is the identity") {
  Rng rng(7);
  ParamStore<double> params;
  Tensor<double>& p = params.add("p", 3, 3);
  fill_random(p, rng);
  std::vector<double> before = p.values();
  AdamState<double> state = AdamState<double>::init(params);
  p.zero_grad();
  for (auto& g : p.grad()) g = rng.normal();
  AdamConfig cfg;
  cfg.lr = 0.0;
  adam_step(params, state, cfg);
  CHECK(p.values() == before);
}

TEST_CASE("gradient clipping scales the global norm") {
  ParamStore<double> params;
  Tensor<double>& p = params.add("p", 1, 4);
  p.values() = {0, 0, 0, 0};
  p.zero_grad();
  p.grad() = {6.0, 8.0, 0.0, 0.0};  // norm 10
  CHECK(global_grad_norm(params) == doctest::Approx(10.0));

  AdamState<double> state = AdamState<double>::init(params);
  AdamConfig cfg;
  cfg.lr = 1.0;
  cfg.beta1 = 0.0;
  cfg.beta2 = 0.0;
  cfg.eps = 0.0;
  cfg.clip_norm = 1.0;
  adam_step(params, state, cfg);
  // with beta1=beta2=0 the update is sign(g) regardless of clip scale,
  // so check the moments instead: m holds the clipped gradient
  CHECK(state.m["p"][0] == doctest::Approx(0.6));
  CHECK(state.m["p"][1] == doctest::Approx(0.8));
}

TEST_CASE("adam: non-finite gradient reports the parameter name") {
  ParamStore<double> params;
  Tensor<double>& p = params.add("layer7.w", 1, 1);
  p.zero_grad();
  p.grad()[0] = std::numeric_limits<double>::quiet_NaN();
  AdamState<double> state = AdamState<double>::init(params);
  try {
    adam_step(params, state, {});
    FAIL("expected an exception");
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()).find("layer7.w") != std::string::npos);
  }
}

TEST_CASE("clip_norm infinity leaves moments at raw gradient") {
  ParamStore<double> params;
  Tensor<double>& p = params.add("p", 1, 2);
  p.zero_grad();
  p.grad() = {30.0, 40.0};
  AdamState<double> state = AdamState<double>::init(params);
  AdamConfig cfg;
  cfg.beta1 = 0.0;
  cfg.beta2 = 0.0;
  cfg.clip_norm = std::numeric_limits<double>::infinity();
  adam_step(params, state, cfg);
  CHECK(state.m["p"][0] == doctest::Approx(30.0));
  CHECK(state.m["p"][1] == doctest::Approx(40.0));
}
