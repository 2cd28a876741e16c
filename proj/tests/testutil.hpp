#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "covbeam/rng.hpp"
#include "covbeam/tensor.hpp"

namespace covbeam::testutil {

inline void fill_random(ad::Tensor<double>& t, Rng& rng, double scale = 1.0) {
  for (auto& v : t.values()) v = scale * rng.normal();
}

// Central finite-difference check against reverse-mode gradients. `build`
// reconstructs the scalar loss from the leaves' current values on every call.
// Returns the worst relative error over all checked coordinates.
// The floor keeps finite-difference roundoff on zero-gradient coordinates
// from dominating the relative error.
inline double check_gradients(std::vector<ad::Tensor<double>*> leaves,
                              const std::function<ad::Tensor<double>()>& build,
                              double h = 1e-5, double floor = 1e-4) {
  for (auto* leaf : leaves) leaf->zero_grad();
  ad::Tensor<double> loss = build();
  ad::backward(loss);

  double worst = 0.0;
  for (auto* leaf : leaves) {
    std::vector<double> ad_grad = leaf->grad();
    if (ad_grad.size() != leaf->size()) ad_grad.assign(leaf->size(), 0.0);
    for (std::size_t i = 0; i < leaf->size(); ++i) {
      double saved = leaf->values()[i];
      leaf->values()[i] = saved + h;
      double fp = build().value();
      leaf->values()[i] = saved - h;
      double fm = build().value();
      leaf->values()[i] = saved;
      double fd = (fp - fm) / (2.0 * h);
      double rel = std::abs(ad_grad[i] - fd) / std::max({std::abs(ad_grad[i]), std::abs(fd), floor});
      worst = std::max(worst, rel);
    }
  }
  return worst;
}

}  // namespace covbeam::testutil
