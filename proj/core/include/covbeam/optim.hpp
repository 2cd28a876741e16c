#pragma once

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "covbeam/nn.hpp"

namespace covbeam::ad {

struct AdamConfig {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double clip_norm = 5.0;  // infinity disables clipping
};

template <typename T>
struct AdamState {
  int64_t step = 0;
  std::unordered_map<std::string, std::vector<T>> m, v;

  static AdamState init(const ParamStore<T>& params) {
    AdamState s;
    for (const auto& name : params.names()) {
      std::size_t n = params.at(name).size();
      s.m[name].assign(n, T(0));
      s.v[name].assign(n, T(0));
    }
    return s;
  }
};

template <typename T>
double global_grad_norm(ParamStore<T>& params) {
  double sq = 0.0;
  for (const auto& name : params.names()) {
    Tensor<T>& p = params.at(name);
    if (p.grad().size() != p.size()) continue;  // untouched by backward
    for (T g : p.grad()) {
      if (!std::isfinite(static_cast<double>(g)))
        throw std::runtime_error("non-finite gradient in parameter '" + name + "'");
      sq += static_cast<double>(g) * static_cast<double>(g);
    }
  }
  return std::sqrt(sq);
}

// Global-norm clipping followed by the bias-corrected Adam update.
template <typename T>
void adam_step(ParamStore<T>& params, AdamState<T>& state, const AdamConfig& cfg) {
  double norm = global_grad_norm(params);
  double scale = 1.0;
  if (std::isfinite(cfg.clip_norm) && norm > cfg.clip_norm && norm > 0.0)
    scale = cfg.clip_norm / norm;

  state.step += 1;
  double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));

  for (const auto& name : params.names()) {
    Tensor<T>& p = params.at(name);
    if (p.grad().size() != p.size()) continue;
    auto& m = state.m.at(name);
    auto& v = state.v.at(name);
    for (std::size_t i = 0; i < p.size(); ++i) {
      double g = static_cast<double>(p.grad()[i]) * scale;
      double mi = cfg.beta1 * static_cast<double>(m[i]) + (1.0 - cfg.beta1) * g;
      double vi = cfg.beta2 * static_cast<double>(v[i]) + (1.0 - cfg.beta2) * g * g;
      m[i] = static_cast<T>(mi);
      v[i] = static_cast<T>(vi);
      double update = cfg.lr * (mi / bc1) / (std::sqrt(vi / bc2) + cfg.eps);
      p.values()[i] = static_cast<T>(static_cast<double>(p.values()[i]) - update);
    }
  }
}

}  // namespace covbeam::ad
