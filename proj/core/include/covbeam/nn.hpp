#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "covbeam/rng.hpp"
#include "covbeam/tensor.hpp"

namespace covbeam::ad {

// Named parameter store. Iteration order is insertion order, which fixes the
// serialization layout and the gradient-clipping reduction order.
template <typename T>
class ParamStore {
 public:
  Tensor<T>& add(const std::string& name, int rows, int cols) {
    if (map_.count(name)) throw std::invalid_argument("duplicate parameter: " + name);
    Tensor<T> t = Tensor<T>::zeros(rows, cols, /*requires_grad=*/true);
    t.set_name(name);
    names_.push_back(name);
    return map_.emplace(name, std::move(t)).first->second;
  }
  Tensor<T>& at(const std::string& name) {
    auto it = map_.find(name);
    if (it == map_.end()) throw std::out_of_range("no such parameter: " + name);
    return it->second;
  }
  const Tensor<T>& at(const std::string& name) const {
    auto it = map_.find(name);
    if (it == map_.end()) throw std::out_of_range("no such parameter: " + name);
    return it->second;
  }
  bool has(const std::string& name) const { return map_.count(name) != 0; }
  const std::vector<std::string>& names() const { return names_; }
  std::size_t tensor_count() const { return names_.size(); }

  std::size_t element_count() const {
    std::size_t n = 0;
    for (const auto& name : names_) n += map_.at(name).size();
    return n;
  }

  void zero_grads() {
    for (const auto& name : names_) map_.at(name).zero_grad();
  }

  // deep copy (values only; fresh grad slots)
  ParamStore clone() const {
    ParamStore out;
    for (const auto& name : names_) {
      const Tensor<T>& src = map_.at(name);
      Tensor<T>& dst = out.add(name, src.rows(), src.cols());
      dst.values() = src.values();
    }
    return out;
  }

  void copy_values_from(const ParamStore& other) {
    for (const auto& name : names_) {
      Tensor<T>& dst = map_.at(name);
      const Tensor<T>& src = other.at(name);
      if (src.size() != dst.size()) throw std::invalid_argument("param shape mismatch: " + name);
      dst.values() = src.values();
    }
  }

 private:
  std::vector<std::string> names_;
  std::unordered_map<std::string, Tensor<T>> map_;
};

template <typename T>
struct LstmState {
  Tensor<T> h, c;
  static LstmState zeros(int batch, int hidden) {
    return {Tensor<T>::make(batch, hidden), Tensor<T>::make(batch, hidden)};
  }
};

// One LSTM step over a batch of rows.
//   w: [(input+hidden), 4*hidden] with rows ordered [x; h] and gate columns
//      ordered (input, forget, cell, output); b: [1, 4*hidden].
template <typename T>
LstmState<T> lstm_cell(const Tensor<T>& x, const LstmState<T>& s,
                       const Tensor<T>& w, const Tensor<T>& b) {
  int hidden = s.h.cols();
  if (w.rows() != x.cols() + hidden || w.cols() != 4 * hidden)
    throw std::invalid_argument("lstm_cell: weight shape mismatch");
  Tensor<T> zcat = concat_cols(x, s.h);
  Tensor<T> gates = add_rowvec(matmul(zcat, w), b);
  Tensor<T> gi = sigmoid(slice_cols(gates, 0, hidden));
  Tensor<T> gf = sigmoid(slice_cols(gates, hidden, hidden));
  Tensor<T> gg = tanh_(slice_cols(gates, 2 * hidden, hidden));
  Tensor<T> go = sigmoid(slice_cols(gates, 3 * hidden, hidden));
  Tensor<T> c_new = add(mul(gf, s.c), mul(gi, gg));
  Tensor<T> h_new = mul(go, tanh_(c_new));
  return {h_new, c_new};
}

template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
  return add_rowvec(matmul(x, w), b);
}

// Kernel-3 same-padded convolution along the row (frequency) axis.
//   x: [F, C_in]; w: [3*C_in, C_out] with row layout tap*C_in + c_in, taps
//   ordered (f-1, f, f+1); b: [1, C_out].
template <typename T>
Tensor<T> conv1d_freq(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
  if (w.rows() != 3 * x.cols()) throw std::invalid_argument("conv1d_freq: kernel shape mismatch");
  Tensor<T> cat = concat_cols(std::vector<Tensor<T>>{shift_rows(x, 1), x, shift_rows(x, -1)});
  return add_rowvec(matmul(cat, w), b);
}

// Packs a [C_out, C_in, 3] kernel stack into the matrix layout above.
template <typename T>
Tensor<T> pack_conv_kernels(const std::vector<T>& kernels, int c_out, int c_in) {
  if (kernels.size() != static_cast<std::size_t>(c_out) * c_in * 3)
    throw std::invalid_argument("pack_conv_kernels: size mismatch");
  Tensor<T> w = Tensor<T>::make(3 * c_in, c_out);
  for (int co = 0; co < c_out; ++co)
    for (int ci = 0; ci < c_in; ++ci)
      for (int k = 0; k < 3; ++k)
        w.values()[(k * c_in + ci) * c_out + co] = kernels[(co * c_in + ci) * 3 + k];
  return w;
}

inline double uniform_sym(Rng& rng, double bound) { return rng.uniform(-bound, bound); }

template <typename T>
void init_uniform(Tensor<T>& t, Rng& rng, double bound) {
  for (auto& v : t.values()) v = static_cast<T>(uniform_sym(rng, bound));
}

// Adds one LSTM layer's weights; forget-gate biases start at 1.
template <typename T>
void add_lstm_layer(ParamStore<T>& params, const std::string& prefix, int input, int hidden,
                    Rng& rng) {
  Tensor<T>& w = params.add(prefix + ".w", input + hidden, 4 * hidden);
  Tensor<T>& b = params.add(prefix + ".b", 1, 4 * hidden);
  init_uniform(w, rng, 1.0 / std::sqrt(static_cast<double>(hidden)));
  for (int j = hidden; j < 2 * hidden; ++j) b.values()[j] = T(1);
}

template <typename T>
void add_linear(ParamStore<T>& params, const std::string& prefix, int input, int output,
                Rng& rng, double scale = 1.0) {
  Tensor<T>& w = params.add(prefix + ".w", input, output);
  params.add(prefix + ".b", 1, output);
  init_uniform(w, rng, scale / std::sqrt(static_cast<double>(input)));
}

template <typename T>
void add_conv(ParamStore<T>& params, const std::string& prefix, int c_in, int c_out, Rng& rng) {
  Tensor<T>& w = params.add(prefix + ".w", 3 * c_in, c_out);
  params.add(prefix + ".b", 1, c_out);
  init_uniform(w, rng, 1.0 / std::sqrt(3.0 * c_in));
}

}  // namespace covbeam::ad
