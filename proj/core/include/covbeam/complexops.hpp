#pragma once

#include <complex>

#include "covbeam/tensor.hpp"

// Complex tensors carried through the autodiff graph as real pairs. A CTensor
// of shape [R, C] holds R rows of C complex entries; per-row square matrices
// are stored flattened row-major as [R, M*M]. Everything here is a
// composition of the real primitives in tensor.hpp, so gradients follow from
// the real chain rule (equivalently, Wirtinger gradients with re/im treated
// as independent reals).

namespace covbeam::ad {

template <typename T>
struct CTensor {
  Tensor<T> re, im;

  int rows() const { return re.rows(); }
  int cols() const { return re.cols(); }

  static CTensor zeros(int rows, int cols) {
    return {Tensor<T>::make(rows, cols), Tensor<T>::make(rows, cols)};
  }
  static CTensor from_complex(const std::complex<T>* data, int rows, int cols) {
    CTensor out = zeros(rows, cols);
    for (int i = 0; i < rows * cols; ++i) {
      out.re.values()[i] = data[i].real();
      out.im.values()[i] = data[i].imag();
    }
    return out;
  }
  std::complex<T> at(int r, int c) const {
    return {re.values()[r * cols() + c], im.values()[r * cols() + c]};
  }
};

template <typename T>
CTensor<T> c_add(const CTensor<T>& a, const CTensor<T>& b) {
  return {add(a.re, b.re), add(a.im, b.im)};
}

template <typename T>
CTensor<T> c_sub(const CTensor<T>& a, const CTensor<T>& b) {
  return {sub(a.re, b.re), sub(a.im, b.im)};
}

template <typename T>
CTensor<T> c_conj(const CTensor<T>& a) {
  return {a.re, neg(a.im)};
}

template <typename T>
CTensor<T> c_mul(const CTensor<T>& a, const CTensor<T>& b) {
  return {sub(mul(a.re, b.re), mul(a.im, b.im)),
          add(mul(a.re, b.im), mul(a.im, b.re))};
}

// real elementwise scaling
template <typename T>
CTensor<T> c_scale_real(const CTensor<T>& a, const Tensor<T>& s) {
  return {mul(a.re, s), mul(a.im, s)};
}

// per-row outer product a b^H: [R, M] x [R, M] -> [R, M*M]
template <typename T>
CTensor<T> c_outer(const CTensor<T>& a, const CTensor<T>& b) {
  int m = a.cols();
  Tensor<T> ar = repeat_interleave_cols(a.re, m), ai = repeat_interleave_cols(a.im, m);
  Tensor<T> br = tile_cols(b.re, m), bi = tile_cols(b.im, m);
  // (ar + i ai)(br - i bi)
  return {add(mul(ar, br), mul(ai, bi)), sub(mul(ai, br), mul(ar, bi))};
}

// per-row matrix-vector product: [R, M*M] x [R, M] -> [R, M]
template <typename T>
CTensor<T> c_matvec(const CTensor<T>& mat, const CTensor<T>& vec) {
  int m = vec.cols();
  Tensor<T> xr = tile_cols(vec.re, m), xi = tile_cols(vec.im, m);
  return {group_sum(sub(mul(mat.re, xr), mul(mat.im, xi)), m),
          group_sum(add(mul(mat.re, xi), mul(mat.im, xr)), m)};
}

// per-row x^H y: [R, M] x [R, M] -> [R, 1]
template <typename T>
CTensor<T> c_inner(const CTensor<T>& x, const CTensor<T>& y) {
  return {rowsum(add(mul(x.re, y.re), mul(x.im, y.im))),
          rowsum(sub(mul(x.re, y.im), mul(x.im, y.re)))};
}

namespace detail {
// column index permutation (i,k,j) -> (i,j,k) over an [R, M^3] block
inline std::vector<int> matmul_perm(int m) {
  std::vector<int> perm(m * m * m);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j)
      for (int k = 0; k < m; ++k)
        perm[(i * m + j) * m + k] = (i * m + k) * m + j;
  return perm;
}
inline std::vector<int> transpose_perm(int m) {
  std::vector<int> perm(m * m);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j) perm[i * m + j] = j * m + i;
  return perm;
}
}  // namespace detail

// per-row matrix product: [R, M*M] x [R, M*M] -> [R, M*M]
template <typename T>
Tensor<T> row_matmul_real(const Tensor<T>& a, const Tensor<T>& b, int m) {
  Tensor<T> ae = repeat_interleave_cols(a, m);                       // (i,k) -> (i,k,j)
  Tensor<T> be = tile_cols(b, m);                                    // (k,j) -> (i,k,j)
  Tensor<T> prod = gather_cols(mul(ae, be), detail::matmul_perm(m)); // -> (i,j,k)
  return group_sum(prod, m);
}

template <typename T>
CTensor<T> c_row_matmul(const CTensor<T>& a, const CTensor<T>& b, int m) {
  return {sub(row_matmul_real(a.re, b.re, m), row_matmul_real(a.im, b.im, m)),
          add(row_matmul_real(a.re, b.im, m), row_matmul_real(a.im, b.re, m))};
}

// per-row Hermitian transpose of flattened [R, M*M] matrices
template <typename T>
CTensor<T> c_row_herm(const CTensor<T>& a, int m) {
  auto perm = detail::transpose_perm(m);
  return {gather_cols(a.re, perm), neg(gather_cols(a.im, perm))};
}

// |z|^2 elementwise, real result
template <typename T>
Tensor<T> c_abs_sq(const CTensor<T>& a) {
  return add(mul(a.re, a.re), mul(a.im, a.im));
}

// complex division by a per-row scalar: [R, C] / [R, 1]
template <typename T>
CTensor<T> c_div_rowscalar(const CTensor<T>& a, const CTensor<T>& d) {
  Tensor<T> mag = c_abs_sq(d);  // [R, 1]
  Tensor<T> nr = add(mul_colvec(a.re, d.re), mul_colvec(a.im, d.im));
  Tensor<T> ni = sub(mul_colvec(a.im, d.re), mul_colvec(a.re, d.im));
  return {div_colvec(nr, mag), div_colvec(ni, mag)};
}

}  // namespace covbeam::ad
