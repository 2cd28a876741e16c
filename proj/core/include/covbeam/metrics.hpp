#pragma once

#include <span>
#include <string>
#include <vector>

#include "covbeam/tensor.hpp"

namespace covbeam {

// Reconstructions beyond this are reported as exact.
inline constexpr double kSiSdrCapDb = 60.0;

// Scale-invariant SDR in dB: the estimate is projected onto the reference
// (alpha = <est,ref>/||ref||^2) and the ratio ||alpha ref||^2 / ||alpha ref -
// est||^2 is returned, capped at +/-60 dB. Throws on a zero reference.
double si_sdr_db(std::span<const double> estimate, std::span<const double> reference);

// Shortens both signals to their common length.
std::size_t common_length(std::span<const double> a, std::span<const double> b);

// Differentiable -si_sdr as a graph over [1, N] tensors. Equals -si_sdr_db
// exactly below the cap; at/above the cap it returns the constant -60 with no
// gradient.
template <typename T>
ad::Tensor<T> neg_si_sdr_loss(const ad::Tensor<T>& estimate, const ad::Tensor<T>& reference) {
  using namespace ad;
  if (estimate.rows() != 1 || reference.rows() != 1 || estimate.cols() != reference.cols())
    throw std::invalid_argument("neg_si_sdr_loss: expects matching [1, N] tensors");
  Tensor<T> ref_energy = sum_all(mul(reference, reference));
  if (ref_energy.value() <= T(0)) throw std::invalid_argument("neg_si_sdr_loss: zero reference");
  Tensor<T> alpha = div(sum_all(mul(estimate, reference)), ref_energy);
  Tensor<T> target = mul_colvec(reference, alpha);  // [1, N] scaled rows (single row)
  Tensor<T> num = sum_all(mul(target, target));
  Tensor<T> residual = sub(target, estimate);
  Tensor<T> den = sum_all(mul(residual, residual));
  double cap_ratio = std::pow(10.0, -kSiSdrCapDb / 10.0);
  if (static_cast<double>(den.value()) <= cap_ratio * static_cast<double>(num.value()))
    return Tensor<T>::scalar(static_cast<T>(-kSiSdrCapDb));
  T k = static_cast<T>(10.0 / std::log(10.0));
  return scale(sub(log_(den), log_(num)), k);
}

}  // namespace covbeam
