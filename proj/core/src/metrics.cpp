#include "covbeam/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace covbeam {

std::size_t common_length(std::span<const double> a, std::span<const double> b) {
  return std::min(a.size(), b.size());
}

double si_sdr_db(std::span<const double> estimate, std::span<const double> reference) {
  if (estimate.size() != reference.size())
    throw std::invalid_argument("si_sdr: length mismatch (truncate to common length first)");
  if (estimate.empty()) throw std::invalid_argument("si_sdr: empty input");

  double ref_energy = 0.0, dot = 0.0;
  for (std::size_t i = 0; i < reference.size(); ++i) {
    ref_energy += reference[i] * reference[i];
    dot += estimate[i] * reference[i];
  }
  if (ref_energy <= 0.0) throw std::invalid_argument("si_sdr: zero reference");

  double alpha = dot / ref_energy;
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < reference.size(); ++i) {
    double t = alpha * reference[i];
    num += t * t;
    den += (t - estimate[i]) * (t - estimate[i]);
  }
  if (num <= 0.0) return -kSiSdrCapDb;
  double ratio = num / den;
  double cap = std::pow(10.0, kSiSdrCapDb / 10.0);
  if (!(ratio < cap)) return kSiSdrCapDb;
  if (!(ratio > 1.0 / cap)) return -kSiSdrCapDb;
  return 10.0 * std::log10(ratio);
}

}  // namespace covbeam
