#pragma once

#include <cstddef>
#include <cstdlib>
#include <new>
#include <vector>

namespace covbeam {

// 64-byte aligned allocator. Tensor buffers always live on the same
// alignment boundary so vectorized kernels pick identical code paths from
// run to run; without this, bit-level reproducibility would depend on heap
// history.
template <typename T>
struct Aligned64 {
  using value_type = T;
  static constexpr std::size_t kAlign = 64;

  Aligned64() = default;
  template <typename U>
  Aligned64(const Aligned64<U>&) {}

  T* allocate(std::size_t n) {
    if (n == 0) return nullptr;
    std::size_t bytes = (n * sizeof(T) + kAlign - 1) / kAlign * kAlign;
    void* p = std::aligned_alloc(kAlign, bytes);
    if (!p) throw std::bad_alloc();
    return static_cast<T*>(p);
  }
  void deallocate(T* p, std::size_t) noexcept { std::free(p); }

  template <typename U>
  bool operator==(const Aligned64<U>&) const {
    return true;
  }
  template <typename U>
  bool operator!=(const Aligned64<U>&) const {
    return false;
  }
};

template <typename T>
using AlignedVec = std::vector<T, Aligned64<T>>;

}  // namespace covbeam
