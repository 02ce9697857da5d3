#pragma once

#include <cstddef>

namespace bnl::kernels {

/// C[m×n] (+)= op(A)·op(B), all row-major. op(A) is m×k; A is stored k×m
/// when trans_a is set (likewise B is stored n×k when trans_b is set).
template <typename T>
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c,
          bool accumulate);

}  // namespace bnl::kernels
