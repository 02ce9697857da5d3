#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "bnl/autograd.hpp"
#include "bnl/tensor.hpp"

// Differentiable ops. Spatial ops take H×W×C tensors or batched N×H×W×C
// tensors and return the same rank they were given.
namespace bnl::ops {

enum class Padding { kSame, kValid };

/// [m×k]·[k×n]. Backward: da = g·bᵀ, db = aᵀ·g.
template <typename T>
Var<T> matmul(const Var<T>& a, const Var<T>& b);

/// Batched [B×m×k]·[B×k×n].
template <typename T>
Var<T> bmm(const Var<T>& a, const Var<T>& b);

/// Swaps the last two axes of a rank-3 tensor.
template <typename T>
Var<T> transpose_last2(const Var<T>& a);

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b);

template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b);

template <typename T>
Var<T> scale(const Var<T>& a, T factor);

/// x + b with b broadcast over the trailing axis of x.
template <typename T>
Var<T> add_bias(const Var<T>& x, const Var<T>& bias);

template <typename T>
Var<T> relu(const Var<T>& x);

template <typename T>
Var<T> softmax(const Var<T>& x, std::size_t axis);

/// Mean over the listed axes; those axes are removed from the result.
template <typename T>
Var<T> mean(const Var<T>& x, std::vector<std::size_t> axes);

template <typename T>
Var<T> sum_all(const Var<T>& x);

template <typename T>
Var<T> reshape(const Var<T>& x, Shape shape);

/// Cross-correlation; kernel is kh×kw×Cin×Cout. Same padding uses
/// out = ceil(in/stride) with the extra row/column of padding at the end.
template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& kernel, std::size_t stride, Padding padding);

/// Ceil-mode max pooling: out = ceil(in/stride), trailing windows may be
/// partial. Gradient goes to the first maximal element of each window.
template <typename T>
Var<T> maxpool2d(const Var<T>& x, std::size_t window, std::size_t stride);

/// Per-channel spatial mean: H×W×C → C, or N×H×W×C → N×C.
template <typename T>
Var<T> global_avg_pool(const Var<T>& x);

/// Per-channel spatial max with first-index tie-break.
template <typename T>
Var<T> global_max_pool(const Var<T>& x);

/// Mean over elements of ½e² for |e| ≤ δ, δ(|e| − ½δ) otherwise.
template <typename T>
Var<T> huber_loss(const Var<T>& pred, const Var<T>& target, T delta);

/// Picks x[i, index[i]] from an N×A tensor.
template <typename T>
Var<T> gather_rows(const Var<T>& x, std::span<const std::size_t> index);

// Convenience: plain-tensor forward evaluation with grad mode off.
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  NoGradGuard guard;
  return matmul(Var<T>(a), Var<T>(b)).value();
}

}  // namespace bnl::ops
