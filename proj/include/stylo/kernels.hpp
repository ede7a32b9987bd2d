#pragma once

// Dense kernels used by the networks. Every kernel has an OpenMP version
// (stylo::kernels) and a plain serial reference (stylo::kernels::serial)
// kept for testing and benchmarking.
//
// Each output element is produced by exactly one loop iteration with a fixed
// summation order, so the parallel results do not depend on the thread count.
//
// Layouts are row-major. Convolutions work on NHWC activations over the 8x8
// board: x[b][square][channel] and weights w[tap][in][out] with tap = 3*dy+dx
// for offsets dy, dx in {-1, 0, 1} (rank, file); out-of-board taps read zero.

#include <span>

namespace stylo::kernels {

/// c[m,n] (+)= sum_k a[m,k] * b[k,n]
template <typename T>
void matmul(std::span<const T> a, std::span<const T> b, std::span<T> c, int m, int k, int n,
            bool accumulate = false);

/// c[k,n] (+)= sum_m a[m,k] * b[m,n]      (a^T b, a is m x k)
template <typename T>
void matmul_tn(std::span<const T> a, std::span<const T> b, std::span<T> c, int m, int k, int n,
               bool accumulate = false);

/// c[m,n] (+)= sum_k a[m,k] * b[n,k]      (a b^T, b is n x k)
template <typename T>
void matmul_nt(std::span<const T> a, std::span<const T> b, std::span<T> c, int m, int k, int n,
               bool accumulate = false);

template <typename T>
void conv3x3_forward(std::span<const T> x, std::span<const T> w, std::span<T> y, int batch, int cin, int cout);

/// dx = conv3x3 transpose of dy (overwrites dx)
template <typename T>
void conv3x3_backward_input(std::span<const T> dy, std::span<const T> w, std::span<T> dx, int batch, int cin,
                            int cout);

/// dw (+)= correlation of x and dy
template <typename T>
void conv3x3_backward_weight(std::span<const T> x, std::span<const T> dy, std::span<T> dw, int batch, int cin,
                             int cout, bool accumulate = true);

namespace serial {

template <typename T>
void matmul(std::span<const T> a, std::span<const T> b, std::span<T> c, int m, int k, int n,
            bool accumulate = false);
template <typename T>
void matmul_tn(std::span<const T> a, std::span<const T> b, std::span<T> c, int m, int k, int n,
               bool accumulate = false);
template <typename T>
void matmul_nt(std::span<const T> a, std::span<const T> b, std::span<T> c, int m, int k, int n,
               bool accumulate = false);
template <typename T>
void conv3x3_forward(std::span<const T> x, std::span<const T> w, std::span<T> y, int batch, int cin, int cout);
template <typename T>
void conv3x3_backward_input(std::span<const T> dy, std::span<const T> w, std::span<T> dx, int batch, int cin,
                            int cout);
template <typename T>
void conv3x3_backward_weight(std::span<const T> x, std::span<const T> dy, std::span<T> dw, int batch, int cin,
                             int cout, bool accumulate = true);

}  // namespace serial

}  // namespace stylo::kernels
