#include "stylo/nn.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "stylo/kernels.hpp"

namespace stylo {

template <typename T>
Param<T>::Param(std::string n, std::vector<int> s, bool train) : name(std::move(n)), shape(std::move(s)), trainable(train) {
  std::size_t count = 1;
  for (int d : shape) count *= static_cast<std::size_t>(d);
  value.assign(count, T(0));
  grad.assign(count, T(0));
}

template <typename T>
void Param<T>::zero_grad() {
  std::fill(grad.begin(), grad.end(), T(0));
}

template <typename T>
void init_normal(Param<T>& p, Rng& rng, double stddev) {
  for (auto& v : p.value) v = static_cast<T>(rng.normal() * stddev);
}

template <typename T>
bool all_finite(std::span<const T> v) {
  return std::all_of(v.begin(), v.end(), [](T x) { return std::isfinite(x); });
}

// ---------------------------------------------------------------- Linear

template <typename T>
Linear<T>::Linear(const std::string& name, int in_dim, int out_dim)
    : weight(name + ".weight", {in_dim, out_dim}), bias(name + ".bias", {out_dim}), in(in_dim), out(out_dim) {}

template <typename T>
void Linear<T>::init(Rng& rng, double stddev) {
  init_normal(weight, rng, stddev);
  std::fill(bias.value.begin(), bias.value.end(), T(0));
}

template <typename T>
Matrix<T> Linear<T>::forward(const Matrix<T>& x) const {
  if (x.cols != in)
    throw std::invalid_argument(weight.name + ": input has " + std::to_string(x.cols) + " columns, expected " +
                                std::to_string(in));
  Matrix<T> y(x.rows, out);
  for (int i = 0; i < x.rows; ++i) std::copy(bias.value.begin(), bias.value.end(), y.row(i));
  kernels::matmul<T>(x.span(), weight.value, y.span(), x.rows, in, out, true);
  return y;
}

template <typename T>
void Linear<T>::backward(const Matrix<T>& x, const Matrix<T>& dy, Matrix<T>* dx) {
  kernels::matmul_tn<T>(x.span(), dy.span(), weight.grad, x.rows, in, out, true);
  for (int i = 0; i < dy.rows; ++i) {
    const T* r = dy.row(i);
    for (int j = 0; j < out; ++j) bias.grad[j] += r[j];
  }
  if (dx) {
    *dx = Matrix<T>(x.rows, in);
    kernels::matmul_nt<T>(dy.span(), weight.value, dx->span(), dy.rows, out, in, false);
  }
}

// ---------------------------------------------------------------- BatchNorm

template <typename T>
BatchNorm<T>::BatchNorm(const std::string& name, int c)
    : gamma(name + ".gamma", {c}),
      beta(name + ".beta", {c}),
      running_mean(name + ".running_mean", {c}, false),
      running_var(name + ".running_var", {c}, false),
      channels(c) {
  std::fill(gamma.value.begin(), gamma.value.end(), T(1));
  std::fill(running_var.value.begin(), running_var.value.end(), T(1));
}

template <typename T>
Matrix<T> BatchNorm<T>::forward(const Matrix<T>& x, Mode mode, Cache* cache) const {
  const int R = x.rows, C = x.cols;
  std::vector<T> mean(C, T(0)), var(C, T(0));
  if (mode == Mode::train) {
    for (int i = 0; i < R; ++i) {
      const T* r = x.row(i);
      for (int c = 0; c < C; ++c) mean[c] += r[c];
    }
    for (auto& m : mean) m /= static_cast<T>(R);
    for (int i = 0; i < R; ++i) {
      const T* r = x.row(i);
      for (int c = 0; c < C; ++c) {
        const T d = r[c] - mean[c];
        var[c] += d * d;
      }
    }
    for (auto& v : var) v /= static_cast<T>(R);
  } else {
    mean = running_mean.value;
    var = running_var.value;
  }
  std::vector<T> inv_std(C);
  for (int c = 0; c < C; ++c) inv_std[c] = T(1) / std::sqrt(var[c] + static_cast<T>(eps));

  Matrix<T> y(R, C);
  Matrix<T> xhat;
  if (cache) xhat = Matrix<T>(R, C);
  for (int i = 0; i < R; ++i) {
    const T* r = x.row(i);
    T* out = y.row(i);
    for (int c = 0; c < C; ++c) {
      const T h = (r[c] - mean[c]) * inv_std[c];
      if (cache) xhat(i, c) = h;
      out[c] = gamma.value[c] * h + beta.value[c];
    }
  }
  if (cache) {
    cache->xhat = std::move(xhat);
    cache->inv_std = std::move(inv_std);
    cache->batch_mean = std::move(mean);
    cache->batch_var = std::move(var);
    cache->rows = R;
  }
  return y;
}

template <typename T>
Matrix<T> BatchNorm<T>::backward(const Cache& cache, const Matrix<T>& dy) {
  // Batch statistics path (training mode).
  const int R = dy.rows, C = dy.cols;
  std::vector<T> sum_dy(C, T(0)), sum_dy_xhat(C, T(0));
  for (int i = 0; i < R; ++i) {
    const T* g = dy.row(i);
    const T* h = cache.xhat.row(i);
    for (int c = 0; c < C; ++c) {
      sum_dy[c] += g[c];
      sum_dy_xhat[c] += g[c] * h[c];
    }
  }
  for (int c = 0; c < C; ++c) {
    gamma.grad[c] += sum_dy_xhat[c];
    beta.grad[c] += sum_dy[c];
  }
  Matrix<T> dx(R, C);
  const T inv_r = T(1) / static_cast<T>(R);
  for (int i = 0; i < R; ++i) {
    const T* g = dy.row(i);
    const T* h = cache.xhat.row(i);
    T* out = dx.row(i);
    for (int c = 0; c < C; ++c)
      out[c] = gamma.value[c] * cache.inv_std[c] * (g[c] - inv_r * sum_dy[c] - h[c] * inv_r * sum_dy_xhat[c]);
  }
  return dx;
}

template <typename T>
void BatchNorm<T>::update_running(const Cache& cache) {
  const T m = static_cast<T>(momentum);
  const T unbias = cache.rows > 1 ? static_cast<T>(cache.rows) / static_cast<T>(cache.rows - 1) : T(1);
  for (int c = 0; c < channels; ++c) {
    running_mean.value[c] = m * running_mean.value[c] + (T(1) - m) * cache.batch_mean[c];
    running_var.value[c] = m * running_var.value[c] + (T(1) - m) * cache.batch_var[c] * unbias;
  }
}

// ---------------------------------------------------------------- LayerNorm

template <typename T>
LayerNorm<T>::LayerNorm(const std::string& name, int d) : gamma(name + ".gamma", {d}), beta(name + ".beta", {d}), dim(d) {
  std::fill(gamma.value.begin(), gamma.value.end(), T(1));
}

template <typename T>
Matrix<T> LayerNorm<T>::forward(const Matrix<T>& x, Cache* cache) const {
  const int R = x.rows, D = x.cols;
  Matrix<T> y(R, D);
  if (cache) {
    cache->xhat = Matrix<T>(R, D);
    cache->inv_std.assign(R, T(0));
  }
  for (int i = 0; i < R; ++i) {
    const T* r = x.row(i);
    T mean = 0;
    for (int d = 0; d < D; ++d) mean += r[d];
    mean /= static_cast<T>(D);
    T var = 0;
    for (int d = 0; d < D; ++d) var += (r[d] - mean) * (r[d] - mean);
    var /= static_cast<T>(D);
    const T inv = T(1) / std::sqrt(var + static_cast<T>(eps));
    T* out = y.row(i);
    for (int d = 0; d < D; ++d) {
      const T h = (r[d] - mean) * inv;
      if (cache) cache->xhat(i, d) = h;
      out[d] = gamma.value[d] * h + beta.value[d];
    }
    if (cache) cache->inv_std[i] = inv;
  }
  return y;
}

template <typename T>
Matrix<T> LayerNorm<T>::backward(const Cache& cache, const Matrix<T>& dy) {
  const int R = dy.rows, D = dy.cols;
  Matrix<T> dx(R, D);
  std::vector<T> dxhat(D);
  for (int i = 0; i < R; ++i) {
    const T* g = dy.row(i);
    const T* h = cache.xhat.row(i);
    T s1 = 0, s2 = 0;
    for (int d = 0; d < D; ++d) {
      gamma.grad[d] += g[d] * h[d];
      beta.grad[d] += g[d];
      dxhat[d] = g[d] * gamma.value[d];
      s1 += dxhat[d];
      s2 += dxhat[d] * h[d];
    }
    const T invD = T(1) / static_cast<T>(D);
    T* out = dx.row(i);
    for (int d = 0; d < D; ++d) out[d] = cache.inv_std[i] * (dxhat[d] - invD * s1 - h[d] * invD * s2);
  }
  return dx;
}

// ---------------------------------------------------------------- activations

template <typename T>
T gelu(T x) {
  return T(0.5) * x * (T(1) + std::erf(x * static_cast<T>(0.70710678118654752440)));
}

template <typename T>
T gelu_grad(T x) {
  const T cdf = T(0.5) * (T(1) + std::erf(x * static_cast<T>(0.70710678118654752440)));
  const T pdf = static_cast<T>(0.39894228040143267794) * std::exp(T(-0.5) * x * x);
  return cdf + x * pdf;
}

template <typename T>
void relu_inplace(Matrix<T>& x) {
  for (auto& v : x.data) v = v > T(0) ? v : T(0);
}

template <typename T>
void relu_backward_inplace(const Matrix<T>& y, Matrix<T>& dy) {
  for (std::size_t i = 0; i < dy.data.size(); ++i)
    if (!(y.data[i] > T(0))) dy.data[i] = T(0);
}

#define STYLO_INSTANTIATE_NN(T)                                      \
  template struct Param<T>;                                          \
  template void init_normal<T>(Param<T>&, Rng&, double);             \
  template bool all_finite<T>(std::span<const T>);                   \
  template struct Linear<T>;                                         \
  template struct BatchNorm<T>;                                      \
  template struct LayerNorm<T>;                                      \
  template T gelu<T>(T);                                             \
  template T gelu_grad<T>(T);                                        \
  template void relu_inplace<T>(Matrix<T>&);                         \
  template void relu_backward_inplace<T>(const Matrix<T>&, Matrix<T>&);

STYLO_INSTANTIATE_NN(float)
STYLO_INSTANTIATE_NN(double)

#undef STYLO_INSTANTIATE_NN

}  // namespace stylo
