#pragma once

// Building blocks with hand-written backward passes. Layers hold parameters
// (value + accumulated gradient). forward() is const and stores whatever the
// backward pass needs in a caller-owned cache, so evaluation can share one
// set of parameters between threads.

#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "stylo/rng.hpp"

namespace stylo {

class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Mode { train, eval };

template <typename T>
struct Matrix {
  int rows = 0;
  int cols = 0;
  std::vector<T> data;

  Matrix() = default;
  Matrix(int r, int c, T fill = T(0)) : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, fill) {}

  T* row(int i) { return data.data() + static_cast<std::size_t>(i) * cols; }
  const T* row(int i) const { return data.data() + static_cast<std::size_t>(i) * cols; }
  T& operator()(int i, int j) { return data[static_cast<std::size_t>(i) * cols + j]; }
  T operator()(int i, int j) const { return data[static_cast<std::size_t>(i) * cols + j]; }
  std::span<T> span() { return data; }
  std::span<const T> span() const { return data; }
  std::size_t size() const { return data.size(); }
};

template <typename T>
struct Param {
  std::string name;
  std::vector<int> shape;
  std::vector<T> value;
  std::vector<T> grad;
  bool trainable = true;

  Param() = default;
  Param(std::string n, std::vector<int> s, bool train = true);
  std::size_t size() const { return value.size(); }
  void zero_grad();
};

template <typename T>
using ParamList = std::vector<Param<T>*>;

template <typename T>
void init_normal(Param<T>& p, Rng& rng, double stddev);

template <typename T>
bool all_finite(std::span<const T> v);

template <typename T>
struct Linear {
  Param<T> weight;  // [in, out]
  Param<T> bias;    // [out]
  int in = 0;
  int out = 0;

  Linear() = default;
  Linear(const std::string& name, int in_dim, int out_dim);
  void init(Rng& rng, double stddev);

  Matrix<T> forward(const Matrix<T>& x) const;
  /// Accumulates parameter gradients; writes dx when non-null.
  void backward(const Matrix<T>& x, const Matrix<T>& dy, Matrix<T>* dx);
  void collect(ParamList<T>& out_params) { out_params.push_back(&weight), out_params.push_back(&bias); }
};

/// Per-channel batch normalisation over the rows of an [R, C] matrix.
template <typename T>
struct BatchNorm {
  Param<T> gamma, beta, running_mean, running_var;
  int channels = 0;
  double eps = 1e-5;
  double momentum = 0.9;

  struct Cache {
    Matrix<T> xhat;
    std::vector<T> inv_std;
    std::vector<T> batch_mean;
    std::vector<T> batch_var;  // biased
    int rows = 0;
  };

  BatchNorm() = default;
  BatchNorm(const std::string& name, int c);

  Matrix<T> forward(const Matrix<T>& x, Mode mode, Cache* cache) const;
  Matrix<T> backward(const Cache& cache, const Matrix<T>& dy);
  /// running = momentum * running + (1 - momentum) * batch (unbiased variance).
  void update_running(const Cache& cache);
  void collect(ParamList<T>& out_params) {
    for (auto* p : {&gamma, &beta, &running_mean, &running_var}) out_params.push_back(p);
  }
};

template <typename T>
struct LayerNorm {
  Param<T> gamma, beta;
  int dim = 0;
  double eps = 1e-5;

  struct Cache {
    Matrix<T> xhat;
    std::vector<T> inv_std;
  };

  LayerNorm() = default;
  LayerNorm(const std::string& name, int d);

  Matrix<T> forward(const Matrix<T>& x, Cache* cache) const;
  Matrix<T> backward(const Cache& cache, const Matrix<T>& dy);
  void collect(ParamList<T>& out_params) { out_params.push_back(&gamma), out_params.push_back(&beta); }
};

template <typename T>
T gelu(T x);
template <typename T>
T gelu_grad(T x);

template <typename T>
void relu_inplace(Matrix<T>& x);
/// dy *= (y > 0), where y is the ReLU output.
template <typename T>
void relu_backward_inplace(const Matrix<T>& y, Matrix<T>& dy);

}  // namespace stylo
