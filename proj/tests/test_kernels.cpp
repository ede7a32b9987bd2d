#include <gtest/gtest.h>

#include <omp.h>

#include "stylo/kernels.hpp"
#include "test_support.hpp"

using namespace stylo;

namespace {

std::vector<double> rand_vec(Rng& rng, std::size_t n) { return testing_support::random_vector(rng, n); }

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

// direct definition of the 3x3 same-padding convolution over the 8x8 board
std::vector<double> conv_oracle(const std::vector<double>& x, const std::vector<double>& w, int batch, int cin,
                                int cout) {
  std::vector<double> y(static_cast<std::size_t>(batch) * 64 * cout, 0.0);
  for (int b = 0; b < batch; ++b)
    for (int r = 0; r < 8; ++r)
      for (int f = 0; f < 8; ++f)
        for (int o = 0; o < cout; ++o) {
          double s = 0;
          for (int dy = -1; dy <= 1; ++dy)
            for (int dx = -1; dx <= 1; ++dx) {
              const int rr = r + dy, ff = f + dx;
              if (rr < 0 || rr > 7 || ff < 0 || ff > 7) continue;
              const int tap = 3 * (dy + 1) + (dx + 1);
              for (int i = 0; i < cin; ++i)
                s += x[(static_cast<std::size_t>(b) * 64 + rr * 8 + ff) * cin + i] *
                     w[(static_cast<std::size_t>(tap) * cin + i) * cout + o];
            }
          y[(static_cast<std::size_t>(b) * 64 + r * 8 + f) * cout + o] = s;
        }
  return y;
}

}  // namespace

TEST(Kernels, MatmulVariantsMatchSerial) {
  Rng rng(1);
  const int m = 37, k = 19, n = 23;
  const auto a = rand_vec(rng, m * k), b = rand_vec(rng, k * n), bt = rand_vec(rng, n * k), am = rand_vec(rng, m * n);
  std::vector<double> c1(m * n), c2(m * n);
  kernels::matmul<double>(a, b, c1, m, k, n);
  kernels::serial::matmul<double>(a, b, c2, m, k, n);
  EXPECT_LT(max_abs_diff(c1, c2), 1e-12);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) {
      double s = 0;
      for (int t = 0; t < k; ++t) s += a[i * k + t] * b[t * n + j];
      EXPECT_NEAR(c1[i * n + j], s, 1e-12);
    }
  kernels::matmul_nt<double>(a, bt, c1, m, k, n);
  kernels::serial::matmul_nt<double>(a, bt, c2, m, k, n);
  EXPECT_LT(max_abs_diff(c1, c2), 1e-12);
  std::vector<double> d1(k * n, 1.0), d2(k * n, 1.0);
  kernels::matmul_tn<double>(a, am, d1, m, k, n, true);
  kernels::serial::matmul_tn<double>(a, am, d2, m, k, n, true);
  EXPECT_LT(max_abs_diff(d1, d2), 1e-12);
}

TEST(Kernels, ConvMatchesDirectDefinition) {
  Rng rng(2);
  const int batch = 3, cin = 5, cout = 7;
  const auto x = rand_vec(rng, batch * 64 * cin), w = rand_vec(rng, 9 * cin * cout);
  std::vector<double> y(batch * 64 * cout), ys(y.size());
  kernels::conv3x3_forward<double>(x, w, y, batch, cin, cout);
  kernels::serial::conv3x3_forward<double>(x, w, ys, batch, cin, cout);
  const auto yo = conv_oracle(x, w, batch, cin, cout);
  EXPECT_LT(max_abs_diff(y, yo), 1e-12);
  EXPECT_LT(max_abs_diff(ys, yo), 1e-12);
}

// <dy, conv(x, w)> is bilinear, so its gradients give the two backward kernels.
TEST(Kernels, ConvBackwardIsTheAdjoint) {
  Rng rng(3);
  const int batch = 2, cin = 4, cout = 3;
  auto x = rand_vec(rng, batch * 64 * cin), w = rand_vec(rng, 9 * cin * cout);
  const auto dy = rand_vec(rng, batch * 64 * cout);
  auto inner = [&] {
    const auto y = conv_oracle(x, w, batch, cin, cout);
    double s = 0;
    for (std::size_t i = 0; i < y.size(); ++i) s += y[i] * dy[i];
    return s;
  };
  std::vector<double> dx(x.size()), dxs(x.size()), dw(w.size(), 0.0), dws(w.size(), 0.0);
  kernels::conv3x3_backward_input<double>(dy, w, dx, batch, cin, cout);
  kernels::serial::conv3x3_backward_input<double>(dy, w, dxs, batch, cin, cout);
  kernels::conv3x3_backward_weight<double>(x, dy, dw, batch, cin, cout);
  kernels::serial::conv3x3_backward_weight<double>(x, dy, dws, batch, cin, cout);
  EXPECT_LT(testing_support::relative_error(dx, testing_support::numeric_gradient(x, inner)), 1e-8);
  EXPECT_LT(testing_support::relative_error(dw, testing_support::numeric_gradient(w, inner)), 1e-8);
  EXPECT_LT(max_abs_diff(dx, dxs), 1e-12);
  EXPECT_LT(max_abs_diff(dw, dws), 1e-12);
}

TEST(Kernels, ResultsIndependentOfThreadCount) {
  Rng rng(4);
  const int batch = 4, cin = 6, cout = 8;
  const auto x = rand_vec(rng, batch * 64 * cin), w = rand_vec(rng, 9 * cin * cout);
  std::vector<std::vector<double>> outs;
  const int saved = omp_get_max_threads();
  for (int threads : {1, 2, 3}) {
    omp_set_num_threads(threads);
    std::vector<double> y(batch * 64 * cout);
    kernels::conv3x3_forward<double>(x, w, y, batch, cin, cout);
    outs.push_back(y);
  }
  omp_set_num_threads(saved);
  EXPECT_EQ(outs[0], outs[1]);
  EXPECT_EQ(outs[0], outs[2]);
}
