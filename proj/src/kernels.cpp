#include "stylo/kernels.hpp"

#include <algorithm>
#include <type_traits>
#include <vector>

namespace stylo::kernels {

namespace {

// Neighbour of square p under tap (dy, dx), or -1 off the board.
struct TapTable {
  int nb[64][9];
  TapTable() {
    for (int p = 0; p < 64; ++p) {
      const int r = p / 8, f = p % 8;
      for (int t = 0; t < 9; ++t) {
        const int rr = r + t / 3 - 1, ff = f + t % 3 - 1;
        nb[p][t] = (rr >= 0 && rr < 8 && ff >= 0 && ff < 8) ? rr * 8 + ff : -1;
      }
    }
  }
};

const TapTable& taps() {
  static const TapTable table;
  return table;
}

constexpr long kParallelThreshold = 1 << 15;

template <typename T>
inline void axpy(T alpha, const T* __restrict x, T* __restrict y, int n) {
  for (int j = 0; j < n; ++j) y[j] += alpha * x[j];
}

// Fixed-width variants for common channel counts. Several output squares are
// accumulated at once so consecutive FMAs do not wait on each other.
template <typename T, int CO>
void conv_forward_fixed(const T* X, const T* W, T* Y, int batch, int cin) {
  const auto& tt = taps();
  constexpr int kPoints = 4;  // independent accumulators hide the FMA latency
#pragma omp parallel for schedule(static)
  for (int bi = 0; bi < batch; ++bi) {
    const T* xb = X + static_cast<long>(bi) * 64 * cin;
    T* yb = Y + static_cast<long>(bi) * 64 * CO;
    for (int p0 = 0; p0 < 64; p0 += kPoints) {
      T acc[kPoints][CO] = {};
      for (int t = 0; t < 9; ++t) {
        const T* wt = W + static_cast<long>(t) * cin * CO;
        const T* xq[kPoints];
        for (int u = 0; u < kPoints; ++u) {
          const int q = tt.nb[p0 + u][t];
          xq[u] = q < 0 ? nullptr : xb + q * cin;
        }
        for (int ci = 0; ci < cin; ++ci) {
          const T* wr = wt + static_cast<long>(ci) * CO;
          for (int u = 0; u < kPoints; ++u) {
            const T av = xq[u] ? xq[u][ci] : T(0);
            for (int j = 0; j < CO; ++j) acc[u][j] += av * wr[j];
          }
        }
      }
      for (int u = 0; u < kPoints; ++u) std::copy_n(acc[u], CO, yb + (p0 + u) * CO);
    }
  }
}

// Gather form: input square q collects from every output p = q - offset.
template <typename T, int CI>
void conv_backward_input_fixed(const T* DY, const T* WT, T* DX, int batch, int cout) {
  const auto& tt = taps();
  constexpr int kPoints = 4;
#pragma omp parallel for schedule(static)
  for (int bi = 0; bi < batch; ++bi) {
    const T* dyb = DY + static_cast<long>(bi) * 64 * cout;
    T* dxb = DX + static_cast<long>(bi) * 64 * CI;
    for (int q0 = 0; q0 < 64; q0 += kPoints) {
      T acc[kPoints][CI] = {};
      for (int t = 0; t < 9; ++t) {
        const T* wtt = WT + static_cast<long>(t) * cout * CI;
        const T* dyp[kPoints];
        for (int u = 0; u < kPoints; ++u) {
          const int p = tt.nb[q0 + u][8 - t];
          dyp[u] = p < 0 ? nullptr : dyb + p * cout;
        }
        for (int co = 0; co < cout; ++co) {
          const T* wr = wtt + static_cast<long>(co) * CI;
          for (int u = 0; u < kPoints; ++u) {
            const T g = dyp[u] ? dyp[u][co] : T(0);
            for (int j = 0; j < CI; ++j) acc[u][j] += g * wr[j];
          }
        }
      }
      for (int u = 0; u < kPoints; ++u) std::copy_n(acc[u], CI, dxb + (q0 + u) * CI);
    }
  }
}

// Calls f(std::integral_constant<int, W>) for W in {16, 32, 64}; false otherwise.
template <typename F>
bool dispatch_width(int w, F&& f) {
  switch (w) {
    case 16: f(std::integral_constant<int, 16>{}); return true;
    case 32: f(std::integral_constant<int, 32>{}); return true;
    case 64: f(std::integral_constant<int, 64>{}); return true;
    default: return false;
  }
}

}  // namespace

template <typename T>
void matmul(std::span<const T> a, std::span<const T> b, std::span<T> c, int m, int k, int n, bool accumulate) {
  const T* A = a.data();
  const T* B = b.data();
  T* C = c.data();
  const bool par = static_cast<long>(m) * k * n > kParallelThreshold;
#pragma omp parallel for schedule(static) if (par)
  for (int i = 0; i < m; ++i) {
    T* ci = C + static_cast<long>(i) * n;
    if (!accumulate) std::fill(ci, ci + n, T(0));
    const T* ai = A + static_cast<long>(i) * k;
    for (int kk = 0; kk < k; ++kk) {
      axpy(ai[kk], B + static_cast<long>(kk) * n, ci, n);
    }
  }
}

template <typename T>
void matmul_tn(std::span<const T> a, std::span<const T> b, std::span<T> c, int m, int k, int n, bool accumulate) {
  const T* A = a.data();
  const T* B = b.data();
  T* C = c.data();
  if (!accumulate) std::fill(c.begin(), c.begin() + static_cast<long>(k) * n, T(0));
  constexpr int kBlock = 16;
  const int blocks = (k + kBlock - 1) / kBlock;
  const bool par = static_cast<long>(m) * k * n > kParallelThreshold;
#pragma omp parallel for schedule(static) if (par)
  for (int blk = 0; blk < blocks; ++blk) {
    const int k0 = blk * kBlock, k1 = std::min(k, k0 + kBlock);
    for (int i = 0; i < m; ++i) {
      const T* ai = A + static_cast<long>(i) * k;
      const T* bi = B + static_cast<long>(i) * n;
      for (int kk = k0; kk < k1; ++kk) {
        axpy(ai[kk], bi, C + static_cast<long>(kk) * n, n);
      }
    }
  }
}

template <typename T>
void matmul_nt(std::span<const T> a, std::span<const T> b, std::span<T> c, int m, int k, int n, bool accumulate) {
  std::vector<T> bt(static_cast<std::size_t>(k) * n);
  for (int j = 0; j < n; ++j)
    for (int kk = 0; kk < k; ++kk) bt[static_cast<long>(kk) * n + j] = b[static_cast<long>(j) * k + kk];
  matmul<T>(a, bt, c, m, k, n, accumulate);
}

template <typename T>
void conv3x3_forward(std::span<const T> x, std::span<const T> w, std::span<T> y, int batch, int cin, int cout) {
  const auto& tt = taps();
  const T* X = x.data();
  const T* W = w.data();
  T* Y = y.data();
  if (dispatch_width(cout, [&](auto co) { conv_forward_fixed<T, co()>(X, W, Y, batch, cin); })) return;
#pragma omp parallel for schedule(static)
  for (int bi = 0; bi < batch; ++bi) {
    const T* xb = X + static_cast<long>(bi) * 64 * cin;
    T* yb = Y + static_cast<long>(bi) * 64 * cout;
    std::fill(yb, yb + 64 * cout, T(0));
    for (int p = 0; p < 64; ++p) {
      T* yp = yb + p * cout;
      for (int t = 0; t < 9; ++t) {
        const int q = tt.nb[p][t];
        if (q < 0) continue;
        const T* xq = xb + q * cin;
        const T* wt = W + static_cast<long>(t) * cin * cout;
        for (int ci = 0; ci < cin; ++ci) {
          const T av = xq[ci];
          if (av == T(0)) continue;
          axpy(av, wt + static_cast<long>(ci) * cout, yp, cout);
        }
      }
    }
  }
}

template <typename T>
void conv3x3_backward_input(std::span<const T> dy, std::span<const T> w, std::span<T> dx, int batch, int cin,
                            int cout) {
  const auto& tt = taps();
  // wt[tap][co][ci]
  std::vector<T> wt(static_cast<std::size_t>(9) * cin * cout);
  for (int t = 0; t < 9; ++t)
    for (int ci = 0; ci < cin; ++ci)
      for (int co = 0; co < cout; ++co)
        wt[(static_cast<long>(t) * cout + co) * cin + ci] = w[(static_cast<long>(t) * cin + ci) * cout + co];
  const T* DY = dy.data();
  T* DX = dx.data();
  const T* WT = wt.data();
  if (dispatch_width(cin, [&](auto ci) { conv_backward_input_fixed<T, ci()>(DY, WT, DX, batch, cout); })) return;
#pragma omp parallel for schedule(static)
  for (int bi = 0; bi < batch; ++bi) {
    const T* dyb = DY + static_cast<long>(bi) * 64 * cout;
    T* dxb = DX + static_cast<long>(bi) * 64 * cin;
    std::fill(dxb, dxb + 64 * cin, T(0));
    for (int p = 0; p < 64; ++p) {
      const T* dyp = dyb + p * cout;
      for (int t = 0; t < 9; ++t) {
        const int q = tt.nb[p][t];
        if (q < 0) continue;
        T* dxq = dxb + q * cin;
        const T* wtt = WT + static_cast<long>(t) * cout * cin;
        for (int co = 0; co < cout; ++co) {
          const T g = dyp[co];
          if (g == T(0)) continue;
          axpy(g, wtt + static_cast<long>(co) * cin, dxq, cin);
        }
      }
    }
  }
}

template <typename T>
void conv3x3_backward_weight(std::span<const T> x, std::span<const T> dy, std::span<T> dw, int batch, int cin,
                             int cout, bool accumulate) {
  const auto& tt = taps();
  const T* X = x.data();
  const T* DY = dy.data();
  T* DW = dw.data();
  if (!accumulate) std::fill(dw.begin(), dw.begin() + 9L * cin * cout, T(0));
#pragma omp parallel for schedule(static)
  for (int t = 0; t < 9; ++t) {
    T* dwt = DW + static_cast<long>(t) * cin * cout;
    for (int bi = 0; bi < batch; ++bi) {
      const T* xb = X + static_cast<long>(bi) * 64 * cin;
      const T* dyb = DY + static_cast<long>(bi) * 64 * cout;
      for (int p = 0; p < 64; ++p) {
        const int q = tt.nb[p][t];
        if (q < 0) continue;
        const T* xq = xb + q * cin;
        const T* dyp = dyb + p * cout;
        for (int ci = 0; ci < cin; ++ci) {
          axpy(xq[ci], dyp, dwt + static_cast<long>(ci) * cout, cout);
        }
      }
    }
  }
}

namespace serial {

template <typename T>
void matmul(std::span<const T> a, std::span<const T> b, std::span<T> c, int m, int k, int n, bool accumulate) {
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) {
      T s = accumulate ? c[i * n + j] : T(0);
      for (int kk = 0; kk < k; ++kk) s += a[i * k + kk] * b[kk * n + j];
      c[i * n + j] = s;
    }
}

template <typename T>
void matmul_tn(std::span<const T> a, std::span<const T> b, std::span<T> c, int m, int k, int n, bool accumulate) {
  for (int kk = 0; kk < k; ++kk)
    for (int j = 0; j < n; ++j) {
      T s = accumulate ? c[kk * n + j] : T(0);
      for (int i = 0; i < m; ++i) s += a[i * k + kk] * b[i * n + j];
      c[kk * n + j] = s;
    }
}

template <typename T>
void matmul_nt(std::span<const T> a, std::span<const T> b, std::span<T> c, int m, int k, int n, bool accumulate) {
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) {
      T s = accumulate ? c[i * n + j] : T(0);
      for (int kk = 0; kk < k; ++kk) s += a[i * k + kk] * b[j * k + kk];
      c[i * n + j] = s;
    }
}

template <typename T>
void conv3x3_forward(std::span<const T> x, std::span<const T> w, std::span<T> y, int batch, int cin, int cout) {
  for (int bi = 0; bi < batch; ++bi)
    for (int r = 0; r < 8; ++r)
      for (int f = 0; f < 8; ++f)
        for (int co = 0; co < cout; ++co) {
          T s = 0;
          for (int dy = -1; dy <= 1; ++dy)
            for (int dx = -1; dx <= 1; ++dx) {
              const int rr = r + dy, ff = f + dx;
              if (rr < 0 || rr > 7 || ff < 0 || ff > 7) continue;
              const int tap = (dy + 1) * 3 + (dx + 1);
              for (int ci = 0; ci < cin; ++ci)
                s += x[(bi * 64 + rr * 8 + ff) * cin + ci] * w[(tap * cin + ci) * cout + co];
            }
          y[(bi * 64 + r * 8 + f) * cout + co] = s;
        }
}

template <typename T>
void conv3x3_backward_input(std::span<const T> dy, std::span<const T> w, std::span<T> dx, int batch, int cin,
                            int cout) {
  // dx[q] = sum over outputs p that read q through some tap
  for (int bi = 0; bi < batch; ++bi)
    for (int r = 0; r < 8; ++r)
      for (int f = 0; f < 8; ++f)
        for (int ci = 0; ci < cin; ++ci) {
          T s = 0;
          for (int ddy = -1; ddy <= 1; ++ddy)
            for (int ddx = -1; ddx <= 1; ++ddx) {
              // output p = q - offset reads q via tap (ddy, ddx)
              const int pr = r - ddy, pf = f - ddx;
              if (pr < 0 || pr > 7 || pf < 0 || pf > 7) continue;
              const int tap = (ddy + 1) * 3 + (ddx + 1);
              for (int co = 0; co < cout; ++co)
                s += dy[(bi * 64 + pr * 8 + pf) * cout + co] * w[(tap * cin + ci) * cout + co];
            }
          dx[(bi * 64 + r * 8 + f) * cin + ci] = s;
        }
}

template <typename T>
void conv3x3_backward_weight(std::span<const T> x, std::span<const T> dy, std::span<T> dw, int batch, int cin,
                             int cout, bool accumulate) {
  for (int tap = 0; tap < 9; ++tap)
    for (int ci = 0; ci < cin; ++ci)
      for (int co = 0; co < cout; ++co) {
        const int ddy = tap / 3 - 1, ddx = tap % 3 - 1;
        T s = accumulate ? dw[(tap * cin + ci) * cout + co] : T(0);
        for (int bi = 0; bi < batch; ++bi)
          for (int r = 0; r < 8; ++r)
            for (int f = 0; f < 8; ++f) {
              const int rr = r + ddy, ff = f + ddx;
              if (rr < 0 || rr > 7 || ff < 0 || ff > 7) continue;
              s += x[(bi * 64 + rr * 8 + ff) * cin + ci] * dy[(bi * 64 + r * 8 + f) * cout + co];
            }
        dw[(tap * cin + ci) * cout + co] = s;
      }
}

}  // namespace serial

#define STYLO_INSTANTIATE_KERNELS(T)                                                                       \
  template void matmul<T>(std::span<const T>, std::span<const T>, std::span<T>, int, int, int, bool);     \
  template void matmul_tn<T>(std::span<const T>, std::span<const T>, std::span<T>, int, int, int, bool);  \
  template void matmul_nt<T>(std::span<const T>, std::span<const T>, std::span<T>, int, int, int, bool);  \
  template void conv3x3_forward<T>(std::span<const T>, std::span<const T>, std::span<T>, int, int, int);   \
  template void conv3x3_backward_input<T>(std::span<const T>, std::span<const T>, std::span<T>, int, int,  \
                                          int);                                                            \
  template void conv3x3_backward_weight<T>(std::span<const T>, std::span<const T>, std::span<T>, int, int, \
                                           int, bool);                                                     \
  namespace serial {                                                                                       \
  template void matmul<T>(std::span<const T>, std::span<const T>, std::span<T>, int, int, int, bool);     \
  template void matmul_tn<T>(std::span<const T>, std::span<const T>, std::span<T>, int, int, int, bool);  \
  template void matmul_nt<T>(std::span<const T>, std::span<const T>, std::span<T>, int, int, int, bool);  \
  template void conv3x3_forward<T>(std::span<const T>, std::span<const T>, std::span<T>, int, int, int);   \
  template void conv3x3_backward_input<T>(std::span<const T>, std::span<const T>, std::span<T>, int, int,  \
                                          int);                                                            \
  template void conv3x3_backward_weight<T>(std::span<const T>, std::span<const T>, std::span<T>, int, int, \
                                           int, bool);                                                     \
  }

STYLO_INSTANTIATE_KERNELS(float)
STYLO_INSTANTIATE_KERNELS(double)

#undef STYLO_INSTANTIATE_KERNELS

}  // namespace stylo::kernels
