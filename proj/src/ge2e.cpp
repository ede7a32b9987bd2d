#include "stylo/ge2e.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace stylo::ge2e {

namespace {

double dot(const double* a, const double* b, int d) {
  double s = 0;
  for (int i = 0; i < d; ++i) s += a[i] * b[i];
  return s;
}

void check_shape(const Episode& e) {
  if (e.n < 1 || e.m < 2 || e.dim < 1)
    throw std::invalid_argument("ge2e: need N >= 1, M >= 2, dim >= 1");
  if (e.y.size() != static_cast<std::size_t>(e.n) * e.m * e.dim)
    throw std::invalid_argument("ge2e: embedding buffer size does not match N*M*dim");
}

struct Centroids {
  std::vector<double> full;      // [N, d]
  std::vector<double> excluded;  // [N*M, d]
};

Centroids centroids(const Episode& e) {
  const int N = e.n, M = e.m, d = e.dim;
  Centroids c;
  c.full.assign(static_cast<std::size_t>(N) * d, 0.0);
  c.excluded.assign(static_cast<std::size_t>(N) * M * d, 0.0);
  for (int j = 0; j < N; ++j) {
    double* cf = c.full.data() + static_cast<std::size_t>(j) * d;
    for (int i = 0; i < M; ++i)
      for (int t = 0; t < d; ++t) cf[t] += e.row(j, i)[t];
    for (int i = 0; i < M; ++i) {
      double* ce = c.excluded.data() + (static_cast<std::size_t>(j) * M + i) * d;
      for (int t = 0; t < d; ++t) ce[t] = (cf[t] - e.row(j, i)[t]) / (M - 1);
    }
    for (int t = 0; t < d; ++t) cf[t] /= M;
  }
  return c;
}

}  // namespace

std::vector<double> centroid_excluding(const std::vector<double>& player_rows, int m, int dim, int i) {
  if (m < 2) throw std::invalid_argument("centroid_excluding: need M >= 2, got " + std::to_string(m));
  if (i < 0 || i >= m) throw std::out_of_range("centroid_excluding: index out of range");
  if (player_rows.size() != static_cast<std::size_t>(m) * dim)
    throw std::invalid_argument("centroid_excluding: buffer size does not match M*dim");
  std::vector<double> c(dim, 0.0);
  for (int r = 0; r < m; ++r) {
    if (r == i) continue;
    for (int t = 0; t < dim; ++t) c[t] += player_rows[static_cast<std::size_t>(r) * dim + t];
  }
  for (auto& v : c) v /= (m - 1);
  return c;
}

SimilarityBatch similarity_matrix(const Episode& batch, double w, double b) {
  check_shape(batch);
  if (!(w > 0)) throw std::invalid_argument("similarity_matrix: w must be positive");
  if (!std::all_of(batch.y.begin(), batch.y.end(), [](double v) { return std::isfinite(v); }))
    throw NumericError("ge2e: non-finite embedding");
  const int N = batch.n, M = batch.m, d = batch.dim;
  const Centroids c = centroids(batch);
  std::vector<double> full_norm(N);
  for (int k = 0; k < N; ++k) {
    const double* ck = c.full.data() + static_cast<std::size_t>(k) * d;
    full_norm[k] = std::sqrt(dot(ck, ck, d));
    if (!(full_norm[k] > 0)) throw NumericError("ge2e: zero-norm centroid for player " + std::to_string(k));
  }
  SimilarityBatch out{N, M, w, b, std::vector<double>(static_cast<std::size_t>(N) * M * N)};
  for (int j = 0; j < N; ++j) {
    for (int i = 0; i < M; ++i) {
      const double* y = batch.row(j, i);
      const double yn = std::sqrt(dot(y, y, d));
      if (!(yn > 0)) throw NumericError("ge2e: zero-norm embedding");
      for (int k = 0; k < N; ++k) {
        double cs;
        if (k == j) {
          const double* ce = c.excluded.data() + (static_cast<std::size_t>(j) * M + i) * d;
          const double cn = std::sqrt(dot(ce, ce, d));
          if (!(cn > 0)) throw NumericError("ge2e: zero-norm excluded centroid");
          cs = dot(y, ce, d) / (yn * cn);
        } else {
          const double* ck = c.full.data() + static_cast<std::size_t>(k) * d;
          cs = dot(y, ck, d) / (yn * full_norm[k]);
        }
        out.s[(static_cast<std::size_t>(j) * M + i) * N + k] = w * cs + b;
      }
    }
  }
  return out;
}

LossResult ge2e_loss(const Episode& batch, double w, double b, bool with_grad) {
  if (!std::isfinite(w) || !std::isfinite(b)) throw NumericError("ge2e: non-finite w or b");
  LossResult r;
  r.similarity = similarity_matrix(batch, w, b);
  const int N = batch.n, M = batch.m, d = batch.dim;
  const std::size_t rows = static_cast<std::size_t>(N) * M;
  std::vector<double> softmax(rows * N);
  r.per_game.assign(rows, 0.0);
  double mean = 0;
  for (int j = 0; j < N; ++j) {
    for (int i = 0; i < M; ++i) {
      const std::size_t row = static_cast<std::size_t>(j) * M + i;
      const double* s = r.similarity.s.data() + row * N;
      const double mx = *std::max_element(s, s + N);
      double sum = 0;
      for (int k = 0; k < N; ++k) sum += std::exp(s[k] - mx);
      // log-sum-exp relative to the row maximum, so uniform rows give log N exactly
      r.per_game[row] = std::log(sum) - (s[j] - mx);
      // running mean: constant per-game losses give that constant exactly
      mean += (r.per_game[row] - mean) / static_cast<double>(row + 1);
      for (int k = 0; k < N; ++k) softmax[row * N + k] = std::exp(s[k] - mx) / sum;
    }
  }
  r.loss = mean;
  if (!std::isfinite(r.loss)) throw NumericError("ge2e: non-finite loss");
  if (!with_grad) return r;

  // dL/dS, then through the cosines into y and the centroids.
  const Centroids c = centroids(batch);
  r.d_y.assign(rows * d, 0.0);
  std::vector<double> d_full(static_cast<std::size_t>(N) * d, 0.0);
  std::vector<double> d_excl(rows * d, 0.0);
  const double inv_rows = 1.0 / static_cast<double>(rows);
  for (int j = 0; j < N; ++j) {
    for (int i = 0; i < M; ++i) {
      const std::size_t row = static_cast<std::size_t>(j) * M + i;
      const double* y = batch.row(j, i);
      const double yn = std::sqrt(dot(y, y, d));
      double* dy = r.d_y.data() + row * d;
      for (int k = 0; k < N; ++k) {
        const double g = (softmax[row * N + k] - (k == j ? 1.0 : 0.0)) * inv_rows;
        const double* ck = k == j ? c.excluded.data() + row * d : c.full.data() + static_cast<std::size_t>(k) * d;
        double* dck = k == j ? d_excl.data() + row * d : d_full.data() + static_cast<std::size_t>(k) * d;
        const double cn = std::sqrt(dot(ck, ck, d));
        const double cs = dot(y, ck, d) / (yn * cn);
        r.d_w += g * cs;
        r.d_b += g;
        const double gs = g * w;
        for (int t = 0; t < d; ++t) {
          dy[t] += gs * (ck[t] / (yn * cn) - cs * y[t] / (yn * yn));
          dck[t] += gs * (y[t] / (yn * cn) - cs * ck[t] / (cn * cn));
        }
      }
    }
  }
  for (int j = 0; j < N; ++j) {
    for (int m = 0; m < M; ++m) {
      double* dy = r.d_y.data() + (static_cast<std::size_t>(j) * M + m) * d;
      const double* df = d_full.data() + static_cast<std::size_t>(j) * d;
      for (int t = 0; t < d; ++t) dy[t] += df[t] / M;
      for (int i = 0; i < M; ++i) {
        if (i == m) continue;
        const double* de = d_excl.data() + (static_cast<std::size_t>(j) * M + i) * d;
        for (int t = 0; t < d; ++t) dy[t] += de[t] / (M - 1);
      }
    }
  }
  return r;
}

}  // namespace stylo::ge2e
