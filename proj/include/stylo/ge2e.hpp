#pragma once

// Generalized end-to-end loss over an N x M episode of unit embeddings.
//
//   c_k       = mean_m y_km
//   c_j^(-i)  = mean_{m != i} y_jm
//   S_ji,k    = w cos(y_ji, c_j^(-i)) + b   if k == j
//             = w cos(y_ji, c_k) + b        otherwise
//   L(y_ji)   = -S_ji,j + log sum_k exp(S_ji,k)
//   loss      = mean over the N*M games

#include <vector>

#include "stylo/nn.hpp"

namespace stylo::ge2e {

/// Embeddings row-major [N*M, d], row j*M + i holds y_ji.
struct Episode {
  int n = 0;
  int m = 0;
  int dim = 0;
  std::vector<double> y;

  const double* row(int j, int i) const { return y.data() + (static_cast<std::size_t>(j) * m + i) * dim; }
};

/// c_j^(-i) for one player's M x d block. Throws std::invalid_argument when M < 2.
std::vector<double> centroid_excluding(const std::vector<double>& player_rows, int m, int dim, int i);

struct SimilarityBatch {
  int n = 0;
  int m = 0;
  double w = 0;
  double b = 0;
  std::vector<double> s;  // [N*M, N]

  double at(int j, int i, int k) const { return s[(static_cast<std::size_t>(j) * m + i) * n + k]; }
};

SimilarityBatch similarity_matrix(const Episode& batch, double w, double b);

struct LossResult {
  double loss = 0;
  std::vector<double> per_game;  // [N*M]
  SimilarityBatch similarity;
  std::vector<double> d_y;  // [N*M, d], only when gradients are requested
  double d_w = 0;
  double d_b = 0;
};

/// Mean GE2E loss with a max-subtracted log-sum-exp; gradients with respect
/// to the embeddings, w and b when `with_grad`. Throws NumericError on
/// non-finite inputs.
LossResult ge2e_loss(const Episode& batch, double w, double b, bool with_grad = false);

}  // namespace stylo::ge2e
