#pragma once

// Pre-norm transformer over a player's move features -> unit game embedding.
//
//   h = features * W_in + b_in + PE(position in the input sequence)
//   num_blocks x { h += Wo(MHA(LN1(h))); h += FF2(GELU(FF1(LN2(h)))) }
//   LN_final, mean over unmasked positions, Linear -> GELU -> Linear, L2 normalise
//
// Padded positions never act as attention keys and are left out of the mean,
// so the embedding does not depend on how much padding follows the moves.

#include <cstdint>
#include <vector>

#include <nlohmann/json.hpp>

#include "stylo/nn.hpp"

namespace stylo::model {

struct EncoderConfig {
  int input_dim = 320;
  int model_dim = 1024;
  int num_blocks = 12;
  int num_heads = 8;
  int head_dim = 64;
  int ff_dim = 2048;
  int embed_dim = 512;
  int max_positions = 500;

  int attn_dim() const { return num_heads * head_dim; }
  void validate() const;
  friend bool operator==(const EncoderConfig&, const EncoderConfig&) = default;
};

void to_json(nlohmann::json& j, const EncoderConfig& c);
void from_json(const nlohmann::json& j, EncoderConfig& c);

/// dims 2i: sin(pos / 10000^(2i/d)), 2i+1: cos(same). Throws std::out_of_range
/// unless 0 <= position < max_positions.
std::vector<double> positional_encoding(int position, int model_dim, int max_positions = 500);

using Mask = std::vector<std::uint8_t>;

template <typename T>
struct EncoderBlock {
  LayerNorm<T> ln1, ln2;
  Linear<T> wq, wk, wv, wo;
  Linear<T> ff1, ff2;

  struct Cache {
    Matrix<T> x;
    typename LayerNorm<T>::Cache ln1;
    Matrix<T> a, q, k, v;
    std::vector<T> probs;  // [seq][head][L][L]
    Matrix<T> ctx;
    Matrix<T> x1;
    typename LayerNorm<T>::Cache ln2;
    Matrix<T> f, u, g;
  };

  EncoderBlock() = default;
  EncoderBlock(const std::string& name, const EncoderConfig& c);
  void collect(ParamList<T>& out);
};

template <typename T>
class GameEncoder {
 public:
  struct Cache {
    int seqs = 0;
    int length = 0;
    Mask mask;
    std::vector<int> counts;
    Matrix<T> features;
    std::vector<typename EncoderBlock<T>::Cache> blocks;
    Matrix<T> last;
    typename LayerNorm<T>::Cache ln_final;
    Matrix<T> pooled, p1, g1, p2;
    std::vector<T> norms;
    Matrix<T> embed;
  };

  GameEncoder(const EncoderConfig& config, std::uint64_t seed);

  const EncoderConfig& config() const { return config_; }

  /// `features` holds `seqs` sequences of `length` rows each (row s*length+i),
  /// `mask` one flag per row. Returns [seqs, embed_dim] unit rows.
  Matrix<T> forward(const Matrix<T>& features, const Mask& mask, int length, Cache* cache = nullptr) const;
  /// Accumulates parameter gradients and returns d(loss)/d(features).
  Matrix<T> backward(const Cache& cache, const Matrix<T>& d_embed);

  /// Single sequence; result[block][head] is an L x L row-stochastic matrix.
  std::vector<std::vector<Matrix<T>>> attention_weights(const Matrix<T>& features, const Mask& mask) const;

  ParamList<T> params();
  std::size_t parameter_count() const;
  void zero_grad();

 private:
  void attention_forward(const EncoderBlock<T>& blk, typename EncoderBlock<T>::Cache& c, int seqs, int length,
                         const Mask& mask) const;

  EncoderConfig config_;
  Linear<T> in_proj_;
  std::vector<EncoderBlock<T>> blocks_;
  LayerNorm<T> ln_final_;
  Linear<T> proj1_, proj2_;
  std::vector<T> pe_;  // [max_positions, model_dim]
};

}  // namespace stylo::model
