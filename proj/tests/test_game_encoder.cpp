#include <gtest/gtest.h>

#include <cmath>

#include "stylo/game_encoder.hpp"
#include "test_support.hpp"

using namespace stylo;
using namespace stylo::model;

namespace {

EncoderConfig tiny() {
  EncoderConfig c;
  c.input_dim = 6;
  c.model_dim = 16;
  c.num_blocks = 2;
  c.num_heads = 2;
  c.head_dim = 8;
  c.ff_dim = 32;
  c.embed_dim = 8;
  return c;
}

EncoderConfig small() {
  EncoderConfig c;
  c.input_dim = 24;
  c.model_dim = 32;
  c.num_blocks = 2;
  c.num_heads = 4;
  c.head_dim = 8;
  c.ff_dim = 64;
  c.embed_dim = 16;
  return c;
}

template <typename T>
Matrix<T> random_features(Rng& rng, int rows, int cols) {
  Matrix<T> m(rows, cols);
  for (auto& v : m.data) v = static_cast<T>(rng.normal());
  return m;
}

// rows [0, real) copied from `src`, the rest random junk that must not matter
template <typename T>
Matrix<T> padded(const Matrix<T>& src, int real, int length, Rng& rng, Mask& mask) {
  Matrix<T> m(length, src.cols);
  for (int i = 0; i < length; ++i)
    for (int c = 0; c < src.cols; ++c) m(i, c) = i < real ? src(i, c) : static_cast<T>(rng.normal() * 5);
  mask.assign(length, 0);
  std::fill(mask.begin(), mask.begin() + real, 1);
  return m;
}

}  // namespace

TEST(PositionalEncoding, Examples) {
  const auto p0 = positional_encoding(0, 64);
  for (int i = 0; i < 64; ++i) EXPECT_EQ(p0[i], i % 2 == 0 ? 0.0 : 1.0);
  const auto p1 = positional_encoding(1, 64);
  EXPECT_NEAR(p1[0], 0.84147, 1e-5);
  EXPECT_NEAR(p1[1], 0.54030, 1e-5);
  for (int pos : {0, 1, 7, 250, 499})
    for (double v : positional_encoding(pos, 1024)) {
      EXPECT_GE(v, -1.0);
      EXPECT_LE(v, 1.0);
    }
  // dimension pair i uses frequency 10000^(-2i/d)
  const auto p = positional_encoding(37, 16);
  for (int i = 0; i < 8; ++i) {
    const double angle = 37 / std::pow(10000.0, 2.0 * i / 16);
    EXPECT_NEAR(p[2 * i], std::sin(angle), 1e-12);
    EXPECT_NEAR(p[2 * i + 1], std::cos(angle), 1e-12);
  }
  EXPECT_THROW(positional_encoding(500, 64), std::out_of_range);
  EXPECT_THROW(positional_encoding(-1, 64), std::out_of_range);
}

TEST(Encoder, DefaultConfig) {
  const EncoderConfig c;
  EXPECT_EQ(c.model_dim, 1024);
  EXPECT_EQ(c.num_blocks, 12);
  EXPECT_EQ(c.num_heads, 8);
  EXPECT_EQ(c.head_dim, 64);
  EXPECT_EQ(c.attn_dim(), 512);
  EXPECT_EQ(c.ff_dim, 2048);
  EXPECT_EQ(c.embed_dim, 512);
  EXPECT_EQ(c.max_positions, 500);
}

TEST(Encoder, UnitNormOutput) {
  Rng rng(1);
  const GameEncoder<float> enc(small(), 3);
  const int seqs = 5, length = 12;
  const auto f = random_features<float>(rng, seqs * length, 24);
  Mask mask(seqs * length, 1);
  for (int s = 0; s < seqs; ++s)
    for (int i = 2 + s; i < length; ++i) mask[s * length + i] = 0;
  const auto e = enc.forward(f, mask, length);
  ASSERT_EQ(e.rows, seqs);
  ASSERT_EQ(e.cols, 16);
  for (int s = 0; s < seqs; ++s) {
    double n = 0;
    for (int c = 0; c < e.cols; ++c) n += double(e(s, c)) * e(s, c);
    EXPECT_NEAR(std::sqrt(n), 1.0, 1e-5);
  }
}

TEST(Encoder, PaddingInvariance) {
  Rng rng(2);
  const GameEncoder<float> enc(small(), 4);
  for (int trial = 0; trial < 20; ++trial) {
    const int real = 1 + static_cast<int>(rng.uniform_index(32));
    const auto f = random_features<float>(rng, real, 24);
    Mask m32, m64;
    const auto a = enc.forward(padded(f, real, 32, rng, m32), m32, 32);
    const auto b = enc.forward(padded(f, real, 64, rng, m64), m64, 64);
    for (int c = 0; c < a.cols; ++c) EXPECT_NEAR(a(0, c), b(0, c), 1e-5) << "real=" << real;
  }
}

TEST(Encoder, BatchedEqualsSingle) {
  Rng rng(3);
  const GameEncoder<float> enc(small(), 5);
  const int length = 10;
  const auto f = random_features<float>(rng, 3 * length, 24);
  Mask mask(3 * length, 1);
  mask[length + 9] = mask[length + 8] = 0;
  const auto all = enc.forward(f, mask, length);
  for (int s = 0; s < 3; ++s) {
    Matrix<float> one(length, 24);
    std::copy(f.row(s * length), f.row(s * length) + length * 24, one.data.begin());
    const Mask m(mask.begin() + s * length, mask.begin() + (s + 1) * length);
    const auto single = enc.forward(one, m, length);
    for (int c = 0; c < all.cols; ++c) EXPECT_NEAR(single(0, c), all(s, c), 1e-5);
  }
}

TEST(Encoder, ReversalChangesEmbedding) {
  Rng rng(4);
  const GameEncoder<double> enc(small(), 6);
  const auto f = random_features<double>(rng, 10, 24);
  Matrix<double> r(10, 24);
  for (int i = 0; i < 10; ++i) std::copy(f.row(9 - i), f.row(9 - i) + 24, r.row(i));
  const Mask mask(10, 1);
  const auto a = enc.forward(f, mask, 10), b = enc.forward(r, mask, 10);
  double cos = 0;
  for (int c = 0; c < a.cols; ++c) cos += a(0, c) * b(0, c);
  EXPECT_LT(cos, 1 - 1e-6);
}

TEST(Encoder, AttentionRowsAndMasking) {
  Rng rng(5);
  const GameEncoder<double> enc(small(), 7);
  const int length = 12, real = 7;
  Mask mask;
  const auto f = padded(random_features<double>(rng, real, 24), real, length, rng, mask);
  const auto att = enc.attention_weights(f, mask);
  ASSERT_EQ(att.size(), 2u);
  for (const auto& block : att) {
    ASSERT_EQ(block.size(), 4u);
    for (const auto& a : block) {
      ASSERT_EQ(a.rows, length);
      for (int q = 0; q < real; ++q) {
        double s = 0;
        for (int k = 0; k < length; ++k) {
          s += a(q, k);
          if (k >= real) EXPECT_EQ(a(q, k), 0.0);
          else EXPECT_GT(a(q, k), 0.0);
        }
        EXPECT_NEAR(s, 1.0, 1e-6);
      }
    }
  }
}

TEST(Encoder, SingleMoveAttention) {
  Rng rng(6);
  const GameEncoder<double> enc(small(), 8);
  const auto att = enc.attention_weights(random_features<double>(rng, 1, 24), Mask{1});
  for (const auto& block : att)
    for (const auto& a : block) EXPECT_EQ(a(0, 0), 1.0);
}

TEST(Encoder, Errors) {
  Rng rng(7);
  const GameEncoder<double> enc(small(), 9);
  EXPECT_THROW(enc.forward(random_features<double>(rng, 4, 24), Mask(4, 0), 4), std::invalid_argument);
  EXPECT_THROW(enc.forward(random_features<double>(rng, 4, 23), Mask(4, 1), 4), std::invalid_argument);
  EXPECT_THROW(enc.forward(random_features<double>(rng, 501, 24), Mask(501, 1), 501), std::out_of_range);
  auto f = random_features<double>(rng, 4, 24);
  f(1, 3) = std::nan("");
  EXPECT_THROW(enc.forward(f, Mask(4, 1), 4), NumericError);
}

TEST(Encoder, GradientMatchesFiniteDifferences) {
  Rng rng(8);
  GameEncoder<double> enc(tiny(), 10);
  const int seqs = 2, length = 5;
  auto f = random_features<double>(rng, seqs * length, 6);
  Mask mask(seqs * length, 1);
  mask[length + 4] = mask[length + 3] = 0;
  Matrix<double> r(seqs, 8);
  for (auto& v : r.data) v = rng.normal();
  auto loss = [&] {
    const auto e = enc.forward(f, mask, length);
    double s = 0;
    for (std::size_t i = 0; i < e.size(); ++i) s += e.data[i] * r.data[i];
    return s;
  };
  enc.zero_grad();
  GameEncoder<double>::Cache cache;
  enc.forward(f, mask, length, &cache);
  const auto d_features = enc.backward(cache, r);
  for (auto* p : enc.params()) {
    const auto numeric = testing_support::numeric_gradient(p->value, loss);
    if (p->name.find("wk.bias") != std::string::npos) {
      // softmax ignores a shift shared by all keys, so this gradient is exactly zero
      for (std::size_t i = 0; i < numeric.size(); ++i) {
        EXPECT_NEAR(p->grad[i], 0.0, 1e-12);
        EXPECT_NEAR(numeric[i], 0.0, 1e-8);
      }
      continue;
    }
    EXPECT_LT(testing_support::relative_error(p->grad, numeric), 1e-5) << p->name;
  }
  const auto numeric_f = testing_support::numeric_gradient(f.data, loss);
  EXPECT_LT(testing_support::relative_error(d_features.data, numeric_f), 1e-5);
  // padded rows receive no gradient
  for (int c = 0; c < 6; ++c) EXPECT_EQ(d_features(length + 4, c), 0.0);
}

TEST(Encoder, EvalDeterminism) {
  Rng rng(9);
  const GameEncoder<float> a(small(), 11), b(small(), 11);
  const auto f = random_features<float>(rng, 8, 24);
  EXPECT_EQ(a.forward(f, Mask(8, 1), 8).data, b.forward(f, Mask(8, 1), 8).data);
}
