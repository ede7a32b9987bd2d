#include "stylo/game_encoder.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace stylo::model {

void EncoderConfig::validate() const {
  for (int v : {input_dim, model_dim, num_blocks, num_heads, head_dim, ff_dim, embed_dim, max_positions})
    if (v < 1) throw std::invalid_argument("encoder config: all fields must be >= 1");
}

void to_json(nlohmann::json& j, const EncoderConfig& c) {
  j = {{"input_dim", c.input_dim}, {"model_dim", c.model_dim}, {"num_blocks", c.num_blocks},
       {"num_heads", c.num_heads}, {"head_dim", c.head_dim},   {"ff_dim", c.ff_dim},
       {"embed_dim", c.embed_dim}, {"max_positions", c.max_positions}};
}

void from_json(const nlohmann::json& j, EncoderConfig& c) {
  for (const auto& [key, value] : j.items()) {
    if (key == "input_dim") c.input_dim = value.get<int>();
    else if (key == "model_dim") c.model_dim = value.get<int>();
    else if (key == "num_blocks") c.num_blocks = value.get<int>();
    else if (key == "num_heads") c.num_heads = value.get<int>();
    else if (key == "head_dim") c.head_dim = value.get<int>();
    else if (key == "ff_dim") c.ff_dim = value.get<int>();
    else if (key == "embed_dim") c.embed_dim = value.get<int>();
    else if (key == "max_positions") c.max_positions = value.get<int>();
    else throw std::invalid_argument("encoder config: unknown key '" + key + "'");
  }
}

std::vector<double> positional_encoding(int position, int model_dim, int max_positions) {
  if (position < 0 || position >= max_positions)
    throw std::out_of_range("positional encoding: position " + std::to_string(position) + " outside [0, " +
                            std::to_string(max_positions) + ")");
  std::vector<double> pe(model_dim);
  for (int d = 0; d < model_dim; d += 2) {
    const double angle = position / std::pow(10000.0, static_cast<double>(d) / model_dim);
    pe[d] = std::sin(angle);
    if (d + 1 < model_dim) pe[d + 1] = std::cos(angle);
  }
  return pe;
}

template <typename T>
EncoderBlock<T>::EncoderBlock(const std::string& name, const EncoderConfig& c)
    : ln1(name + ".ln1", c.model_dim),
      ln2(name + ".ln2", c.model_dim),
      wq(name + ".wq", c.model_dim, c.attn_dim()),
      wk(name + ".wk", c.model_dim, c.attn_dim()),
      wv(name + ".wv", c.model_dim, c.attn_dim()),
      wo(name + ".wo", c.attn_dim(), c.model_dim),
      ff1(name + ".ff1", c.model_dim, c.ff_dim),
      ff2(name + ".ff2", c.ff_dim, c.model_dim) {}

template <typename T>
void EncoderBlock<T>::collect(ParamList<T>& out) {
  ln1.collect(out);
  wq.collect(out);
  wk.collect(out);
  wv.collect(out);
  wo.collect(out);
  ln2.collect(out);
  ff1.collect(out);
  ff2.collect(out);
}

template <typename T>
GameEncoder<T>::GameEncoder(const EncoderConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  const int D = config_.model_dim;
  in_proj_ = Linear<T>("encoder.in_proj", config_.input_dim, D);
  for (int i = 0; i < config_.num_blocks; ++i) blocks_.emplace_back("encoder.block" + std::to_string(i), config_);
  ln_final_ = LayerNorm<T>("encoder.ln_final", D);
  proj1_ = Linear<T>("encoder.proj1", D, D);
  proj2_ = Linear<T>("encoder.proj2", D, config_.embed_dim);

  Rng rng(seed);
  in_proj_.init(rng, std::sqrt(1.0 / config_.input_dim));
  for (auto& b : blocks_) {
    b.wq.init(rng, std::sqrt(1.0 / D));
    b.wk.init(rng, std::sqrt(1.0 / D));
    b.wv.init(rng, std::sqrt(1.0 / D));
    b.wo.init(rng, std::sqrt(1.0 / config_.attn_dim()));
    b.ff1.init(rng, std::sqrt(2.0 / D));
    b.ff2.init(rng, std::sqrt(1.0 / config_.ff_dim));
  }
  proj1_.init(rng, std::sqrt(2.0 / D));
  proj2_.init(rng, std::sqrt(1.0 / D));

  pe_.resize(static_cast<std::size_t>(config_.max_positions) * D);
  for (int p = 0; p < config_.max_positions; ++p) {
    const auto row = positional_encoding(p, D, config_.max_positions);
    for (int d = 0; d < D; ++d) pe_[static_cast<std::size_t>(p) * D + d] = static_cast<T>(row[d]);
  }
}

template <typename T>
void GameEncoder<T>::attention_forward(const EncoderBlock<T>& blk, typename EncoderBlock<T>::Cache& c, int seqs,
                                       int length, const Mask& mask) const {
  const int H = config_.num_heads, hd = config_.head_dim, A = config_.attn_dim(), L = length;
  const T scale = T(1) / std::sqrt(static_cast<T>(hd));
  c.q = blk.wq.forward(c.a);
  c.k = blk.wk.forward(c.a);
  c.v = blk.wv.forward(c.a);
  c.ctx = Matrix<T>(seqs * L, A);
  c.probs.assign(static_cast<std::size_t>(seqs) * H * L * L, T(0));

#pragma omp parallel for collapse(2) schedule(static)
  for (int s = 0; s < seqs; ++s) {
    for (int h = 0; h < H; ++h) {
      T* P = c.probs.data() + (static_cast<std::size_t>(s) * H + h) * L * L;
      for (int i = 0; i < L; ++i) {
        const T* qi = c.q.row(s * L + i) + h * hd;
        T* Pi = P + static_cast<std::size_t>(i) * L;
        T mx = -std::numeric_limits<T>::infinity();
        for (int j = 0; j < L; ++j) {
          if (!mask[s * L + j]) continue;
          const T* kj = c.k.row(s * L + j) + h * hd;
          T dot = 0;
          for (int d = 0; d < hd; ++d) dot += qi[d] * kj[d];
          Pi[j] = dot * scale;
          mx = std::max(mx, Pi[j]);
        }
        T sum = 0;
        for (int j = 0; j < L; ++j) {
          if (!mask[s * L + j]) continue;
          Pi[j] = std::exp(Pi[j] - mx);
          sum += Pi[j];
        }
        T* out = c.ctx.row(s * L + i) + h * hd;
        for (int j = 0; j < L; ++j) {
          if (!mask[s * L + j]) continue;
          Pi[j] /= sum;
          const T* vj = c.v.row(s * L + j) + h * hd;
          for (int d = 0; d < hd; ++d) out[d] += Pi[j] * vj[d];
        }
      }
    }
  }
}

template <typename T>
Matrix<T> GameEncoder<T>::forward(const Matrix<T>& features, const Mask& mask, int length, Cache* cache) const {
  const int D = config_.model_dim;
  if (length < 1) throw std::invalid_argument("encode: sequence length must be >= 1");
  if (features.cols != config_.input_dim)
    throw std::invalid_argument("encode: features have " + std::to_string(features.cols) + " columns, expected " +
                                std::to_string(config_.input_dim));
  if (features.rows % length != 0 || mask.size() != static_cast<std::size_t>(features.rows))
    throw std::invalid_argument("encode: features/mask rows do not match the sequence length");
  if (length > config_.max_positions)
    throw std::out_of_range("encode: sequence length " + std::to_string(length) + " exceeds max_positions " +
                            std::to_string(config_.max_positions));
  const int S = features.rows / length, L = length;
  std::vector<int> counts(S, 0);
  for (int s = 0; s < S; ++s) {
    for (int i = 0; i < L; ++i) counts[s] += mask[s * L + i] ? 1 : 0;
    if (counts[s] == 0) throw std::invalid_argument("encode: sequence " + std::to_string(s) + " is fully masked");
  }

  Cache local;
  Cache& c = cache ? *cache : local;
  c.seqs = S;
  c.length = L;
  c.mask = mask;
  c.counts = counts;
  c.features = features;
  c.blocks.assign(blocks_.size(), {});

  Matrix<T> h = in_proj_.forward(features);
  for (int r = 0; r < h.rows; ++r) {
    const T* pe = pe_.data() + static_cast<std::size_t>(r % L) * D;
    T* row = h.row(r);
    for (int d = 0; d < D; ++d) row[d] += pe[d];
  }

  for (std::size_t b = 0; b < blocks_.size(); ++b) {
    const auto& blk = blocks_[b];
    auto& bc = c.blocks[b];
    bc.x = std::move(h);
    bc.a = blk.ln1.forward(bc.x, &bc.ln1);
    attention_forward(blk, bc, S, L, mask);
    bc.x1 = blk.wo.forward(bc.ctx);
    for (std::size_t i = 0; i < bc.x1.data.size(); ++i) bc.x1.data[i] += bc.x.data[i];
    bc.f = blk.ln2.forward(bc.x1, &bc.ln2);
    bc.u = blk.ff1.forward(bc.f);
    bc.g = bc.u;
    for (auto& v : bc.g.data) v = gelu(v);
    h = blk.ff2.forward(bc.g);
    for (std::size_t i = 0; i < h.data.size(); ++i) h.data[i] += bc.x1.data[i];
    if (!all_finite<T>(h.span()))
      throw NumericError("encode: non-finite activations after block " + std::to_string(b));
    if (!cache) {
      // keep only what attention_weights needs
      bc = typename EncoderBlock<T>::Cache{};
    }
  }

  c.last = std::move(h);
  Matrix<T> y = ln_final_.forward(c.last, &c.ln_final);
  c.pooled = Matrix<T>(S, D);
  for (int s = 0; s < S; ++s) {
    T* p = c.pooled.row(s);
    for (int i = 0; i < L; ++i) {
      if (!mask[s * L + i]) continue;
      const T* r = y.row(s * L + i);
      for (int d = 0; d < D; ++d) p[d] += r[d];
    }
    for (int d = 0; d < D; ++d) p[d] /= static_cast<T>(counts[s]);
  }
  c.p1 = proj1_.forward(c.pooled);
  c.g1 = c.p1;
  for (auto& v : c.g1.data) v = gelu(v);
  c.p2 = proj2_.forward(c.g1);
  const int E = config_.embed_dim;
  c.norms.assign(S, T(0));
  Matrix<T> out(S, E);
  for (int s = 0; s < S; ++s) {
    T n2 = 0;
    for (int e = 0; e < E; ++e) n2 += c.p2(s, e) * c.p2(s, e);
    const T n = std::sqrt(n2);
    if (!(n > T(0)) || !std::isfinite(n)) throw NumericError("encode: embedding norm is zero or non-finite");
    c.norms[s] = n;
    for (int e = 0; e < E; ++e) out(s, e) = c.p2(s, e) / n;
  }
  if (cache) c.embed = out;
  return out;
}

template <typename T>
Matrix<T> GameEncoder<T>::backward(const Cache& c, const Matrix<T>& d_embed) {
  const int S = c.seqs, L = c.length, D = config_.model_dim, E = config_.embed_dim;
  const int H = config_.num_heads, hd = config_.head_dim, A = config_.attn_dim();
  const T scale = T(1) / std::sqrt(static_cast<T>(hd));

  Matrix<T> dp2(S, E);
  for (int s = 0; s < S; ++s) {
    T dot = 0;
    for (int e = 0; e < E; ++e) dot += c.embed(s, e) * d_embed(s, e);
    for (int e = 0; e < E; ++e) dp2(s, e) = (d_embed(s, e) - c.embed(s, e) * dot) / c.norms[s];
  }
  Matrix<T> dg1;
  proj2_.backward(c.g1, dp2, &dg1);
  for (std::size_t i = 0; i < dg1.data.size(); ++i) dg1.data[i] *= gelu_grad(c.p1.data[i]);
  Matrix<T> dpooled;
  proj1_.backward(c.pooled, dg1, &dpooled);

  Matrix<T> dy(S * L, D);
  for (int s = 0; s < S; ++s) {
    const T inv = T(1) / static_cast<T>(c.counts[s]);
    for (int i = 0; i < L; ++i) {
      if (!c.mask[s * L + i]) continue;
      T* r = dy.row(s * L + i);
      for (int d = 0; d < D; ++d) r[d] = dpooled(s, d) * inv;
    }
  }
  Matrix<T> dh = ln_final_.backward(c.ln_final, dy);

  for (std::size_t b = blocks_.size(); b-- > 0;) {
    auto& blk = blocks_[b];
    const auto& bc = c.blocks[b];
    // feed-forward branch
    Matrix<T> dg;
    blk.ff2.backward(bc.g, dh, &dg);
    for (std::size_t i = 0; i < dg.data.size(); ++i) dg.data[i] *= gelu_grad(bc.u.data[i]);
    Matrix<T> df;
    blk.ff1.backward(bc.f, dg, &df);
    Matrix<T> dx1 = blk.ln2.backward(bc.ln2, df);
    for (std::size_t i = 0; i < dx1.data.size(); ++i) dx1.data[i] += dh.data[i];

    // attention branch
    Matrix<T> dctx;
    blk.wo.backward(bc.ctx, dx1, &dctx);
    Matrix<T> dq(S * L, A), dk(S * L, A), dv(S * L, A);
#pragma omp parallel for collapse(2) schedule(static)
    for (int s = 0; s < S; ++s) {
      for (int h = 0; h < H; ++h) {
        const T* P = bc.probs.data() + (static_cast<std::size_t>(s) * H + h) * L * L;
        std::vector<T> ds(L);
        for (int i = 0; i < L; ++i) {
          const T* Pi = P + static_cast<std::size_t>(i) * L;
          const T* dci = dctx.row(s * L + i) + h * hd;
          T rowdot = 0;
          for (int j = 0; j < L; ++j) {
            ds[j] = 0;
            if (!c.mask[s * L + j]) continue;
            const T* vj = bc.v.row(s * L + j) + h * hd;
            T* dvj = dv.row(s * L + j) + h * hd;
            T dp = 0;
            for (int d = 0; d < hd; ++d) {
              dp += dci[d] * vj[d];
              dvj[d] += Pi[j] * dci[d];
            }
            ds[j] = dp;
            rowdot += Pi[j] * dp;
          }
          const T* qi = bc.q.row(s * L + i) + h * hd;
          T* dqi = dq.row(s * L + i) + h * hd;
          for (int j = 0; j < L; ++j) {
            if (!c.mask[s * L + j]) continue;
            const T g = Pi[j] * (ds[j] - rowdot) * scale;
            const T* kj = bc.k.row(s * L + j) + h * hd;
            T* dkj = dk.row(s * L + j) + h * hd;
            for (int d = 0; d < hd; ++d) {
              dqi[d] += g * kj[d];
              dkj[d] += g * qi[d];
            }
          }
        }
      }
    }
    Matrix<T> da, tmp;
    blk.wq.backward(bc.a, dq, &da);
    blk.wk.backward(bc.a, dk, &tmp);
    for (std::size_t i = 0; i < da.data.size(); ++i) da.data[i] += tmp.data[i];
    blk.wv.backward(bc.a, dv, &tmp);
    for (std::size_t i = 0; i < da.data.size(); ++i) da.data[i] += tmp.data[i];
    dh = blk.ln1.backward(bc.ln1, da);
    for (std::size_t i = 0; i < dh.data.size(); ++i) dh.data[i] += dx1.data[i];
  }

  Matrix<T> dfeatures;
  in_proj_.backward(c.features, dh, &dfeatures);
  return dfeatures;
}

template <typename T>
std::vector<std::vector<Matrix<T>>> GameEncoder<T>::attention_weights(const Matrix<T>& features,
                                                                      const Mask& mask) const {
  Cache c;
  forward(features, mask, features.rows, &c);
  const int L = features.rows, H = config_.num_heads;
  std::vector<std::vector<Matrix<T>>> out(blocks_.size());
  for (std::size_t b = 0; b < blocks_.size(); ++b) {
    for (int h = 0; h < H; ++h) {
      Matrix<T> m(L, L);
      std::copy_n(c.blocks[b].probs.data() + static_cast<std::size_t>(h) * L * L, L * L, m.data.data());
      out[b].push_back(std::move(m));
    }
  }
  return out;
}

template <typename T>
ParamList<T> GameEncoder<T>::params() {
  ParamList<T> out;
  in_proj_.collect(out);
  for (auto& b : blocks_) b.collect(out);
  ln_final_.collect(out);
  proj1_.collect(out);
  proj2_.collect(out);
  return out;
}

template <typename T>
std::size_t GameEncoder<T>::parameter_count() const {
  std::size_t n = 0;
  for (auto* p : const_cast<GameEncoder*>(this)->params())
    if (p->trainable) n += p->size();
  return n;
}

template <typename T>
void GameEncoder<T>::zero_grad() {
  for (auto* p : params()) p->zero_grad();
}

template struct EncoderBlock<float>;
template struct EncoderBlock<double>;
template class GameEncoder<float>;
template class GameEncoder<double>;

}  // namespace stylo::model
