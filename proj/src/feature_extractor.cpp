#include "stylo/feature_extractor.hpp"

#include <cmath>
#include <stdexcept>

#include "stylo/kernels.hpp"

namespace stylo::model {

void ExtractorConfig::validate() const {
  if (num_blocks < 1 || channels < 1 || se_ratio < 1 || output_dim < 1)
    throw std::invalid_argument("extractor config: all fields must be >= 1");
  if (channels % se_ratio != 0)
    throw std::invalid_argument("extractor config: channels (" + std::to_string(channels) +
                                ") not divisible by se_ratio (" + std::to_string(se_ratio) + ")");
}

void to_json(nlohmann::json& j, const ExtractorConfig& c) {
  j = {{"num_blocks", c.num_blocks}, {"channels", c.channels}, {"se_ratio", c.se_ratio}, {"output_dim", c.output_dim}};
}

void from_json(const nlohmann::json& j, ExtractorConfig& c) {
  for (const auto& [key, value] : j.items()) {
    if (key == "num_blocks") c.num_blocks = value.get<int>();
    else if (key == "channels") c.channels = value.get<int>();
    else if (key == "se_ratio") c.se_ratio = value.get<int>();
    else if (key == "output_dim") c.output_dim = value.get<int>();
    else throw std::invalid_argument("extractor config: unknown key '" + key + "'");
  }
}

std::size_t extractor_parameter_count(const ExtractorConfig& c) {
  const std::size_t C = c.channels, h = c.se_hidden(), O = c.output_dim;
  const std::size_t stem = 9 * 34 * C + 2 * C;
  const std::size_t block = 2 * (9 * C * C + 2 * C) + (C * h + h) + (h * C + C);
  return stem + c.num_blocks * block + C * O + O;
}

namespace {

template <typename T>
T sigmoid(T x) {
  return T(1) / (T(1) + std::exp(-x));
}

template <typename T>
Matrix<T> conv(const Matrix<T>& x, const Param<T>& w, int batch, int cout) {
  Matrix<T> y(x.rows, cout);
  kernels::conv3x3_forward<T>(x.span(), w.value, y.span(), batch, x.cols, cout);
  return y;
}

}  // namespace

// ---------------------------------------------------------------- SE

template <typename T>
SqueezeExcite<T>::SqueezeExcite(const std::string& name, int c, int hidden)
    : fc1(name + ".fc1", c, hidden), fc2(name + ".fc2", hidden, c), channels(c) {}

template <typename T>
Matrix<T> SqueezeExcite<T>::forward(const Matrix<T>& x, int batch, SeMode mode, Cache* cache) const {
  if (mode == SeMode::bypass) {
    if (cache) cache->x = x;
    return x;
  }
  const int C = channels;
  Matrix<T> pooled(batch, C);
  for (int b = 0; b < batch; ++b) {
    T* p = pooled.row(b);
    for (int s = 0; s < 64; ++s) {
      const T* r = x.row(b * 64 + s);
      for (int c = 0; c < C; ++c) p[c] += r[c];
    }
    for (int c = 0; c < C; ++c) p[c] /= T(64);
  }
  Matrix<T> hidden = fc1.forward(pooled);
  relu_inplace(hidden);
  Matrix<T> gate = fc2.forward(hidden);
  for (auto& g : gate.data) g = sigmoid(g);
  if (mode == SeMode::forced_ones) std::fill(gate.data.begin(), gate.data.end(), T(1));

  Matrix<T> y(x.rows, C);
  for (int b = 0; b < batch; ++b) {
    const T* g = gate.row(b);
    for (int s = 0; s < 64; ++s) {
      const T* r = x.row(b * 64 + s);
      T* o = y.row(b * 64 + s);
      for (int c = 0; c < C; ++c) o[c] = r[c] * g[c];
    }
  }
  if (cache) {
    cache->x = x;
    cache->pooled = std::move(pooled);
    cache->hidden = std::move(hidden);
    cache->gate = std::move(gate);
  }
  return y;
}

template <typename T>
Matrix<T> SqueezeExcite<T>::backward(const Cache& cache, const Matrix<T>& dy, int batch, SeMode mode) {
  if (mode != SeMode::normal) return dy;
  const int C = channels;
  const Matrix<T>& x = cache.x;
  Matrix<T> dx(dy.rows, C);
  Matrix<T> dz(batch, C);
  for (int b = 0; b < batch; ++b) {
    const T* g = cache.gate.row(b);
    T* dg = dz.row(b);
    for (int s = 0; s < 64; ++s) {
      const T* d = dy.row(b * 64 + s);
      const T* r = x.row(b * 64 + s);
      T* o = dx.row(b * 64 + s);
      for (int c = 0; c < C; ++c) {
        o[c] = d[c] * g[c];
        dg[c] += d[c] * r[c];
      }
    }
    for (int c = 0; c < C; ++c) dg[c] *= g[c] * (T(1) - g[c]);
  }
  Matrix<T> dhidden;
  fc2.backward(cache.hidden, dz, &dhidden);
  relu_backward_inplace(cache.hidden, dhidden);
  Matrix<T> dpooled;
  fc1.backward(cache.pooled, dhidden, &dpooled);
  for (int b = 0; b < batch; ++b) {
    const T* dp = dpooled.row(b);
    for (int s = 0; s < 64; ++s) {
      T* o = dx.row(b * 64 + s);
      for (int c = 0; c < C; ++c) o[c] += dp[c] / T(64);
    }
  }
  return dx;
}

// ---------------------------------------------------------------- residual block

template <typename T>
ResidualBlock<T>::ResidualBlock(const std::string& name, int channels, int se_hidden)
    : conv1(name + ".conv1", {9, channels, channels}),
      conv2(name + ".conv2", {9, channels, channels}),
      bn1(name + ".bn1", channels),
      bn2(name + ".bn2", channels),
      se(name + ".se", channels, se_hidden) {}

template <typename T>
Matrix<T> ResidualBlock<T>::forward(const Matrix<T>& x, int batch, Mode mode, SeMode se_mode, Cache* cache) const {
  const int C = x.cols;
  Matrix<T> h1 = bn1.forward(conv(x, conv1, batch, C), mode, cache ? &cache->bn1 : nullptr);
  relu_inplace(h1);
  Matrix<T> h2 = bn2.forward(conv(h1, conv2, batch, C), mode, cache ? &cache->bn2 : nullptr);
  Matrix<T> out = se.forward(h2, batch, se_mode, cache ? &cache->se : nullptr);
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += x.data[i];
  relu_inplace(out);
  if (cache) {
    cache->x = x;
    cache->h1 = std::move(h1);
    cache->out = out;
  }
  return out;
}

template <typename T>
Matrix<T> ResidualBlock<T>::backward(const Cache& cache, const Matrix<T>& dout, int batch, SeMode se_mode) {
  const int C = dout.cols;
  Matrix<T> d = dout;
  relu_backward_inplace(cache.out, d);
  Matrix<T> dh2 = se.backward(cache.se, d, batch, se_mode);
  Matrix<T> dc2 = bn2.backward(cache.bn2, dh2);
  kernels::conv3x3_backward_weight<T>(cache.h1.span(), dc2.span(), conv2.grad, batch, C, C, true);
  Matrix<T> dh1(dc2.rows, C);
  kernels::conv3x3_backward_input<T>(dc2.span(), conv2.value, dh1.span(), batch, C, C);
  relu_backward_inplace(cache.h1, dh1);
  Matrix<T> dc1 = bn1.backward(cache.bn1, dh1);
  kernels::conv3x3_backward_weight<T>(cache.x.span(), dc1.span(), conv1.grad, batch, C, C, true);
  Matrix<T> dx(dc1.rows, C);
  kernels::conv3x3_backward_input<T>(dc1.span(), conv1.value, dx.span(), batch, C, C);
  for (std::size_t i = 0; i < dx.data.size(); ++i) dx.data[i] += d.data[i];
  return dx;
}

// ---------------------------------------------------------------- extractor

template <typename T>
FeatureExtractor<T>::FeatureExtractor(const ExtractorConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  const int C = config_.channels;
  conv_in_ = Param<T>("extractor.conv_in", {9, kInputChannels, C});
  bn_in_ = BatchNorm<T>("extractor.bn_in", C);
  for (int i = 0; i < config_.num_blocks; ++i)
    blocks_.emplace_back("extractor.block" + std::to_string(i), C, config_.se_hidden());
  expand_ = Linear<T>("extractor.expand", C, config_.output_dim);

  Rng rng(seed);
  init_normal(conv_in_, rng, std::sqrt(2.0 / (9.0 * kInputChannels)));
  for (auto& b : blocks_) {
    init_normal(b.conv1, rng, std::sqrt(2.0 / (9.0 * C)));
    init_normal(b.conv2, rng, std::sqrt(2.0 / (9.0 * C)));
    b.se.fc1.init(rng, std::sqrt(2.0 / C));
    b.se.fc2.init(rng, std::sqrt(1.0 / config_.se_hidden()));
  }
  expand_.init(rng, std::sqrt(1.0 / C));
}

template <typename T>
Matrix<T> FeatureExtractor<T>::forward(std::span<const T> planes, int batch, Mode mode, Cache* cache,
                                       SeMode se_mode) const {
  const std::size_t expected = static_cast<std::size_t>(batch) * kInputChannels * 64;
  if (batch < 0 || planes.size() != expected)
    throw std::invalid_argument("extract: shape mismatch, expected " + std::to_string(batch) + "x34x8x8 = " +
                                std::to_string(expected) + " values, got " + std::to_string(planes.size()));
  const int C = config_.channels;

  // channel-major planes -> NHWC
  Matrix<T> x(batch * 64, kInputChannels);
  for (int b = 0; b < batch; ++b) {
    const T* src = planes.data() + static_cast<std::size_t>(b) * kInputChannels * 64;
    for (int ch = 0; ch < kInputChannels; ++ch)
      for (int s = 0; s < 64; ++s) x(b * 64 + s, ch) = src[ch * 64 + s];
  }

  Matrix<T> h = bn_in_.forward(conv(x, conv_in_, batch, C), mode, cache ? &cache->bn_in : nullptr);
  relu_inplace(h);
  if (cache) {
    cache->batch = batch;
    cache->se_mode = se_mode;
    cache->input = std::move(x);
    cache->stem = h;
    cache->blocks.assign(blocks_.size(), {});
  }
  for (std::size_t i = 0; i < blocks_.size(); ++i)
    h = blocks_[i].forward(h, batch, mode, se_mode, cache ? &cache->blocks[i] : nullptr);

  // The 1x1 expansion is linear, so averaging over squares first is exact.
  Matrix<T> pooled(batch, C);
  for (int b = 0; b < batch; ++b) {
    T* p = pooled.row(b);
    for (int s = 0; s < 64; ++s) {
      const T* r = h.row(b * 64 + s);
      for (int c = 0; c < C; ++c) p[c] += r[c];
    }
    for (int c = 0; c < C; ++c) p[c] /= T(64);
  }
  Matrix<T> out = expand_.forward(pooled);
  if (cache) cache->pooled = std::move(pooled);
  if (!all_finite<T>(out.span())) throw NumericError("extract: non-finite move features");
  return out;
}

template <typename T>
void FeatureExtractor<T>::backward(const Cache& cache, const Matrix<T>& d_out) {
  const int batch = cache.batch, C = config_.channels;
  Matrix<T> dpooled;
  expand_.backward(cache.pooled, d_out, &dpooled);
  Matrix<T> dh(batch * 64, C);
  for (int b = 0; b < batch; ++b) {
    const T* g = dpooled.row(b);
    for (int s = 0; s < 64; ++s) {
      T* r = dh.row(b * 64 + s);
      for (int c = 0; c < C; ++c) r[c] = g[c] / T(64);
    }
  }
  for (std::size_t i = blocks_.size(); i-- > 0;) dh = blocks_[i].backward(cache.blocks[i], dh, batch, cache.se_mode);
  relu_backward_inplace(cache.stem, dh);
  Matrix<T> dc = bn_in_.backward(cache.bn_in, dh);
  kernels::conv3x3_backward_weight<T>(cache.input.span(), dc.span(), conv_in_.grad, batch, kInputChannels, C, true);
}

template <typename T>
void FeatureExtractor<T>::update_running_stats(const Cache& cache) {
  bn_in_.update_running(cache.bn_in);
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    blocks_[i].bn1.update_running(cache.blocks[i].bn1);
    blocks_[i].bn2.update_running(cache.blocks[i].bn2);
  }
}

template <typename T>
ParamList<T> FeatureExtractor<T>::params() {
  ParamList<T> out{&conv_in_};
  bn_in_.collect(out);
  for (auto& b : blocks_) {
    out.push_back(&b.conv1);
    b.bn1.collect(out);
    out.push_back(&b.conv2);
    b.bn2.collect(out);
    b.se.fc1.collect(out);
    b.se.fc2.collect(out);
  }
  expand_.collect(out);
  return out;
}

template <typename T>
std::size_t FeatureExtractor<T>::parameter_count() const {
  std::size_t n = 0;
  for (auto* p : const_cast<FeatureExtractor*>(this)->params())
    if (p->trainable) n += p->size();
  return n;
}

template <typename T>
void FeatureExtractor<T>::zero_grad() {
  for (auto* p : params()) p->zero_grad();
}

template struct SqueezeExcite<float>;
template struct SqueezeExcite<double>;
template struct ResidualBlock<float>;
template struct ResidualBlock<double>;
template class FeatureExtractor<float>;
template class FeatureExtractor<double>;

}  // namespace stylo::model
