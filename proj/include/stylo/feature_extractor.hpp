#pragma once

// Residual squeeze-and-excitation tower: B x 34x8x8 move planes -> B x output_dim
// move features.
//
//   input conv3x3 (34 -> C) + BN + ReLU
//   num_blocks x [conv3x3, BN, ReLU, conv3x3, BN, SE, +skip, ReLU]
//   conv1x1 (C -> output_dim) + bias
//   global average pool over the 64 squares

#include <cstdint>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "stylo/nn.hpp"

namespace stylo::model {

struct ExtractorConfig {
  int num_blocks = 6;
  int channels = 64;
  int se_ratio = 8;
  int output_dim = 320;

  int se_hidden() const { return channels / se_ratio; }
  /// Throws std::invalid_argument on a bad configuration.
  void validate() const;
  friend bool operator==(const ExtractorConfig&, const ExtractorConfig&) = default;
};

void to_json(nlohmann::json& j, const ExtractorConfig& c);
void from_json(const nlohmann::json& j, ExtractorConfig& c);

/// Closed-form trainable parameter count for a configuration.
std::size_t extractor_parameter_count(const ExtractorConfig& c);

enum class SeMode {
  normal,
  forced_ones,  // excitation computed but replaced by a gate of 1
  bypass,       // SE skipped entirely
};

template <typename T>
struct SqueezeExcite {
  Linear<T> fc1, fc2;
  int channels = 0;

  struct Cache {
    Matrix<T> x;       // [B*64, C]
    Matrix<T> pooled;  // [B, C]
    Matrix<T> hidden;  // relu(fc1(pooled))
    Matrix<T> gate;    // sigmoid(fc2(hidden))
  };

  SqueezeExcite() = default;
  SqueezeExcite(const std::string& name, int c, int hidden);
  Matrix<T> forward(const Matrix<T>& x, int batch, SeMode mode, Cache* cache) const;
  Matrix<T> backward(const Cache& cache, const Matrix<T>& dy, int batch, SeMode mode);
};

template <typename T>
struct ResidualBlock {
  Param<T> conv1, conv2;  // [9, C, C]
  BatchNorm<T> bn1, bn2;
  SqueezeExcite<T> se;

  struct Cache {
    Matrix<T> x;
    typename BatchNorm<T>::Cache bn1, bn2;
    Matrix<T> h1;
    typename SqueezeExcite<T>::Cache se;
    Matrix<T> out;
  };

  ResidualBlock() = default;
  ResidualBlock(const std::string& name, int channels, int se_hidden);
  Matrix<T> forward(const Matrix<T>& x, int batch, Mode mode, SeMode se_mode, Cache* cache) const;
  Matrix<T> backward(const Cache& cache, const Matrix<T>& dout, int batch, SeMode se_mode);
};

template <typename T>
class FeatureExtractor {
 public:
  struct Cache {
    int batch = 0;
    SeMode se_mode = SeMode::normal;
    Matrix<T> input;  // NHWC [B*64, 34]
    typename BatchNorm<T>::Cache bn_in;
    Matrix<T> stem;  // after ReLU
    std::vector<typename ResidualBlock<T>::Cache> blocks;
    Matrix<T> pooled;  // last block output averaged over squares
  };

  static constexpr int kInputChannels = 34;

  FeatureExtractor(const ExtractorConfig& config, std::uint64_t seed);

  const ExtractorConfig& config() const { return config_; }

  /// `planes` holds `batch` moves, each 34*64 floats channel-major.
  Matrix<T> forward(std::span<const T> planes, int batch, Mode mode, Cache* cache = nullptr,
                    SeMode se_mode = SeMode::normal) const;
  /// Accumulates parameter gradients for d(loss)/d(output).
  void backward(const Cache& cache, const Matrix<T>& d_out);
  void update_running_stats(const Cache& cache);

  ParamList<T> params();
  std::size_t parameter_count() const;
  void zero_grad();

  /// Runs the first residual block alone on NHWC activations (test hook).
  Matrix<T> block_forward(int index, const Matrix<T>& x, int batch, Mode mode, SeMode se_mode) const {
    return blocks_.at(index).forward(x, batch, mode, se_mode, nullptr);
  }

 private:
  ExtractorConfig config_;
  Param<T> conv_in_;
  BatchNorm<T> bn_in_;
  std::vector<ResidualBlock<T>> blocks_;
  Linear<T> expand_;
};

}  // namespace stylo::model
