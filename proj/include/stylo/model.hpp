#pragma once

// Extractor + encoder + GE2E scalars, and the checkpoint container.
//
// Checkpoint layout (little-endian):
//   "STYCKPT1"  u32 version  u64 manifest_bytes  manifest (JSON text)
//   u32 array_count, then per array: name (u32 length + bytes), u32 ndim,
//   u32 dims[ndim], float32 values
// The manifest holds the configs, step, w, b, optimizer scalars, rng state,
// config hash and the array inventory.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "stylo/feature_extractor.hpp"
#include "stylo/game_encoder.hpp"
#include "stylo/move_encoding.hpp"

namespace stylo::model {

class StyleModel {
 public:
  StyleModel(const ExtractorConfig& extractor, EncoderConfig encoder, std::uint64_t seed, double w0 = 10.0,
             double b0 = -5.0);

  FeatureExtractor<float> extractor;
  GameEncoder<float> encoder;
  double w;
  double b;

  /// Every array that goes into a checkpoint (trainable and running stats).
  ParamList<float> params();
  ParamList<float> trainable_params();

  /// Evaluation-mode embeddings, one unit row per sequence. Sequences are
  /// embedded at their own length; `max_moves` > 0 keeps only the first
  /// `max_moves` positions of each.
  Matrix<float> embed(const std::vector<encoding::GameSequence>& seqs, int max_moves = 0) const;

  /// Move features for a set of equal-length sequences, scattered into
  /// [S*L, output_dim] with zero rows at padded positions.
  struct Forward {
    FeatureExtractor<float>::Cache extractor;
    GameEncoder<float>::Cache encoder;
    std::vector<int> real_rows;  // row in [S*L] for every extracted move
  };
  Matrix<float> forward(const std::vector<encoding::GameSequence>& seqs, Mode mode, Forward* cache) const;
  /// Backward through encoder and extractor for d(loss)/d(embeddings).
  void backward(const Forward& cache, const Matrix<float>& d_embed);
};

/// Stacked planes for the real (unpadded) moves of the sequences.
std::vector<float> gather_planes(const std::vector<encoding::GameSequence>& seqs, std::vector<int>* real_rows,
                                 int length);

struct CheckpointArrays {
  std::map<std::string, std::pair<std::vector<int>, std::vector<float>>> arrays;
};

void write_checkpoint_file(const std::filesystem::path& path, const nlohmann::json& manifest,
                           const CheckpointArrays& arrays);
std::pair<nlohmann::json, CheckpointArrays> read_checkpoint_file(const std::filesystem::path& path);

/// FNV-1a of the compact JSON text, as 16 hex digits.
std::string config_hash(const nlohmann::json& config);

/// Loads only the model part of a checkpoint.
StyleModel load_model(const std::filesystem::path& path);

}  // namespace stylo::model
