#pragma once

// Episodic GE2E training with momentum SGD.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "stylo/model.hpp"
#include "stylo/move_encoding.hpp"
#include "stylo/pgn_ingest.hpp"

namespace stylo::train {

struct TrainConfig {
  int n_players = 40;
  int m_games = 20;
  int window = 32;
  double lr0 = 0.01;
  double momentum = 0.9;
  long halve_every = 40000;
  double w0 = 10.0;
  double b0 = -5.0;
  double wb_grad_scale = 0.01;
  std::uint64_t seed = 0;
  long max_steps = 0;
  long checkpoint_every = 0;  // 0: only the final checkpoint
  long validate_every = 100;  // 0: only before and after training
  int validation_episodes = 4;
  model::ExtractorConfig extractor;
  model::EncoderConfig encoder;

  /// Throws std::invalid_argument.
  void validate() const;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
/// Strict: unknown keys are rejected. Missing keys keep their defaults.
void from_json(const nlohmann::json& j, TrainConfig& c);

/// lr0 * 0.5^floor(step / halve_every)
double learning_rate(long step, const TrainConfig& config);

/// Encoded sequences (k = 0, full length) of each eligible player's games.
struct TrainingIndex {
  std::vector<std::string> players;
  std::vector<std::vector<encoding::GameSequence>> games;  // parallel to players

  std::size_t size() const { return players.size(); }
};

enum class Partition { train, reference, query };

/// Seen players from the manifest, using the chosen split partition. Players
/// with fewer than `min_games` encodable games are left out.
TrainingIndex build_index(const ingest::Corpus& corpus, Partition part, std::size_t min_games);

struct Episode {
  std::vector<std::string> players;            // N
  std::vector<encoding::GameSequence> games;   // N*M, player-major, each of length `window`
};

/// Throws std::invalid_argument when fewer than N players have >= M games.
Episode sample_episode(const TrainingIndex& index, const TrainConfig& config, Rng& rng);

struct StepMetrics {
  long step = 0;  // steps completed after this update
  double loss = 0;
  double lr = 0;
  double w = 0;
  double b = 0;
  double grad_norm = 0;
};

nlohmann::json to_json(const StepMetrics& m);

struct TrainState {
  TrainConfig config;
  model::StyleModel model;
  std::vector<std::vector<float>> velocity;  // parallel to model.trainable_params()
  double velocity_w = 0;
  double velocity_b = 0;
  long step = 0;
  Rng rng;

  explicit TrainState(const TrainConfig& config);
};

/// GE2E loss of an episode with frozen batch-norm statistics.
double episode_loss(const model::StyleModel& model, const Episode& episode);

/// One forward/backward pass and momentum-SGD update.
/// Throws NumericError when the loss or gradients are not finite.
StepMetrics train_step(TrainState& state, const Episode& episode);

struct TrainOptions {
  std::optional<std::filesystem::path> checkpoint_dir;
  std::ostream* metrics = nullptr;  // NDJSON, one record per step plus validation records
  const TrainingIndex* validation = nullptr;
  /// Stop (and checkpoint) before max_steps, as if interrupted.
  std::optional<long> stop_at;
};

struct TrainReport {
  std::vector<long> checkpoints;
  std::vector<StepMetrics> steps;
  std::vector<std::pair<long, double>> validation;  // (step, loss)
};

/// Runs from state.step to config.max_steps.
TrainReport train(TrainState& state, const TrainingIndex& index, const TrainOptions& options = {});

std::vector<Episode> validation_episodes(const TrainingIndex& validation, const TrainConfig& config);

void save_checkpoint(const std::filesystem::path& path, const TrainState& state);
TrainState load_checkpoint(const std::filesystem::path& path);
std::filesystem::path checkpoint_path(const std::filesystem::path& dir, long step);

}  // namespace stylo::train
