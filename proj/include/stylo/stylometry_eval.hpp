#pragma once

// Player vectors, nearest-centroid identification and task metrics.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "stylo/model.hpp"
#include "stylo/pgn_ingest.hpp"

namespace stylo::eval {

struct GameEmbedding {
  std::string game_id;
  std::string player_id;
  std::vector<double> values;
};

struct PlayerVector {
  std::string player_id;
  std::vector<double> values;
  std::size_t n_games = 0;
};

/// Componentwise mean, not re-normalised. Throws on an empty list, mixed
/// players or ragged dimensions.
PlayerVector player_vector(const std::vector<GameEmbedding>& embeddings);
PlayerVector player_vector(const std::string& player_id, const std::vector<std::vector<double>>& vectors);

double cosine_distance(const std::vector<double>& a, const std::vector<double>& b);

struct Ranked {
  std::string player_id;
  double distance = 0;
};

/// Full ranking by ascending cosine distance, ties by player id.
std::vector<Ranked> identify(const PlayerVector& query, const std::vector<PlayerVector>& candidates);

/// Fraction of targets whose truth is within the first n entries.
double precision_at_n(const std::vector<std::vector<Ranked>>& rankings, const std::vector<std::string>& truths, int n);
double mean_reciprocal_rank(const std::vector<std::vector<Ranked>>& rankings, const std::vector<std::string>& truths);

struct StylometryTask {
  std::vector<std::string> candidates;  // C
  std::vector<std::string> evaluation;  // E, subset of C
  int ref_size = 100;
  int query_size = 100;
  int k = 15;
  std::uint64_t seed = 0;
  std::string data;  // optional corpus directory

  /// Throws std::invalid_argument (E not in C, empty pools, bad sizes).
  void validate() const;
};

void to_json(nlohmann::json& j, const StylometryTask& t);
/// Strict schema: unknown keys are rejected, and the result is validated.
void from_json(const nlohmann::json& j, StylometryTask& t);

/// Anything that maps (game, player, k) to a fixed-size vector.
class Embedder {
 public:
  virtual ~Embedder() = default;
  virtual std::size_t dim() const = 0;
  virtual bool usable(const ingest::GameRecord& game, const std::string& player, int k) const = 0;
  virtual std::vector<std::vector<double>> embed(const std::vector<const ingest::GameRecord*>& games,
                                                 const std::string& player, int k) = 0;
};

class ModelEmbedder : public Embedder {
 public:
  /// max_moves > 0 caps each game at its first max_moves moves after k.
  explicit ModelEmbedder(const model::StyleModel& model, int max_moves = 0) : model_(model), max_moves_(max_moves) {}
  std::size_t dim() const override;
  bool usable(const ingest::GameRecord& game, const std::string& player, int k) const override;
  std::vector<std::vector<double>> embed(const std::vector<const ingest::GameRecord*>& games, const std::string& player,
                                         int k) override;

 private:
  const model::StyleModel& model_;
  int max_moves_;
};

struct TargetResult {
  std::string player_id;
  std::size_t query_games = 0;
  std::size_t rank = 0;            // 1-based rank of the truth
  std::vector<Ranked> ranking;     // full ranking
};

struct TaskResult {
  StylometryTask task;
  std::vector<TargetResult> targets;
  std::map<std::string, std::size_t> reference_games;  // effective |x_r| per candidate
  double p_at_1 = 0;
  double p_at_5 = 0;
  double mrr = 0;
};

/// Serialises the top 10 of each ranking.
nlohmann::json to_json(const TaskResult& r);

/// Up to `count` usable games from one partition, drawn in a seeded order.
/// Unusable draws are replaced by later ones.
std::vector<const ingest::GameRecord*> draw_games(const ingest::Corpus& corpus, const std::vector<std::string>& ids,
                                                  const std::string& player, int count, int k, const Embedder& embedder,
                                                  std::uint64_t seed, const std::string& salt);

/// Reference games from the manifest's reference partition, query games from
/// the query partition. Throws std::invalid_argument naming every pool
/// member left with no usable games.
TaskResult run_task(const StylometryTask& task, Embedder& embedder, const ingest::Corpus& corpus,
                    std::vector<PlayerVector>* centroids_out = nullptr);

/// P@1 per group (e.g. bucket or rating band) over the task's targets.
std::map<std::string, double> grouped_p_at_1(const TaskResult& result, const std::map<std::string, std::string>& group_of);

/// "STYCENT1", u32 version, u32 dim, u64 count, ids (u32 length + bytes),
/// then count x dim float32, all little-endian.
void write_centroid_index(const std::filesystem::path& path, const std::vector<PlayerVector>& vectors);
std::vector<PlayerVector> read_centroid_index(const std::filesystem::path& path);

}  // namespace stylo::eval
