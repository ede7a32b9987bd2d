#pragma once

// Post-hoc analyses: opening labels, attention profiles, TSV export and the
// e4/d4 split distance.

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "stylo/model.hpp"
#include "stylo/pgn_ingest.hpp"
#include "stylo/stylometry_eval.hpp"

namespace stylo::analysis {

/// Modal first move (SAN, e.g. "e4") over games the player had White in.
/// Ties go to the lexicographically smaller UCI string; "none" without games.
std::string opening_label(const std::vector<ingest::GameRecord>& games_as_white);

/// Modal Black reply (SAN) to a given White first move (UCI); "none" if the
/// move never occurs.
std::string modal_reply(const std::vector<ingest::GameRecord>& games_as_black, const std::string& white_first_uci);

/// Attention received by each key position of one game: column sums of every
/// block/head attention matrix, averaged over blocks and heads. Sums to the
/// number of query positions.
std::vector<double> attention_received(const std::vector<std::vector<Matrix<float>>>& weights);

struct AttentionProfile {
  int k = 0;
  std::size_t games = 0;
  std::vector<int> positions;
  std::vector<double> mean;
  std::vector<double> stddev;       // population standard deviation
  std::vector<std::size_t> counts;  // games contributing to each position
  double spearman_rho = 0;          // mean attention vs position
};

nlohmann::json to_json(const AttentionProfile& p);

/// Games are (record, player) pairs; those too short for k are skipped.
/// max_moves > 0 caps each sequence.
AttentionProfile attention_profile(const model::StyleModel& model,
                                   const std::vector<std::pair<const ingest::GameRecord*, std::string>>& games, int k,
                                   int max_moves = 0);

/// Rank correlation with average ranks for ties. Returns 0 when either
/// side is constant.
double spearman_rho(const std::vector<double>& x, const std::vector<double>& y);

struct VectorMetadata {
  std::string player_id;
  std::string bucket;
  std::string opening;
  double rating = 0;
};

/// Writes <prefix>.vectors.tsv (one row of floats per vector) and
/// <prefix>.metadata.tsv (header + one row per vector).
void export_vectors(const std::string& prefix, const std::vector<std::vector<double>>& vectors,
                    const std::vector<VectorMetadata>& metadata);
std::vector<std::vector<double>> read_vectors_tsv(const std::filesystem::path& path);

struct SplitDistance {
  double within = 0;  // cosine distance between the e4 and d4 centroids
  double cross = 0;   // mean distance from the overall centroid to the others
  std::size_t e4_games = 0;
  std::size_t d4_games = 0;
};

/// Throws std::invalid_argument when either side of the split is empty.
SplitDistance split_distance(const std::vector<const ingest::GameRecord*>& games_as_white, const std::string& player,
                             eval::Embedder& embedder, int k, const std::vector<eval::PlayerVector>& others);

}  // namespace stylo::analysis
