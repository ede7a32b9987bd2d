#pragma once

// Opening-move baseline: 4096-dim from/to count vectors per game, centroids
// and cosine identification through the same code path as the model.

#include <optional>
#include <string>
#include <vector>

#include "stylo/chess.hpp"
#include "stylo/pgn_ingest.hpp"
#include "stylo/rng.hpp"
#include "stylo/stylometry_eval.hpp"

namespace stylo::baseline {

constexpr int kMoveIndexDim = 4096;
constexpr int kWindow = 5;

/// 64 * from + to (a1 = 0). Promotion piece ignored; castling uses the king's
/// squares. Throws std::invalid_argument for a null move (from == to).
int move_to_index(const chess::Move& move);
int move_to_index(const std::string& uci);

struct MoveIndexVector {
  std::vector<double> values = std::vector<double>(kMoveIndexDim, 0.0);
  int n_moves = 0;
};

/// The player's moves at 0-based indices k..k+4. nullopt when the player made
/// fewer than k+5 moves. With `window_rng`, the 5-move window starts at a
/// uniformly random index >= k instead.
std::optional<MoveIndexVector> game_vector_5hot(const ingest::GameRecord& record, const std::string& player, int k,
                                                Rng* window_rng = nullptr);

/// All of the player's moves from index k on; nullopt when there are none.
std::optional<MoveIndexVector> game_vector_all_moves(const ingest::GameRecord& record, const std::string& player,
                                                     int k);

eval::PlayerVector baseline_player_vector(const std::string& player, const std::vector<MoveIndexVector>& games);
std::vector<eval::Ranked> baseline_identify(const eval::PlayerVector& query,
                                            const std::vector<eval::PlayerVector>& candidates);

enum class Mode { five_hot, all_moves };

class BaselineEmbedder : public eval::Embedder {
 public:
  /// random_window_seed enables the random 5-move window (five_hot only).
  explicit BaselineEmbedder(Mode mode, std::optional<std::uint64_t> random_window_seed = std::nullopt);
  std::size_t dim() const override { return kMoveIndexDim; }
  bool usable(const ingest::GameRecord& game, const std::string& player, int k) const override;
  std::vector<std::vector<double>> embed(const std::vector<const ingest::GameRecord*>& games, const std::string& player,
                                         int k) override;

 private:
  Mode mode_;
  std::optional<std::uint64_t> seed_;
};

}  // namespace stylo::baseline
