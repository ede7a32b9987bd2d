#include "stylo/openings_baseline.hpp"

#include <stdexcept>

namespace stylo::baseline {

int move_to_index(const chess::Move& move) {
  if (move.is_null()) throw std::invalid_argument("move_to_index: null move");
  return 64 * move.from + move.to;
}

int move_to_index(const std::string& uci) {
  if (uci.size() < 4) throw std::invalid_argument("move_to_index: malformed move '" + uci + "'");
  const auto from = chess::parse_square(std::string_view(uci).substr(0, 2));
  const auto to = chess::parse_square(std::string_view(uci).substr(2, 2));
  if (!from || !to) throw std::invalid_argument("move_to_index: malformed move '" + uci + "'");
  if (*from == *to) throw std::invalid_argument("move_to_index: null move '" + uci + "'");
  return 64 * *from + *to;
}

namespace {

std::vector<std::string> player_moves(const ingest::GameRecord& record, const std::string& player) {
  const auto color = record.color_of(player);
  if (!color) throw std::invalid_argument("baseline: " + player + " did not play game " + record.game_id);
  std::vector<std::string> out;
  for (std::size_t i = *color == chess::Color::white ? 0 : 1; i < record.moves.size(); i += 2)
    out.push_back(record.moves[i]);
  return out;
}

MoveIndexVector accumulate(const std::vector<std::string>& moves, std::size_t begin, std::size_t end) {
  MoveIndexVector v;
  for (std::size_t i = begin; i < end; ++i) {
    v.values[move_to_index(moves[i])] += 1.0;
    ++v.n_moves;
  }
  return v;
}

}  // namespace

std::optional<MoveIndexVector> game_vector_5hot(const ingest::GameRecord& record, const std::string& player, int k,
                                                Rng* window_rng) {
  if (k < 0) throw std::invalid_argument("game_vector_5hot: negative k");
  const auto moves = player_moves(record, player);
  if (moves.size() < static_cast<std::size_t>(k) + kWindow) return std::nullopt;
  std::size_t start = k;
  if (window_rng) start += window_rng->uniform_index(moves.size() - k - kWindow + 1);
  return accumulate(moves, start, start + kWindow);
}

std::optional<MoveIndexVector> game_vector_all_moves(const ingest::GameRecord& record, const std::string& player,
                                                     int k) {
  if (k < 0) throw std::invalid_argument("game_vector_all_moves: negative k");
  const auto moves = player_moves(record, player);
  if (moves.size() <= static_cast<std::size_t>(k)) return std::nullopt;
  return accumulate(moves, k, moves.size());
}

eval::PlayerVector baseline_player_vector(const std::string& player, const std::vector<MoveIndexVector>& games) {
  std::vector<std::vector<double>> vs;
  vs.reserve(games.size());
  for (const auto& g : games) vs.push_back(g.values);
  return eval::player_vector(player, vs);
}

std::vector<eval::Ranked> baseline_identify(const eval::PlayerVector& query,
                                            const std::vector<eval::PlayerVector>& candidates) {
  return eval::identify(query, candidates);
}

BaselineEmbedder::BaselineEmbedder(Mode mode, std::optional<std::uint64_t> random_window_seed)
    : mode_(mode), seed_(random_window_seed) {}

bool BaselineEmbedder::usable(const ingest::GameRecord& game, const std::string& player, int k) const {
  const auto color = game.color_of(player);
  if (!color) return false;
  const int n = game.moves_by(*color);
  return mode_ == Mode::five_hot ? n >= k + kWindow : n > k;
}

std::vector<std::vector<double>> BaselineEmbedder::embed(const std::vector<const ingest::GameRecord*>& games,
                                                         const std::string& player, int k) {
  std::vector<std::vector<double>> out;
  for (const auto* g : games) {
    std::optional<MoveIndexVector> v;
    if (mode_ == Mode::all_moves) {
      v = game_vector_all_moves(*g, player, k);
    } else if (seed_) {
      Rng rng(mix_seed(*seed_, g->game_id + ":" + player));
      v = game_vector_5hot(*g, player, k, &rng);
    } else {
      v = game_vector_5hot(*g, player, k);
    }
    if (!v) throw std::invalid_argument("baseline: game " + g->game_id + " too short at k=" + std::to_string(k));
    out.push_back(std::move(v->values));
  }
  return out;
}

}  // namespace stylo::baseline
