#pragma once

// Seeded "stylized" bots and round-robin corpora with known identities.
//
// A bot scores each legal move one ply deep: material, a piece-square table
// perturbed by the style seed, a penalty for leaving the moved piece en prise,
// a hashed jitter keyed by (style seed, position, move), and during its first
// few moves a seeded preference over from/to pairs (its opening repertoire).

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "stylo/chess.hpp"
#include "stylo/pgn_ingest.hpp"
#include "stylo/rng.hpp"

namespace stylo::synth {

struct BotPolicy {
  std::string id;
  std::uint64_t style_seed = 0;
  double strength_noise = 0;
  std::array<std::array<double, 64>, 6> pst{};  // [piece type - 1][square], White's view
  std::vector<double> opening_bonus;            // [64 * from + to]
  int opening_moves = 6;

  /// Legal moves, best first (ties by UCI string).
  std::vector<std::pair<chess::Move, double>> ranked_moves(const chess::Position& pos, int own_move_index) const;
  /// Top move with probability 1 - strength_noise, else uniform over the top 3.
  chess::Move choose(const chess::Position& pos, int own_move_index, Rng& rng) const;
};

BotPolicy make_bot(std::uint64_t style_seed, double strength_noise, const std::string& id = "");

struct GameLimits {
  int max_plies = 200;
};

/// Plays one game to mate, stalemate, the fifty-move rule, threefold
/// repetition, insufficient material or the ply cap.
ingest::GameRecord play_game(const BotPolicy& white, const BotPolicy& black, std::uint64_t game_seed,
                             const std::string& game_id, const GameLimits& limits = {});

struct SynthConfig {
  int bots = 8;
  int games_per_pair = 24;  // per ordered pair (each colour assignment)
  std::uint64_t seed = 0;
  double strength_noise = 0.1;
  GameLimits limits;
};

struct SynthCorpus {
  std::vector<BotPolicy> bots;
  std::string pgn;       // the generated games as PGN text
  ingest::Corpus corpus;  // after parsing that text back and splitting
};

/// Round robin over ordered pairs. The PGN text is parsed back through the
/// ingest pipeline (filters relaxed to keep every bot) to build the splits.
SynthCorpus generate_corpus(const std::vector<BotPolicy>& bots, int games_per_pair, std::uint64_t seed,
                            const GameLimits& limits = {});
SynthCorpus generate_corpus(const SynthConfig& config);

/// The ingest filter used for synthetic corpora.
ingest::FilterConfig synthetic_filter(std::uint64_t seed);

}  // namespace stylo::synth
