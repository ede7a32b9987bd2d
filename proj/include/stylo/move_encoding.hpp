#pragma once

// One player move -> 34x8x8 planes; one game -> sequence of such moves.
//
// Channel map:
//   0-11   before-move board: white P N B R Q K, black P N B R Q K
//   12-23  after-move board, same order
//   24     before board already occurred earlier in the game
//   25     after board already occurred earlier in the game
//   26-29  castling rights K Q k q of the before board (constant planes)
//   30     side to move of the before board (ones if White)
//   31     halfmove clock of the before board / 100, clipped to 1
//   32     edge mask (ones on the 28 border squares)
//   33     ones
//
// Boards are in absolute orientation: square index = file + 8 * rank, a1 = 0.

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "stylo/chess.hpp"
#include "stylo/pgn_ingest.hpp"
#include "stylo/rng.hpp"

namespace stylo::encoding {

constexpr int kChannels = 34;
constexpr int kSquares = 64;
constexpr int kPlaneFloats = kChannels * kSquares;

constexpr int kRepetitionBefore = 24;
constexpr int kRepetitionAfter = 25;
constexpr int kCastlingBase = 26;
constexpr int kSideToMove = 30;
constexpr int kFiftyMove = 31;
constexpr int kBorder = 32;
constexpr int kOnes = 33;

class EncodingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Dense planes, channel-major: planes[c * 64 + square].
struct MoveTensor {
  std::vector<float> planes = std::vector<float>(kPlaneFloats, 0.0f);
  int move_index = 0;

  float at(int channel, chess::Square s) const { return planes[channel * kSquares + s]; }
};

/// Compact form of a MoveTensor (about 140 bytes instead of 8.7 KB).
struct EncodedMove {
  std::array<chess::PieceCode, 64> before{};
  std::array<chess::PieceCode, 64> after{};
  std::uint8_t castling = 0;
  bool repeated_before = false;
  bool repeated_after = false;
  bool white_to_move = true;
  std::uint8_t halfmove_clock = 0;
  bool padding = false;
  int move_index = 0;

  /// Writes the 34*64 planes into `out` (zeros for padding entries).
  void write_planes(std::span<float> out) const;
  MoveTensor expand() const;

  friend bool operator==(const EncodedMove&, const EncodedMove&) = default;
};

/// Positions seen so far in the game, keyed by chess::Position::key().
struct GameState {
  std::vector<std::uint64_t> history;  // keys of every position before `before`
};

/// Encodes the transition before -> after. Throws EncodingError when `after`
/// is not reachable from `before` by one legal move.
EncodedMove encode_move_compact(const chess::Position& before, const chess::Position& after,
                                const GameState& state, int move_index = 0);
MoveTensor encode_move(const chess::Position& before, const chess::Position& after, const GameState& state,
                       int move_index = 0);

const std::array<float, 64>& border_mask();

struct GameSequence {
  std::vector<EncodedMove> moves;
  std::vector<bool> mask;
  std::string game_id;
  std::string player_id;
  chess::Color color = chess::Color::white;
  int k_start = 0;

  std::size_t size() const { return moves.size(); }
  std::size_t real_count() const;
  MoveTensor tensor(std::size_t i) const { return moves[i].expand(); }

  friend bool operator==(const GameSequence&, const GameSequence&) = default;
};

/// The target player's moves with 0-based index >= k. Returns nullopt (skip)
/// when the player made <= k moves. Throws EncodingError if the player did
/// not take part in the game or the move list is illegal.
std::optional<GameSequence> encode_game(const ingest::GameRecord& record, const std::string& player_id, int k);

/// Longer sequences: uniform random contiguous window of `length`.
/// Shorter ones: zero-padded tail with mask=false.
GameSequence pad_or_window(const GameSequence& seq, int length, Rng& rng);

/// Binary cache of encoded sequences: "STYSEQ01", u32 version, u32 channels,
/// u32 height, u32 width, u64 count, then per sequence: game id, player id
/// (u32 length + bytes), u8 color, i32 k_start, u32 length, u8 mask[length],
/// and per position i32 move_index followed by 34*64 float32 planes.
/// All integers and floats little-endian.
void write_sequence_cache(const std::filesystem::path& path, std::span<const GameSequence> seqs);
std::vector<GameSequence> read_sequence_cache(const std::filesystem::path& path);

}  // namespace stylo::encoding
