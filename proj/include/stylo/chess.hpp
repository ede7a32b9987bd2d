#pragma once

// Minimal standard-chess rules engine: legal move generation, SAN/UCI
// conversion and FEN I/O. Used for replay validation, move encoding and
// the synthetic bot players.

#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace stylo::chess {

enum class Color : std::uint8_t { white = 0, black = 1 };

constexpr Color opposite(Color c) { return c == Color::white ? Color::black : Color::white; }

enum class PieceType : std::uint8_t { none = 0, pawn, knight, bishop, rook, queen, king };

/// Piece code: 0 empty, 1..6 white pawn..king, 7..12 black pawn..king.
using PieceCode = std::int8_t;

constexpr PieceCode make_piece(PieceType t, Color c) {
  return static_cast<PieceCode>(static_cast<int>(t) + (c == Color::black ? 6 : 0));
}
constexpr PieceType piece_type(PieceCode p) {
  return p == 0 ? PieceType::none : static_cast<PieceType>((p - 1) % 6 + 1);
}
constexpr Color piece_color(PieceCode p) { return p > 6 ? Color::black : Color::white; }

/// a1 = 0 ... h8 = 63, index = file + 8 * rank.
using Square = int;

constexpr int file_of(Square s) { return s & 7; }
constexpr int rank_of(Square s) { return s >> 3; }
constexpr Square make_square(int file, int rank) { return file + 8 * rank; }

std::string square_name(Square s);
std::optional<Square> parse_square(std::string_view name);

enum CastlingRight : std::uint8_t {
  white_king_side = 1,
  white_queen_side = 2,
  black_king_side = 4,
  black_queen_side = 8,
};

struct Move {
  std::uint8_t from = 0;
  std::uint8_t to = 0;
  PieceType promotion = PieceType::none;

  bool is_null() const { return from == to; }
  std::string uci() const;
  friend bool operator==(const Move&, const Move&) = default;
};

class IllegalMove : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class Position {
 public:
  static Position initial();
  static Position from_fen(std::string_view fen);

  std::string fen() const;
  /// Piece placement field of the FEN only.
  std::string placement() const;

  PieceCode at(Square s) const { return board_[s]; }
  const std::array<PieceCode, 64>& squares() const { return board_; }
  Color side_to_move() const { return side_; }
  std::uint8_t castling() const { return castling_; }
  int ep_square() const { return ep_; }
  int halfmove_clock() const { return halfmove_; }
  int fullmove_number() const { return fullmove_; }

  std::vector<Move> legal_moves() const;
  bool is_legal(const Move& m) const;
  bool in_check() const;
  bool is_checkmate() const;
  bool is_stalemate() const;
  bool insufficient_material() const;
  int piece_count() const;

  /// Returns the position after `m`; throws IllegalMove if `m` is not legal.
  Position play(const Move& m) const;
  /// Same as play() without the legality check; `m` must come from legal_moves().
  Position play_unchecked(const Move& m) const;

  Move parse_uci(std::string_view uci) const;
  Move parse_san(std::string_view san) const;
  std::string to_san(const Move& m) const;

  /// Zobrist key over placement, side, castling rights and a capturable
  /// en-passant square. Equal keys identify repeated positions.
  std::uint64_t key() const;

  bool attacked_by(Square s, Color attacker) const;

  friend bool operator==(const Position&, const Position&) = default;

 private:
  void pseudo_moves(std::vector<Move>& out) const;
  bool leaves_king_safe(const Move& m) const;
  bool has_legal_ep_capture() const;
  Square king_square(Color c) const;

  std::array<PieceCode, 64> board_{};
  Color side_ = Color::white;
  std::uint8_t castling_ = 0;
  int ep_ = -1;
  int halfmove_ = 0;
  int fullmove_ = 1;
};

}  // namespace stylo::chess
