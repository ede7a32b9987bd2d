#include "stylo/chess.hpp"

#include <algorithm>
#include <cstdlib>
#include <cctype>
#include <sstream>

namespace stylo::chess {

namespace {

constexpr std::array<std::pair<int, int>, 8> kKnightSteps{
    {{1, 2}, {2, 1}, {2, -1}, {1, -2}, {-1, -2}, {-2, -1}, {-2, 1}, {-1, 2}}};
constexpr std::array<std::pair<int, int>, 8> kKingSteps{
    {{1, 0}, {1, 1}, {0, 1}, {-1, 1}, {-1, 0}, {-1, -1}, {0, -1}, {1, -1}}};
constexpr std::array<std::pair<int, int>, 4> kRookDirs{{{1, 0}, {-1, 0}, {0, 1}, {0, -1}}};
constexpr std::array<std::pair<int, int>, 4> kBishopDirs{{{1, 1}, {1, -1}, {-1, 1}, {-1, -1}}};

constexpr std::array<PieceType, 4> kPromotions{PieceType::queen, PieceType::rook, PieceType::bishop,
                                               PieceType::knight};

bool on_board(int file, int rank) { return file >= 0 && file < 8 && rank >= 0 && rank < 8; }

char piece_letter(PieceType t) {
  switch (t) {
    case PieceType::pawn: return 'p';
    case PieceType::knight: return 'n';
    case PieceType::bishop: return 'b';
    case PieceType::rook: return 'r';
    case PieceType::queen: return 'q';
    case PieceType::king: return 'k';
    default: return '?';
  }
}

PieceType piece_from_letter(char c) {
  switch (std::tolower(static_cast<unsigned char>(c))) {
    case 'p': return PieceType::pawn;
    case 'n': return PieceType::knight;
    case 'b': return PieceType::bishop;
    case 'r': return PieceType::rook;
    case 'q': return PieceType::queen;
    case 'k': return PieceType::king;
    default: return PieceType::none;
  }
}

std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

struct ZobristTables {
  std::array<std::array<std::uint64_t, 64>, 13> piece{};
  std::uint64_t black_to_move = 0;
  std::array<std::uint64_t, 16> castling{};
  std::array<std::uint64_t, 8> ep_file{};

  ZobristTables() {
    std::uint64_t state = 0x5EED5EED5EEDULL;
    for (auto& row : piece)
      for (auto& v : row) v = splitmix64(state);
    black_to_move = splitmix64(state);
    for (auto& v : castling) v = splitmix64(state);
    for (auto& v : ep_file) v = splitmix64(state);
  }
};

const ZobristTables& zobrist() {
  static const ZobristTables tables;
  return tables;
}

}  // namespace

std::string square_name(Square s) {
  return {static_cast<char>('a' + file_of(s)), static_cast<char>('1' + rank_of(s))};
}

std::optional<Square> parse_square(std::string_view name) {
  if (name.size() != 2) return std::nullopt;
  const int f = name[0] - 'a';
  const int r = name[1] - '1';
  if (!on_board(f, r)) return std::nullopt;
  return make_square(f, r);
}

std::string Move::uci() const {
  std::string s = square_name(from) + square_name(to);
  if (promotion != PieceType::none) s += piece_letter(promotion);
  return s;
}

Position Position::initial() {
  return from_fen("rnbqkbnr/pppppppp/8/8/8/8/PPPPPPPP/RNBQKBNR w KQkq - 0 1");
}

Position Position::from_fen(std::string_view fen) {
  std::istringstream in{std::string(fen)};
  std::string placement, side, castling, ep;
  int halfmove = 0;
  int fullmove = 1;
  in >> placement >> side >> castling >> ep;
  if (!in) throw std::invalid_argument("malformed FEN: " + std::string(fen));
  if (!(in >> halfmove)) halfmove = 0;
  if (!(in >> fullmove)) fullmove = 1;

  Position pos;
  int rank = 7;
  int file = 0;
  for (char c : placement) {
    if (c == '/') {
      --rank;
      file = 0;
    } else if (std::isdigit(static_cast<unsigned char>(c))) {
      file += c - '0';
    } else {
      const PieceType t = piece_from_letter(c);
      if (t == PieceType::none || !on_board(file, rank))
        throw std::invalid_argument("malformed FEN placement: " + placement);
      pos.board_[make_square(file, rank)] =
          make_piece(t, std::isupper(static_cast<unsigned char>(c)) ? Color::white : Color::black);
      ++file;
    }
  }
  if (rank != 0) throw std::invalid_argument("malformed FEN placement: " + placement);
  pos.side_ = side == "b" ? Color::black : Color::white;
  for (char c : castling) {
    if (c == 'K') pos.castling_ |= white_king_side;
    if (c == 'Q') pos.castling_ |= white_queen_side;
    if (c == 'k') pos.castling_ |= black_king_side;
    if (c == 'q') pos.castling_ |= black_queen_side;
  }
  if (ep != "-") {
    auto sq = parse_square(ep);
    if (!sq) throw std::invalid_argument("malformed FEN en passant: " + ep);
    pos.ep_ = *sq;
  }
  pos.halfmove_ = halfmove;
  pos.fullmove_ = fullmove;
  return pos;
}

std::string Position::placement() const {
  std::string out;
  for (int rank = 7; rank >= 0; --rank) {
    int empty = 0;
    for (int file = 0; file < 8; ++file) {
      const PieceCode p = board_[make_square(file, rank)];
      if (p == 0) {
        ++empty;
        continue;
      }
      if (empty) out += static_cast<char>('0' + empty);
      empty = 0;
      const char c = piece_letter(piece_type(p));
      out += piece_color(p) == Color::white ? static_cast<char>(std::toupper(c)) : c;
    }
    if (empty) out += static_cast<char>('0' + empty);
    if (rank) out += '/';
  }
  return out;
}

std::string Position::fen() const {
  std::string cr;
  if (castling_ & white_king_side) cr += 'K';
  if (castling_ & white_queen_side) cr += 'Q';
  if (castling_ & black_king_side) cr += 'k';
  if (castling_ & black_queen_side) cr += 'q';
  if (cr.empty()) cr = "-";
  std::ostringstream out;
  out << placement() << ' ' << (side_ == Color::white ? 'w' : 'b') << ' ' << cr << ' '
      << (ep_ >= 0 ? square_name(ep_) : "-") << ' ' << halfmove_ << ' ' << fullmove_;
  return out.str();
}

Square Position::king_square(Color c) const {
  const PieceCode k = make_piece(PieceType::king, c);
  for (Square s = 0; s < 64; ++s)
    if (board_[s] == k) return s;
  return -1;
}

bool Position::attacked_by(Square s, Color attacker) const {
  const int f = file_of(s);
  const int r = rank_of(s);
  // Pawns attack diagonally forward, so look one rank "behind" s from the attacker's view.
  const int pawn_rank = attacker == Color::white ? r - 1 : r + 1;
  for (int df : {-1, 1}) {
    if (on_board(f + df, pawn_rank) &&
        board_[make_square(f + df, pawn_rank)] == make_piece(PieceType::pawn, attacker))
      return true;
  }
  for (auto [df, dr] : kKnightSteps) {
    if (on_board(f + df, r + dr) &&
        board_[make_square(f + df, r + dr)] == make_piece(PieceType::knight, attacker))
      return true;
  }
  for (auto [df, dr] : kKingSteps) {
    if (on_board(f + df, r + dr) &&
        board_[make_square(f + df, r + dr)] == make_piece(PieceType::king, attacker))
      return true;
  }
  auto slide = [&](auto dirs, PieceType a, PieceType b) {
    for (auto [df, dr] : dirs) {
      int ff = f + df, rr = r + dr;
      while (on_board(ff, rr)) {
        const PieceCode p = board_[make_square(ff, rr)];
        if (p != 0) {
          if (piece_color(p) == attacker && (piece_type(p) == a || piece_type(p) == b)) return true;
          break;
        }
        ff += df;
        rr += dr;
      }
    }
    return false;
  };
  return slide(kRookDirs, PieceType::rook, PieceType::queen) ||
         slide(kBishopDirs, PieceType::bishop, PieceType::queen);
}

bool Position::in_check() const {
  const Square k = king_square(side_);
  return k >= 0 && attacked_by(k, opposite(side_));
}

void Position::pseudo_moves(std::vector<Move>& out) const {
  const Color us = side_;
  const Color them = opposite(us);
  const int forward = us == Color::white ? 1 : -1;
  const int start_rank = us == Color::white ? 1 : 6;
  const int last_rank = us == Color::white ? 7 : 0;

  auto push = [&](Square from, Square to) {
    out.push_back({static_cast<std::uint8_t>(from), static_cast<std::uint8_t>(to), PieceType::none});
  };
  auto push_pawn = [&](Square from, Square to) {
    if (rank_of(to) == last_rank) {
      for (PieceType promo : kPromotions)
        out.push_back({static_cast<std::uint8_t>(from), static_cast<std::uint8_t>(to), promo});
    } else {
      push(from, to);
    }
  };

  for (Square s = 0; s < 64; ++s) {
    const PieceCode p = board_[s];
    if (p == 0 || piece_color(p) != us) continue;
    const int f = file_of(s);
    const int r = rank_of(s);
    switch (piece_type(p)) {
      case PieceType::pawn: {
        const int r1 = r + forward;
        if (on_board(f, r1) && board_[make_square(f, r1)] == 0) {
          push_pawn(s, make_square(f, r1));
          const int r2 = r + 2 * forward;
          if (r == start_rank && board_[make_square(f, r2)] == 0) push(s, make_square(f, r2));
        }
        for (int df : {-1, 1}) {
          if (!on_board(f + df, r1)) continue;
          const Square t = make_square(f + df, r1);
          const PieceCode target = board_[t];
          if ((target != 0 && piece_color(target) == them) || t == ep_) push_pawn(s, t);
        }
        break;
      }
      case PieceType::knight:
      case PieceType::king: {
        const auto& steps = piece_type(p) == PieceType::knight ? kKnightSteps : kKingSteps;
        for (auto [df, dr] : steps) {
          if (!on_board(f + df, r + dr)) continue;
          const Square t = make_square(f + df, r + dr);
          if (board_[t] == 0 || piece_color(board_[t]) == them) push(s, t);
        }
        break;
      }
      default: {
        auto slide = [&](auto dirs) {
          for (auto [df, dr] : dirs) {
            int ff = f + df, rr = r + dr;
            while (on_board(ff, rr)) {
              const Square t = make_square(ff, rr);
              if (board_[t] != 0) {
                if (piece_color(board_[t]) == them) push(s, t);
                break;
              }
              push(s, t);
              ff += df;
              rr += dr;
            }
          }
        };
        const PieceType t = piece_type(p);
        if (t == PieceType::rook || t == PieceType::queen) slide(kRookDirs);
        if (t == PieceType::bishop || t == PieceType::queen) slide(kBishopDirs);
        break;
      }
    }
  }

  // Castling: rights, empty path, king not in or passing through check.
  const int home = us == Color::white ? 0 : 7;
  const Square e = make_square(4, home);
  if (board_[e] != make_piece(PieceType::king, us)) return;
  const PieceCode rook = make_piece(PieceType::rook, us);
  const std::uint8_t ks = us == Color::white ? white_king_side : black_king_side;
  const std::uint8_t qs = us == Color::white ? white_queen_side : black_queen_side;
  if ((castling_ & ks) && board_[make_square(7, home)] == rook && board_[make_square(5, home)] == 0 &&
      board_[make_square(6, home)] == 0 && !attacked_by(e, them) &&
      !attacked_by(make_square(5, home), them) && !attacked_by(make_square(6, home), them))
    push(e, make_square(6, home));
  if ((castling_ & qs) && board_[make_square(0, home)] == rook && board_[make_square(1, home)] == 0 &&
      board_[make_square(2, home)] == 0 && board_[make_square(3, home)] == 0 &&
      !attacked_by(e, them) && !attacked_by(make_square(3, home), them) &&
      !attacked_by(make_square(2, home), them))
    push(e, make_square(2, home));
}

Position Position::play_unchecked(const Move& m) const {
  Position next = *this;
  const PieceCode piece = board_[m.from];
  const PieceType type = piece_type(piece);
  const bool capture = board_[m.to] != 0;
  next.board_[m.from] = 0;
  next.board_[m.to] = m.promotion != PieceType::none ? make_piece(m.promotion, side_) : piece;

  bool ep_capture = false;
  if (type == PieceType::pawn && m.to == ep_ && file_of(m.from) != file_of(m.to) && !capture) {
    ep_capture = true;
    next.board_[make_square(file_of(m.to), rank_of(m.from))] = 0;
  }
  if (type == PieceType::king && std::abs(file_of(m.to) - file_of(m.from)) == 2) {
    const int home = rank_of(m.from);
    if (file_of(m.to) == 6) {
      next.board_[make_square(5, home)] = next.board_[make_square(7, home)];
      next.board_[make_square(7, home)] = 0;
    } else {
      next.board_[make_square(3, home)] = next.board_[make_square(0, home)];
      next.board_[make_square(0, home)] = 0;
    }
  }

  if (type == PieceType::king)
    next.castling_ &= side_ == Color::white ? ~(white_king_side | white_queen_side)
                                            : ~(black_king_side | black_queen_side);
  for (Square s : {static_cast<int>(m.from), static_cast<int>(m.to)}) {
    if (s == 0) next.castling_ &= ~white_queen_side;
    if (s == 7) next.castling_ &= ~white_king_side;
    if (s == 56) next.castling_ &= ~black_queen_side;
    if (s == 63) next.castling_ &= ~black_king_side;
  }

  next.ep_ = -1;
  if (type == PieceType::pawn && std::abs(rank_of(m.to) - rank_of(m.from)) == 2)
    next.ep_ = (m.from + m.to) / 2;

  next.halfmove_ = (type == PieceType::pawn || capture || ep_capture) ? 0 : halfmove_ + 1;
  if (side_ == Color::black) ++next.fullmove_;
  next.side_ = opposite(side_);
  return next;
}

bool Position::leaves_king_safe(const Move& m) const {
  const Position next = play_unchecked(m);
  const Square k = next.king_square(side_);
  return k >= 0 && !next.attacked_by(k, next.side_);
}

std::vector<Move> Position::legal_moves() const {
  std::vector<Move> pseudo;
  pseudo.reserve(64);
  pseudo_moves(pseudo);
  std::vector<Move> legal;
  legal.reserve(pseudo.size());
  for (const Move& m : pseudo)
    if (leaves_king_safe(m)) legal.push_back(m);
  return legal;
}

bool Position::is_legal(const Move& m) const {
  const auto moves = legal_moves();
  return std::find(moves.begin(), moves.end(), m) != moves.end();
}

bool Position::is_checkmate() const { return in_check() && legal_moves().empty(); }
bool Position::is_stalemate() const { return !in_check() && legal_moves().empty(); }

int Position::piece_count() const {
  return static_cast<int>(std::count_if(board_.begin(), board_.end(), [](PieceCode p) { return p != 0; }));
}

bool Position::insufficient_material() const {
  int minors = 0;
  for (PieceCode p : board_) {
    switch (piece_type(p)) {
      case PieceType::pawn:
      case PieceType::rook:
      case PieceType::queen: return false;
      case PieceType::knight:
      case PieceType::bishop: ++minors; break;
      default: break;
    }
  }
  return minors <= 1;
}

Position Position::play(const Move& m) const {
  if (!is_legal(m)) throw IllegalMove("illegal move " + m.uci() + " in " + fen());
  return play_unchecked(m);
}

Move Position::parse_uci(std::string_view uci) const {
  if (uci.size() < 4 || uci.size() > 5) throw IllegalMove("malformed UCI move: " + std::string(uci));
  const auto from = parse_square(uci.substr(0, 2));
  const auto to = parse_square(uci.substr(2, 2));
  if (!from || !to) throw IllegalMove("malformed UCI move: " + std::string(uci));
  Move m{static_cast<std::uint8_t>(*from), static_cast<std::uint8_t>(*to), PieceType::none};
  if (uci.size() == 5) {
    m.promotion = piece_from_letter(uci[4]);
    if (m.promotion == PieceType::none || m.promotion == PieceType::pawn || m.promotion == PieceType::king)
      throw IllegalMove("malformed UCI promotion: " + std::string(uci));
  }
  if (!is_legal(m)) throw IllegalMove("illegal move " + std::string(uci) + " in " + fen());
  return m;
}

Move Position::parse_san(std::string_view san_in) const {
  std::string san(san_in);
  while (!san.empty() && std::string_view("+#!?").find(san.back()) != std::string_view::npos)
    san.pop_back();
  if (san.empty()) throw IllegalMove("empty SAN");

  const auto legal = legal_moves();
  const int home = side_ == Color::white ? 0 : 7;
  if (san == "O-O" || san == "0-0" || san == "O-O-O" || san == "0-0-0") {
    const Move m{static_cast<std::uint8_t>(make_square(4, home)),
                 static_cast<std::uint8_t>(make_square(san.size() == 3 ? 6 : 2, home)), PieceType::none};
    if (board_[m.from] == make_piece(PieceType::king, side_) &&
        std::find(legal.begin(), legal.end(), m) != legal.end())
      return m;
    throw IllegalMove("illegal castling " + san + " in " + fen());
  }

  std::string body = san;
  PieceType moving = PieceType::pawn;
  if (std::string_view("NBRQK").find(body.front()) != std::string_view::npos) {
    moving = piece_from_letter(body.front());
    body.erase(0, 1);
  }
  PieceType promo = PieceType::none;
  if (auto eq = body.find('='); eq != std::string::npos) {
    if (eq + 1 < body.size()) promo = piece_from_letter(body[eq + 1]);
    body.erase(eq);
  } else if (moving == PieceType::pawn && !body.empty() &&
             std::string_view("NBRQnbrq").find(body.back()) != std::string_view::npos &&
             body.size() >= 3 && std::isdigit(static_cast<unsigned char>(body[body.size() - 2]))) {
    promo = piece_from_letter(body.back());
    body.pop_back();
  }
  if (body.size() < 2) throw IllegalMove("malformed SAN: " + san);
  const auto dest = parse_square(body.substr(body.size() - 2));
  if (!dest) throw IllegalMove("malformed SAN: " + san);
  body.erase(body.size() - 2);
  int from_file = -1;
  int from_rank = -1;
  for (char c : body) {
    if (c == 'x' || c == '-' || c == ':') continue;
    if (c >= 'a' && c <= 'h') from_file = c - 'a';
    else if (c >= '1' && c <= '8') from_rank = c - '1';
    else throw IllegalMove("malformed SAN: " + san);
  }

  std::optional<Move> found;
  for (const Move& m : legal) {
    if (m.to != *dest || piece_type(board_[m.from]) != moving || m.promotion != promo) continue;
    if (from_file >= 0 && file_of(m.from) != from_file) continue;
    if (from_rank >= 0 && rank_of(m.from) != from_rank) continue;
    if (moving == PieceType::pawn && from_file < 0 && file_of(m.from) != file_of(m.to)) continue;
    if (found) throw IllegalMove("ambiguous SAN " + san + " in " + fen());
    found = m;
  }
  if (!found) throw IllegalMove("illegal SAN " + san + " in " + fen());
  return *found;
}

std::string Position::to_san(const Move& m) const {
  const PieceType type = piece_type(board_[m.from]);
  std::string san;
  if (type == PieceType::king && std::abs(file_of(m.to) - file_of(m.from)) == 2) {
    san = file_of(m.to) == 6 ? "O-O" : "O-O-O";
  } else {
    const bool capture = board_[m.to] != 0 || (type == PieceType::pawn && file_of(m.from) != file_of(m.to));
    if (type == PieceType::pawn) {
      if (capture) san += static_cast<char>('a' + file_of(m.from));
    } else {
      san += static_cast<char>(std::toupper(piece_letter(type)));
      bool clash = false, same_file = false, same_rank = false;
      for (const Move& other : legal_moves()) {
        if (other.to != m.to || other.from == m.from || piece_type(board_[other.from]) != type) continue;
        clash = true;
        same_file |= file_of(other.from) == file_of(m.from);
        same_rank |= rank_of(other.from) == rank_of(m.from);
      }
      if (clash) {
        if (!same_file) san += static_cast<char>('a' + file_of(m.from));
        else if (!same_rank) san += static_cast<char>('1' + rank_of(m.from));
        else san += square_name(m.from);
      }
    }
    if (capture) san += 'x';
    san += square_name(m.to);
    if (m.promotion != PieceType::none) {
      san += '=';
      san += static_cast<char>(std::toupper(piece_letter(m.promotion)));
    }
  }
  const Position next = play_unchecked(m);
  if (next.in_check()) san += next.legal_moves().empty() ? '#' : '+';
  return san;
}

bool Position::has_legal_ep_capture() const {
  if (ep_ < 0) return false;
  const int capture_rank = side_ == Color::white ? 4 : 3;
  const PieceCode pawn = make_piece(PieceType::pawn, side_);
  for (int df : {-1, 1}) {
    const int f = file_of(ep_) + df;
    if (f < 0 || f > 7) continue;
    const Square from = make_square(f, capture_rank);
    if (board_[from] != pawn) continue;
    if (leaves_king_safe({static_cast<std::uint8_t>(from), static_cast<std::uint8_t>(ep_), PieceType::none}))
      return true;
  }
  return false;
}

std::uint64_t Position::key() const {
  const auto& z = zobrist();
  std::uint64_t h = 0;
  for (Square s = 0; s < 64; ++s)
    if (board_[s]) h ^= z.piece[board_[s]][s];
  if (side_ == Color::black) h ^= z.black_to_move;
  h ^= z.castling[castling_ & 15];
  if (has_legal_ep_capture()) h ^= z.ep_file[file_of(ep_)];
  return h;
}

}  // namespace stylo::chess
