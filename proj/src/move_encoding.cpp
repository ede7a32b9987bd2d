#include "stylo/move_encoding.hpp"

#include <algorithm>
#include <fstream>

#include "stylo/binary_io.hpp"

namespace stylo::encoding {

namespace {

constexpr char kCacheMagic[9] = "STYSEQ01";
constexpr std::uint32_t kCacheVersion = 1;

int piece_channel(chess::PieceCode p) {
  // white pawn..king -> 0..5, black pawn..king -> 6..11
  return p - 1;
}

void fill(std::span<float> out, int channel, float v) {
  std::fill_n(out.begin() + channel * kSquares, kSquares, v);
}

}  // namespace

const std::array<float, 64>& border_mask() {
  static const std::array<float, 64> mask = [] {
    std::array<float, 64> m{};
    for (int s = 0; s < 64; ++s) {
      const int f = chess::file_of(s), r = chess::rank_of(s);
      m[s] = (f == 0 || f == 7 || r == 0 || r == 7) ? 1.0f : 0.0f;
    }
    return m;
  }();
  return mask;
}

void EncodedMove::write_planes(std::span<float> out) const {
  if (out.size() != static_cast<std::size_t>(kPlaneFloats))
    throw EncodingError("plane buffer has " + std::to_string(out.size()) + " floats, expected " +
                        std::to_string(kPlaneFloats));
  std::fill(out.begin(), out.end(), 0.0f);
  if (padding) return;
  for (int s = 0; s < 64; ++s) {
    if (before[s]) out[piece_channel(before[s]) * kSquares + s] = 1.0f;
    if (after[s]) out[(12 + piece_channel(after[s])) * kSquares + s] = 1.0f;
  }
  if (repeated_before) fill(out, kRepetitionBefore, 1.0f);
  if (repeated_after) fill(out, kRepetitionAfter, 1.0f);
  for (int i = 0; i < 4; ++i)
    if (castling & (1u << i)) fill(out, kCastlingBase + i, 1.0f);
  if (white_to_move) fill(out, kSideToMove, 1.0f);
  fill(out, kFiftyMove, std::min(1.0f, static_cast<float>(halfmove_clock) / 100.0f));
  std::copy(border_mask().begin(), border_mask().end(), out.begin() + kBorder * kSquares);
  fill(out, kOnes, 1.0f);
}

MoveTensor EncodedMove::expand() const {
  MoveTensor t;
  write_planes(t.planes);
  t.move_index = move_index;
  return t;
}

EncodedMove encode_move_compact(const chess::Position& before, const chess::Position& after,
                                const GameState& state, int move_index) {
  bool reachable = false;
  for (const chess::Move& m : before.legal_moves()) {
    if (before.play_unchecked(m) == after) {
      reachable = true;
      break;
    }
  }
  if (!reachable)
    throw EncodingError("no legal move leads from [" + before.fen() + "] to [" + after.fen() + "]");

  EncodedMove e;
  e.before = before.squares();
  e.after = after.squares();
  e.castling = before.castling();
  e.white_to_move = before.side_to_move() == chess::Color::white;
  e.halfmove_clock = static_cast<std::uint8_t>(std::min(before.halfmove_clock(), 100));
  const auto& h = state.history;
  const std::uint64_t kb = before.key();
  const std::uint64_t ka = after.key();
  e.repeated_before = std::find(h.begin(), h.end(), kb) != h.end();
  e.repeated_after = ka == kb || std::find(h.begin(), h.end(), ka) != h.end();
  e.move_index = move_index;
  return e;
}

MoveTensor encode_move(const chess::Position& before, const chess::Position& after, const GameState& state,
                       int move_index) {
  return encode_move_compact(before, after, state, move_index).expand();
}

std::size_t GameSequence::real_count() const {
  return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), true));
}

std::optional<GameSequence> encode_game(const ingest::GameRecord& record, const std::string& player_id, int k) {
  const auto color = record.color_of(player_id);
  if (!color) throw EncodingError("player " + player_id + " did not play game " + record.game_id);
  if (record.moves_by(*color) <= k) return std::nullopt;

  GameSequence seq;
  seq.game_id = record.game_id;
  seq.player_id = player_id;
  seq.color = *color;
  seq.k_start = k;

  GameState state;
  chess::Position pos = chess::Position::initial();
  int player_move = 0;
  for (const auto& uci : record.moves) {
    chess::Move m;
    try {
      m = pos.parse_uci(uci);
    } catch (const chess::IllegalMove& e) {
      throw EncodingError("game " + record.game_id + ": " + e.what());
    }
    const chess::Position next = pos.play_unchecked(m);
    if (pos.side_to_move() == *color) {
      if (player_move >= k) {
        EncodedMove e;
        e.before = pos.squares();
        e.after = next.squares();
        e.castling = pos.castling();
        e.white_to_move = pos.side_to_move() == chess::Color::white;
        e.halfmove_clock = static_cast<std::uint8_t>(std::min(pos.halfmove_clock(), 100));
        const std::uint64_t kb = pos.key();
        const std::uint64_t ka = next.key();
        const auto& h = state.history;
        e.repeated_before = std::find(h.begin(), h.end(), kb) != h.end();
        e.repeated_after = ka == kb || std::find(h.begin(), h.end(), ka) != h.end();
        e.move_index = player_move;
        seq.moves.push_back(e);
      }
      ++player_move;
    }
    state.history.push_back(pos.key());
    pos = next;
  }
  seq.mask.assign(seq.moves.size(), true);
  return seq;
}

GameSequence pad_or_window(const GameSequence& seq, int length, Rng& rng) {
  if (length < 1) throw std::invalid_argument("window length must be >= 1");
  GameSequence out;
  out.game_id = seq.game_id;
  out.player_id = seq.player_id;
  out.color = seq.color;
  const std::size_t len = static_cast<std::size_t>(length);
  const std::size_t real = seq.real_count();
  if (real > len) {
    const std::size_t start = rng.uniform_index(real - len + 1);
    out.moves.assign(seq.moves.begin() + start, seq.moves.begin() + start + len);
    out.mask.assign(len, true);
    out.k_start = seq.moves[start].move_index;
    return out;
  }
  out.moves.assign(seq.moves.begin(), seq.moves.begin() + real);
  out.mask.assign(real, true);
  out.k_start = seq.k_start;
  EncodedMove pad;
  pad.padding = true;
  while (out.moves.size() < len) {
    pad.move_index = out.moves.empty() ? seq.k_start : out.moves.back().move_index + 1;
    out.moves.push_back(pad);
    out.mask.push_back(false);
  }
  return out;
}

void write_sequence_cache(const std::filesystem::path& path, std::span<const GameSequence> seqs) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw EncodingError("cannot write " + path.string());
  binio::write_magic(out, kCacheMagic);
  binio::write_u32(out, kCacheVersion);
  binio::write_u32(out, kChannels);
  binio::write_u32(out, 8);
  binio::write_u32(out, 8);
  binio::write_u64(out, seqs.size());
  std::vector<float> planes(kPlaneFloats);
  for (const auto& s : seqs) {
    binio::write_string(out, s.game_id);
    binio::write_string(out, s.player_id);
    binio::write_u8(out, s.color == chess::Color::white ? 0 : 1);
    binio::write_i32(out, s.k_start);
    binio::write_u32(out, static_cast<std::uint32_t>(s.moves.size()));
    for (bool m : s.mask) binio::write_u8(out, m ? 1 : 0);
    for (const auto& mv : s.moves) {
      binio::write_i32(out, mv.move_index);
      mv.write_planes(planes);
      binio::write_f32_array<float>(out, planes);
    }
  }
}

namespace {

EncodedMove decode_planes(std::span<const float> p, int move_index, bool padding) {
  EncodedMove e;
  e.move_index = move_index;
  if (padding) {
    e.padding = true;
    return e;
  }
  for (int c = 0; c < 12; ++c) {
    for (int s = 0; s < 64; ++s) {
      if (p[c * kSquares + s] > 0.5f) e.before[s] = static_cast<chess::PieceCode>(c + 1);
      if (p[(12 + c) * kSquares + s] > 0.5f) e.after[s] = static_cast<chess::PieceCode>(c + 1);
    }
  }
  e.repeated_before = p[kRepetitionBefore * kSquares] > 0.5f;
  e.repeated_after = p[kRepetitionAfter * kSquares] > 0.5f;
  for (int i = 0; i < 4; ++i)
    if (p[(kCastlingBase + i) * kSquares] > 0.5f) e.castling |= static_cast<std::uint8_t>(1u << i);
  e.white_to_move = p[kSideToMove * kSquares] > 0.5f;
  e.halfmove_clock = static_cast<std::uint8_t>(std::lround(p[kFiftyMove * kSquares] * 100.0f));
  return e;
}

}  // namespace

std::vector<GameSequence> read_sequence_cache(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw EncodingError("cannot open " + path.string());
  binio::expect_magic(in, kCacheMagic);
  const auto version = binio::read_u32(in);
  if (version != kCacheVersion) throw binio::FormatError("unsupported cache version " + std::to_string(version));
  const auto c = binio::read_u32(in), h = binio::read_u32(in), w = binio::read_u32(in);
  if (c != kChannels || h != 8 || w != 8)
    throw binio::FormatError("cache dims " + std::to_string(c) + "x" + std::to_string(h) + "x" +
                             std::to_string(w) + " do not match 34x8x8");
  const auto count = binio::read_u64(in);
  std::vector<GameSequence> out;
  out.reserve(count);
  std::vector<float> planes(kPlaneFloats);
  for (std::uint64_t i = 0; i < count; ++i) {
    GameSequence s;
    s.game_id = binio::read_string(in);
    s.player_id = binio::read_string(in);
    s.color = binio::read_u8(in) == 0 ? chess::Color::white : chess::Color::black;
    s.k_start = binio::read_i32(in);
    const auto len = binio::read_u32(in);
    for (std::uint32_t j = 0; j < len; ++j) s.mask.push_back(binio::read_u8(in) != 0);
    for (std::uint32_t j = 0; j < len; ++j) {
      const int idx = binio::read_i32(in);
      binio::read_f32_array<float>(in, planes);
      s.moves.push_back(decode_planes(planes, idx, !s.mask[j]));
    }
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace stylo::encoding
