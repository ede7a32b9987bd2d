#include <gtest/gtest.h>

#include <fstream>
#include <set>

#include <nlohmann/json.hpp>

#include "stylo/binary_io.hpp"
#include "stylo/move_encoding.hpp"
#include "test_support.hpp"

using namespace stylo;
using namespace stylo::encoding;
using chess::Position;

namespace {

ingest::GameRecord knight_game(int full_moves) {
  static const char* cycle[] = {"g1f3", "g8f6", "f3g1", "f6g8"};
  ingest::GameRecord g;
  g.game_id = "knights";
  g.white_id = "w";
  g.black_id = "b";
  for (int i = 0; i < 2 * full_moves; ++i) g.moves.push_back(cycle[i % 4]);
  return g;
}

int count_ones(const MoveTensor& t, int channel) {
  int n = 0;
  for (int s = 0; s < 64; ++s) n += t.at(channel, s) == 1.0f;
  return n;
}

std::vector<ingest::GameRecord> fixture_games() {
  return ingest::parse_pgn_file(testing_support::data_dir() / "fidelity_games.pgn").games;
}

}  // namespace

TEST(EncodeMove, InitialPositionE4) {
  const auto before = Position::initial();
  const auto after = before.play(before.parse_uci("e2e4"));
  const auto t = encode_move(before, after, GameState{});
  // channel 0 = before white pawns, channel 12 = after white pawns
  EXPECT_EQ(count_ones(t, 0), 8);
  for (int f = 0; f < 8; ++f) EXPECT_EQ(t.at(0, chess::make_square(f, 1)), 1.0f);
  EXPECT_EQ(count_ones(t, 12), 8);
  int rank2 = 0;
  for (int f = 0; f < 8; ++f) rank2 += t.at(12, chess::make_square(f, 1)) == 1.0f;
  EXPECT_EQ(rank2, 7);
  EXPECT_EQ(t.at(12, *chess::parse_square("e4")), 1.0f);
  EXPECT_EQ(t.at(12, *chess::parse_square("e2")), 0.0f);
  // black pieces unchanged
  for (int c = 6; c < 12; ++c)
    for (int s = 0; s < 64; ++s) EXPECT_EQ(t.at(c, s), t.at(c + 12, s));
}

TEST(EncodeMove, MetadataPlanes) {
  const auto before = Position::initial();
  const auto t = encode_move(before, before.play(before.parse_uci("g1f3")), GameState{});
  int border = 0;
  for (int s = 0; s < 64; ++s) {
    const int f = s % 8, r = s / 8;
    const float edge = (f == 0 || f == 7 || r == 0 || r == 7) ? 1.0f : 0.0f;
    EXPECT_EQ(t.at(kBorder, s), edge);
    border += t.at(kBorder, s) == 1.0f;
    EXPECT_EQ(t.at(kFiftyMove, s), 0.0f);
    EXPECT_EQ(t.at(kOnes, s), 1.0f);
    EXPECT_EQ(t.at(kSideToMove, s), 1.0f);
    for (int c = 0; c < 4; ++c) EXPECT_EQ(t.at(kCastlingBase + c, s), 1.0f);
    EXPECT_EQ(t.at(kRepetitionBefore, s), 0.0f);
  }
  EXPECT_EQ(border, 28);
}

TEST(EncodeMove, HalfmoveClockAndBlackToMove) {
  const auto before = Position::from_fen("4k3/8/8/8/8/8/8/R3K3 b Q - 37 60");
  const auto t = encode_move(before, before.play(before.parse_uci("e8d8")), GameState{});
  for (int s = 0; s < 64; ++s) {
    EXPECT_FLOAT_EQ(t.at(kFiftyMove, s), 0.37f);
    EXPECT_EQ(t.at(kSideToMove, s), 0.0f);
    EXPECT_EQ(t.at(kCastlingBase + 1, s), 1.0f);
    EXPECT_EQ(t.at(kCastlingBase + 0, s), 0.0f);
  }
  const auto clipped = Position::from_fen("4k3/8/8/8/8/8/8/R3K3 b - - 140 90");
  EXPECT_EQ(encode_move(clipped, clipped.play(clipped.parse_uci("e8d8")), GameState{}).at(kFiftyMove, 0), 1.0f);
}

TEST(EncodeMove, IllegalTransitionIsAnError) {
  const auto before = Position::initial();
  const auto far = Position::from_fen("rnbqkbnr/pppppppp/8/8/4P3/5N2/PPPP1PPP/RNBQKB1R b KQkq - 1 2");
  EXPECT_THROW(encode_move(before, far, GameState{}), EncodingError);
  EXPECT_THROW(encode_move(before, before, GameState{}), EncodingError);
}

TEST(EncodeGame, LengthsAndTruncation) {
  const auto g = knight_game(20);
  EXPECT_EQ(encode_game(g, "w", 0)->size(), 20u);
  const auto tail = encode_game(g, "w", 15);
  ASSERT_TRUE(tail);
  EXPECT_EQ(tail->size(), 5u);
  EXPECT_EQ(tail->k_start, 15);
  // 0-based indices 15..19: the 16th-20th moves
  for (std::size_t i = 0; i < 5; ++i) EXPECT_EQ(tail->moves[i].move_index, static_cast<int>(15 + i));
  EXPECT_TRUE(std::all_of(tail->mask.begin(), tail->mask.end(), [](bool b) { return b; }));
  EXPECT_FALSE(encode_game(knight_game(15), "w", 15));
  EXPECT_THROW(encode_game(g, "nobody", 0), EncodingError);
}

TEST(EncodeGame, BlackSideAndRepetitionFlags) {
  const auto seq = encode_game(knight_game(6), "b", 0);
  ASSERT_TRUE(seq);
  EXPECT_EQ(seq->color, chess::Color::black);
  EXPECT_FALSE(seq->moves[0].white_to_move);
  // after black's 2nd move the initial position is back on the board
  EXPECT_FALSE(seq->moves[0].repeated_after);
  EXPECT_TRUE(seq->moves[1].repeated_after);
  EXPECT_TRUE(seq->moves[2].repeated_before);
}

TEST(EncodeGame, KComposition) {
  for (const auto& g : fixture_games()) {
    for (const auto& player : {g.white_id, g.black_id}) {
      const auto full = encode_game(g, player, 0);
      ASSERT_TRUE(full);
      for (int k : {0, 5, 15}) {
        const auto cut = encode_game(g, player, k);
        if (static_cast<int>(full->size()) <= k) {
          EXPECT_FALSE(cut);
          continue;
        }
        ASSERT_TRUE(cut);
        EXPECT_EQ(cut->moves, std::vector<EncodedMove>(full->moves.begin() + k, full->moves.end()));
      }
    }
  }
}

TEST(EncodeGame, OccupancyAndBinaryPlanes) {
  for (const auto& g : fixture_games()) {
    const auto seq = encode_game(g, g.white_id, 0);
    const auto positions = ingest::replay(g.moves);
    for (std::size_t i = 0; i < seq->size(); ++i) {
      const auto t = seq->tensor(i);
      const auto& before = positions[2 * i];
      int ones_before = 0, ones_after = 0;
      for (int c = 0; c < 24; ++c)
        for (int s = 0; s < 64; ++s) {
          const float v = t.at(c, s);
          ASSERT_TRUE(v == 0.0f || v == 1.0f);
          (c < 12 ? ones_before : ones_after) += v == 1.0f;
        }
      ASSERT_EQ(ones_before, before.piece_count());
      ASSERT_EQ(ones_after, positions[2 * i + 1].piece_count());
      ASSERT_LE(ones_before, 32);
    }
  }
}

// Piece planes and metadata against the reference engine's replay of the
// public fixture, square for square.
TEST(EncodeGame, FidelityAgainstReferenceReplay) {
  std::ifstream in(testing_support::data_dir() / "fidelity_replay.json");
  const auto ref = nlohmann::json::parse(in);
  const auto games = fixture_games();
  ASSERT_EQ(games.size(), ref.size());
  static const std::string symbols = "PNBRQKpnbrqk";
  std::size_t checked = 0;
  for (std::size_t gi = 0; gi < games.size(); ++gi) {
    const auto& positions = ref[gi]["positions"];
    for (int side = 0; side < 2; ++side) {
      const auto seq = encode_game(games[gi], side == 0 ? games[gi].white_id : games[gi].black_id, 0);
      for (std::size_t i = 0; i < seq->size(); ++i) {
        const std::size_t ply = 2 * i + side;
        const auto t = seq->tensor(i);
        for (int snap = 0; snap < 2; ++snap) {
          const auto& rp = positions[ply + snap];
          const std::string board = rp["board"];
          for (int s = 0; s < 64; ++s)
            for (int c = 0; c < 12; ++c)
              ASSERT_EQ(t.at(12 * snap + c, s), board[s] == symbols[c] ? 1.0f : 0.0f)
                  << games[gi].game_id << " ply " << ply << " snapshot " << snap;
          EXPECT_EQ(t.at(kRepetitionBefore + snap, 0), rp["repeated"].get<bool>() ? 1.0f : 0.0f)
              << games[gi].game_id << " ply " << ply + snap;
        }
        const auto& rb = positions[ply];
        const std::string castling = rb["castling"];
        const std::string rights = "KQkq";
        for (int c = 0; c < 4; ++c)
          EXPECT_EQ(t.at(kCastlingBase + c, 9), castling.find(rights[c]) != std::string::npos ? 1.0f : 0.0f);
        EXPECT_EQ(t.at(kSideToMove, 0), rb["white_to_move"].get<bool>() ? 1.0f : 0.0f);
        EXPECT_FLOAT_EQ(t.at(kFiftyMove, 0), std::min(1.0f, rb["halfmove"].get<int>() / 100.0f));
        ++checked;
      }
    }
  }
  EXPECT_GT(checked, 5000u);
}

TEST(PadOrWindow, WindowPlacement) {
  const auto seq = *encode_game(knight_game(50), "w", 0);
  std::set<int> starts;
  Rng rng(1);
  for (int i = 0; i < 2000; ++i) {
    const auto w = pad_or_window(seq, 32, rng);
    ASSERT_EQ(w.size(), 32u);
    ASSERT_EQ(w.real_count(), 32u);
    starts.insert(w.moves[0].move_index);
    for (std::size_t j = 1; j < 32; ++j) ASSERT_EQ(w.moves[j].move_index, w.moves[0].move_index + static_cast<int>(j));
    EXPECT_EQ(w.k_start, w.moves[0].move_index);
  }
  EXPECT_EQ(starts.size(), 19u);
  EXPECT_EQ(*starts.begin(), 0);
  EXPECT_EQ(*starts.rbegin(), 18);
}

TEST(PadOrWindow, PaddingTail) {
  const auto seq = *encode_game(knight_game(20), "w", 0);
  Rng rng(2);
  const auto p = pad_or_window(seq, 32, rng);
  ASSERT_EQ(p.size(), 32u);
  for (std::size_t i = 0; i < 32; ++i) EXPECT_EQ(p.mask[i], i < 20);
  std::vector<float> planes(kPlaneFloats, 7.0f);
  p.moves[25].write_planes(planes);
  EXPECT_TRUE(std::all_of(planes.begin(), planes.end(), [](float v) { return v == 0.0f; }));
}

TEST(PadOrWindow, LengthOneAndDeterminism) {
  const auto seq = *encode_game(knight_game(12), "w", 0);
  Rng a(77), b(77);
  for (int i = 0; i < 10; ++i) {
    const auto wa = pad_or_window(seq, 1, a);
    EXPECT_EQ(wa.size(), 1u);
    EXPECT_TRUE(wa.mask[0]);
    EXPECT_EQ(wa, pad_or_window(seq, 1, b));
  }
  EXPECT_THROW(pad_or_window(seq, 0, a), std::invalid_argument);
}

TEST(SequenceCache, RoundTrip) {
  std::vector<GameSequence> seqs;
  Rng rng(3);
  for (const auto& g : fixture_games()) {
    seqs.push_back(*encode_game(g, g.black_id, 0));
    seqs.push_back(pad_or_window(seqs.back(), 64, rng));
    if (seqs.size() >= 20) break;
  }
  const auto path = testing_support::temp_dir("seq_cache") / "cache.bin";
  write_sequence_cache(path, seqs);
  EXPECT_EQ(read_sequence_cache(path), seqs);
}

TEST(SequenceCache, RejectsBadMagic) {
  const auto path = testing_support::temp_dir("seq_cache_bad") / "cache.bin";
  std::ofstream(path) << "NOTACACHE";
  EXPECT_THROW(read_sequence_cache(path), binio::FormatError);
}
