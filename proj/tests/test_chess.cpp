#include <gtest/gtest.h>

#include "stylo/chess.hpp"

using namespace stylo::chess;

namespace {

std::uint64_t perft(const Position& p, int depth) {
  if (depth == 0) return 1;
  const auto moves = p.legal_moves();
  if (depth == 1) return moves.size();
  std::uint64_t n = 0;
  for (const auto& m : moves) n += perft(p.play_unchecked(m), depth - 1);
  return n;
}

const char* kKiwipete = "r3k2r/p1ppqpb1/bn2pnp1/3PN3/1p2P3/2N2Q1p/PPPBBPPP/R3K2R w KQkq - 0 1";

}  // namespace

TEST(Perft, InitialPosition) {
  const auto p = Position::initial();
  EXPECT_EQ(perft(p, 1), 20u);
  EXPECT_EQ(perft(p, 2), 400u);
  EXPECT_EQ(perft(p, 3), 8902u);
  EXPECT_EQ(perft(p, 4), 197281u);
}

TEST(Perft, Kiwipete) {
  const auto p = Position::from_fen(kKiwipete);
  EXPECT_EQ(perft(p, 1), 48u);
  EXPECT_EQ(perft(p, 2), 2039u);
  EXPECT_EQ(perft(p, 3), 97862u);
}

TEST(Perft, EnPassantAndPromotionPosition) {
  // position 3 of the standard perft suite
  const auto p = Position::from_fen("8/2p5/3p4/KP5r/1R3p1k/8/4P1P1/8 w - - 0 1");
  EXPECT_EQ(perft(p, 1), 14u);
  EXPECT_EQ(perft(p, 2), 191u);
  EXPECT_EQ(perft(p, 3), 2812u);
  EXPECT_EQ(perft(p, 4), 43238u);
}

TEST(Fen, RoundTrip) {
  for (const char* fen : {kKiwipete, "rnbqkbnr/pppppppp/8/8/4P3/8/PPPP1PPP/RNBQKBNR b KQkq - 0 1",
                          "8/8/8/8/8/8/8/K1k5 w - - 12 40"})
    EXPECT_EQ(Position::from_fen(fen).fen(), fen);
}

TEST(San, ParseAndRender) {
  auto p = Position::initial();
  const auto e4 = p.parse_san("e4");
  EXPECT_EQ(e4.uci(), "e2e4");
  EXPECT_EQ(p.to_san(e4), "e4");
  EXPECT_EQ(p.to_san(p.parse_uci("g1f3")), "Nf3");
  p = Position::from_fen(kKiwipete);
  EXPECT_EQ(p.to_san(p.parse_uci("e1g1")), "O-O");
  EXPECT_EQ(p.to_san(p.parse_uci("e1c1")), "O-O-O");
  EXPECT_EQ(p.parse_san("O-O").uci(), "e1g1");
  EXPECT_THROW(p.parse_san("Ke3"), IllegalMove);
}

TEST(San, DisambiguationAndPromotion) {
  const auto p = Position::from_fen("4k3/1P6/8/8/8/8/4K3/R6R w - - 0 1");
  EXPECT_EQ(p.to_san(p.parse_uci("b7b8q")), "b8=Q+");
  EXPECT_EQ(p.to_san(p.parse_uci("b7b8n")), "b8=N");
  EXPECT_EQ(p.to_san(p.parse_uci("a1d1")), "Rad1");
  EXPECT_EQ(p.parse_san("Rhf1").uci(), "h1f1");
}

TEST(Rules, MateStalemateAndMaterial) {
  // fool's mate
  auto p = Position::initial();
  for (const char* m : {"f2f3", "e7e5", "g2g4", "d8h4"}) p = p.play(p.parse_uci(m));
  EXPECT_TRUE(p.is_checkmate());
  EXPECT_TRUE(Position::from_fen("7k/5Q2/6K1/8/8/8/8/8 b - - 0 1").is_stalemate());
  EXPECT_TRUE(Position::from_fen("8/8/8/8/8/8/8/K1k4N w - - 0 1").insufficient_material());
  EXPECT_FALSE(Position::from_fen("8/8/8/8/8/8/8/K1k4R w - - 0 1").insufficient_material());
}

TEST(Rules, IllegalMoveThrows) {
  const auto p = Position::initial();
  EXPECT_THROW(p.play(Move{12, 36}), IllegalMove);
  EXPECT_THROW(p.parse_uci("e2e5"), IllegalMove);
}

TEST(Rules, RepetitionKeyIgnoresUncapturableEnPassant) {
  // after 1.e4 the ep square is set but no black pawn can capture
  auto a = Position::initial();
  a = a.play(a.parse_uci("e2e4"));
  EXPECT_EQ(a.key(), Position::from_fen("rnbqkbnr/pppppppp/8/8/4P3/8/PPPP1PPP/RNBQKBNR b KQkq - 0 1").key());
}
