#include "stylo/synthetic_players.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <unordered_map>

#include <spdlog/spdlog.h>

namespace stylo::synth {

using chess::Color;
using chess::Move;
using chess::PieceType;
using chess::Position;

namespace {

constexpr double kValue[7] = {0, 100, 320, 330, 500, 900, 0};
constexpr double kPstNoise = 25.0;
constexpr double kJitter = 15.0;
constexpr double kOpeningWeight = 250.0;

double value_of(PieceType t) { return kValue[static_cast<int>(t)]; }

double base_pst(PieceType t, int sq) {
  const int f = chess::file_of(sq), r = chess::rank_of(sq);
  const double center = std::abs(f - 3.5) + std::abs(r - 3.5);  // 1 .. 7
  switch (t) {
    case PieceType::pawn:
      return r == 0 || r == 7 ? 0.0 : 5.0 * (r - 1) + ((f == 3 || f == 4) && (r == 3 || r == 4) ? 15.0 : 0.0);
    case PieceType::knight: return 30.0 - 8.0 * center;
    case PieceType::bishop: return 15.0 - 4.0 * center;
    case PieceType::rook: return (r == 6 ? 15.0 : 0.0) + (f == 3 || f == 4 ? 5.0 : 0.0);
    case PieceType::queen: return 5.0 - 2.0 * center;
    case PieceType::king: return (r == 0 ? 20.0 : -12.0 * r) + (f == 1 || f == 2 || f == 6 ? 10.0 : 0.0);
    default: return 0.0;
  }
}

double hash01(std::uint64_t seed, std::uint64_t key, int from, int to) {
  std::uint64_t h = seed ^ (key * 0x9e3779b97f4a7c15ULL) ^ (static_cast<std::uint64_t>(from * 64 + to) << 17);
  h ^= h >> 33;
  h *= 0xff51afd7ed558ccdULL;
  h ^= h >> 33;
  h *= 0xc4ceb9fe1a85ec53ULL;
  h ^= h >> 33;
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

int view(int sq, Color c) { return c == Color::white ? sq : sq ^ 56; }

}  // namespace

BotPolicy make_bot(std::uint64_t style_seed, double strength_noise, const std::string& id) {
  BotPolicy bot;
  bot.id = id.empty() ? "bot" + std::to_string(style_seed) : id;
  bot.style_seed = style_seed;
  bot.strength_noise = strength_noise;
  Rng rng(mix_seed(style_seed, "pst"));
  for (int t = 0; t < 6; ++t)
    for (int sq = 0; sq < 64; ++sq)
      bot.pst[t][sq] = base_pst(static_cast<PieceType>(t + 1), sq) + kPstNoise * rng.normal();
  Rng open(mix_seed(style_seed, "opening"));
  bot.opening_bonus.resize(64 * 64);
  for (auto& b : bot.opening_bonus) {
    const double u = open.uniform01();
    b = kOpeningWeight * u * u * u;
  }
  return bot;
}

std::vector<std::pair<Move, double>> BotPolicy::ranked_moves(const Position& pos, int own_move_index) const {
  const Color me = pos.side_to_move();
  const Color them = chess::opposite(me);
  const std::uint64_t key = pos.key();
  std::vector<std::pair<Move, double>> out;
  for (const Move& m : pos.legal_moves()) {
    const PieceType moved = chess::piece_type(pos.at(m.from));
    const PieceType landed = m.promotion != PieceType::none ? m.promotion : moved;
    double score = 0;
    PieceType captured = chess::piece_type(pos.at(m.to));
    if (captured == PieceType::none && moved == PieceType::pawn && m.to == pos.ep_square()) captured = PieceType::pawn;
    score += value_of(captured);
    if (m.promotion != PieceType::none) score += value_of(m.promotion) - value_of(PieceType::pawn);
    score += pst[static_cast<int>(landed) - 1][view(m.to, me)] - pst[static_cast<int>(moved) - 1][view(m.from, me)];

    const Position after = pos.play_unchecked(m);
    if (after.in_check() && after.is_checkmate()) score += 100000.0;
    if (after.attacked_by(m.to, them)) {
      const double v = value_of(landed);
      score -= after.attacked_by(m.to, me) ? std::max(0.0, v - 300.0) * 0.8 : v * 0.9;
    }
    if (after.piece_count() <= 6 && after.is_stalemate()) score -= 300.0;
    score += (2.0 * hash01(style_seed, key, m.from, m.to) - 1.0) * kJitter;
    if (own_move_index < opening_moves) score += opening_bonus[64 * m.from + m.to];
    out.emplace_back(m, score);
  }
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first.uci() < b.first.uci();
  });
  return out;
}

Move BotPolicy::choose(const Position& pos, int own_move_index, Rng& rng) const {
  const auto ranked = ranked_moves(pos, own_move_index);
  if (ranked.empty()) throw chess::IllegalMove("bot asked to move in a terminal position");
  if (strength_noise > 0 && rng.uniform01() < strength_noise) {
    const std::size_t top = std::min<std::size_t>(3, ranked.size());
    return ranked[rng.uniform_index(top)].first;
  }
  return ranked.front().first;
}

ingest::GameRecord play_game(const BotPolicy& white, const BotPolicy& black, std::uint64_t game_seed,
                             const std::string& game_id, const GameLimits& limits) {
  ingest::GameRecord g;
  g.game_id = game_id;
  g.white_id = white.id;
  g.black_id = black.id;
  g.time_control_seconds = 300;
  g.white_rating = 1500;
  g.black_rating = 1500;
  Rng rng(game_seed);
  Position pos = Position::initial();
  std::unordered_map<std::uint64_t, int> seen{{pos.key(), 1}};
  std::string result = "1/2-1/2";
  for (int ply = 0; ply < limits.max_plies; ++ply) {
    if (pos.legal_moves().empty()) {
      if (pos.in_check()) result = pos.side_to_move() == Color::white ? "0-1" : "1-0";
      break;
    }
    if (pos.halfmove_clock() >= 100 || pos.insufficient_material()) break;
    const BotPolicy& bot = pos.side_to_move() == Color::white ? white : black;
    const Move m = bot.choose(pos, ply / 2, rng);
    g.moves.push_back(m.uci());
    pos = pos.play_unchecked(m);
    if (++seen[pos.key()] >= 3) break;
  }
  if (pos.is_checkmate()) result = pos.side_to_move() == Color::white ? "0-1" : "1-0";
  g.result = result;
  return g;
}

ingest::FilterConfig synthetic_filter(std::uint64_t seed) {
  ingest::FilterConfig f;
  f.min_player_games = 10;
  f.seed = seed;
  return f;
}

SynthCorpus generate_corpus(const std::vector<BotPolicy>& bots, int games_per_pair, std::uint64_t seed,
                            const GameLimits& limits) {
  if (bots.size() < 2) throw std::invalid_argument("generate_corpus: need at least 2 bots");
  if (games_per_pair < 1) throw std::invalid_argument("generate_corpus: games_per_pair must be >= 1");
  struct Pairing {
    std::size_t white, black;
    int round;
  };
  std::vector<Pairing> pairings;
  for (int r = 0; r < games_per_pair; ++r)
    for (std::size_t i = 0; i < bots.size(); ++i)
      for (std::size_t j = 0; j < bots.size(); ++j)
        if (i != j) pairings.push_back({i, j, r});

  std::vector<ingest::GameRecord> records(pairings.size());
#pragma omp parallel for schedule(dynamic)
  for (std::size_t n = 0; n < pairings.size(); ++n) {
    const auto& p = pairings[n];
    char id[96];
    std::snprintf(id, sizeof id, "synth%llu-%04zu", static_cast<unsigned long long>(seed), n);
    records[n] = play_game(bots[p.white], bots[p.black], mix_seed(seed, id), id, limits);
    char date[16];
    std::snprintf(date, sizeof date, "2024-%02d-%02d", 1 + p.round / 28 % 12, 1 + p.round % 28);
    records[n].date = date;
  }

  SynthCorpus out;
  out.bots = bots;
  std::ostringstream pgn;
  for (const auto& r : records) pgn << ingest::to_pgn(r) << '\n';
  out.pgn = pgn.str();
  std::istringstream in(out.pgn);
  auto parsed = ingest::parse_pgn(in, "synthetic");
  if (parsed.skipped) spdlog::warn("synthetic corpus: {} generated games failed to parse", parsed.skipped);
  out.corpus = ingest::ingest_records(std::move(parsed.games), synthetic_filter(seed));
  return out;
}

SynthCorpus generate_corpus(const SynthConfig& config) {
  std::vector<BotPolicy> bots;
  for (int i = 0; i < config.bots; ++i) {
    char id[16];
    std::snprintf(id, sizeof id, "bot%02d", i);
    bots.push_back(make_bot(mix_seed(config.seed, id), config.strength_noise, id));
  }
  return generate_corpus(bots, config.games_per_pair, config.seed, config.limits);
}

}  // namespace stylo::synth
