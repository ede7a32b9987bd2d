#pragma once

// PGN archives -> validated game records, corpus filters, player buckets and
// deterministic train/reference/query splits.

#include <cstdint>
#include <filesystem>
#include <istream>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "stylo/chess.hpp"

namespace stylo::ingest {

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class SplitError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct GameRecord {
  std::string game_id;
  std::string white_id;
  std::string black_id;
  std::vector<std::string> moves;  // UCI, both sides, validated from the initial position
  int time_control_seconds = 0;
  int white_rating = 0;
  int black_rating = 0;
  std::string date;  // ISO-8601 (YYYY-MM-DD), empty when unknown
  std::string result = "*";

  int ply_count() const { return static_cast<int>(moves.size()); }
  int moves_by(chess::Color c) const {
    const int n = ply_count();
    return c == chess::Color::white ? (n + 1) / 2 : n / 2;
  }
  std::optional<chess::Color> color_of(const std::string& player) const;

  friend bool operator==(const GameRecord&, const GameRecord&) = default;
};

void to_json(nlohmann::json& j, const GameRecord& g);
void from_json(const nlohmann::json& j, GameRecord& g);

enum class ParseWarning { none, empty_result };

struct ParseResult {
  std::vector<GameRecord> games;
  std::size_t skipped = 0;
  std::vector<std::string> skip_reasons;
  ParseWarning warning = ParseWarning::none;
};

/// Parses PGN text. Malformed games (bad SAN, missing termination, non-standard
/// start) are skipped and counted, never fatal.
ParseResult parse_pgn(std::istream& in, const std::string& source_name = "<stream>");

/// Opens `path`, transparently decompressing `.bz2` and `.zst` archives.
/// Throws IoError when the file cannot be read.
ParseResult parse_pgn_file(const std::filesystem::path& path);

/// Replays `moves` (UCI) from the initial position; throws chess::IllegalMove.
std::vector<chess::Position> replay(const std::vector<std::string>& moves);

/// Renders a record as PGN with SAN movetext.
std::string to_pgn(const GameRecord& g);

struct FilterConfig {
  // game level
  int min_moves = 10;
  int time_control_min = 180;  // seconds per player, inclusive
  int time_control_max = 420;
  // player level
  double mean_rating_min = 1000;
  double mean_rating_max = 2000;
  double rating_stddev_max = 150;
  std::string active_as_of;  // ISO date; empty disables the activity filter
  int min_player_games = 1000;
  // seen/unseen assignment and splitting
  std::vector<std::string> unseen_players;
  double unseen_fraction = 0.0;
  std::uint64_t seed = 0;
};

/// Strict JSON loader: unknown keys are rejected.
FilterConfig filter_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const FilterConfig& c);

/// Keeps games where both sides made at least `min_moves` moves and the
/// base time control lies within range; drops self-play games.
std::vector<GameRecord> filter_games(const std::vector<GameRecord>& records, int min_moves,
                                     int time_control_min, int time_control_max);

enum class Bucket { below_1k, b1k, b5k, b10k, b20k, b30k, b40k };

std::string bucket_label(Bucket b);
Bucket bucket_for_count(std::size_t games);

/// Players with fewer than `min_games` games are dropped.
std::map<std::string, Bucket> bucket_players(const std::map<std::string, std::size_t>& game_counts,
                                             std::size_t min_games = 1000);

struct PlayerCorpus {
  std::string player_id;
  std::vector<std::size_t> games;  // indices into the record list
  Bucket bucket = Bucket::b1k;
  bool seen = true;
  double mean_rating = 0;
  double rating_stddev = 0;
};

/// Groups records by player and applies the player-level filters of `config`.
std::vector<PlayerCorpus> build_corpora(const std::vector<GameRecord>& records, const FilterConfig& config);

struct SplitAssignment {
  std::string player_id;
  std::vector<std::string> train_ids;
  std::vector<std::string> reference_ids;
  std::vector<std::string> query_ids;
  std::uint64_t seed = 0;

  friend bool operator==(const SplitAssignment&, const SplitAssignment&) = default;
};

/// 80/10/10 with floor rounding on reference and query, remainder to train.
/// Throws SplitError for fewer than 10 games.
SplitAssignment split_player(const std::string& player_id, std::vector<std::string> game_ids,
                             std::uint64_t seed);

struct PlayerInfo {
  std::string bucket;
  bool seen = true;
  double mean_rating = 0;
  std::string opening;  // modal first move as White
  SplitAssignment split;
};

struct SplitManifest {
  std::uint64_t seed = 0;
  std::map<std::string, PlayerInfo> players;
};

nlohmann::json to_json(const SplitManifest& m);
SplitManifest manifest_from_json(const nlohmann::json& j);

struct Corpus {
  std::vector<GameRecord> records;
  SplitManifest manifest;

  const GameRecord& game(const std::string& id) const;
  void index();

 private:
  std::map<std::string, std::size_t> by_id_;
};

/// Full pipeline over already-parsed records.
Corpus ingest_records(std::vector<GameRecord> records, const FilterConfig& config);

void write_records(const std::filesystem::path& path, const std::vector<GameRecord>& records);
std::vector<GameRecord> read_records(const std::filesystem::path& path);
void write_corpus(const std::filesystem::path& dir, const Corpus& corpus, const nlohmann::json& provenance);
Corpus read_corpus(const std::filesystem::path& dir);

}  // namespace stylo::ingest
