#include "stylo/pgn_ingest.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <boost/iostreams/filter/bzip2.hpp>
#include <boost/iostreams/filter/zstd.hpp>
#include <boost/iostreams/filtering_stream.hpp>
#include <spdlog/spdlog.h>

#include "stylo/analysis.hpp"
#include "stylo/rng.hpp"

namespace stylo::ingest {

using nlohmann::json;

std::optional<chess::Color> GameRecord::color_of(const std::string& player) const {
  if (player == white_id) return chess::Color::white;
  if (player == black_id) return chess::Color::black;
  return std::nullopt;
}

void to_json(json& j, const GameRecord& g) {
  j = json{{"game_id", g.game_id},
           {"white", g.white_id},
           {"black", g.black_id},
           {"moves", g.moves},
           {"time_control", g.time_control_seconds},
           {"white_elo", g.white_rating},
           {"black_elo", g.black_rating},
           {"date", g.date},
           {"result", g.result}};
}

void from_json(const json& j, GameRecord& g) {
  j.at("game_id").get_to(g.game_id);
  j.at("white").get_to(g.white_id);
  j.at("black").get_to(g.black_id);
  j.at("moves").get_to(g.moves);
  g.time_control_seconds = j.value("time_control", 0);
  g.white_rating = j.value("white_elo", 0);
  g.black_rating = j.value("black_elo", 0);
  g.date = j.value("date", std::string{});
  g.result = j.value("result", std::string("*"));
}

namespace {

struct RawGame {
  std::map<std::string, std::string> tags;
  std::string movetext;
  bool terminated = false;
};

bool is_result_token(const std::string& t) {
  return t == "1-0" || t == "0-1" || t == "1/2-1/2" || t == "*";
}

/// Splits movetext into SAN tokens, dropping comments, variations, NAGs and
/// move numbers. Returns the result token through `result` when present.
std::vector<std::string> tokenize_movetext(const std::string& text, std::string& result) {
  std::vector<std::string> out;
  int depth = 0;
  std::size_t i = 0;
  const std::size_t n = text.size();
  while (i < n) {
    const char c = text[i];
    if (c == '{') {
      const auto close = text.find('}', i);
      i = close == std::string::npos ? n : close + 1;
      continue;
    }
    if (c == ';') {
      const auto eol = text.find('\n', i);
      i = eol == std::string::npos ? n : eol + 1;
      continue;
    }
    if (c == '(') {
      ++depth;
      ++i;
      continue;
    }
    if (c == ')') {
      if (depth > 0) --depth;
      ++i;
      continue;
    }
    if (std::isspace(static_cast<unsigned char>(c))) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < n && !std::isspace(static_cast<unsigned char>(text[j])) &&
           std::string_view("{};()").find(text[j]) == std::string_view::npos)
      ++j;
    std::string tok = text.substr(i, j - i);
    i = j;
    if (depth > 0 || tok.empty() || tok[0] == '$') continue;
    if (is_result_token(tok)) {
      result = tok;
      continue;
    }
    // strip a leading move number such as "12." or "12..."
    std::size_t k = 0;
    while (k < tok.size() && std::isdigit(static_cast<unsigned char>(tok[k]))) ++k;
    if (k > 0 && k < tok.size() && tok[k] == '.') {
      while (k < tok.size() && tok[k] == '.') ++k;
      tok = tok.substr(k);
    } else if (k == tok.size()) {
      continue;  // bare number
    }
    if (!tok.empty() && tok != "..") out.push_back(tok);
  }
  return out;
}

int parse_time_control(const std::string& tc) {
  if (tc.empty() || !std::isdigit(static_cast<unsigned char>(tc[0]))) return 0;
  return std::stoi(tc.substr(0, tc.find('+')));
}

int parse_rating(const std::string& s) {
  if (s.empty() || !std::isdigit(static_cast<unsigned char>(s[0]))) return 0;
  return std::stoi(s);
}

std::string parse_date(const std::string& s) {
  if (s.size() != 10 || s.find('?') != std::string::npos) return {};
  std::string d = s;
  std::replace(d.begin(), d.end(), '.', '-');
  return d;
}

std::string tag(const RawGame& g, const std::string& key) {
  auto it = g.tags.find(key);
  return it == g.tags.end() ? std::string{} : it->second;
}

std::optional<GameRecord> convert(const RawGame& raw, const std::string& fallback_id, std::string& why) {
  if (!raw.terminated) {
    why = "missing game termination";
    return std::nullopt;
  }
  const std::string variant = tag(raw, "Variant");
  if (!variant.empty() && variant != "Standard" && variant != "standard" && variant != "chess") {
    why = "variant " + variant;
    return std::nullopt;
  }
  if (!tag(raw, "FEN").empty() || tag(raw, "SetUp") == "1") {
    why = "non-standard initial position";
    return std::nullopt;
  }
  std::string result;
  const auto tokens = tokenize_movetext(raw.movetext, result);
  GameRecord g;
  chess::Position pos = chess::Position::initial();
  for (const auto& tok : tokens) {
    chess::Move m;
    try {
      m = pos.parse_san(tok);
    } catch (const chess::IllegalMove& e) {
      try {
        m = pos.parse_uci(tok);
      } catch (const chess::IllegalMove&) {
        why = e.what();
        return std::nullopt;
      }
    }
    g.moves.push_back(m.uci());
    pos = pos.play_unchecked(m);
  }
  if (g.moves.empty()) {
    why = "no moves";
    return std::nullopt;
  }
  g.white_id = tag(raw, "White");
  g.black_id = tag(raw, "Black");
  g.white_rating = parse_rating(tag(raw, "WhiteElo"));
  g.black_rating = parse_rating(tag(raw, "BlackElo"));
  g.time_control_seconds = parse_time_control(tag(raw, "TimeControl"));
  g.date = parse_date(tag(raw, "UTCDate"));
  if (g.date.empty()) g.date = parse_date(tag(raw, "Date"));
  g.result = result.empty() ? tag(raw, "Result") : result;
  if (g.result.empty()) g.result = "*";

  const std::string site = tag(raw, "Site");
  if (!tag(raw, "GameId").empty()) {
    g.game_id = tag(raw, "GameId");
  } else if (site.rfind("http", 0) == 0 && site.find_last_of('/') + 1 < site.size()) {
    g.game_id = site.substr(site.find_last_of('/') + 1);
  } else {
    g.game_id = fallback_id;
  }
  return g;
}

bool parse_tag_line(const std::string& line, std::string& key, std::string& value) {
  if (line.size() < 4 || line.front() != '[') return false;
  const auto space = line.find(' ');
  const auto q1 = line.find('"');
  const auto q2 = line.rfind('"');
  if (space == std::string::npos || q1 == std::string::npos || q2 <= q1) return false;
  key = line.substr(1, space - 1);
  value = line.substr(q1 + 1, q2 - q1 - 1);
  return true;
}

}  // namespace

ParseResult parse_pgn(std::istream& in, const std::string& source_name) {
  ParseResult out;
  RawGame current;
  bool in_game = false;
  bool in_movetext = false;
  int brace_depth = 0;
  std::size_t index = 0;

  auto finish = [&] {
    if (!in_game) return;
    std::string why;
    auto rec = convert(current, source_name + "#" + std::to_string(index), why);
    ++index;
    if (rec) {
      out.games.push_back(std::move(*rec));
    } else {
      ++out.skipped;
      out.skip_reasons.push_back(source_name + " game " + std::to_string(index) + ": " + why);
    }
    current = RawGame{};
    in_game = in_movetext = false;
    brace_depth = 0;
  };

  std::string line;
  bool first_line = true;
  while (std::getline(in, line)) {
    if (first_line && line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);
    first_line = false;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::string key, value;
    if (brace_depth == 0 && !line.empty() && line.front() == '[' && parse_tag_line(line, key, value)) {
      if (in_movetext) finish();
      in_game = true;
      current.tags[key] = value;
      continue;
    }
    if (line.empty() && !in_movetext) continue;
    if (!line.empty() && line.front() == '%') continue;
    in_game = true;
    in_movetext = true;
    current.movetext += line;
    current.movetext += '\n';
    for (char c : line) {
      if (c == '{') ++brace_depth;
      if (c == '}' && brace_depth > 0) --brace_depth;
    }
    if (brace_depth == 0) {
      std::string result;
      tokenize_movetext(line, result);
      if (!result.empty()) {
        current.terminated = true;
        finish();
      }
    }
  }
  finish();
  if (in.bad()) throw IoError("read error in " + source_name);

  if (out.skipped > 0)
    spdlog::warn("{}: skipped {} malformed game(s), kept {}", source_name, out.skipped, out.games.size());
  for (const auto& r : out.skip_reasons) spdlog::debug("skip: {}", r);
  if (out.games.empty()) {
    out.warning = ParseWarning::empty_result;
    spdlog::warn("{}: no parseable games", source_name);
  }
  return out;
}

ParseResult parse_pgn_file(const std::filesystem::path& path) {
  std::ifstream file(path, std::ios::binary);
  if (!file) throw IoError("cannot open " + path.string());
  namespace io = boost::iostreams;
  io::filtering_istream in;
  const auto ext = path.extension().string();
  if (ext == ".bz2") in.push(io::bzip2_decompressor());
  if (ext == ".zst") in.push(io::zstd_decompressor());
  in.push(file);
  try {
    return parse_pgn(in, path.filename().string());
  } catch (const io::bzip2_error& e) {
    throw IoError(path.string() + ": " + e.what());
  } catch (const io::zstd_error& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

std::vector<chess::Position> replay(const std::vector<std::string>& moves) {
  std::vector<chess::Position> out;
  out.reserve(moves.size() + 1);
  out.push_back(chess::Position::initial());
  for (const auto& uci : moves) {
    const chess::Move m = out.back().parse_uci(uci);
    out.push_back(out.back().play_unchecked(m));
  }
  return out;
}

std::string to_pgn(const GameRecord& g) {
  std::ostringstream out;
  std::string date = g.date.empty() ? "????.??.??" : g.date;
  std::replace(date.begin(), date.end(), '-', '.');
  out << "[Event \"Rated Blitz game\"]\n"
      << "[Site \"" << g.game_id << "\"]\n"
      << "[GameId \"" << g.game_id << "\"]\n"
      << "[Date \"" << date << "\"]\n"
      << "[White \"" << g.white_id << "\"]\n"
      << "[Black \"" << g.black_id << "\"]\n"
      << "[Result \"" << g.result << "\"]\n"
      << "[WhiteElo \"" << g.white_rating << "\"]\n"
      << "[BlackElo \"" << g.black_rating << "\"]\n"
      << "[TimeControl \"" << g.time_control_seconds << "+0\"]\n\n";
  chess::Position pos = chess::Position::initial();
  std::string line;
  for (std::size_t i = 0; i < g.moves.size(); ++i) {
    std::string tok;
    if (i % 2 == 0) tok = std::to_string(i / 2 + 1) + ". ";
    const chess::Move m = pos.parse_uci(g.moves[i]);
    tok += pos.to_san(m);
    pos = pos.play_unchecked(m);
    if (line.size() + tok.size() + 1 > 79) {
      out << line << '\n';
      line.clear();
    }
    if (!line.empty()) line += ' ';
    line += tok;
  }
  if (line.size() + g.result.size() + 1 > 79) {
    out << line << '\n';
    line.clear();
  }
  if (!line.empty()) line += ' ';
  out << line << g.result << "\n\n";
  return out.str();
}

FilterConfig filter_config_from_json(const json& j) {
  static const std::set<std::string> known{
      "min_moves",       "time_control_min", "time_control_max", "mean_rating_min",
      "mean_rating_max", "rating_stddev_max", "active_as_of",    "min_player_games",
      "unseen_players",  "unseen_fraction",  "seed"};
  if (!j.is_object()) throw std::invalid_argument("filter config must be a JSON object");
  for (const auto& [k, v] : j.items())
    if (!known.count(k)) throw std::invalid_argument("unknown filter config key: " + k);
  FilterConfig c;
  c.min_moves = j.value("min_moves", c.min_moves);
  c.time_control_min = j.value("time_control_min", c.time_control_min);
  c.time_control_max = j.value("time_control_max", c.time_control_max);
  c.mean_rating_min = j.value("mean_rating_min", c.mean_rating_min);
  c.mean_rating_max = j.value("mean_rating_max", c.mean_rating_max);
  c.rating_stddev_max = j.value("rating_stddev_max", c.rating_stddev_max);
  c.active_as_of = j.value("active_as_of", c.active_as_of);
  c.min_player_games = j.value("min_player_games", c.min_player_games);
  c.unseen_players = j.value("unseen_players", c.unseen_players);
  c.unseen_fraction = j.value("unseen_fraction", c.unseen_fraction);
  c.seed = j.value("seed", c.seed);
  if (c.min_moves < 0) throw std::invalid_argument("min_moves must be >= 0");
  if (c.time_control_min > c.time_control_max)
    throw std::invalid_argument("time_control_min exceeds time_control_max");
  return c;
}

json to_json(const FilterConfig& c) {
  return json{{"min_moves", c.min_moves},
              {"time_control_min", c.time_control_min},
              {"time_control_max", c.time_control_max},
              {"mean_rating_min", c.mean_rating_min},
              {"mean_rating_max", c.mean_rating_max},
              {"rating_stddev_max", c.rating_stddev_max},
              {"active_as_of", c.active_as_of},
              {"min_player_games", c.min_player_games},
              {"unseen_players", c.unseen_players},
              {"unseen_fraction", c.unseen_fraction},
              {"seed", c.seed}};
}

std::vector<GameRecord> filter_games(const std::vector<GameRecord>& records, int min_moves,
                                     int time_control_min, int time_control_max) {
  std::vector<GameRecord> out;
  for (const auto& g : records) {
    if (g.white_id == g.black_id) continue;
    if (g.moves_by(chess::Color::white) < min_moves || g.moves_by(chess::Color::black) < min_moves) continue;
    if (g.time_control_seconds < time_control_min || g.time_control_seconds > time_control_max) continue;
    out.push_back(g);
  }
  return out;
}

std::string bucket_label(Bucket b) {
  switch (b) {
    case Bucket::below_1k: return "<1K";
    case Bucket::b1k: return "1K";
    case Bucket::b5k: return "5K";
    case Bucket::b10k: return "10K";
    case Bucket::b20k: return "20K";
    case Bucket::b30k: return "30K";
    case Bucket::b40k: return "40K+";
  }
  return "?";
}

Bucket bucket_for_count(std::size_t games) {
  if (games >= 40000) return Bucket::b40k;
  if (games >= 30000) return Bucket::b30k;
  if (games >= 20000) return Bucket::b20k;
  if (games >= 10000) return Bucket::b10k;
  if (games >= 5000) return Bucket::b5k;
  if (games >= 1000) return Bucket::b1k;
  return Bucket::below_1k;
}

std::map<std::string, Bucket> bucket_players(const std::map<std::string, std::size_t>& game_counts,
                                             std::size_t min_games) {
  std::map<std::string, Bucket> out;
  for (const auto& [player, count] : game_counts)
    if (count >= min_games) out[player] = bucket_for_count(count);
  return out;
}

std::vector<PlayerCorpus> build_corpora(const std::vector<GameRecord>& records, const FilterConfig& config) {
  std::map<std::string, std::vector<std::size_t>> by_player;
  for (std::size_t i = 0; i < records.size(); ++i) {
    by_player[records[i].white_id].push_back(i);
    by_player[records[i].black_id].push_back(i);
  }
  std::map<std::string, std::size_t> counts;
  for (const auto& [p, games] : by_player) counts[p] = games.size();
  const auto buckets = bucket_players(counts, static_cast<std::size_t>(std::max(config.min_player_games, 0)));

  std::set<std::string> unseen(config.unseen_players.begin(), config.unseen_players.end());
  std::vector<PlayerCorpus> out;
  std::size_t dropped_rating = 0;
  std::size_t dropped_activity = 0;
  for (const auto& [player, bucket] : buckets) {
    const auto& games = by_player[player];
    double sum = 0, sumsq = 0;
    std::string last_date;
    for (std::size_t gi : games) {
      const auto& g = records[gi];
      const double r = g.white_id == player ? g.white_rating : g.black_rating;
      sum += r;
      sumsq += r * r;
      last_date = std::max(last_date, g.date);
    }
    const double n = static_cast<double>(games.size());
    const double mean = sum / n;
    const double stddev = std::sqrt(std::max(0.0, sumsq / n - mean * mean));
    if (mean < config.mean_rating_min || mean > config.mean_rating_max || stddev > config.rating_stddev_max) {
      ++dropped_rating;
      continue;
    }
    if (!config.active_as_of.empty() && last_date < config.active_as_of) {
      ++dropped_activity;
      continue;
    }
    PlayerCorpus pc;
    pc.player_id = player;
    pc.games = games;
    pc.bucket = bucket;
    pc.mean_rating = mean;
    pc.rating_stddev = stddev;
    const bool hashed_unseen =
        config.unseen_fraction > 0 &&
        static_cast<double>(mix_seed(config.seed, "unseen:" + player) >> 11) * 0x1.0p-53 < config.unseen_fraction;
    pc.seen = !(unseen.count(player) || hashed_unseen);
    out.push_back(std::move(pc));
  }
  spdlog::info("players: {} in universe, {} dropped by rating filters, {} dropped as inactive, {} below {} games",
               out.size(), dropped_rating, dropped_activity, counts.size() - buckets.size(),
               config.min_player_games);
  return out;
}

SplitAssignment split_player(const std::string& player_id, std::vector<std::string> game_ids, std::uint64_t seed) {
  if (game_ids.size() < 10)
    throw SplitError("player " + player_id + " has " + std::to_string(game_ids.size()) +
                     " games; splitting requires at least 10");
  std::sort(game_ids.begin(), game_ids.end());
  Rng rng(mix_seed(seed, "split:" + player_id));
  rng.shuffle(game_ids);
  const std::size_t n = game_ids.size();
  const std::size_t n_ref = n / 10;
  const std::size_t n_query = n / 10;
  const std::size_t n_train = n - n_ref - n_query;
  SplitAssignment s;
  s.player_id = player_id;
  s.seed = seed;
  s.train_ids.assign(game_ids.begin(), game_ids.begin() + n_train);
  s.reference_ids.assign(game_ids.begin() + n_train, game_ids.begin() + n_train + n_ref);
  s.query_ids.assign(game_ids.begin() + n_train + n_ref, game_ids.end());
  return s;
}

json to_json(const SplitManifest& m) {
  json players = json::object();
  for (const auto& [id, info] : m.players) {
    players[id] = json{{"bucket", info.bucket},
                       {"seen", info.seen},
                       {"mean_rating", info.mean_rating},
                       {"opening", info.opening},
                       {"train", info.split.train_ids},
                       {"reference", info.split.reference_ids},
                       {"query", info.split.query_ids}};
  }
  return json{{"seed", m.seed}, {"players", players}};
}

SplitManifest manifest_from_json(const json& j) {
  SplitManifest m;
  m.seed = j.at("seed").get<std::uint64_t>();
  for (const auto& [id, p] : j.at("players").items()) {
    PlayerInfo info;
    info.bucket = p.value("bucket", std::string{});
    info.seen = p.value("seen", true);
    info.mean_rating = p.value("mean_rating", 0.0);
    info.opening = p.value("opening", std::string("none"));
    info.split.player_id = id;
    info.split.seed = m.seed;
    p.at("train").get_to(info.split.train_ids);
    p.at("reference").get_to(info.split.reference_ids);
    p.at("query").get_to(info.split.query_ids);
    m.players[id] = std::move(info);
  }
  return m;
}

void Corpus::index() {
  by_id_.clear();
  for (std::size_t i = 0; i < records.size(); ++i) by_id_[records[i].game_id] = i;
}

const GameRecord& Corpus::game(const std::string& id) const {
  auto it = by_id_.find(id);
  if (it == by_id_.end()) throw std::out_of_range("unknown game id " + id);
  return records[it->second];
}

Corpus ingest_records(std::vector<GameRecord> records, const FilterConfig& config) {
  const std::size_t before = records.size();
  Corpus corpus;
  corpus.records = filter_games(records, config.min_moves, config.time_control_min, config.time_control_max);
  spdlog::info("game filter kept {} of {} games", corpus.records.size(), before);

  // Duplicate ids would make split manifests ambiguous; keep the first.
  std::set<std::string> ids;
  std::vector<GameRecord> unique;
  for (auto& g : corpus.records)
    if (ids.insert(g.game_id).second) unique.push_back(std::move(g));
  if (unique.size() != corpus.records.size())
    spdlog::warn("dropped {} games with duplicate ids", corpus.records.size() - unique.size());
  corpus.records = std::move(unique);

  corpus.manifest.seed = config.seed;
  for (const auto& pc : build_corpora(corpus.records, config)) {
    std::vector<std::string> game_ids;
    std::vector<GameRecord> as_white;
    for (std::size_t gi : pc.games) {
      game_ids.push_back(corpus.records[gi].game_id);
      if (corpus.records[gi].white_id == pc.player_id) as_white.push_back(corpus.records[gi]);
    }
    if (game_ids.size() < 10) {
      spdlog::warn("player {} has fewer than 10 games; not split", pc.player_id);
      continue;
    }
    PlayerInfo info;
    info.bucket = bucket_label(pc.bucket);
    info.seen = pc.seen;
    info.mean_rating = pc.mean_rating;
    info.opening = analysis::opening_label(as_white);
    info.split = split_player(pc.player_id, std::move(game_ids), config.seed);
    corpus.manifest.players[pc.player_id] = std::move(info);
  }
  corpus.index();
  return corpus;
}

void write_records(const std::filesystem::path& path, const std::vector<GameRecord>& records) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  for (const auto& g : records) out << json(g).dump() << '\n';
}

std::vector<GameRecord> read_records(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<GameRecord> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const json j = json::parse(line);
    if (j.contains("provenance")) continue;
    out.push_back(j.get<GameRecord>());
  }
  return out;
}

void write_corpus(const std::filesystem::path& dir, const Corpus& corpus, const json& provenance) {
  std::filesystem::create_directories(dir);
  write_records(dir / "games.ndjson", corpus.records);
  std::ofstream out(dir / "splits.json");
  if (!out) throw IoError("cannot write " + (dir / "splits.json").string());
  json j = to_json(corpus.manifest);
  j["provenance"] = provenance;
  out << j.dump(1) << '\n';
}

Corpus read_corpus(const std::filesystem::path& dir) {
  Corpus c;
  c.records = read_records(dir / "games.ndjson");
  std::ifstream in(dir / "splits.json");
  if (!in) throw IoError("cannot open " + (dir / "splits.json").string());
  c.manifest = manifest_from_json(json::parse(in));
  c.index();
  return c;
}

}  // namespace stylo::ingest
