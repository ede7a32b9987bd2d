// stylometry: command-line front end for ingest, training, evaluation and
// analysis.
//
// Exit codes: 0 success, 1 usage or config error, 2 data error, 3 numeric
// failure. Config precedence: built-in defaults < --config file < flags.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "stylo/analysis.hpp"
#include "stylo/binary_io.hpp"
#include "stylo/openings_baseline.hpp"
#include "stylo/pgn_ingest.hpp"
#include "stylo/stylometry_eval.hpp"
#include "stylo/synthetic_players.hpp"
#include "stylo/trainer.hpp"

#ifndef STYLO_VERSION
#define STYLO_VERSION "0.0.0"
#endif

namespace fs = std::filesystem;
using nlohmann::json;
using namespace stylo;

namespace {

// Bad flags, unreadable or schema-violating config files.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

json provenance(const std::string& command, const json& config, std::uint64_t seed) {
  return {{"tool", "stylometry"},
          {"version", STYLO_VERSION},
          {"command", command},
          {"config_hash", model::config_hash(config)},
          {"seed", seed}};
}

json read_json_file(const fs::path& path, const std::string& what) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open " + what + " " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw UsageError(what + " " + path.string() + " is not valid JSON: " + e.what());
  }
}

template <typename T, typename F>
T parse_config(const json& j, const std::string& what, F&& convert) {
  try {
    return convert(j);
  } catch (const std::invalid_argument& e) {
    throw UsageError(what + ": " + e.what());
  } catch (const json::exception& e) {
    throw UsageError(what + ": " + e.what());
  }
}

void write_json(const fs::path& path, const json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw ingest::IoError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

// Game ids of one split partition ("train", "reference", "query" or "all"),
// paired with the player they belong to.
std::vector<std::pair<const ingest::GameRecord*, std::string>> partition_games(const ingest::Corpus& corpus,
                                                                               const std::string& part) {
  std::vector<std::pair<const ingest::GameRecord*, std::string>> out;
  for (const auto& [player, info] : corpus.manifest.players) {
    std::vector<const std::vector<std::string>*> lists;
    if (part == "train" || part == "all") lists.push_back(&info.split.train_ids);
    if (part == "reference" || part == "all") lists.push_back(&info.split.reference_ids);
    if (part == "query" || part == "all") lists.push_back(&info.split.query_ids);
    for (const auto* ids : lists)
      for (const auto& id : *ids) out.emplace_back(&corpus.game(id), player);
  }
  return out;
}

eval::StylometryTask load_task(const fs::path& path, const std::string& data_flag, fs::path* data_dir) {
  const json j = read_json_file(path, "task file");
  auto task = parse_config<eval::StylometryTask>(j, "task " + path.string(),
                                                 [](const json& v) { return v.get<eval::StylometryTask>(); });
  if (!data_flag.empty()) *data_dir = data_flag;
  else if (!task.data.empty()) *data_dir = fs::path(task.data).is_absolute() ? fs::path(task.data)
                                                                             : path.parent_path() / task.data;
  else throw UsageError("no corpus: pass --data or set \"data\" in the task file");
  return task;
}

void write_task_result(const fs::path& out, const eval::TaskResult& r, const json& prov, const std::string& method) {
  json j = eval::to_json(r);
  j["method"] = method;
  j["provenance"] = prov;
  write_json(out, j);
  spdlog::info("P@1 {:.4f}  P@5 {:.4f}  MRR {:.4f} over {} targets", r.p_at_1, r.p_at_5, r.mrr, r.targets.size());
}

// ------------------------------------------------------------------ subcommands

struct IngestArgs {
  std::vector<std::string> pgn;
  std::string filters, out;
  std::optional<std::uint64_t> seed;
};

void run_ingest(const IngestArgs& a) {
  ingest::FilterConfig cfg;
  if (!a.filters.empty())
    cfg = parse_config<ingest::FilterConfig>(read_json_file(a.filters, "filter config"), "filter config",
                                             ingest::filter_config_from_json);
  if (a.seed) cfg.seed = *a.seed;
  std::vector<ingest::GameRecord> records;
  for (const auto& p : a.pgn) {
    auto parsed = ingest::parse_pgn_file(p);
    spdlog::info("{}: {} games, {} skipped", p, parsed.games.size(), parsed.skipped);
    for (auto& r : parsed.games) records.push_back(std::move(r));
  }
  const auto corpus = ingest::ingest_records(std::move(records), cfg);
  ingest::write_corpus(a.out, corpus, provenance("ingest", ingest::to_json(cfg), cfg.seed));
  spdlog::info("wrote {} games for {} players to {}", corpus.records.size(), corpus.manifest.players.size(), a.out);
}

struct SynthArgs {
  int bots = synth::SynthConfig{}.bots;
  int games = synth::SynthConfig{}.games_per_pair;
  std::uint64_t seed = 0;
  double noise = synth::SynthConfig{}.strength_noise;
  int max_plies = synth::GameLimits{}.max_plies;
  std::string out;
};

void run_synth(const SynthArgs& a) {
  synth::SynthConfig c;
  c.bots = a.bots;
  c.games_per_pair = a.games;
  c.seed = a.seed;
  c.strength_noise = a.noise;
  c.limits.max_plies = a.max_plies;
  if (c.bots < 2) throw UsageError("synth: need at least 2 bots");
  const auto s = synth::generate_corpus(c);
  const json cfg = {{"bots", c.bots}, {"games_per_pair", c.games_per_pair}, {"noise", c.strength_noise},
                    {"max_plies", c.limits.max_plies}};
  fs::create_directories(a.out);
  std::ofstream pgn(fs::path(a.out) / "games.pgn");
  pgn << s.pgn;
  ingest::write_corpus(a.out, s.corpus, provenance("synth", cfg, a.seed));
  spdlog::info("wrote {} games for {} bots to {}", s.corpus.records.size(), s.bots.size(), a.out);
}

struct TrainArgs {
  std::string data, config, out, resume;
  std::optional<int> n_players, m_games, window;
  std::optional<long> max_steps, checkpoint_every, validate_every, stop_at;
  std::optional<std::uint64_t> seed;
  std::optional<double> lr;
};

int run_train(const TrainArgs& a) {
  train::TrainConfig cfg;
  if (!a.config.empty())
    cfg = parse_config<train::TrainConfig>(read_json_file(a.config, "train config"), "train config",
                                           [](const json& j) { return j.get<train::TrainConfig>(); });
  if (a.n_players) cfg.n_players = *a.n_players;
  if (a.m_games) cfg.m_games = *a.m_games;
  if (a.window) cfg.window = *a.window;
  if (a.max_steps) cfg.max_steps = *a.max_steps;
  if (a.checkpoint_every) cfg.checkpoint_every = *a.checkpoint_every;
  if (a.validate_every) cfg.validate_every = *a.validate_every;
  if (a.seed) cfg.seed = *a.seed;
  if (a.lr) cfg.lr0 = *a.lr;
  cfg.encoder.input_dim = cfg.extractor.output_dim;
  try {
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(std::string("train config: ") + e.what());
  }

  const auto corpus = ingest::read_corpus(a.data);
  const auto index = train::build_index(corpus, train::Partition::train, cfg.m_games);
  const auto validation = train::build_index(corpus, train::Partition::reference, cfg.m_games);
  spdlog::info("{} training players, {} validation players", index.size(), validation.size());

  std::optional<train::TrainState> state;
  if (!a.resume.empty()) {
    state.emplace(train::load_checkpoint(a.resume));
    const json saved = state->config, wanted = cfg;
    json a_cmp = saved, b_cmp = wanted;
    a_cmp.erase("max_steps");
    b_cmp.erase("max_steps");
    a_cmp.erase("checkpoint_every");
    b_cmp.erase("checkpoint_every");
    if (a_cmp != b_cmp) throw UsageError("resume: checkpoint config differs from the requested config");
    state->config.max_steps = cfg.max_steps;
    state->config.checkpoint_every = cfg.checkpoint_every;
    spdlog::info("resuming from step {}", state->step);
  } else {
    state.emplace(cfg);
  }

  fs::create_directories(a.out);
  write_json(fs::path(a.out) / "config.json", {{"config", json(cfg)}, {"provenance", provenance("train", cfg, cfg.seed)}});
  std::ofstream metrics(fs::path(a.out) / "metrics.ndjson", a.resume.empty() ? std::ios::trunc : std::ios::app);
  if (a.resume.empty()) metrics << json{{"provenance", provenance("train", cfg, cfg.seed)}}.dump() << '\n';

  train::TrainOptions opt;
  opt.checkpoint_dir = fs::path(a.out);
  opt.metrics = &metrics;
  opt.validation = validation.size() >= 2 ? &validation : &index;
  opt.stop_at = a.stop_at;
  try {
    const auto report = train::train(*state, index, opt);
    if (!report.steps.empty())
      spdlog::info("step {} loss {:.4f} w {:.3f} b {:.3f}", report.steps.back().step, report.steps.back().loss,
                   report.steps.back().w, report.steps.back().b);
    spdlog::info("checkpoint {}", train::checkpoint_path(a.out, state->step).string());
  } catch (const NumericError& e) {
    spdlog::error("{} (diagnostics in {})", e.what(), (fs::path(a.out) / "diagnostic.json").string());
    return 3;
  }
  return 0;
}

struct EmbedArgs {
  std::string ckpt, data, games = "query", out;
  int k = 15;
  int max_moves = 0;
};

void run_embed(const EmbedArgs& a) {
  const auto model = model::load_model(a.ckpt);
  const auto corpus = ingest::read_corpus(a.data);
  const auto games = partition_games(corpus, a.games);
  eval::ModelEmbedder embedder(model, a.max_moves);
  std::map<std::string, std::vector<const ingest::GameRecord*>> by_player;
  std::size_t skipped = 0;
  for (const auto& [g, p] : games) {
    if (embedder.usable(*g, p, a.k)) by_player[p].push_back(g);
    else ++skipped;
  }
  if (fs::path(a.out).has_parent_path()) fs::create_directories(fs::path(a.out).parent_path());
  std::ofstream out(a.out);
  if (!out) throw ingest::IoError("cannot write " + a.out);
  const json cfg = {{"ckpt", a.ckpt}, {"games", a.games}, {"k", a.k}, {"max_moves", a.max_moves}};
  out << json{{"provenance", provenance("embed", cfg, 0)}}.dump() << '\n';
  std::size_t n = 0;
  for (const auto& [player, list] : by_player) {
    const auto vecs = embedder.embed(list, player, a.k);
    for (std::size_t i = 0; i < list.size(); ++i, ++n)
      out << json{{"game_id", list[i]->game_id}, {"player_id", player}, {"values", vecs[i]}}.dump() << '\n';
  }
  spdlog::info("embedded {} games ({} too short for k={})", n, skipped, a.k);
}

struct EvaluateArgs {
  std::string ckpt, task, out, data, centroids;
  int max_moves = 0;
};

void run_evaluate(const EvaluateArgs& a) {
  fs::path data;
  const auto task = load_task(a.task, a.data, &data);
  const auto model = model::load_model(a.ckpt);
  const auto corpus = ingest::read_corpus(data);
  eval::ModelEmbedder embedder(model, a.max_moves);
  std::vector<eval::PlayerVector> centroids;
  const auto result = eval::run_task(task, embedder, corpus, &centroids);
  if (!a.centroids.empty()) eval::write_centroid_index(a.centroids, centroids);
  write_task_result(a.out, result, provenance("evaluate", task, task.seed), "model");
}

struct BaselineArgs {
  std::string mode = "5hot", task, out, data, centroids;
  std::optional<std::uint64_t> random_window_seed;
};

void run_baseline(const BaselineArgs& a) {
  fs::path data;
  const auto task = load_task(a.task, a.data, &data);
  const auto corpus = ingest::read_corpus(data);
  const auto mode = a.mode == "all" ? baseline::Mode::all_moves : baseline::Mode::five_hot;
  if (mode == baseline::Mode::all_moves && a.random_window_seed)
    throw UsageError("--random-window only applies to --mode 5hot");
  baseline::BaselineEmbedder embedder(mode, a.random_window_seed);
  std::vector<eval::PlayerVector> centroids;
  const auto result = eval::run_task(task, embedder, corpus, &centroids);
  if (!a.centroids.empty()) eval::write_centroid_index(a.centroids, centroids);
  write_task_result(a.out, result, provenance("baseline", task, task.seed), "baseline-" + a.mode);
}

struct ExportArgs {
  std::string embeddings, meta, out;
  bool per_player = false;
};

void run_export(const ExportArgs& a) {
  std::ifstream in(a.embeddings);
  if (!in) throw ingest::IoError("cannot open " + a.embeddings);
  std::vector<eval::GameEmbedding> embs;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error&) {
      throw binio::FormatError(a.embeddings + ":" + std::to_string(lineno) + ": not JSON");
    }
    if (j.contains("provenance")) continue;
    embs.push_back({j.at("game_id").get<std::string>(), j.at("player_id").get<std::string>(),
                    j.at("values").get<std::vector<double>>()});
  }
  std::ifstream min(a.meta);
  if (!min) throw ingest::IoError("cannot open " + a.meta);
  const auto manifest = ingest::manifest_from_json(json::parse(min));

  std::vector<std::vector<double>> vectors;
  std::vector<std::string> owners;
  if (a.per_player) {
    std::map<std::string, std::vector<eval::GameEmbedding>> grouped;
    for (auto& e : embs) grouped[e.player_id].push_back(e);
    for (const auto& [p, list] : grouped) {
      vectors.push_back(eval::player_vector(list).values);
      owners.push_back(p);
    }
  } else {
    for (auto& e : embs) {
      vectors.push_back(std::move(e.values));
      owners.push_back(e.player_id);
    }
  }
  std::vector<analysis::VectorMetadata> meta;
  for (const auto& p : owners) {
    analysis::VectorMetadata m{p, "unknown", "none", 0.0};
    if (auto it = manifest.players.find(p); it != manifest.players.end()) {
      m.bucket = it->second.bucket;
      m.opening = it->second.opening.empty() ? "none" : it->second.opening;
      m.rating = it->second.mean_rating;
    }
    meta.push_back(m);
  }
  if (fs::path(a.out).has_parent_path()) fs::create_directories(fs::path(a.out).parent_path());
  analysis::export_vectors(a.out, vectors, meta);
  write_json(a.out + ".provenance.json",
             provenance("export", {{"embeddings", a.embeddings}, {"meta", a.meta}, {"per_player", a.per_player}}, 0));
  spdlog::info("exported {} vectors to {}.vectors.tsv", vectors.size(), a.out);
}

struct AttentionArgs {
  std::string ckpt, data, games = "query", k_list = "0,5,10,15", out;
  int max_moves = 0;
  int limit = 0;
};

void run_attention(const AttentionArgs& a) {
  std::vector<int> ks;
  std::stringstream ss(a.k_list);
  for (std::string item; std::getline(ss, item, ',');) {
    try {
      ks.push_back(std::stoi(item));
    } catch (const std::exception&) {
      throw UsageError("--k-list: '" + item + "' is not an integer");
    }
    if (ks.back() < 0) throw UsageError("--k-list: negative k");
  }
  const auto model = model::load_model(a.ckpt);
  const auto corpus = ingest::read_corpus(a.data);
  auto games = partition_games(corpus, a.games);
  if (a.limit > 0 && static_cast<int>(games.size()) > a.limit) games.resize(a.limit);
  json profiles = json::array();
  for (int k : ks) {
    const auto p = analysis::attention_profile(model, games, k, a.max_moves);
    spdlog::info("k={}: {} games, spearman rho {:.3f}", k, p.games, p.spearman_rho);
    profiles.push_back(analysis::to_json(p));
  }
  const json cfg = {{"ckpt", a.ckpt}, {"games", a.games}, {"k_list", ks}, {"max_moves", a.max_moves}, {"limit", a.limit}};
  write_json(a.out, {{"profiles", profiles}, {"provenance", provenance("attention", cfg, 0)}});
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Chess behavioral stylometry: ingest, train, embed and identify players"};
  app.require_subcommand(1);
  app.set_version_flag("--version", STYLO_VERSION);
  bool verbose = false, quiet = false;
  app.add_flag("-v,--verbose", verbose, "Debug logging");
  app.add_flag("-q,--quiet", quiet, "Warnings and errors only");

  IngestArgs ingest_args;
  auto* ingest = app.add_subcommand("ingest", "Parse PGN files, filter players and write a split corpus");
  ingest->add_option("--pgn", ingest_args.pgn, "PGN files (.pgn, .pgn.bz2, .pgn.zst)")->required()->check(CLI::ExistingFile);
  ingest->add_option("--filters", ingest_args.filters, "Filter config (JSON)");
  ingest->add_option("--out", ingest_args.out, "Output corpus directory")->required();
  ingest->add_option("--seed", ingest_args.seed, "Split seed (overrides the config)");

  SynthArgs synth_args;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic bot corpus");
  synth->add_option("--bots", synth_args.bots, "Number of bots")->capture_default_str();
  synth->add_option("--games", synth_args.games, "Games per ordered pair of bots")->capture_default_str();
  synth->add_option("--seed", synth_args.seed, "Corpus seed")->capture_default_str();
  synth->add_option("--noise", synth_args.noise, "Probability of a non-best move")->capture_default_str();
  synth->add_option("--max-plies", synth_args.max_plies, "Ply cap per game")->capture_default_str();
  synth->add_option("--out", synth_args.out, "Output corpus directory")->required();

  TrainArgs train_args;
  auto* train_cmd = app.add_subcommand("train", "Train the model with GE2E episodes");
  train_cmd->add_option("--data", train_args.data, "Corpus directory")->required()->check(CLI::ExistingDirectory);
  train_cmd->add_option("--config", train_args.config, "Train config (JSON)");
  train_cmd->add_option("--out", train_args.out, "Checkpoint directory")->required();
  train_cmd->add_option("--resume", train_args.resume, "Continue from a checkpoint")->check(CLI::ExistingFile);
  train_cmd->add_option("--n-players", train_args.n_players, "Players per episode");
  train_cmd->add_option("--m-games", train_args.m_games, "Games per player per episode");
  train_cmd->add_option("--window", train_args.window, "Moves per training sequence");
  train_cmd->add_option("--max-steps", train_args.max_steps, "Total optimisation steps");
  train_cmd->add_option("--checkpoint-every", train_args.checkpoint_every, "Checkpoint interval (0: final only)");
  train_cmd->add_option("--validate-every", train_args.validate_every, "Validation interval");
  train_cmd->add_option("--stop-at", train_args.stop_at, "Stop early at this step (resumable)");
  train_cmd->add_option("--seed", train_args.seed, "Model and episode seed");
  train_cmd->add_option("--lr", train_args.lr, "Initial learning rate");

  EmbedArgs embed_args;
  auto* embed = app.add_subcommand("embed", "Write per-game embeddings as NDJSON");
  embed->add_option("--ckpt", embed_args.ckpt, "Checkpoint")->required()->check(CLI::ExistingFile);
  embed->add_option("--data", embed_args.data, "Corpus directory")->required()->check(CLI::ExistingDirectory);
  embed->add_option("--games", embed_args.games, "Partition: train, reference, query or all")
      ->check(CLI::IsMember({"train", "reference", "query", "all"}))
      ->capture_default_str();
  embed->add_option("--k", embed_args.k, "Truncation: skip the player's first k moves")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  embed->add_option("--max-moves", embed_args.max_moves, "Cap on moves per game (0: all)");
  embed->add_option("--out", embed_args.out, "Output file")->required();

  EvaluateArgs eval_args;
  auto* evaluate = app.add_subcommand("evaluate", "Run an identification task with a trained model");
  evaluate->add_option("--ckpt", eval_args.ckpt, "Checkpoint")->required()->check(CLI::ExistingFile);
  evaluate->add_option("--task", eval_args.task, "Task file (JSON)")->required();
  evaluate->add_option("--data", eval_args.data, "Corpus directory (overrides the task file)");
  evaluate->add_option("--out", eval_args.out, "Result file")->required();
  evaluate->add_option("--centroids", eval_args.centroids, "Also write the candidate centroid index");
  evaluate->add_option("--max-moves", eval_args.max_moves, "Cap on moves per game (0: all)");

  BaselineArgs base_args;
  auto* base = app.add_subcommand("baseline", "Run an identification task with the opening-move baseline");
  base->add_option("--mode", base_args.mode, "5hot or all")->check(CLI::IsMember({"5hot", "all"}))->capture_default_str();
  base->add_option("--task", base_args.task, "Task file (JSON)")->required();
  base->add_option("--data", base_args.data, "Corpus directory (overrides the task file)");
  base->add_option("--out", base_args.out, "Result file")->required();
  base->add_option("--centroids", base_args.centroids, "Also write the candidate centroid index");
  base->add_option("--random-window", base_args.random_window_seed, "Seed for a random 5-move window");

  ExportArgs export_args;
  auto* exp = app.add_subcommand("export", "Write vectors and metadata as a TSV pair");
  exp->add_option("--embeddings", export_args.embeddings, "NDJSON from `embed`")->required()->check(CLI::ExistingFile);
  exp->add_option("--meta", export_args.meta, "splits.json of the corpus")->required()->check(CLI::ExistingFile);
  exp->add_option("--out", export_args.out, "Output prefix")->required();
  exp->add_flag("--per-player", export_args.per_player, "Export player centroids instead of games");

  AttentionArgs att_args;
  auto* att = app.add_subcommand("attention", "Attention received per move position");
  att->add_option("--ckpt", att_args.ckpt, "Checkpoint")->required()->check(CLI::ExistingFile);
  att->add_option("--data", att_args.data, "Corpus directory")->required()->check(CLI::ExistingDirectory);
  att->add_option("--games", att_args.games, "Partition: train, reference, query or all")
      ->check(CLI::IsMember({"train", "reference", "query", "all"}))
      ->capture_default_str();
  att->add_option("--k-list", att_args.k_list, "Comma-separated truncations")->capture_default_str();
  att->add_option("--max-moves", att_args.max_moves, "Cap on moves per game (0: all)");
  att->add_option("--limit", att_args.limit, "Use at most this many games (0: all)");
  att->add_option("--out", att_args.out, "Output JSON")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }
  spdlog::set_default_logger(spdlog::stderr_color_mt("stylometry"));
  spdlog::set_level(verbose ? spdlog::level::debug : quiet ? spdlog::level::warn : spdlog::level::info);

  try {
    if (*ingest) run_ingest(ingest_args);
    else if (*synth) run_synth(synth_args);
    else if (*train_cmd) return run_train(train_args);
    else if (*embed) run_embed(embed_args);
    else if (*evaluate) run_evaluate(eval_args);
    else if (*base) run_baseline(base_args);
    else if (*exp) run_export(export_args);
    else if (*att) run_attention(att_args);
    return 0;
  } catch (const UsageError& e) {
    spdlog::error("{}", e.what());
    return 1;
  } catch (const NumericError& e) {
    spdlog::error("numeric failure: {}", e.what());
    return 3;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 2;
  }
}
