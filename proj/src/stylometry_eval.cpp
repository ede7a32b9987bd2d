#include "stylo/stylometry_eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <stdexcept>

#include <spdlog/spdlog.h>

#include "stylo/binary_io.hpp"

namespace stylo::eval {

PlayerVector player_vector(const std::string& player_id, const std::vector<std::vector<double>>& vectors) {
  if (vectors.empty()) throw std::invalid_argument("player_vector: no embeddings for " + player_id);
  const std::size_t d = vectors.front().size();
  PlayerVector pv{player_id, std::vector<double>(d, 0.0), vectors.size()};
  for (const auto& v : vectors) {
    if (v.size() != d) throw std::invalid_argument("player_vector: ragged embedding dimensions");
    for (std::size_t i = 0; i < d; ++i) pv.values[i] += v[i];
  }
  for (auto& x : pv.values) x /= static_cast<double>(vectors.size());
  return pv;
}

PlayerVector player_vector(const std::vector<GameEmbedding>& embeddings) {
  if (embeddings.empty()) throw std::invalid_argument("player_vector: empty embedding list");
  std::vector<std::vector<double>> vs;
  for (const auto& e : embeddings) {
    if (e.player_id != embeddings.front().player_id)
      throw std::invalid_argument("player_vector: embeddings belong to different players");
    vs.push_back(e.values);
  }
  return player_vector(embeddings.front().player_id, vs);
}

double cosine_distance(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw std::invalid_argument("cosine distance: dimension mismatch");
  double ab = 0, aa = 0, bb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  if (!(aa > 0) || !(bb > 0)) throw std::invalid_argument("cosine distance: zero-norm vector");
  return 1.0 - ab / (std::sqrt(aa) * std::sqrt(bb));
}

std::vector<Ranked> identify(const PlayerVector& query, const std::vector<PlayerVector>& candidates) {
  if (candidates.empty()) throw std::invalid_argument("identify: no candidates");
  std::vector<Ranked> out;
  out.reserve(candidates.size());
  for (const auto& c : candidates) {
    try {
      out.push_back({c.player_id, cosine_distance(query.values, c.values)});
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument(std::string(e.what()) + " (query " + query.player_id + ", candidate " +
                                  c.player_id + ")");
    }
  }
  std::sort(out.begin(), out.end(), [](const Ranked& a, const Ranked& b) {
    return a.distance != b.distance ? a.distance < b.distance : a.player_id < b.player_id;
  });
  return out;
}

namespace {

std::size_t rank_of(const std::vector<Ranked>& ranking, const std::string& truth) {
  for (std::size_t i = 0; i < ranking.size(); ++i)
    if (ranking[i].player_id == truth) return i + 1;
  return 0;
}

}  // namespace

double precision_at_n(const std::vector<std::vector<Ranked>>& rankings, const std::vector<std::string>& truths, int n) {
  if (rankings.size() != truths.size())
    throw std::invalid_argument("precision_at_n: " + std::to_string(rankings.size()) + " rankings for " +
                                std::to_string(truths.size()) + " truths");
  if (n < 1) throw std::invalid_argument("precision_at_n: n must be >= 1");
  if (truths.empty()) return 0.0;
  std::size_t hits = 0;
  for (std::size_t t = 0; t < truths.size(); ++t) {
    const std::size_t r = rank_of(rankings[t], truths[t]);
    if (r >= 1 && r <= static_cast<std::size_t>(n)) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(truths.size());
}

double mean_reciprocal_rank(const std::vector<std::vector<Ranked>>& rankings, const std::vector<std::string>& truths) {
  if (rankings.size() != truths.size()) throw std::invalid_argument("mean_reciprocal_rank: length mismatch");
  if (truths.empty()) return 0.0;
  double total = 0;
  for (std::size_t t = 0; t < truths.size(); ++t) {
    const std::size_t r = rank_of(rankings[t], truths[t]);
    if (r) total += 1.0 / static_cast<double>(r);
  }
  return total / static_cast<double>(truths.size());
}

// ---------------------------------------------------------------- task

void StylometryTask::validate() const {
  if (candidates.empty()) throw std::invalid_argument("task: candidate pool is empty");
  if (evaluation.empty()) throw std::invalid_argument("task: evaluation pool is empty");
  if (ref_size < 1 || query_size < 1) throw std::invalid_argument("task: ref_size and query_size must be >= 1");
  if (k < 0) throw std::invalid_argument("task: k must be >= 0");
  const std::set<std::string> c(candidates.begin(), candidates.end());
  if (c.size() != candidates.size()) throw std::invalid_argument("task: duplicate candidate ids");
  const std::set<std::string> e(evaluation.begin(), evaluation.end());
  if (e.size() != evaluation.size()) throw std::invalid_argument("task: duplicate evaluation ids");
  std::vector<std::string> missing;
  for (const auto& p : evaluation)
    if (!c.count(p)) missing.push_back(p);
  if (!missing.empty()) {
    std::string list;
    for (const auto& m : missing) list += (list.empty() ? "" : ", ") + m;
    throw std::invalid_argument("task: evaluation pool is not a subset of the candidate pool (" + list + ")");
  }
}

void to_json(nlohmann::json& j, const StylometryTask& t) {
  j = {{"candidates", t.candidates}, {"evaluation", t.evaluation}, {"ref_size", t.ref_size},
       {"query_size", t.query_size}, {"k", t.k},                   {"seed", t.seed}};
  if (!t.data.empty()) j["data"] = t.data;
}

void from_json(const nlohmann::json& j, StylometryTask& t) {
  if (!j.is_object()) throw std::invalid_argument("task: expected a JSON object");
  for (const auto& [key, v] : j.items()) {
    if (key == "candidates") t.candidates = v.get<std::vector<std::string>>();
    else if (key == "evaluation") t.evaluation = v.get<std::vector<std::string>>();
    else if (key == "ref_size") t.ref_size = v.get<int>();
    else if (key == "query_size") t.query_size = v.get<int>();
    else if (key == "k") t.k = v.get<int>();
    else if (key == "seed") t.seed = v.get<std::uint64_t>();
    else if (key == "data") t.data = v.get<std::string>();
    else throw std::invalid_argument("task: unknown key '" + key + "'");
  }
  t.validate();
}

// ---------------------------------------------------------------- embedders

std::size_t ModelEmbedder::dim() const { return static_cast<std::size_t>(model_.encoder.config().embed_dim); }

bool ModelEmbedder::usable(const ingest::GameRecord& game, const std::string& player, int k) const {
  const auto color = game.color_of(player);
  return color && game.moves_by(*color) > k;
}

std::vector<std::vector<double>> ModelEmbedder::embed(const std::vector<const ingest::GameRecord*>& games,
                                                      const std::string& player, int k) {
  std::vector<encoding::GameSequence> seqs;
  for (const auto* g : games) {
    auto s = encoding::encode_game(*g, player, k);
    if (!s) throw std::invalid_argument("embed: game " + g->game_id + " has too few moves for k=" + std::to_string(k));
    seqs.push_back(std::move(*s));
  }
  std::vector<std::vector<double>> out;
  if (seqs.empty()) return out;
  const Matrix<float> e = model_.embed(seqs, max_moves_);
  for (int r = 0; r < e.rows; ++r) out.emplace_back(e.row(r), e.row(r) + e.cols);
  return out;
}

// ---------------------------------------------------------------- run_task

std::vector<const ingest::GameRecord*> draw_games(const ingest::Corpus& corpus, const std::vector<std::string>& ids,
                                                  const std::string& player, int count, int k, const Embedder& embedder,
                                                  std::uint64_t seed, const std::string& salt) {
  std::vector<std::string> order = ids;
  std::sort(order.begin(), order.end());
  Rng rng(mix_seed(seed, salt + ":" + player));
  rng.shuffle(order);
  std::vector<const ingest::GameRecord*> out;
  std::size_t skipped = 0;
  for (const auto& id : order) {
    if (static_cast<int>(out.size()) == count) break;
    const auto& g = corpus.game(id);
    if (embedder.usable(g, player, k)) out.push_back(&g);
    else ++skipped;
  }
  if (static_cast<int>(out.size()) < count)
    spdlog::warn("{}: {} {} games usable at k={} (wanted {}, {} too short)", player, out.size(), salt, k, count, skipped);
  return out;
}

TaskResult run_task(const StylometryTask& task, Embedder& embedder, const ingest::Corpus& corpus,
                    std::vector<PlayerVector>* centroids_out) {
  task.validate();
  TaskResult result;
  result.task = task;

  auto info_of = [&](const std::string& p) -> const ingest::PlayerInfo& {
    auto it = corpus.manifest.players.find(p);
    if (it == corpus.manifest.players.end()) throw std::invalid_argument("task: unknown player " + p);
    return it->second;
  };

  std::vector<std::string> offenders;
  std::map<std::string, std::vector<const ingest::GameRecord*>> refs, queries;
  for (const auto& p : task.candidates) {
    refs[p] = draw_games(corpus, info_of(p).split.reference_ids, p, task.ref_size, task.k, embedder, task.seed,
                         "reference");
    if (refs[p].empty()) offenders.push_back(p + " (reference)");
  }
  for (const auto& p : task.evaluation) {
    queries[p] =
        draw_games(corpus, info_of(p).split.query_ids, p, task.query_size, task.k, embedder, task.seed, "query");
    if (queries[p].empty()) offenders.push_back(p + " (query)");
  }
  if (!offenders.empty()) {
    std::string list;
    for (const auto& o : offenders) list += (list.empty() ? "" : ", ") + o;
    throw std::invalid_argument("task: pool members with no usable games: " + list);
  }

  std::vector<PlayerVector> centroids;
  for (const auto& p : task.candidates) {
    centroids.push_back(player_vector(p, embedder.embed(refs[p], p, task.k)));
    result.reference_games[p] = refs[p].size();
  }

  std::vector<std::vector<Ranked>> rankings;
  for (const auto& p : task.evaluation) {
    const PlayerVector q = player_vector(p, embedder.embed(queries[p], p, task.k));
    TargetResult t;
    t.player_id = p;
    t.query_games = queries[p].size();
    t.ranking = identify(q, centroids);
    t.rank = rank_of(t.ranking, p);
    rankings.push_back(t.ranking);
    result.targets.push_back(std::move(t));
  }
  result.p_at_1 = precision_at_n(rankings, task.evaluation, 1);
  result.p_at_5 = precision_at_n(rankings, task.evaluation, 5);
  result.mrr = mean_reciprocal_rank(rankings, task.evaluation);
  if (centroids_out) *centroids_out = std::move(centroids);
  return result;
}

nlohmann::json to_json(const TaskResult& r) {
  nlohmann::json targets = nlohmann::json::array();
  for (const auto& t : r.targets) {
    nlohmann::json top = nlohmann::json::array();
    for (std::size_t i = 0; i < t.ranking.size() && i < 10; ++i)
      top.push_back({{"player", t.ranking[i].player_id}, {"distance", t.ranking[i].distance}});
    targets.push_back({{"player", t.player_id}, {"query_games", t.query_games}, {"rank", t.rank}, {"top", top}});
  }
  return {{"task", r.task},
          {"metrics", {{"p_at_1", r.p_at_1}, {"p_at_5", r.p_at_5}, {"mrr", r.mrr}}},
          {"reference_games", r.reference_games},
          {"targets", targets}};
}

std::map<std::string, double> grouped_p_at_1(const TaskResult& result,
                                             const std::map<std::string, std::string>& group_of) {
  std::map<std::string, std::pair<std::size_t, std::size_t>> counts;
  for (const auto& t : result.targets) {
    auto it = group_of.find(t.player_id);
    const std::string g = it == group_of.end() ? "unknown" : it->second;
    auto& c = counts[g];
    ++c.second;
    if (t.rank == 1) ++c.first;
  }
  std::map<std::string, double> out;
  for (const auto& [g, c] : counts) out[g] = static_cast<double>(c.first) / static_cast<double>(c.second);
  return out;
}

// ---------------------------------------------------------------- centroid index

namespace {
constexpr char kIndexMagic[9] = "STYCENT1";
constexpr std::uint32_t kIndexVersion = 1;
}  // namespace

void write_centroid_index(const std::filesystem::path& path, const std::vector<PlayerVector>& vectors) {
  const std::size_t dim = vectors.empty() ? 0 : vectors.front().values.size();
  for (const auto& v : vectors)
    if (v.values.size() != dim) throw std::invalid_argument("centroid index: ragged dimensions");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  binio::write_magic(out, kIndexMagic);
  binio::write_u32(out, kIndexVersion);
  binio::write_u32(out, static_cast<std::uint32_t>(dim));
  binio::write_u64(out, vectors.size());
  for (const auto& v : vectors) binio::write_string(out, v.player_id);
  for (const auto& v : vectors) binio::write_f32_array<double>(out, v.values);
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

std::vector<PlayerVector> read_centroid_index(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  binio::expect_magic(in, kIndexMagic);
  if (binio::read_u32(in) != kIndexVersion) throw binio::FormatError("unsupported centroid index version");
  const std::uint32_t dim = binio::read_u32(in);
  const std::uint64_t count = binio::read_u64(in);
  std::vector<PlayerVector> out(count);
  for (auto& v : out) v.player_id = binio::read_string(in);
  for (auto& v : out) {
    v.values.resize(dim);
    binio::read_f32_array<double>(in, v.values);
    v.n_games = 0;
  }
  return out;
}

}  // namespace stylo::eval
