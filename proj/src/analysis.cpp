#include "stylo/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

namespace stylo::analysis {

namespace {

std::string modal(const std::map<std::string, int>& counts) {
  std::string best;
  int best_count = 0;
  for (const auto& [uci, n] : counts)  // map order gives the lexicographic tie-break
    if (n > best_count) best = uci, best_count = n;
  return best;
}

std::string san_after(const std::vector<std::string>& prefix, const std::string& uci) {
  chess::Position pos = chess::Position::initial();
  for (const auto& m : prefix) pos = pos.play(pos.parse_uci(m));
  return pos.to_san(pos.parse_uci(uci));
}

}  // namespace

std::string opening_label(const std::vector<ingest::GameRecord>& games_as_white) {
  std::map<std::string, int> counts;
  for (const auto& g : games_as_white)
    if (!g.moves.empty()) ++counts[g.moves.front()];
  if (counts.empty()) return "none";
  return san_after({}, modal(counts));
}

std::string modal_reply(const std::vector<ingest::GameRecord>& games_as_black, const std::string& white_first_uci) {
  std::map<std::string, int> counts;
  for (const auto& g : games_as_black)
    if (g.moves.size() >= 2 && g.moves[0] == white_first_uci) ++counts[g.moves[1]];
  if (counts.empty()) return "none";
  return san_after({white_first_uci}, modal(counts));
}

std::vector<double> attention_received(const std::vector<std::vector<Matrix<float>>>& weights) {
  if (weights.empty() || weights.front().empty()) return {};
  const int L = weights.front().front().cols;
  std::vector<double> out(L, 0.0);
  std::size_t mats = 0;
  for (const auto& block : weights) {
    for (const auto& m : block) {
      for (int i = 0; i < m.rows; ++i)
        for (int j = 0; j < L; ++j) out[j] += m(i, j);
      ++mats;
    }
  }
  for (auto& v : out) v /= static_cast<double>(mats);
  return out;
}

double spearman_rho(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw std::invalid_argument("spearman_rho: length mismatch");
  const std::size_t n = x.size();
  if (n < 2) return 0.0;
  auto ranks = [n](const std::vector<double>& v) {
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return v[a] < v[b]; });
    std::vector<double> r(n);
    for (std::size_t i = 0; i < n;) {
      std::size_t j = i;
      while (j + 1 < n && v[idx[j + 1]] == v[idx[i]]) ++j;
      const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
      for (std::size_t t = i; t <= j; ++t) r[idx[t]] = avg;
      i = j + 1;
    }
    return r;
  };
  const auto rx = ranks(x), ry = ranks(y);
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < n; ++i) mx += rx[i], my += ry[i];
  mx /= n;
  my /= n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0 || syy == 0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

AttentionProfile attention_profile(const model::StyleModel& model,
                                   const std::vector<std::pair<const ingest::GameRecord*, std::string>>& games, int k,
                                   int max_moves) {
  AttentionProfile p;
  p.k = k;
  std::vector<double> sum, sumsq;
  for (const auto& [record, player] : games) {
    auto seq = encoding::encode_game(*record, player, k);
    if (!seq) continue;
    if (max_moves > 0 && static_cast<int>(seq->size()) > max_moves) {
      seq->moves.resize(max_moves);
      seq->mask.resize(max_moves);
    }
    const int L = static_cast<int>(seq->size());
    std::vector<int> rows;
    const auto planes = model::gather_planes({*seq}, &rows, L);
    const Matrix<float> feats = model.extractor.forward(planes, L, Mode::eval);
    const model::Mask mask(L, 1);
    const auto received = attention_received(model.encoder.attention_weights(feats, mask));
    if (received.size() > sum.size()) {
      sum.resize(received.size(), 0.0);
      sumsq.resize(received.size(), 0.0);
      p.counts.resize(received.size(), 0);
    }
    for (std::size_t i = 0; i < received.size(); ++i) {
      sum[i] += received[i];
      sumsq[i] += received[i] * received[i];
      ++p.counts[i];
    }
    ++p.games;
  }
  std::vector<double> pos;
  for (std::size_t i = 0; i < sum.size(); ++i) {
    const double n = static_cast<double>(p.counts[i]);
    const double mean = sum[i] / n;
    p.positions.push_back(static_cast<int>(i));
    p.mean.push_back(mean);
    p.stddev.push_back(std::sqrt(std::max(0.0, sumsq[i] / n - mean * mean)));
    pos.push_back(static_cast<double>(i));
  }
  p.spearman_rho = spearman_rho(pos, p.mean);
  return p;
}

nlohmann::json to_json(const AttentionProfile& p) {
  return {{"k", p.k},         {"games", p.games},   {"positions", p.positions},      {"mean", p.mean},
          {"std", p.stddev},  {"counts", p.counts}, {"spearman_rho", p.spearman_rho}};
}

void export_vectors(const std::string& prefix, const std::vector<std::vector<double>>& vectors,
                    const std::vector<VectorMetadata>& metadata) {
  if (vectors.size() != metadata.size())
    throw std::invalid_argument("export: " + std::to_string(vectors.size()) + " vectors but " +
                                std::to_string(metadata.size()) + " metadata rows");
  for (const auto& v : vectors)
    if (v.size() != vectors.front().size()) throw std::invalid_argument("export: ragged vector dimensions");
  std::ofstream vec(prefix + ".vectors.tsv"), meta(prefix + ".metadata.tsv");
  if (!vec || !meta) throw std::runtime_error("export: cannot write " + prefix + ".*.tsv");
  char buf[32];
  for (const auto& v : vectors) {
    for (std::size_t i = 0; i < v.size(); ++i) {
      std::snprintf(buf, sizeof buf, "%.9g", static_cast<double>(static_cast<float>(v[i])));
      vec << (i ? "\t" : "") << buf;
    }
    vec << '\n';
  }
  meta << "player_id\tbucket\topening\trating\n";
  for (const auto& m : metadata) {
    std::snprintf(buf, sizeof buf, "%.1f", m.rating);
    meta << m.player_id << '\t' << m.bucket << '\t' << m.opening << '\t' << buf << '\n';
  }
}

std::vector<std::vector<double>> read_vectors_tsv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::vector<std::vector<double>> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, '\t')) row.push_back(std::stod(cell));
    out.push_back(std::move(row));
  }
  return out;
}

SplitDistance split_distance(const std::vector<const ingest::GameRecord*>& games_as_white, const std::string& player,
                             eval::Embedder& embedder, int k, const std::vector<eval::PlayerVector>& others) {
  std::vector<const ingest::GameRecord*> e4, d4, all;
  for (const auto* g : games_as_white) {
    if (g->moves.empty() || g->white_id != player || !embedder.usable(*g, player, k)) continue;
    if (g->moves[0] == "e2e4") e4.push_back(g);
    else if (g->moves[0] == "d2d4") d4.push_back(g);
    all.push_back(g);
  }
  if (e4.empty() || d4.empty())
    throw std::invalid_argument("split_distance: " + player + " has " + std::to_string(e4.size()) + " e4 and " +
                                std::to_string(d4.size()) + " d4 games usable at k=" + std::to_string(k));
  SplitDistance r;
  r.e4_games = e4.size();
  r.d4_games = d4.size();
  const auto c_e4 = eval::player_vector(player, embedder.embed(e4, player, k));
  const auto c_d4 = eval::player_vector(player, embedder.embed(d4, player, k));
  r.within = eval::cosine_distance(c_e4.values, c_d4.values);
  const auto overall = eval::player_vector(player, embedder.embed(all, player, k));
  std::size_t n = 0;
  for (const auto& o : others) {
    if (o.player_id == player) continue;
    r.cross += eval::cosine_distance(overall.values, o.values);
    ++n;
  }
  if (n) r.cross /= static_cast<double>(n);
  return r;
}

}  // namespace stylo::analysis
