// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fail.
//
//   acceptance [--work-dir DIR] [--only 1,2,...] [--steps N] [--seed S]
//
// Criteria 6, 7 and 10 share one synthetic corpus and training run; their
// logs, checkpoints and similarity snapshots are left in the work directory.

#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "oracles/ge2e_oracle.hpp"
#include "stylo/ge2e.hpp"
#include "stylo/move_encoding.hpp"
#include "stylo/openings_baseline.hpp"
#include "stylo/stylometry_eval.hpp"
#include "stylo/synthetic_players.hpp"
#include "stylo/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace stylo;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ------------------------------------------------------------------ shared helpers

std::vector<double> random_vector(Rng& rng, std::size_t n) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.normal();
  return v;
}

void normalize(double* v, int d) {
  double n = 0;
  for (int i = 0; i < d; ++i) n += v[i] * v[i];
  n = std::sqrt(n);
  for (int i = 0; i < d; ++i) v[i] /= n;
}

ge2e::Episode random_episode(Rng& rng, int n, int m, int d) {
  ge2e::Episode e{n, m, d, random_vector(rng, static_cast<std::size_t>(n) * m * d)};
  for (int r = 0; r < n * m; ++r) normalize(e.y.data() + static_cast<std::size_t>(r) * d, d);
  return e;
}

oracle::Batch to_oracle(const ge2e::Episode& e) {
  oracle::Batch b(e.n, std::vector<std::vector<double>>(e.m));
  for (int j = 0; j < e.n; ++j)
    for (int i = 0; i < e.m; ++i) b[j][i].assign(e.row(j, i), e.row(j, i) + e.dim);
  return b;
}

double relative_error(const std::vector<double>& a, const std::vector<double>& b) {
  double diff = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  return std::sqrt(diff) / std::max(std::sqrt(na) + std::sqrt(nb), 1e-300);
}

std::vector<double> numeric_gradient(std::vector<double>& values, const std::function<double()>& f) {
  const double h = 1e-6;
  std::vector<double> g(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double saved = values[i];
    values[i] = saved + h;
    const double up = f();
    values[i] = saved - h;
    const double down = f();
    values[i] = saved;
    g[i] = (up - down) / (2 * h);
  }
  return g;
}

// The reduced configuration used for the synthetic end-to-end run.
train::TrainConfig reduced_config(long steps, std::uint64_t seed) {
  train::TrainConfig c;
  c.n_players = 4;
  c.m_games = 4;
  c.window = 16;
  c.seed = seed;
  c.max_steps = steps;
  c.checkpoint_every = 0;
  c.validate_every = 250;
  c.validation_episodes = 4;
  c.extractor = {2, 16, 8, 64};
  c.encoder.input_dim = 64;
  c.encoder.model_dim = 128;
  c.encoder.num_blocks = 2;
  c.encoder.num_heads = 4;
  c.encoder.head_dim = 32;
  c.encoder.ff_dim = 256;
  c.encoder.embed_dim = 64;
  return c;
}

// ------------------------------------------------------------------ criteria 1-5, 8, 9

Outcome ge2e_oracle_equivalence() {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(20240601);
  double worst_s = 0, worst_l = 0;
  std::vector<std::array<int, 3>> shapes;
  for (int n : {2, 3, 5})
    for (int m : {2, 3})
      for (int d : {4, 16}) shapes.push_back({n, m, d});
  int batches = 0;
  for (; batches < 100; ++batches) {
    const auto [n, m, d] = shapes[batches % shapes.size()];
    const auto e = random_episode(rng, n, m, d);
    const double w = 0.5 + 10 * rng.uniform01(), b = -5 + 5 * rng.uniform01();
    const auto s = ge2e::similarity_matrix(e, w, b);
    const auto o = oracle::similarity(to_oracle(e), w, b);
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < m; ++i)
        for (int k = 0; k < n; ++k) worst_s = std::max(worst_s, std::abs(s.at(j, i, k) - o[j][i][k]));
    worst_l = std::max(worst_l, std::abs(ge2e::ge2e_loss(e, w, b).loss - oracle::loss(to_oracle(e), w, b)));
  }
  const double secs = seconds_since(t0);
  return {batches == 100 && worst_s <= 1e-6 && worst_l <= 1e-6 && secs < 10,
          std::to_string(batches) + " batches, max |S - S_oracle| " + fmt("%.2e", worst_s) + ", max |L - L_oracle| " +
              fmt("%.2e", worst_l) + ", " + fmt("%.2f", secs) + " s (limits 1e-6, 10 s)"};
}

Outcome gradient_checks() {
  const auto t0 = std::chrono::steady_clock::now();
  double worst = 0;
  std::string worst_name;
  auto note = [&](double err, const std::string& name) {
    if (err > worst) worst = err, worst_name = name;
  };

  Rng rng(99);
  for (int trial = 0; trial < 3; ++trial) {
    auto e = random_episode(rng, 3, 3, 5);
    double w = 3.0 + trial, b = -1.0;
    const auto r = ge2e::ge2e_loss(e, w, b, true);
    note(relative_error(r.d_y, numeric_gradient(e.y, [&] { return ge2e::ge2e_loss(e, w, b).loss; })), "ge2e y");
    std::vector<double> wb = {w, b};
    note(relative_error({r.d_w, r.d_b}, numeric_gradient(wb, [&] { return ge2e::ge2e_loss(e, wb[0], wb[1]).loss; })),
         "ge2e w,b");
  }

  {
    model::FeatureExtractor<double> ex({1, 8, 4, 16}, 11);
    const int batch = 3;
    std::vector<double> planes = random_vector(rng, static_cast<std::size_t>(batch) * 34 * 64);
    Matrix<double> proj(batch, 16);
    for (auto& v : proj.data) v = rng.normal();
    auto loss = [&] {
      const auto out = ex.forward(planes, batch, Mode::train);
      double s = 0;
      for (std::size_t i = 0; i < out.size(); ++i) s += out.data[i] * proj.data[i];
      return s;
    };
    ex.zero_grad();
    model::FeatureExtractor<double>::Cache cache;
    ex.forward(planes, batch, Mode::train, &cache);
    ex.backward(cache, proj);
    for (auto* p : ex.params())
      if (p->trainable) note(relative_error(p->grad, numeric_gradient(p->value, loss)), p->name);
  }

  bool structural_zero_ok = true;
  {
    model::EncoderConfig c;
    c.input_dim = 6;
    c.model_dim = 16;
    c.num_blocks = 2;
    c.num_heads = 2;
    c.head_dim = 8;
    c.ff_dim = 32;
    c.embed_dim = 8;
    model::GameEncoder<double> enc(c, 10);
    const int seqs = 2, length = 5;
    Matrix<double> f(seqs * length, 6);
    for (auto& v : f.data) v = rng.normal();
    model::Mask mask(seqs * length, 1);
    mask[length + 4] = mask[length + 3] = 0;
    Matrix<double> proj(seqs, 8);
    for (auto& v : proj.data) v = rng.normal();
    auto loss = [&] {
      const auto e = enc.forward(f, mask, length);
      double s = 0;
      for (std::size_t i = 0; i < e.size(); ++i) s += e.data[i] * proj.data[i];
      return s;
    };
    enc.zero_grad();
    model::GameEncoder<double>::Cache cache;
    enc.forward(f, mask, length, &cache);
    const auto d_features = enc.backward(cache, proj);
    for (auto* p : enc.params()) {
      const auto numeric = numeric_gradient(p->value, loss);
      if (p->name.find("wk.bias") != std::string::npos) {
        // a key bias shifts every score of a query equally; softmax ignores it
        for (std::size_t i = 0; i < numeric.size(); ++i)
          structural_zero_ok &= std::abs(p->grad[i]) < 1e-12 && std::abs(numeric[i]) < 1e-8;
        continue;
      }
      note(relative_error(p->grad, numeric), p->name);
    }
    note(relative_error(d_features.data, numeric_gradient(f.data, loss)), "encoder input");
  }
  const double secs = seconds_since(t0);
  return {worst < 1e-5 && structural_zero_ok && secs < 120,
          "max relative error " + fmt("%.2e", worst) + " (" + worst_name + "), key-bias gradient " +
              (structural_zero_ok ? "zero as expected" : "NOT zero") + ", " + fmt("%.1f", secs) +
              " s (limits 1e-5, 120 s)"};
}

Outcome analytic_losses() {
  bool ok = true;
  std::ostringstream d;
  Rng rng(5);
  const auto single = random_episode(rng, 1, 4, 8);
  const double l1 = ge2e::ge2e_loss(single, 10.0, -5.0).loss;
  ok &= l1 == 0.0;
  d << "N=1 loss " << l1;
  for (int n : {2, 5, 40}) {
    ge2e::Episode e{n, 3, 4, {}};
    for (int r = 0; r < n * 3; ++r) e.y.insert(e.y.end(), {0.5, 0.5, 0.5, 0.5});
    const double l = ge2e::ge2e_loss(e, 10.0, -5.0).loss;
    ok &= l == std::log(static_cast<double>(n));
    d << ", uniform N=" << n << " " << (l == std::log(static_cast<double>(n)) ? "== log N" : "!= log N");
  }
  const ge2e::Episode ortho{2, 2, 2, {1, 0, 1, 0, 0, 1, 0, 1}};
  const double lo = ge2e::ge2e_loss(ortho, 1.0, 0.0).loss;
  ok &= std::abs(lo - 0.313262) <= 1e-6;
  d << ", orthonormal " << fmt("%.9f", lo) << " (target 0.313262 +- 1e-6)";
  return {ok, d.str()};
}

Outcome padding_invariance() {
  const auto cfg = reduced_config(0, 0).encoder;
  const model::GameEncoder<float> enc(cfg, 4);
  Rng rng(2);
  double worst = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const int real = 1 + static_cast<int>(rng.uniform_index(32));
    Matrix<float> f(real, cfg.input_dim);
    for (auto& v : f.data) v = static_cast<float>(rng.normal());
    auto pad = [&](int length, model::Mask& mask) {
      Matrix<float> m(length, cfg.input_dim);
      for (int i = 0; i < length; ++i)
        for (int c = 0; c < cfg.input_dim; ++c) m(i, c) = i < real ? f(i, c) : static_cast<float>(rng.normal() * 5);
      mask.assign(length, 0);
      std::fill(mask.begin(), mask.begin() + real, 1);
      return m;
    };
    model::Mask m32, m64;
    const auto a = enc.forward(pad(32, m32), m32, 32);
    const auto b = enc.forward(pad(64, m64), m64, 64);
    for (int c = 0; c < a.cols; ++c) worst = std::max(worst, static_cast<double>(std::abs(a(0, c) - b(0, c))));
  }
  return {worst <= 1e-5, "200 inputs, max |e32 - e64| " + fmt("%.2e", worst) + " (limit 1e-5)"};
}

Outcome encoding_fidelity(const fs::path& data) {
  std::ifstream in(data / "fidelity_replay.json");
  if (!in) return {false, "missing " + (data / "fidelity_replay.json").string()};
  const auto ref = json::parse(in);
  const auto games = ingest::parse_pgn_file(data / "fidelity_games.pgn").games;
  if (games.size() != 100 || ref.size() != 100) return {false, "fixture does not hold 100 games"};
  static const std::string symbols = "PNBRQKpnbrqk";
  std::size_t tensors = 0, mismatched_planes = 0, k_failures = 0;
  for (std::size_t gi = 0; gi < games.size(); ++gi) {
    const auto& positions = ref[gi]["positions"];
    for (int side = 0; side < 2; ++side) {
      const std::string player = side == 0 ? games[gi].white_id : games[gi].black_id;
      const auto seq = encoding::encode_game(games[gi], player, 0);
      if (!seq) continue;
      for (std::size_t i = 0; i < seq->size(); ++i) {
        const std::size_t ply = 2 * i + side;
        const auto t = seq->tensor(i);
        for (int snap = 0; snap < 2; ++snap) {
          const std::string board = positions[ply + snap]["board"];
          for (int s = 0; s < 64; ++s)
            for (int c = 0; c < 12; ++c)
              mismatched_planes += t.at(12 * snap + c, s) != (board[s] == symbols[c] ? 1.0f : 0.0f);
          mismatched_planes += t.at(encoding::kRepetitionBefore + snap, 0) !=
                               (positions[ply + snap]["repeated"].get<bool>() ? 1.0f : 0.0f);
        }
        const auto& rb = positions[ply];
        const std::string castling = rb["castling"], rights = "KQkq";
        for (int c = 0; c < 4; ++c)
          mismatched_planes += t.at(encoding::kCastlingBase + c, 9) !=
                               (castling.find(rights[c]) != std::string::npos ? 1.0f : 0.0f);
        mismatched_planes += t.at(encoding::kSideToMove, 0) != (rb["white_to_move"].get<bool>() ? 1.0f : 0.0f);
        mismatched_planes += std::abs(t.at(encoding::kFiftyMove, 0) - std::min(1.0f, rb["halfmove"].get<int>() / 100.0f)) > 1e-7f;
        ++tensors;
      }
      for (int k : {0, 5, 15}) {
        const auto cut = encoding::encode_game(games[gi], player, k);
        if (static_cast<int>(seq->size()) <= k) {
          k_failures += cut.has_value();
          continue;
        }
        k_failures += !cut || cut->moves != std::vector<encoding::EncodedMove>(seq->moves.begin() + k, seq->moves.end());
      }
    }
  }
  return {mismatched_planes == 0 && k_failures == 0 && tensors > 0,
          std::to_string(tensors) + " move tensors over 100 games, " + std::to_string(mismatched_planes) +
              " plane mismatches, " + std::to_string(k_failures) + " k-composition failures (k = 0, 5, 15)"};
}

Outcome metric_monotonicity() {
  Rng rng(8);
  std::size_t ranking_checks = 0, violations = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const int pool = 2 + static_cast<int>(rng.uniform_index(30)), targets = 1 + static_cast<int>(rng.uniform_index(20));
    std::vector<std::vector<eval::Ranked>> rankings;
    std::vector<std::string> truths;
    for (int t = 0; t < targets; ++t) {
      std::vector<std::string> ids;
      for (int p = 0; p < pool; ++p) ids.push_back("p" + std::to_string(p));
      rng.shuffle(ids);
      std::vector<eval::Ranked> r;
      for (auto& id : ids) r.push_back({id, 0});
      rankings.push_back(r);
      truths.push_back("p" + std::to_string(rng.uniform_index(pool)));
    }
    violations += eval::precision_at_n(rankings, truths, 1) > eval::precision_at_n(rankings, truths, 5);
    ++ranking_checks;
  }

  // nested pools: 8 true players, then random distractor centroids
  std::size_t pool_checks = 0, pool_violations = 0;
  std::string example;
  for (int trial = 0; trial < 20; ++trial) {
    const int d = 64;
    std::vector<eval::PlayerVector> truth, distractors;
    std::vector<eval::PlayerVector> queries;
    for (int p = 0; p < 8; ++p) {
      auto c = random_vector(rng, d);
      auto q = c;
      for (auto& v : q) v += 4.0 * rng.normal();
      truth.push_back({"t" + std::to_string(p), c, 1});
      queries.push_back({"t" + std::to_string(p), q, 1});
    }
    for (int p = 0; p < 504; ++p) distractors.push_back({"d" + std::to_string(p), random_vector(rng, d), 1});
    double previous = 2;
    std::string line;
    for (int size : {8, 64, 512}) {
      std::vector<eval::PlayerVector> pool = truth;
      pool.insert(pool.end(), distractors.begin(), distractors.begin() + (size - 8));
      std::vector<std::vector<eval::Ranked>> rankings;
      std::vector<std::string> truths;
      for (const auto& q : queries) {
        rankings.push_back(eval::identify(q, pool));
        truths.push_back(q.player_id);
      }
      const double p1 = eval::precision_at_n(rankings, truths, 1);
      pool_violations += p1 > previous;
      ++pool_checks;
      previous = p1;
      line += (line.empty() ? "" : " / ") + fmt("%.3f", p1);
    }
    if (trial == 0) example = line;
  }
  return {violations == 0 && pool_violations == 0,
          std::to_string(ranking_checks) + " fixed rankings with P@1 <= P@5 violated " + std::to_string(violations) +
              " times; nested pools 8/64/512 over 20 trials violated " + std::to_string(pool_violations) +
              " times (first trial P@1 " + example + ")"};
}

Outcome schedule_and_defaults() {
  const train::TrainConfig c;
  bool ok = true;
  std::ostringstream d;
  auto check = [&](const std::string& name, double got, double want) {
    const bool good = std::abs(got - want) <= 1e-12 * std::max(1.0, std::abs(want));
    ok &= good;
    d << (d.tellp() ? ", " : "") << name << "=" << got << (good ? "" : " (want " + std::to_string(want) + ")");
  };
  check("lr(0)", train::learning_rate(0, c), 0.01);
  check("lr(40000)", train::learning_rate(40000, c), 0.005);
  check("lr(80000)", train::learning_rate(80000, c), 0.0025);
  check("w", c.w0, 10);
  check("b", c.b0, -5);
  check("N", c.n_players, 40);
  check("M", c.m_games, 20);
  check("window", c.window, 32);
  check("embedding", c.encoder.embed_dim, 512);
  return {ok, d.str()};
}

// ------------------------------------------------------------------ criteria 6, 7, 10

struct EndToEnd {
  fs::path dir;
  train::TrainConfig config;
  synth::SynthCorpus corpus;
  std::optional<train::TrainingIndex> index, validation;
  std::string log_a;
  std::vector<std::string> bots;
  double train_seconds = 0;
};

std::vector<std::string> player_ids(const ingest::Corpus& c) {
  std::vector<std::string> ids;
  for (const auto& [id, info] : c.manifest.players) ids.push_back(id);
  return ids;
}

eval::StylometryTask synthetic_task(const EndToEnd& e, int k) {
  eval::StylometryTask t;
  t.candidates = e.bots;
  t.evaluation = e.bots;
  t.ref_size = 20;
  t.query_size = 20;
  t.k = k;
  t.seed = 1;
  return t;
}

void prepare_corpus(EndToEnd& e, std::uint64_t seed) {
  synth::SynthConfig sc;
  sc.seed = seed;
  e.corpus = synth::generate_corpus(sc);
  e.bots = player_ids(e.corpus.corpus);
  std::ofstream(e.dir / "synthetic.pgn") << e.corpus.pgn;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Similarity matrices of the validation episodes under a trained model.
void write_similarity_snapshot(const fs::path& path, const model::StyleModel& m, const EndToEnd& e) {
  json out = json::array();
  for (const auto& ep : train::validation_episodes(*e.validation, e.config)) {
    const int N = static_cast<int>(ep.players.size());
    const auto emb = m.embed(ep.games);
    ge2e::Episode g{N, emb.rows / N, emb.cols, std::vector<double>(emb.data.begin(), emb.data.end())};
    const auto s = ge2e::similarity_matrix(g, m.w, m.b);
    out.push_back({{"players", ep.players}, {"n", N}, {"m", g.m}, {"similarity", s.s}});
  }
  std::ofstream(path) << out.dump() << '\n';
}

Outcome synthetic_end_to_end(EndToEnd& e) {
  std::map<std::string, std::size_t> games_per_bot;
  for (const auto& g : e.corpus.corpus.records) ++games_per_bot[g.white_id], ++games_per_bot[g.black_id];
  std::size_t fewest = SIZE_MAX;
  for (const auto& b : e.bots) fewest = std::min(fewest, games_per_bot[b]);

  e.index = train::build_index(e.corpus.corpus, train::Partition::train, e.config.m_games);
  e.validation = train::build_index(e.corpus.corpus, train::Partition::reference, e.config.m_games);
  const fs::path run = e.dir / "run_a";
  fs::remove_all(run);
  fs::create_directories(run);
  std::ofstream(run / "config.json") << json(e.config).dump(2) << '\n';

  train::TrainState state(e.config);
  std::ostringstream log;
  train::TrainOptions opt;
  opt.checkpoint_dir = run;
  opt.metrics = &log;
  opt.validation = &*e.validation;
  const auto t0 = std::chrono::steady_clock::now();
  const auto report = train::train(state, *e.index, opt);
  e.train_seconds = seconds_since(t0);
  e.log_a = log.str();
  std::ofstream(run / "metrics.ndjson") << e.log_a;
  write_similarity_snapshot(run / "similarity_snapshot.json", state.model, e);

  eval::ModelEmbedder embedder(state.model);
  const auto result = eval::run_task(synthetic_task(e, 5), embedder, e.corpus.corpus);
  std::ofstream(run / "task_result.json") << eval::to_json(result).dump(2) << '\n';

  double first = 0, last = 0;
  const std::size_t n = report.steps.size(), span = std::max<std::size_t>(1, std::min<std::size_t>(100, n));
  for (std::size_t i = 0; i < span && i < n; ++i) first += report.steps[i].loss / span;
  for (std::size_t i = n - span; i < n; ++i) last += report.steps[i].loss / span;
  std::ostringstream d;
  d << e.bots.size() << " bots, fewest games " << fewest << ", " << e.config.max_steps << " steps in "
    << fmt("%.0f", e.train_seconds) << " s, loss " << fmt("%.3f", first) << " -> " << fmt("%.3f", last)
    << ", P@1 " << fmt("%.3f", result.p_at_1) << " at k=5 with |x_r|=|x_q|=20 (need >= 0.9, chance 0.125)";
  return {e.bots.size() == 8 && fewest >= 300 && e.config.max_steps <= 5000 && result.p_at_1 >= 0.9, d.str()};
}

// With 20 query games both k=0 and k=5 sit at the ceiling, so the direction is
// measured on single-game queries against 20-game references over 10 draws.
Outcome baseline_behaviour(const EndToEnd& e) {
  baseline::BaselineEmbedder embedder(baseline::Mode::five_hot);
  const auto full0 = eval::run_task(synthetic_task(e, 0), embedder, e.corpus.corpus);
  const auto full5 = eval::run_task(synthetic_task(e, 5), embedder, e.corpus.corpus);
  auto single_game = [&](int k) {
    auto t = synthetic_task(e, k);
    t.query_size = 1;
    double sum = 0;
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
      t.seed = seed;
      sum += eval::run_task(t, embedder, e.corpus.corpus).p_at_1;
    }
    return sum / 10;
  };
  const double k0 = single_game(0), k5 = single_game(5);
  const double chance = 1.0 / static_cast<double>(e.bots.size());
  return {k0 >= 5 * chance && k0 > k5,
          "5-hot single-game P@1 " + fmt("%.4f", k0) + " at k=0 (need >= " + fmt("%.3f", 5 * chance) + "), " +
              fmt("%.4f", k5) + " at k=5 (need lower); 20-game queries " + fmt("%.3f", full0.p_at_1) + " / " +
              fmt("%.3f", full5.p_at_1)};
}

Outcome reproducibility(const EndToEnd& e) {
  const fs::path run = e.dir / "run_b";
  fs::remove_all(run);
  fs::create_directories(run);
  const long mid = e.config.max_steps / 2;
  std::ostringstream log;
  train::TrainOptions opt;
  opt.checkpoint_dir = run;
  opt.metrics = &log;
  opt.validation = &*e.validation;
  {
    // interrupted at the midpoint, then resumed from the checkpoint file
    train::TrainState state(e.config);
    opt.stop_at = mid;
    train::train(state, *e.index, opt);
  }
  train::TrainState resumed = train::load_checkpoint(train::checkpoint_path(run, mid));
  opt.stop_at.reset();
  train::train(resumed, *e.index, opt);
  std::ofstream(run / "metrics.ndjson") << log.str();

  const bool logs_equal = log.str() == e.log_a;
  const auto final_a = read_file(train::checkpoint_path(e.dir / "run_a", e.config.max_steps));
  const auto final_b = read_file(train::checkpoint_path(run, e.config.max_steps));
  const bool ckpt_equal = !final_a.empty() && final_a == final_b;
  std::size_t lines = 0;
  for (char c : e.log_a) lines += c == '\n';
  return {logs_equal && ckpt_equal, "second run interrupted at step " + std::to_string(mid) +
                                        " and resumed: metric log " + (logs_equal ? "identical" : "DIFFERS") + " (" +
                                        std::to_string(lines) + " records), final checkpoint " +
                                        (ckpt_equal ? "byte-identical" : "DIFFERS")};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  std::string work = "acceptance_work", only;
  long steps = 5000;
  std::uint64_t seed = 1;
  app.add_option("--work-dir", work, "Scratch directory for the end-to-end runs");
  app.add_option("--only", only, "Comma-separated criterion numbers");
  app.add_option("--steps", steps, "Training steps for the end-to-end run")->capture_default_str();
  app.add_option("--seed", seed, "Corpus and training seed")->capture_default_str();
  CLI11_PARSE(app, argc, argv);
  spdlog::set_level(spdlog::level::warn);

  std::set<int> selected;
  std::stringstream ss(only);
  for (std::string item; std::getline(ss, item, ',');) selected.insert(std::stoi(item));
  auto wanted = [&](int id) { return selected.empty() || selected.count(id) > 0; };

  const fs::path data = STYLO_TEST_DATA;
  EndToEnd e2e;
  e2e.dir = work;
  e2e.config = reduced_config(steps, seed);
  fs::create_directories(e2e.dir);

  int failures = 0;
  auto report = [&](int id, const std::string& name, const std::function<Outcome()>& run) {
    if (!wanted(id)) return;
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& ex) {
      o = {false, std::string("exception: ") + ex.what()};
    }
    failures += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << "  criterion " << id << ": " << name << " | " << o.detail << std::endl;
  };

  report(1, "GE2E oracle equivalence", ge2e_oracle_equivalence);
  report(2, "gradient checks", gradient_checks);
  report(3, "analytic loss values", analytic_losses);
  report(4, "padding invariance", padding_invariance);
  report(5, "encoding fidelity", [&] { return encoding_fidelity(data); });

  const bool need_corpus = wanted(6) || wanted(7) || wanted(10);
  if (need_corpus) prepare_corpus(e2e, seed);
  bool trained = false;
  report(6, "synthetic end-to-end", [&] {
    trained = true;
    return synthetic_end_to_end(e2e);
  });
  report(7, "baseline behaviour", [&] { return baseline_behaviour(e2e); });
  report(8, "metric monotonicity", metric_monotonicity);
  report(9, "schedule and config defaults", schedule_and_defaults);
  report(10, "reproducibility", [&] {
    if (!trained) synthetic_end_to_end(e2e);
    return reproducibility(e2e);
  });
  return failures == 0 ? 0 : 1;
}
