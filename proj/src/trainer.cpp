#include "stylo/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include <spdlog/spdlog.h>

#include "stylo/binary_io.hpp"
#include "stylo/ge2e.hpp"

namespace stylo::train {

void TrainConfig::validate() const {
  if (n_players < 2) throw std::invalid_argument("train config: n_players must be >= 2");
  if (m_games < 2) throw std::invalid_argument("train config: m_games must be >= 2");
  if (window < 1) throw std::invalid_argument("train config: window must be >= 1");
  if (!(lr0 > 0) || !(momentum >= 0) || momentum >= 1 || !(wb_grad_scale > 0) || !(w0 > 0))
    throw std::invalid_argument("train config: lr0, wb_grad_scale and w0 must be positive, momentum in [0, 1)");
  if (halve_every < 1) throw std::invalid_argument("train config: halve_every must be >= 1");
  if (max_steps < 0 || checkpoint_every < 0 || validate_every < 0 || validation_episodes < 0)
    throw std::invalid_argument("train config: step counts must be >= 0");
  extractor.validate();
  encoder.validate();
  if (window > encoder.max_positions) throw std::invalid_argument("train config: window exceeds max_positions");
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = {{"n_players", c.n_players},
       {"m_games", c.m_games},
       {"window", c.window},
       {"lr0", c.lr0},
       {"momentum", c.momentum},
       {"halve_every", c.halve_every},
       {"w0", c.w0},
       {"b0", c.b0},
       {"wb_grad_scale", c.wb_grad_scale},
       {"seed", c.seed},
       {"max_steps", c.max_steps},
       {"checkpoint_every", c.checkpoint_every},
       {"validate_every", c.validate_every},
       {"validation_episodes", c.validation_episodes},
       {"extractor", c.extractor},
       {"encoder", c.encoder}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  if (!j.is_object()) throw std::invalid_argument("train config must be a JSON object");
  for (const auto& [key, v] : j.items()) {
    if (key == "n_players") c.n_players = v.get<int>();
    else if (key == "m_games") c.m_games = v.get<int>();
    else if (key == "window") c.window = v.get<int>();
    else if (key == "lr0") c.lr0 = v.get<double>();
    else if (key == "momentum") c.momentum = v.get<double>();
    else if (key == "halve_every") c.halve_every = v.get<long>();
    else if (key == "w0") c.w0 = v.get<double>();
    else if (key == "b0") c.b0 = v.get<double>();
    else if (key == "wb_grad_scale") c.wb_grad_scale = v.get<double>();
    else if (key == "seed") c.seed = v.get<std::uint64_t>();
    else if (key == "max_steps") c.max_steps = v.get<long>();
    else if (key == "checkpoint_every") c.checkpoint_every = v.get<long>();
    else if (key == "validate_every") c.validate_every = v.get<long>();
    else if (key == "validation_episodes") c.validation_episodes = v.get<int>();
    else if (key == "extractor") c.extractor = v.get<model::ExtractorConfig>();
    else if (key == "encoder") c.encoder = v.get<model::EncoderConfig>();
    else throw std::invalid_argument("train config: unknown key '" + key + "'");
  }
}

double learning_rate(long step, const TrainConfig& config) {
  if (step < 0) throw std::invalid_argument("learning_rate: negative step");
  return config.lr0 * std::pow(0.5, static_cast<double>(step / config.halve_every));
}

TrainingIndex build_index(const ingest::Corpus& corpus, Partition part, std::size_t min_games) {
  TrainingIndex index;
  for (const auto& [player, info] : corpus.manifest.players) {
    if (!info.seen) continue;
    const auto& ids = part == Partition::train       ? info.split.train_ids
                      : part == Partition::reference ? info.split.reference_ids
                                                     : info.split.query_ids;
    std::vector<encoding::GameSequence> seqs;
    for (const auto& id : ids) {
      auto seq = encoding::encode_game(corpus.game(id), player, 0);
      if (seq) seqs.push_back(std::move(*seq));
    }
    if (seqs.size() < min_games) {
      spdlog::info("player {} left out of the index: {} usable games", player, seqs.size());
      continue;
    }
    index.players.push_back(player);
    index.games.push_back(std::move(seqs));
  }
  return index;
}

Episode sample_episode(const TrainingIndex& index, const TrainConfig& config, Rng& rng) {
  const std::size_t N = config.n_players, M = config.m_games;
  std::vector<std::size_t> eligible;
  for (std::size_t p = 0; p < index.size(); ++p)
    if (index.games[p].size() >= M) eligible.push_back(p);
  if (eligible.size() < N)
    throw std::invalid_argument("sample_episode: need " + std::to_string(N) + " players with >= " +
                                std::to_string(M) + " games, found " + std::to_string(eligible.size()));
  Episode ep;
  for (std::size_t pick : rng.sample_without_replacement(eligible.size(), N)) {
    const std::size_t p = eligible[pick];
    ep.players.push_back(index.players[p]);
    for (std::size_t g : rng.sample_without_replacement(index.games[p].size(), M))
      ep.games.push_back(encoding::pad_or_window(index.games[p][g], config.window, rng));
  }
  return ep;
}

nlohmann::json to_json(const StepMetrics& m) {
  return {{"step", m.step}, {"loss", m.loss}, {"lr", m.lr}, {"w", m.w}, {"b", m.b}, {"grad_norm", m.grad_norm}};
}

TrainState::TrainState(const TrainConfig& c)
    : config(c), model(c.extractor, c.encoder, c.seed, c.w0, c.b0), rng(mix_seed(c.seed, "episodes")) {
  config.validate();
  for (auto* p : model.trainable_params()) velocity.emplace_back(p->size(), 0.0f);
}

namespace {

ge2e::Episode to_ge2e(const Matrix<float>& emb, int n, int m) {
  ge2e::Episode e{n, m, emb.cols, std::vector<double>(emb.data.begin(), emb.data.end())};
  return e;
}

}  // namespace

double episode_loss(const model::StyleModel& model, const Episode& episode) {
  const int N = static_cast<int>(episode.players.size());
  const Matrix<float> emb = model.forward(episode.games, Mode::eval, nullptr);
  return ge2e::ge2e_loss(to_ge2e(emb, N, emb.rows / N), model.w, model.b).loss;
}

StepMetrics train_step(TrainState& state, const Episode& episode) {
  auto& model = state.model;
  const auto& cfg = state.config;
  const int N = static_cast<int>(episode.players.size());
  const int M = static_cast<int>(episode.games.size()) / N;

  model.extractor.zero_grad();
  model.encoder.zero_grad();
  model::StyleModel::Forward cache;
  const Matrix<float> emb = model.forward(episode.games, Mode::train, &cache);
  const auto result = ge2e::ge2e_loss(to_ge2e(emb, N, M), model.w, model.b, true);
  if (!std::isfinite(result.loss))
    throw NumericError("non-finite loss at step " + std::to_string(state.step));

  Matrix<float> d_embed(emb.rows, emb.cols);
  for (std::size_t i = 0; i < d_embed.data.size(); ++i) d_embed.data[i] = static_cast<float>(result.d_y[i]);
  model.backward(cache, d_embed);
  model.extractor.update_running_stats(cache.extractor);

  const double gw = result.d_w * cfg.wb_grad_scale;
  const double gb = result.d_b * cfg.wb_grad_scale;
  auto params = model.trainable_params();
  double norm2 = gw * gw + gb * gb;
  for (auto* p : params)
    for (float g : p->grad) norm2 += static_cast<double>(g) * g;
  if (!std::isfinite(norm2)) throw NumericError("non-finite gradient at step " + std::to_string(state.step));

  const double lr = learning_rate(state.step, cfg);
  const float lr_f = static_cast<float>(lr), mu_f = static_cast<float>(cfg.momentum);
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& v = state.velocity[k];
    auto& p = *params[k];
    for (std::size_t i = 0; i < v.size(); ++i) {
      v[i] = mu_f * v[i] + p.grad[i];
      p.value[i] -= lr_f * v[i];
    }
  }
  state.velocity_w = cfg.momentum * state.velocity_w + gw;
  state.velocity_b = cfg.momentum * state.velocity_b + gb;
  model.w = std::max(1e-6, model.w - lr * state.velocity_w);
  model.b -= lr * state.velocity_b;
  ++state.step;

  return {state.step, result.loss, lr, model.w, model.b, std::sqrt(norm2)};
}

std::vector<Episode> validation_episodes(const TrainingIndex& validation, const TrainConfig& config) {
  TrainConfig c = config;
  std::size_t eligible = 0;
  for (const auto& g : validation.games)
    if (g.size() >= static_cast<std::size_t>(c.m_games)) ++eligible;
  c.n_players = static_cast<int>(std::min<std::size_t>(eligible, c.n_players));
  std::vector<Episode> out;
  if (c.n_players < 2) {
    spdlog::warn("validation skipped: fewer than 2 players with {} reference games", c.m_games);
    return out;
  }
  Rng rng(mix_seed(config.seed, "validation"));
  for (int i = 0; i < config.validation_episodes; ++i) out.push_back(sample_episode(validation, c, rng));
  return out;
}

std::filesystem::path checkpoint_path(const std::filesystem::path& dir, long step) {
  char name[64];
  std::snprintf(name, sizeof name, "ckpt_%08ld.bin", step);
  return dir / name;
}

TrainReport train(TrainState& state, const TrainingIndex& index, const TrainOptions& options) {
  TrainReport report;
  const auto& cfg = state.config;
  const std::vector<Episode> val =
      options.validation ? validation_episodes(*options.validation, cfg) : std::vector<Episode>{};

  auto validate = [&]() {
    if (val.empty()) return;
    double total = 0;
    for (const auto& ep : val) total += episode_loss(state.model, ep);
    const double loss = total / static_cast<double>(val.size());
    report.validation.emplace_back(state.step, loss);
    if (options.metrics) *options.metrics << nlohmann::json{{"step", state.step}, {"validation_loss", loss}}.dump() << '\n';
  };
  auto checkpoint = [&]() {
    if (!options.checkpoint_dir) return;
    save_checkpoint(checkpoint_path(*options.checkpoint_dir, state.step), state);
    report.checkpoints.push_back(state.step);
  };

  const long stop = options.stop_at ? std::min(*options.stop_at, cfg.max_steps) : cfg.max_steps;
  if (state.step == 0) validate();
  if (state.step >= cfg.max_steps) {
    checkpoint();
    return report;
  }
  while (state.step < stop) {
    StepMetrics m;
    try {
      const Episode ep = sample_episode(index, cfg, state.rng);
      m = train_step(state, ep);
    } catch (const NumericError& e) {
      if (options.checkpoint_dir) {
        std::filesystem::create_directories(*options.checkpoint_dir);
        std::ofstream dump(*options.checkpoint_dir / "diagnostic.json");
        dump << nlohmann::json{{"error", e.what()},
                               {"step", state.step},
                               {"w", state.model.w},
                               {"b", state.model.b},
                               {"lr", learning_rate(state.step, cfg)},
                               {"recent", [&] {
                                  nlohmann::json a = nlohmann::json::array();
                                  const std::size_t from = report.steps.size() > 20 ? report.steps.size() - 20 : 0;
                                  for (std::size_t i = from; i < report.steps.size(); ++i) a.push_back(to_json(report.steps[i]));
                                  return a;
                                }()}}
                    .dump(2);
      }
      throw;
    }
    report.steps.push_back(m);
    if (options.metrics) *options.metrics << to_json(m).dump() << '\n';
    const bool last = state.step == cfg.max_steps;
    if (last || (cfg.validate_every > 0 && state.step % cfg.validate_every == 0)) validate();
    if (last || (cfg.checkpoint_every > 0 && state.step % cfg.checkpoint_every == 0)) checkpoint();
    else if (state.step == stop) checkpoint();
  }
  if (options.metrics) options.metrics->flush();
  return report;
}

void save_checkpoint(const std::filesystem::path& path, const TrainState& state) {
  auto& self = const_cast<TrainState&>(state);
  model::CheckpointArrays arrays;
  nlohmann::json names = nlohmann::json::array();
  for (auto* p : self.model.params()) {
    arrays.arrays[p->name] = {p->shape, p->value};
    names.push_back(p->name);
  }
  auto trainable = self.model.trainable_params();
  for (std::size_t k = 0; k < trainable.size(); ++k) {
    const std::string name = "momentum/" + trainable[k]->name;
    arrays.arrays[name] = {trainable[k]->shape, state.velocity[k]};
    names.push_back(name);
  }
  const nlohmann::json config = state.config;
  const nlohmann::json manifest = {{"format", "stylometry-checkpoint"},
                                   {"config", config},
                                   {"config_hash", model::config_hash(config)},
                                   {"step", state.step},
                                   {"w", state.model.w},
                                   {"b", state.model.b},
                                   {"velocity_w", state.velocity_w},
                                   {"velocity_b", state.velocity_b},
                                   {"rng_state", state.rng.state()},
                                   {"arrays", names}};
  model::write_checkpoint_file(path, manifest, arrays);
}

TrainState load_checkpoint(const std::filesystem::path& path) {
  auto [manifest, arrays] = model::read_checkpoint_file(path);
  const TrainConfig config = manifest.at("config").get<TrainConfig>();
  if (manifest.at("config_hash").get<std::string>() != model::config_hash(manifest.at("config")))
    throw binio::FormatError("checkpoint config hash mismatch");
  TrainState state(config);
  auto take = [&](const std::string& name, const std::vector<int>& shape) -> const std::vector<float>& {
    auto it = arrays.arrays.find(name);
    if (it == arrays.arrays.end()) throw binio::FormatError("checkpoint is missing array " + name);
    if (it->second.first != shape) throw binio::FormatError("checkpoint array " + name + " has the wrong shape");
    return it->second.second;
  };
  for (auto* p : state.model.params()) p->value = take(p->name, p->shape);
  auto trainable = state.model.trainable_params();
  for (std::size_t k = 0; k < trainable.size(); ++k)
    state.velocity[k] = take("momentum/" + trainable[k]->name, trainable[k]->shape);
  state.step = manifest.at("step").get<long>();
  state.model.w = manifest.at("w").get<double>();
  state.model.b = manifest.at("b").get<double>();
  state.velocity_w = manifest.at("velocity_w").get<double>();
  state.velocity_b = manifest.at("velocity_b").get<double>();
  state.rng.set_state(manifest.at("rng_state").get<std::string>());
  return state;
}

}  // namespace stylo::train
