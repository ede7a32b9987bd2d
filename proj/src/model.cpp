#include "stylo/model.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "stylo/binary_io.hpp"

namespace stylo::model {

namespace {

constexpr char kCheckpointMagic[9] = "STYCKPT1";
constexpr std::uint32_t kCheckpointVersion = 1;

EncoderConfig matched(EncoderConfig enc, const ExtractorConfig& ext) {
  enc.input_dim = ext.output_dim;
  return enc;
}

}  // namespace

StyleModel::StyleModel(const ExtractorConfig& ext, EncoderConfig enc, std::uint64_t seed, double w0, double b0)
    : extractor(ext, mix_seed(seed, "extractor")),
      encoder(matched(enc, ext), mix_seed(seed, "encoder")),
      w(w0),
      b(b0) {}

ParamList<float> StyleModel::params() {
  ParamList<float> out = extractor.params();
  for (auto* p : encoder.params()) out.push_back(p);
  return out;
}

ParamList<float> StyleModel::trainable_params() {
  ParamList<float> out;
  for (auto* p : params())
    if (p->trainable) out.push_back(p);
  return out;
}

std::vector<float> gather_planes(const std::vector<encoding::GameSequence>& seqs, std::vector<int>* real_rows,
                                 int length) {
  std::size_t real = 0;
  for (const auto& s : seqs) real += s.real_count();
  std::vector<float> planes(real * encoding::kPlaneFloats);
  real_rows->clear();
  std::size_t r = 0;
  for (std::size_t s = 0; s < seqs.size(); ++s) {
    for (std::size_t i = 0; i < seqs[s].size(); ++i) {
      if (!seqs[s].mask[i]) continue;
      seqs[s].moves[i].write_planes(std::span<float>(planes).subspan(r * encoding::kPlaneFloats, encoding::kPlaneFloats));
      real_rows->push_back(static_cast<int>(s) * length + static_cast<int>(i));
      ++r;
    }
  }
  return planes;
}

Matrix<float> StyleModel::forward(const std::vector<encoding::GameSequence>& seqs, Mode mode, Forward* cache) const {
  if (seqs.empty()) throw std::invalid_argument("model: no sequences");
  const int L = static_cast<int>(seqs.front().size());
  for (const auto& s : seqs)
    if (static_cast<int>(s.size()) != L) throw std::invalid_argument("model: sequences must share one length");
  const int S = static_cast<int>(seqs.size());

  std::vector<int> rows;
  const std::vector<float> planes = gather_planes(seqs, &rows, L);
  const int R = static_cast<int>(rows.size());
  Matrix<float> feats = extractor.forward(planes, R, mode, cache ? &cache->extractor : nullptr);

  const int O = extractor.config().output_dim;
  Matrix<float> scattered(S * L, O);
  for (int r = 0; r < R; ++r) std::copy_n(feats.row(r), O, scattered.row(rows[r]));
  Mask mask(static_cast<std::size_t>(S) * L);
  for (int s = 0; s < S; ++s)
    for (int i = 0; i < L; ++i) mask[s * L + i] = seqs[s].mask[i] ? 1 : 0;

  Matrix<float> out = encoder.forward(scattered, mask, L, cache ? &cache->encoder : nullptr);
  if (cache) cache->real_rows = std::move(rows);
  return out;
}

void StyleModel::backward(const Forward& cache, const Matrix<float>& d_embed) {
  Matrix<float> d_scattered = encoder.backward(cache.encoder, d_embed);
  const int O = d_scattered.cols, R = static_cast<int>(cache.real_rows.size());
  Matrix<float> d_feats(R, O);
  for (int r = 0; r < R; ++r) std::copy_n(d_scattered.row(cache.real_rows[r]), O, d_feats.row(r));
  extractor.backward(cache.extractor, d_feats);
}

Matrix<float> StyleModel::embed(const std::vector<encoding::GameSequence>& seqs, int max_moves) const {
  const int E = encoder.config().embed_dim;
  Matrix<float> out(static_cast<int>(seqs.size()), E);
  constexpr std::size_t kChunk = 32;

  // Equal lengths within a chunk keep padding (and wasted work) small.
  std::vector<std::size_t> order(seqs.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  auto length_of = [&](std::size_t i) {
    const int n = static_cast<int>(seqs[i].real_count());
    return max_moves > 0 ? std::min(n, max_moves) : n;
  };
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return length_of(a) < length_of(b); });

  for (std::size_t start = 0; start < order.size(); start += kChunk) {
    const std::size_t end = std::min(order.size(), start + kChunk);
    int L = 0;
    for (std::size_t i = start; i < end; ++i) L = std::max(L, length_of(order[i]));
    std::vector<encoding::GameSequence> chunk;
    for (std::size_t i = start; i < end; ++i) {
      const auto& src = seqs[order[i]];
      encoding::GameSequence s;
      const int n = length_of(order[i]);
      if (n == 0) throw std::invalid_argument("embed: sequence for game " + src.game_id + " has no moves");
      int taken = 0;
      for (std::size_t j = 0; j < src.size() && taken < n; ++j) {
        if (!src.mask[j]) continue;
        s.moves.push_back(src.moves[j]);
        s.mask.push_back(true);
        ++taken;
      }
      encoding::EncodedMove pad;
      pad.padding = true;
      while (static_cast<int>(s.moves.size()) < L) {
        s.moves.push_back(pad);
        s.mask.push_back(false);
      }
      chunk.push_back(std::move(s));
    }
    Matrix<float> e = forward(chunk, Mode::eval, nullptr);
    for (std::size_t i = start; i < end; ++i) std::copy_n(e.row(static_cast<int>(i - start)), E, out.row(static_cast<int>(order[i])));
  }
  return out;
}

// ---------------------------------------------------------------- container

void write_checkpoint_file(const std::filesystem::path& path, const nlohmann::json& manifest,
                           const CheckpointArrays& arrays) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write checkpoint " + tmp);
    binio::write_magic(out, kCheckpointMagic);
    binio::write_u32(out, kCheckpointVersion);
    const std::string text = manifest.dump();
    binio::write_u64(out, text.size());
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    binio::write_u32(out, static_cast<std::uint32_t>(arrays.arrays.size()));
    for (const auto& [name, entry] : arrays.arrays) {
      binio::write_string(out, name);
      binio::write_u32(out, static_cast<std::uint32_t>(entry.first.size()));
      for (int d : entry.first) binio::write_u32(out, static_cast<std::uint32_t>(d));
      binio::write_f32_array<float>(out, entry.second);
    }
    if (!out) throw std::runtime_error("failed writing checkpoint " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

std::pair<nlohmann::json, CheckpointArrays> read_checkpoint_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
  binio::expect_magic(in, kCheckpointMagic);
  const std::uint32_t version = binio::read_u32(in);
  if (version != kCheckpointVersion)
    throw binio::FormatError("unsupported checkpoint version " + std::to_string(version));
  const std::uint64_t n = binio::read_u64(in);
  std::string text(n, '\0');
  if (!in.read(text.data(), static_cast<std::streamsize>(n))) throw binio::FormatError("truncated manifest");
  nlohmann::json manifest = nlohmann::json::parse(text);
  CheckpointArrays arrays;
  const std::uint32_t count = binio::read_u32(in);
  for (std::uint32_t a = 0; a < count; ++a) {
    std::string name = binio::read_string(in);
    const std::uint32_t ndim = binio::read_u32(in);
    std::vector<int> shape(ndim);
    std::size_t total = 1;
    for (auto& d : shape) {
      d = static_cast<int>(binio::read_u32(in));
      total *= static_cast<std::size_t>(d);
    }
    std::vector<float> values(total);
    binio::read_f32_array<float>(in, values);
    arrays.arrays.emplace(std::move(name), std::make_pair(std::move(shape), std::move(values)));
  }
  return {std::move(manifest), std::move(arrays)};
}

std::string config_hash(const nlohmann::json& config) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : config.dump()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

StyleModel load_model(const std::filesystem::path& path) {
  auto [manifest, arrays] = read_checkpoint_file(path);
  const auto ext = manifest.at("config").at("extractor").get<ExtractorConfig>();
  const auto enc = manifest.at("config").at("encoder").get<EncoderConfig>();
  StyleModel model(ext, enc, 0, manifest.at("w").get<double>(), manifest.at("b").get<double>());
  for (auto* p : model.params()) {
    auto it = arrays.arrays.find(p->name);
    if (it == arrays.arrays.end()) throw binio::FormatError("checkpoint is missing array " + p->name);
    if (it->second.first != p->shape) throw binio::FormatError("checkpoint array " + p->name + " has the wrong shape");
    p->value = it->second.second;
  }
  return model;
}

}  // namespace stylo::model
