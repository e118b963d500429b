#pragma once

// Checkpoint file, all integers little-endian:
//
//   bytes 0..3   magic "FREC"
//   u32          format version (1)
//   u32          config length L, then L bytes of UTF-8 JSON:
//                  {"model": ModelConfig, "dims": ModelDims, "extra": caller data}
//   u32          tensor count
//   per tensor:  u32 name length, name bytes, u32 rank, rank x u32 dims,
//                product(dims) x IEEE-754 binary32 values
//
// Parameters are float64 in memory and rounded to nearest binary32 on save.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <span>
#include <string>
#include <vector>

#include "frec/error.hpp"
#include "frec/metadata.hpp"
#include "frec/towers.hpp"

namespace frec {

inline constexpr char checkpoint_magic[4] = {'F', 'R', 'E', 'C'};
inline constexpr std::uint32_t checkpoint_version = 1;

struct Checkpoint {
  std::uint32_t version = checkpoint_version;
  Model model;
  json extra;
};

inline json config_to_json(const ModelConfig& c) {
  return json{{"uid_dim", c.uid_dim},
              {"mid_dim", c.mid_dim},
              {"side_dim", c.side_dim},
              {"genre_dim", c.genre_dim},
              {"word_dim", c.word_dim},
              {"field_dim", c.field_dim},
              {"cnn_windows", c.cnn_windows},
              {"cnn_filters_per_window", c.cnn_filters_per_window},
              {"feature_dim", c.feature_dim},
              {"dropout_rate", c.dropout_rate},
              {"title_encoder", to_string(c.title_encoder)},
              {"attn_heads", c.attn_heads},
              {"attn_key_dim", c.attn_key_dim}};
}

inline ModelConfig config_from_json(const json& j) {
  ModelConfig c;
  j.at("uid_dim").get_to(c.uid_dim);
  j.at("mid_dim").get_to(c.mid_dim);
  j.at("side_dim").get_to(c.side_dim);
  j.at("genre_dim").get_to(c.genre_dim);
  j.at("word_dim").get_to(c.word_dim);
  j.at("field_dim").get_to(c.field_dim);
  j.at("cnn_windows").get_to(c.cnn_windows);
  j.at("cnn_filters_per_window").get_to(c.cnn_filters_per_window);
  j.at("feature_dim").get_to(c.feature_dim);
  j.at("dropout_rate").get_to(c.dropout_rate);
  c.title_encoder = parse_title_encoder(j.at("title_encoder").get<std::string>());
  j.at("attn_heads").get_to(c.attn_heads);
  j.at("attn_key_dim").get_to(c.attn_key_dim);
  return c;
}

inline json dims_to_json(const ModelDims& d) {
  return json{{"num_users", d.num_users},   {"num_movies", d.num_movies},
              {"num_genres", d.num_genres}, {"vocab_size", d.vocab_size},
              {"num_ages", d.num_ages},     {"num_occupations", d.num_occupations}};
}

inline ModelDims dims_from_json(const json& j) {
  ModelDims d;
  j.at("num_users").get_to(d.num_users);
  j.at("num_movies").get_to(d.num_movies);
  j.at("num_genres").get_to(d.num_genres);
  j.at("vocab_size").get_to(d.vocab_size);
  j.at("num_ages").get_to(d.num_ages);
  j.at("num_occupations").get_to(d.num_occupations);
  return d;
}

/// Rounds every parameter to the nearest binary32 value, in place.
inline void round_to_f32(Model& m) {
  for (auto& p : m.params.items())
    for (double& v : p.value.data()) v = static_cast<double>(static_cast<float>(v));
}

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

class Reader {
 public:
  explicit Reader(std::span<const char> bytes) : bytes_(bytes) {}

  std::span<const char> take(std::size_t n) {
    if (n > bytes_.size() - pos_)
      throw DataError(DataError::Kind::truncated_file,
                      "checkpoint truncated at byte " + std::to_string(pos_));
    auto s = bytes_.subspan(pos_, n);
    pos_ += n;
    return s;
  }

  std::uint32_t u32() {
    auto s = take(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(s[i])) << (8 * i);
    return v;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  std::span<const char> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline std::string encode_checkpoint(const Model& model, const json& extra = json::object()) {
  std::string out(checkpoint_magic, 4);
  detail::put_u32(out, checkpoint_version);
  const std::string config =
      json{{"model", config_to_json(model.config)}, {"dims", dims_to_json(model.dims)}, {"extra", extra}}
          .dump();
  detail::put_u32(out, static_cast<std::uint32_t>(config.size()));
  out += config;
  detail::put_u32(out, static_cast<std::uint32_t>(model.params.size()));
  for (const auto& p : model.params.items()) {
    detail::put_u32(out, static_cast<std::uint32_t>(p.name.size()));
    out += p.name;
    detail::put_u32(out, static_cast<std::uint32_t>(p.value.rank()));
    for (std::size_t d : p.value.shape()) detail::put_u32(out, static_cast<std::uint32_t>(d));
    for (double v : p.value.data()) detail::put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  }
  return out;
}

inline Checkpoint decode_checkpoint(std::span<const char> bytes) {
  detail::Reader r(bytes);
  if (bytes.size() < 4 || std::memcmp(bytes.data(), checkpoint_magic, 4) != 0)
    throw DataError(DataError::Kind::bad_magic, "not a checkpoint file (bad magic)");
  r.take(4);
  Checkpoint ck;
  ck.version = r.u32();
  if (ck.version != checkpoint_version)
    throw DataError(DataError::Kind::version_mismatch,
                    "checkpoint version " + std::to_string(ck.version) + ", expected " +
                        std::to_string(checkpoint_version));
  auto config_bytes = r.take(r.u32());
  json config;
  try {
    config = json::parse(config_bytes.begin(), config_bytes.end());
    ck.model.config = config_from_json(config.at("model"));
    ck.model.dims = dims_from_json(config.at("dims"));
    ck.extra = config.value("extra", json::object());
  } catch (const json::exception& e) {
    throw DataError(DataError::Kind::malformed_line, std::string("bad checkpoint config: ") + e.what());
  }
  ck.model = init_params(ck.model.config, ck.model.dims, 0);
  const std::uint32_t count = r.u32();
  if (count != ck.model.params.size())
    throw DataError(DataError::Kind::malformed_line,
                    "checkpoint holds " + std::to_string(count) + " tensors, model expects " +
                        std::to_string(ck.model.params.size()));
  for (std::uint32_t t = 0; t < count; ++t) {
    auto name_bytes = r.take(r.u32());
    std::string name(name_bytes.begin(), name_bytes.end());
    const Parameter* p = ck.model.params.find(name);
    if (p == nullptr)
      throw DataError(DataError::Kind::malformed_line, "unexpected tensor '" + name + "'");
    const std::uint32_t rank = r.u32();
    if (rank != p->value.rank())
      throw DataError(DataError::Kind::malformed_line,
                      "tensor '" + name + "' has rank " + std::to_string(rank));
    Shape shape(rank);
    for (auto& d : shape) d = r.u32();
    if (shape != p->value.shape())
      throw DataError(DataError::Kind::malformed_line,
                      "tensor '" + name + "' has shape " + shape_str(shape) + ", expected " +
                          shape_str(p->value.shape()));
    Tensor value = ck.model.params.at(name);
    auto data = value.data();
    for (double& v : data) v = static_cast<double>(std::bit_cast<float>(r.u32()));
  }
  if (!r.done()) throw DataError(DataError::Kind::malformed_line, "trailing bytes after checkpoint");
  return ck;
}

inline void save_checkpoint(const Model& model, const std::filesystem::path& path,
                            const json& extra = json::object()) {
  const std::string bytes = encode_checkpoint(model, extra);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError(DataError::Kind::io, "cannot write checkpoint " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError(DataError::Kind::io, "failed writing checkpoint " + path.string());
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(DataError::Kind::io, "cannot open checkpoint " + path.string());
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

}  // namespace frec
