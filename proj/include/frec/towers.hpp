#pragma once

// Dual-tower rating model.
//
// User tower:  uid(32) gender(16) age(16) occupation(16) embeddings, each
//              through dense->32 + relu, concatenated (128), dense->200, tanh.
// Movie tower: mid(16) embedding, genre sum-pool(32) and the title vector
//              (24): title words (32-d) optionally through the relative-
//              attention encoder, then a text CNN with windows 3/4/5 x 8
//              filters, max-over-time and dropout. Concatenated (72),
//              dense->200, tanh.
// Rating:      inner product of the two 200-d features.

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "frec/error.hpp"
#include "frec/ingest.hpp"
#include "frec/ops.hpp"
#include "frec/params.hpp"
#include "frec/relattn.hpp"
#include "frec/rng.hpp"

namespace frec {

enum class TitleEncoder { cnn, attn_cnn };

inline const char* to_string(TitleEncoder e) { return e == TitleEncoder::cnn ? "cnn" : "attn-cnn"; }

inline TitleEncoder parse_title_encoder(const std::string& s) {
  if (s == "cnn") return TitleEncoder::cnn;
  if (s == "attn-cnn" || s == "attn_cnn") return TitleEncoder::attn_cnn;
  throw Error(ErrorClass::usage, "unknown title encoder '" + s + "'");
}

struct ModelConfig {
  std::size_t uid_dim = 32;
  std::size_t mid_dim = 16;
  std::size_t side_dim = 16;
  std::size_t genre_dim = 32;
  std::size_t word_dim = 32;
  std::size_t field_dim = 32;
  std::vector<std::size_t> cnn_windows{3, 4, 5};
  std::size_t cnn_filters_per_window = 8;
  std::size_t feature_dim = 200;
  double dropout_rate = 0.5;
  TitleEncoder title_encoder = TitleEncoder::cnn;
  std::size_t attn_heads = 2;
  std::size_t attn_key_dim = 16;

  std::size_t title_vector_dim() const { return cnn_windows.size() * cnn_filters_per_window; }
};

/// Table sizes taken from the vocabularies. Genre/word counts exclude PAD.
struct ModelDims {
  std::size_t num_users = 0;
  std::size_t num_movies = 0;
  std::size_t num_genres = 0;
  std::size_t vocab_size = 0;
  std::size_t num_ages = age_bucket_count;
  std::size_t num_occupations = 0;

  static ModelDims from(const Vocabularies& v) {
    return {v.num_users(), v.num_movies(), v.num_genres(), v.vocab_size(), v.num_ages(),
            v.num_occupations()};
  }
  bool operator==(const ModelDims&) const = default;
};

struct Model {
  ModelConfig config;
  ModelDims dims;
  ParameterSet params;

  attn::AttentionParams attention() const {
    attn::AttentionParams p;
    for (std::size_t h = 0; h < config.attn_heads; ++h) {
      const std::string base = "movie.attn.head" + std::to_string(h);
      p.heads.push_back(
          {params.at(base + ".query"), params.at(base + ".key"), params.at(base + ".value")});
    }
    p.output = params.at("movie.attn.output");
    return p;
  }

  std::vector<attn::RelPosTables> attention_tables() const {
    std::vector<attn::RelPosTables> t;
    for (std::size_t h = 0; h < config.attn_heads; ++h) {
      const std::string base = "movie.attn.table" + std::to_string(h);
      t.push_back({params.at(base + ".width"), params.at(base + ".height"), 1, title_len});
    }
    return t;
  }
};

namespace detail {

inline void add_dense(ParameterSet& p, const std::string& name, std::size_t in, std::size_t out,
                      Rng& rng) {
  const double lim = 1.0 / std::sqrt(static_cast<double>(in));
  p.add(name + ".w", attn::uniform_tensor({in, out}, lim, rng));
  p.add(name + ".b", Tensor::zeros({out}));
}

inline Tensor dense(const ParameterSet& p, const std::string& name, const Tensor& x) {
  return add_bias(matmul(x, p.at(name + ".w")), p.at(name + ".b"));
}

}  // namespace detail

/// Embeddings ~ U(-0.05, 0.05); dense and conv weights ~ U(+-1/sqrt(fan_in));
/// biases zero; PAD rows zero. Deterministic in `seed`.
inline Model init_params(const ModelConfig& config, const ModelDims& dims, std::uint64_t seed) {
  if (dims.num_users == 0 || dims.num_movies == 0 || dims.num_genres == 0 ||
      dims.num_ages == 0 || dims.num_occupations == 0)
    throw ShapeError("init_params: vocabulary counts must be positive");
  Model m{config, dims, {}};
  Rng rng = Rng::derive(seed, 1);
  auto& p = m.params;
  const double emb = 0.05;
  const auto& c = config;

  p.add("user.uid_table", attn::uniform_tensor({dims.num_users, c.uid_dim}, emb, rng));
  p.add("user.gender_table", attn::uniform_tensor({2, c.side_dim}, emb, rng));
  p.add("user.age_table", attn::uniform_tensor({dims.num_ages, c.side_dim}, emb, rng));
  p.add("user.occ_table", attn::uniform_tensor({dims.num_occupations, c.side_dim}, emb, rng));
  detail::add_dense(p, "user.uid_dense", c.uid_dim, c.field_dim, rng);
  detail::add_dense(p, "user.gender_dense", c.side_dim, c.field_dim, rng);
  detail::add_dense(p, "user.age_dense", c.side_dim, c.field_dim, rng);
  detail::add_dense(p, "user.occ_dense", c.side_dim, c.field_dim, rng);
  detail::add_dense(p, "user.out", 4 * c.field_dim, c.feature_dim, rng);

  p.add("movie.mid_table", attn::uniform_tensor({dims.num_movies, c.mid_dim}, emb, rng));
  p.add("movie.genre_table", attn::uniform_tensor({dims.num_genres + 1, c.genre_dim}, emb, rng),
        true);
  p.add("movie.word_table", attn::uniform_tensor({dims.vocab_size + 1, c.word_dim}, emb, rng),
        true);
  for (std::size_t w : c.cnn_windows) {
    if (w == 0 || w > title_len) throw ShapeError("init_params: bad cnn window");
    const std::string name = "movie.conv" + std::to_string(w);
    const double lim = 1.0 / std::sqrt(static_cast<double>(w * c.word_dim));
    p.add(name + ".w", attn::uniform_tensor({c.cnn_filters_per_window, w, c.word_dim}, lim, rng));
    p.add(name + ".b", Tensor::zeros({c.cnn_filters_per_window}));
  }
  detail::add_dense(p, "movie.out", c.mid_dim + c.genre_dim + c.title_vector_dim(), c.feature_dim,
                    rng);

  if (c.title_encoder == TitleEncoder::attn_cnn) {
    auto ap = attn::random_attention_params(c.word_dim, c.attn_key_dim, c.attn_heads, c.word_dim,
                                            rng, 0.5);
    for (std::size_t h = 0; h < c.attn_heads; ++h) {
      const std::string base = "movie.attn.head" + std::to_string(h);
      p.add(base + ".query", ap.heads[h].query);
      p.add(base + ".key", ap.heads[h].key);
      p.add(base + ".value", ap.heads[h].value);
    }
    p.add("movie.attn.output", ap.output);
    for (std::size_t h = 0; h < c.attn_heads; ++h) {
      auto t = attn::random_tables(1, title_len, c.attn_key_dim, rng, emb);
      const std::string base = "movie.attn.table" + std::to_string(h);
      p.add(base + ".width", t.width_table);
      p.add(base + ".height", t.height_table);
    }
  }
  return m;
}

inline Model init_params(const ModelConfig& config, const Vocabularies& vocab, std::uint64_t seed) {
  return init_params(config, ModelDims::from(vocab), seed);
}

/// Batched user features: [B, feature_dim].
inline Tensor user_features(const Model& m, std::span<const EncodedUser> users) {
  std::vector<std::size_t> uid, gender, age, occ;
  for (const auto& u : users) {
    uid.push_back(u.user_index);
    gender.push_back(u.gender);
    age.push_back(u.age_bucket);
    occ.push_back(u.occupation);
  }
  const auto& p = m.params;
  auto field = [&](const char* table, const char* dense, const std::vector<std::size_t>& idx) {
    return relu(detail::dense(p, dense, embedding_lookup(p.at(table), idx)));
  };
  Tensor joined = concat({field("user.uid_table", "user.uid_dense", uid),
                          field("user.gender_table", "user.gender_dense", gender),
                          field("user.age_table", "user.age_dense", age),
                          field("user.occ_table", "user.occ_dense", occ)});
  return tanh(detail::dense(p, "user.out", joined));
}

/// Sum of the genre embedding rows of each movie: [B, genre_dim].
inline Tensor genre_sum(const Model& m, std::span<const EncodedMovie> movies) {
  std::vector<std::size_t> codes;
  for (const auto& mv : movies) codes.insert(codes.end(), mv.genres.begin(), mv.genres.end());
  return segment_sum(embedding_lookup(m.params.at("movie.genre_table"), codes), genre_slots);
}

/// Title vector before dropout: [B, windows * filters].
inline Tensor title_vector(const Model& m, std::span<const EncodedMovie> movies) {
  std::vector<std::size_t> codes;
  for (const auto& mv : movies) codes.insert(codes.end(), mv.title.begin(), mv.title.end());
  const auto& p = m.params;
  Tensor words = embedding_lookup(p.at("movie.word_table"), codes);
  if (m.config.title_encoder == TitleEncoder::attn_cnn) {
    auto ap = m.attention();
    auto tables = m.attention_tables();
    std::vector<Tensor> encoded;
    for (std::size_t b = 0; b < movies.size(); ++b)
      encoded.push_back(
          attn::title_attention_encoder(slice_rows(words, b * title_len, title_len), ap, tables));
    words = concat_rows(encoded);
  }
  std::vector<Tensor> pools;
  for (std::size_t w : m.config.cnn_windows) {
    const std::string name = "movie.conv" + std::to_string(w);
    Tensor conv = conv_text(words, title_len, p.at(name + ".w"), p.at(name + ".b"));
    pools.push_back(max_over_time(conv, title_len - w + 1));
  }
  return concat(pools);
}

/// Batched movie features: [B, feature_dim]. `rng` drives dropout in train mode.
inline Tensor movie_features(const Model& m, std::span<const EncodedMovie> movies, Mode mode,
                             Rng& rng) {
  std::vector<std::size_t> mid;
  for (const auto& mv : movies) mid.push_back(mv.movie_index);
  const auto& p = m.params;
  Tensor mid_part = embedding_lookup(p.at("movie.mid_table"), mid);
  Tensor title_part = dropout(title_vector(m, movies), m.config.dropout_rate, mode, rng);
  return tanh(detail::dense(p, "movie.out", concat({mid_part, genre_sum(m, movies), title_part})));
}

/// Single-user feature vector: [feature_dim].
inline Tensor user_feature(const Model& m, const EncodedUser& u) {
  Tensor f = user_features(m, std::span<const EncodedUser>(&u, 1));
  return reshape(f, {f.size()});
}

inline Tensor movie_feature(const Model& m, const EncodedMovie& mv, Mode mode, Rng& rng) {
  Tensor f = movie_features(m, std::span<const EncodedMovie>(&mv, 1), mode, rng);
  return reshape(f, {f.size()});
}

/// Inner product of user and movie features. Batched inputs give one score per row.
inline Tensor predict_rating(const Tensor& user_feat, const Tensor& movie_feat) {
  return rowwise_dot(user_feat, movie_feat);
}

struct Batch {
  std::vector<EncodedUser> users;
  std::vector<EncodedMovie> movies;
  std::vector<double> ratings;

  std::size_t size() const { return ratings.size(); }
};

inline Batch make_batch(const EncodedDataset& data, std::span<const Example> examples) {
  Batch b;
  for (const auto& e : examples) {
    b.users.push_back(data.users.at(e.user));
    b.movies.push_back(data.movies.at(e.movie));
    b.ratings.push_back(e.rating);
  }
  return b;
}

inline Tensor predict_batch(const Model& m, const Batch& batch, Mode mode, Rng& rng) {
  return predict_rating(user_features(m, batch.users), movie_features(m, batch.movies, mode, rng));
}

/// Mean squared error of the batch predictions against the ratings.
inline Tensor model_loss(const Model& m, const Batch& batch, Mode mode, Rng& rng) {
  if (batch.size() == 0) throw ShapeError("model_loss: empty batch");
  Tensor target({batch.size()}, batch.ratings);
  return mse_loss(predict_batch(m, batch, mode, rng), target);
}

}  // namespace frec
