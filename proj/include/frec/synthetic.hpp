#pragma once

// Seeded MovieLens-shaped data for tests, smoke runs and benchmarks.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "frec/error.hpp"
#include "frec/ingest.hpp"
#include "frec/rng.hpp"

namespace frec::synthetic {

inline constexpr std::array<int, 7> movielens_ages{1, 18, 25, 35, 45, 50, 56};

inline constexpr std::array<const char*, 18> movielens_genres{
    "Action",  "Adventure", "Animation", "Children's", "Comedy",  "Crime",
    "Documentary", "Drama", "Fantasy",   "Film-Noir",  "Horror",  "Musical",
    "Mystery", "Romance",   "Sci-Fi",    "Thriller",   "War",     "Western"};

/// Users cycle through the seven ages; every one of them appears once the
/// population has at least seven users.
inline std::vector<UserRecord> make_users(std::size_t count, Rng& rng) {
  std::vector<UserRecord> out;
  for (std::size_t i = 0; i < count; ++i) {
    UserRecord u;
    u.user_id = static_cast<std::uint32_t>(i + 1);
    u.gender_code = static_cast<int>(rng.uniform_int(2));
    u.raw_age = movielens_ages[i % movielens_ages.size()];
    u.occupation = static_cast<int>(rng.uniform_int(21));
    u.zip = std::to_string(10000 + rng.uniform_int(89999));
    out.push_back(std::move(u));
  }
  return out;
}

inline std::vector<MovieRecord> make_movies(std::size_t count, std::size_t lexicon, Rng& rng) {
  std::vector<MovieRecord> out;
  for (std::size_t i = 0; i < count; ++i) {
    MovieRecord m;
    m.movie_id = static_cast<std::uint32_t>(i + 1);
    const std::size_t words = 1 + rng.uniform_int(6);
    if (i % 7 == 3) m.title = "Caf\xC3\xA9 ";
    for (std::size_t w = 0; w < words; ++w) {
      if (w) m.title += ' ';
      m.title += (w == 0 ? "Word" : "word") + std::to_string(rng.uniform_int(lexicon));
    }
    m.year = 1950 + static_cast<int>(rng.uniform_int(50));
    const std::size_t ng = 1 + rng.uniform_int(3);
    std::vector<std::size_t> picks;
    while (picks.size() < ng) {
      std::size_t g = rng.uniform_int(movielens_genres.size());
      if (std::find(picks.begin(), picks.end(), g) == picks.end()) picks.push_back(g);
    }
    for (std::size_t g : picks) m.genres.emplace_back(movielens_genres[g]);
    out.push_back(std::move(m));
  }
  return out;
}

/// Dataset of `num_ratings` integer ratings with user/movie latent structure
/// (rank-8 taste vectors plus per-user and per-movie offsets).
inline RawMovieLens make_movielens(std::size_t num_users, std::size_t num_movies,
                                   std::size_t num_ratings, std::uint64_t seed) {
  Rng rng = Rng::derive(seed, 100);
  RawMovieLens raw;
  raw.users = make_users(num_users, rng);
  raw.movies = make_movies(num_movies, std::max<std::size_t>(8, num_movies / 2), rng);
  constexpr std::size_t rank = 8;
  auto latent = [&](std::size_t n) {
    std::vector<std::array<double, rank + 1>> v(n);
    for (auto& row : v)
      for (double& x : row) x = rng.uniform(-1.0, 1.0);
    return v;
  };
  auto u = latent(num_users);
  auto m = latent(num_movies);
  for (std::size_t r = 0; r < num_ratings; ++r) {
    const std::size_t ui = rng.uniform_int(num_users);
    const std::size_t mi = rng.uniform_int(num_movies);
    double s = 3.5 + 0.5 * u[ui][rank] + 0.5 * m[mi][rank];
    for (std::size_t k = 0; k < rank; ++k) s += 0.4 * u[ui][k] * m[mi][k];
    s += rng.uniform(-0.5, 0.5);
    const int rating = std::clamp(static_cast<int>(std::lround(s)), 1, 5);
    raw.ratings.push_back({raw.users[ui].user_id, raw.movies[mi].movie_id, rating,
                           static_cast<std::uint64_t>(956703932 + r)});
  }
  return raw;
}

inline std::string utf8_to_latin1(const std::string& in) {
  std::string out;
  for (std::size_t i = 0; i < in.size(); ++i) {
    auto c = static_cast<unsigned char>(in[i]);
    if ((c & 0xE0) == 0xC0 && i + 1 < in.size()) {
      out.push_back(static_cast<char>(((c & 0x1F) << 6) | (static_cast<unsigned char>(in[i + 1]) & 0x3F)));
      ++i;
    } else {
      out.push_back(static_cast<char>(c));
    }
  }
  return out;
}

/// Writes users.dat, movies.dat and ratings.dat in MovieLens-1M layout.
inline void write_movielens(const std::filesystem::path& dir, const RawMovieLens& raw) {
  std::filesystem::create_directories(dir);
  auto open = [&](const char* name) {
    std::ofstream out(dir / name, std::ios::binary);
    if (!out) throw DataError(DataError::Kind::io, "cannot write " + (dir / name).string());
    return out;
  };
  {
    auto out = open("users.dat");
    for (const auto& u : raw.users)
      out << u.user_id << "::" << (u.gender_code ? 'M' : 'F') << "::" << u.raw_age
          << "::" << u.occupation << "::" << u.zip << '\n';
  }
  {
    auto out = open("movies.dat");
    for (const auto& m : raw.movies) {
      out << m.movie_id << "::" << utf8_to_latin1(m.title);
      if (m.year) out << " (" << *m.year << ')';
      out << "::";
      for (std::size_t g = 0; g < m.genres.size(); ++g) out << (g ? "|" : "") << m.genres[g];
      out << '\n';
    }
  }
  {
    auto out = open("ratings.dat");
    for (const auto& r : raw.ratings)
      out << r.user_id << "::" << r.movie_id << "::" << r.rating << "::" << r.timestamp << '\n';
  }
}

/// Realizable regression target: `users` x `movies` all-pairs ratings equal to
/// dot products of fixed random feature vectors with entries ~ U(-0.5, 0.5).
struct RealizableSet {
  EncodedDataset data;
  std::vector<std::vector<double>> user_features;
  std::vector<std::vector<double>> movie_features;
};

inline RealizableSet make_realizable(std::size_t num_users, std::size_t num_movies,
                                     std::size_t feature_dim, std::uint64_t seed) {
  Rng rng = Rng::derive(seed, 101);
  auto users = make_users(std::max<std::size_t>(num_users, 7), rng);
  auto movies = make_movies(num_movies, 12, rng);
  auto vocab = build_vocabularies(movies, users);
  RealizableSet set;
  set.data = encode_dataset(users, movies, {}, vocab);
  auto draw = [&](std::size_t n) {
    std::vector<std::vector<double>> f(n, std::vector<double>(feature_dim));
    for (auto& row : f)
      for (double& x : row) x = rng.uniform(-0.5, 0.5);
    return f;
  };
  set.user_features = draw(num_users);
  set.movie_features = draw(num_movies);
  for (std::uint32_t u = 0; u < num_users; ++u) {
    for (std::uint32_t m = 0; m < num_movies; ++m) {
      double s = 0.0;
      for (std::size_t k = 0; k < feature_dim; ++k)
        s += set.user_features[u][k] * set.movie_features[m][k];
      set.data.ratings.push_back({u, m, s});
    }
  }
  return set;
}

}  // namespace frec::synthetic
