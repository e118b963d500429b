#pragma once

// JSON forms of the vocabularies and of the encoded catalogue.
//
// Metadata file written by `frec prepare` (version 1):
//   {
//     "format": "frec-metadata", "version": 1,
//     "counts": {"users", "movies", "genres", "words", "ages", "occupations", "ratings"},
//     "genres": [...],       genre names by code, "<PAD>" first
//     "words": [...],        title tokens by code, "<PAD>" first
//     "ages": [...],         raw ages by bucket
//     "occupations": [...],  raw occupation ids by index
//     "user_ids": [...],     raw user ids by user index
//     "movie_ids": [...]     raw movie ids by movie index
//   }
// Counts for genres and words exclude PAD.

#include <cstdint>
#include <string>
#include <vector>

#include "frec/error.hpp"
#include "frec/ingest.hpp"
#include "json.hpp"

namespace frec {

using json = nlohmann::json;

inline constexpr int metadata_version = 1;

inline json vocab_to_json(const Vocabularies& v) {
  return json{{"genres", v.genres},           {"words", v.words},
              {"ages", v.ages},               {"occupations", v.occupations},
              {"user_ids", v.user_ids},       {"movie_ids", v.movie_ids}};
}

inline Vocabularies vocab_from_json(const json& j) {
  Vocabularies v;
  try {
    j.at("genres").get_to(v.genres);
    j.at("words").get_to(v.words);
    j.at("ages").get_to(v.ages);
    j.at("occupations").get_to(v.occupations);
    j.at("user_ids").get_to(v.user_ids);
    j.at("movie_ids").get_to(v.movie_ids);
  } catch (const json::exception& e) {
    throw DataError(DataError::Kind::malformed_line, std::string("bad vocabulary block: ") + e.what());
  }
  if (v.genres.empty() || v.words.empty() || v.genres[0] != pad_token || v.words[0] != pad_token)
    throw DataError(DataError::Kind::malformed_line, "vocabulary block lacks PAD entries");
  v.reindex();
  return v;
}

inline json metadata_json(const Vocabularies& v, std::size_t num_ratings) {
  json j = vocab_to_json(v);
  j["format"] = "frec-metadata";
  j["version"] = metadata_version;
  j["counts"] = json{{"users", v.num_users()},       {"movies", v.num_movies()},
                     {"genres", v.num_genres()},     {"words", v.vocab_size()},
                     {"ages", v.num_ages()},         {"occupations", v.num_occupations()},
                     {"ratings", num_ratings}};
  return j;
}

/// Encoded users, movies and display titles; enough to score without the raw files.
inline json catalogue_to_json(const EncodedDataset& d) {
  json users = json::array();
  for (const auto& u : d.users) users.push_back({u.gender, u.age_bucket, u.occupation});
  json movies = json::array();
  for (const auto& m : d.movies) movies.push_back({{"genres", m.genres}, {"title", m.title}});
  return json{{"vocab", vocab_to_json(d.vocab)}, {"users", users}, {"movies", movies},
              {"titles", d.titles}};
}

inline EncodedDataset catalogue_from_json(const json& j) {
  EncodedDataset d;
  try {
    d.vocab = vocab_from_json(j.at("vocab"));
    const auto& users = j.at("users");
    for (std::size_t i = 0; i < users.size(); ++i) {
      d.users.push_back({static_cast<std::uint32_t>(i), users[i].at(0).get<std::uint32_t>(),
                         users[i].at(1).get<std::uint32_t>(), users[i].at(2).get<std::uint32_t>()});
    }
    const auto& movies = j.at("movies");
    for (std::size_t i = 0; i < movies.size(); ++i) {
      EncodedMovie m;
      m.movie_index = static_cast<std::uint32_t>(i);
      movies[i].at("genres").get_to(m.genres);
      movies[i].at("title").get_to(m.title);
      d.movies.push_back(m);
    }
    j.at("titles").get_to(d.titles);
  } catch (const json::exception& e) {
    throw DataError(DataError::Kind::malformed_line, std::string("bad catalogue block: ") + e.what());
  }
  if (d.users.size() != d.vocab.num_users() || d.movies.size() != d.vocab.num_movies())
    throw DataError(DataError::Kind::malformed_line, "catalogue does not match vocabulary");
  return d;
}

}  // namespace frec
