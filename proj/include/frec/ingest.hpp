#pragma once

// MovieLens-1M ingestion: `::`-separated, Latin-1 encoded .dat files.
//
//   ratings.dat  UserID::MovieID::Rating::Timestamp
//   users.dat    UserID::Gender::Age::Occupation::Zip-code
//   movies.dat   MovieID::Title (YYYY)::Genre1|Genre2|...
//
// Text is transcoded from Latin-1 to UTF-8 while parsing, so every byte
// sequence decodes.

#include <algorithm>
#include <array>
#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "frec/error.hpp"

namespace frec {

inline constexpr std::size_t genre_slots = 18;
inline constexpr std::size_t title_len = 16;
inline constexpr std::uint32_t pad_code = 0;
inline constexpr std::string_view pad_token = "<PAD>";

struct RatingRecord {
  std::uint32_t user_id = 0;
  std::uint32_t movie_id = 0;
  int rating = 0;
  std::uint64_t timestamp = 0;
  bool operator==(const RatingRecord&) const = default;
};

struct UserRecord {
  std::uint32_t user_id = 0;
  int gender_code = 0;  ///< F -> 0, M -> 1
  int raw_age = 0;      ///< bucketed through Vocabularies::age_bucket
  int occupation = 0;
  std::string zip;
};

struct MovieRecord {
  std::uint32_t movie_id = 0;
  std::string title;  ///< UTF-8, year group removed, trimmed
  std::optional<int> year;
  std::vector<std::string> genres;
};

struct EncodedUser {
  std::uint32_t user_index = 0;
  std::uint32_t gender = 0;
  std::uint32_t age_bucket = 0;
  std::uint32_t occupation = 0;
  bool operator==(const EncodedUser&) const = default;
};

struct EncodedMovie {
  std::uint32_t movie_index = 0;
  std::array<std::uint32_t, genre_slots> genres{};
  std::array<std::uint32_t, title_len> title{};
  bool operator==(const EncodedMovie&) const = default;
};

namespace detail {

inline std::string latin1_to_utf8(std::string_view in) {
  std::string out;
  out.reserve(in.size());
  for (unsigned char c : in) {
    if (c < 0x80) {
      out.push_back(static_cast<char>(c));
    } else {
      out.push_back(static_cast<char>(0xC0 | (c >> 6)));
      out.push_back(static_cast<char>(0x80 | (c & 0x3F)));
    }
  }
  return out;
}

/// Lowercases ASCII and the Latin-1 letters U+00C0..U+00DE (except U+00D7)
/// in a UTF-8 string.
inline std::string lowercase(std::string_view in) {
  std::string out(in);
  for (std::size_t i = 0; i < out.size(); ++i) {
    unsigned char c = static_cast<unsigned char>(out[i]);
    if (c >= 'A' && c <= 'Z') {
      out[i] = static_cast<char>(c + 32);
    } else if (c == 0xC3 && i + 1 < out.size()) {
      unsigned char n = static_cast<unsigned char>(out[i + 1]);
      if (n >= 0x80 && n <= 0x9E && n != 0x97) out[i + 1] = static_cast<char>(n + 0x20);
      ++i;
    }
  }
  return out;
}

inline std::string_view trim(std::string_view s) {
  const auto ws = " \t\r\n";
  auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(ws);
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    auto pos = line.find("::", start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 2;
  }
}

template <typename Int>
std::optional<Int> parse_int(std::string_view s) {
  s = trim(s);
  Int v{};
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) return std::nullopt;
  return v;
}

[[noreturn]] inline void malformed(std::size_t line_no, const std::string& why) {
  throw DataError(DataError::Kind::malformed_line,
                  "line " + std::to_string(line_no) + ": " + why, line_no);
}

/// Calls fn(line, line_no) for every non-empty line, CR stripped.
template <typename Fn>
void for_each_line(std::istream& in, Fn&& fn) {
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    fn(std::string_view(line), line_no);
  }
}

}  // namespace detail

inline std::vector<RatingRecord> parse_ratings(std::istream& in) {
  std::vector<RatingRecord> out;
  detail::for_each_line(in, [&](std::string_view line, std::size_t no) {
    auto f = detail::split_fields(line);
    if (f.size() != 4) detail::malformed(no, "expected 4 fields in ratings line");
    auto uid = detail::parse_int<std::uint32_t>(f[0]);
    auto mid = detail::parse_int<std::uint32_t>(f[1]);
    auto rating = detail::parse_int<int>(f[2]);
    auto ts = detail::parse_int<std::uint64_t>(f[3]);
    if (!uid || !mid || !rating || !ts || *uid == 0 || *mid == 0)
      detail::malformed(no, "non-integer or zero field in ratings line");
    if (*rating < 1 || *rating > 5)
      throw DataError(DataError::Kind::rating_out_of_range,
                      "line " + std::to_string(no) + ": rating " + std::to_string(*rating) +
                          " outside 1..5",
                      no);
    out.push_back({*uid, *mid, *rating, *ts});
  });
  return out;
}

inline std::vector<UserRecord> parse_users(std::istream& in) {
  std::vector<UserRecord> out;
  detail::for_each_line(in, [&](std::string_view line, std::size_t no) {
    auto f = detail::split_fields(line);
    if (f.size() != 5) detail::malformed(no, "expected 5 fields in users line");
    auto uid = detail::parse_int<std::uint32_t>(f[0]);
    auto age = detail::parse_int<int>(f[2]);
    auto occ = detail::parse_int<int>(f[3]);
    if (!uid || !age || !occ || *uid == 0 || *occ < 0)
      detail::malformed(no, "non-integer field in users line");
    UserRecord u;
    u.user_id = *uid;
    auto g = detail::trim(f[1]);
    if (g == "F") {
      u.gender_code = 0;
    } else if (g == "M") {
      u.gender_code = 1;
    } else {
      throw DataError(DataError::Kind::unknown_gender,
                      "line " + std::to_string(no) + ": unknown gender '" + std::string(g) + "'",
                      no);
    }
    u.raw_age = *age;
    u.occupation = *occ;
    u.zip = std::string(detail::trim(f[4]));
    out.push_back(std::move(u));
  });
  return out;
}

/// Splits "Title (YYYY)" into title and year; no trailing 4-digit group means no year.
inline std::pair<std::string, std::optional<int>> split_title_year(std::string_view raw) {
  auto t = detail::trim(raw);
  if (t.size() >= 6 && t.back() == ')' && t[t.size() - 6] == '(') {
    auto digits = t.substr(t.size() - 5, 4);
    if (std::all_of(digits.begin(), digits.end(), [](char c) { return c >= '0' && c <= '9'; })) {
      return {std::string(detail::trim(t.substr(0, t.size() - 6))),
              detail::parse_int<int>(digits)};
    }
  }
  return {std::string(t), std::nullopt};
}

inline std::vector<MovieRecord> parse_movies(std::istream& in) {
  std::vector<MovieRecord> out;
  detail::for_each_line(in, [&](std::string_view line, std::size_t no) {
    // Title text may itself contain "::" in principle; id and genres are the
    // outermost fields.
    auto first = line.find("::");
    auto last = line.rfind("::");
    if (first == std::string_view::npos || first == last)
      detail::malformed(no, "expected 3 fields in movies line");
    auto mid = detail::parse_int<std::uint32_t>(line.substr(0, first));
    if (!mid || *mid == 0) detail::malformed(no, "non-integer movie id");
    MovieRecord m;
    m.movie_id = *mid;
    auto [title, year] = split_title_year(line.substr(first + 2, last - first - 2));
    m.title = detail::latin1_to_utf8(title);
    m.year = year;
    std::string_view genres = detail::trim(line.substr(last + 2));
    std::size_t start = 0;
    while (start <= genres.size()) {
      auto bar = genres.find('|', start);
      auto g = detail::trim(genres.substr(start, bar == std::string_view::npos ? bar : bar - start));
      if (!g.empty()) m.genres.push_back(detail::latin1_to_utf8(g));
      if (bar == std::string_view::npos) break;
      start = bar + 1;
    }
    if (m.genres.empty()) detail::malformed(no, "movie has no genres");
    out.push_back(std::move(m));
  });
  return out;
}

/// Lowercased whitespace tokens of a (year-stripped) title.
inline std::vector<std::string> tokenize_title(std::string_view title) {
  std::vector<std::string> out;
  std::istringstream is{detail::lowercase(title)};
  std::string tok;
  while (is >> tok) out.push_back(tok);
  return out;
}

/// Code tables. Index in each vector is the code; PAD holds code 0 in the
/// genre and word tables.
struct Vocabularies {
  std::vector<std::string> genres;
  std::vector<std::string> words;
  std::vector<int> ages;         ///< sorted distinct raw ages; index = bucket
  std::vector<int> occupations;  ///< sorted distinct raw codes; index = occupation index
  std::vector<std::uint32_t> user_ids;   ///< index = user index, first-occurrence order
  std::vector<std::uint32_t> movie_ids;  ///< index = movie index, first-occurrence order

  std::unordered_map<std::string, std::uint32_t> genre_code;
  std::unordered_map<std::string, std::uint32_t> word_code;
  std::map<int, std::uint32_t> age_bucket;
  std::map<int, std::uint32_t> occupation_index;
  std::unordered_map<std::uint32_t, std::uint32_t> user_index;
  std::unordered_map<std::uint32_t, std::uint32_t> movie_index;

  std::size_t num_users() const { return user_ids.size(); }
  std::size_t num_movies() const { return movie_ids.size(); }
  std::size_t num_genres() const { return genres.size() - 1; }  ///< excluding PAD
  std::size_t vocab_size() const { return words.size() - 1; }   ///< excluding PAD
  std::size_t num_ages() const { return ages.size(); }
  std::size_t num_occupations() const { return occupations.size(); }

  /// Rebuilds every lookup map from the ordered tables.
  void reindex() {
    genre_code.clear();
    word_code.clear();
    age_bucket.clear();
    occupation_index.clear();
    user_index.clear();
    movie_index.clear();
    for (std::uint32_t i = 0; i < genres.size(); ++i) genre_code.emplace(genres[i], i);
    for (std::uint32_t i = 0; i < words.size(); ++i) word_code.emplace(words[i], i);
    for (std::uint32_t i = 0; i < ages.size(); ++i) age_bucket.emplace(ages[i], i);
    for (std::uint32_t i = 0; i < occupations.size(); ++i) occupation_index.emplace(occupations[i], i);
    for (std::uint32_t i = 0; i < user_ids.size(); ++i) user_index.emplace(user_ids[i], i);
    for (std::uint32_t i = 0; i < movie_ids.size(); ++i) movie_index.emplace(movie_ids[i], i);
  }
};

inline constexpr std::size_t age_bucket_count = 7;

inline Vocabularies build_vocabularies(const std::vector<MovieRecord>& movies,
                                       const std::vector<UserRecord>& users) {
  if (movies.empty() || users.empty())
    throw DataError(DataError::Kind::malformed_line, "vocabularies need movies and users");
  Vocabularies v;
  v.genres.emplace_back(pad_token);
  v.words.emplace_back(pad_token);
  std::set<std::string> seen_genres, seen_words;
  std::set<std::uint32_t> seen_movies, seen_users;
  for (const auto& m : movies) {
    if (seen_movies.insert(m.movie_id).second) v.movie_ids.push_back(m.movie_id);
    for (const auto& g : m.genres)
      if (seen_genres.insert(g).second) v.genres.push_back(g);
    for (auto& w : tokenize_title(m.title))
      if (seen_words.insert(w).second) v.words.push_back(std::move(w));
  }
  std::set<int> ages, occs;
  for (const auto& u : users) {
    if (seen_users.insert(u.user_id).second) v.user_ids.push_back(u.user_id);
    ages.insert(u.raw_age);
    occs.insert(u.occupation);
  }
  if (ages.size() != age_bucket_count) {
    throw DataError(DataError::Kind::too_many_ages,
                    "expected " + std::to_string(age_bucket_count) + " distinct ages, found " +
                        std::to_string(ages.size()));
  }
  v.ages.assign(ages.begin(), ages.end());
  v.occupations.assign(occs.begin(), occs.end());
  v.reindex();
  return v;
}

inline EncodedMovie encode_movie(const MovieRecord& m, const Vocabularies& v) {
  EncodedMovie e;
  auto mi = v.movie_index.find(m.movie_id);
  if (mi == v.movie_index.end())
    throw DataError(DataError::Kind::unknown_movie, "unknown movie id " + std::to_string(m.movie_id));
  e.movie_index = mi->second;
  if (m.genres.size() > genre_slots)
    throw DataError(DataError::Kind::malformed_line,
                    "movie " + std::to_string(m.movie_id) + " has more than 18 genres");
  for (std::size_t i = 0; i < m.genres.size(); ++i) {
    auto it = v.genre_code.find(m.genres[i]);
    if (it == v.genre_code.end() || it->second == pad_code)
      throw DataError(DataError::Kind::unknown_genre, "unknown genre '" + m.genres[i] + "'");
    e.genres[i] = it->second;
  }
  auto tokens = tokenize_title(m.title);
  for (std::size_t i = 0; i < std::min(tokens.size(), title_len); ++i) {
    auto it = v.word_code.find(tokens[i]);
    if (it == v.word_code.end() || it->second == pad_code)
      throw DataError(DataError::Kind::unknown_word, "unknown title word '" + tokens[i] + "'");
    e.title[i] = it->second;
  }
  return e;
}

inline EncodedUser encode_user(const UserRecord& u, const Vocabularies& v) {
  auto ui = v.user_index.find(u.user_id);
  if (ui == v.user_index.end())
    throw DataError(DataError::Kind::unknown_user, "unknown user id " + std::to_string(u.user_id));
  auto age = v.age_bucket.find(u.raw_age);
  if (age == v.age_bucket.end())
    throw DataError(DataError::Kind::unknown_age, "unknown age " + std::to_string(u.raw_age));
  auto occ = v.occupation_index.find(u.occupation);
  if (occ == v.occupation_index.end())
    throw DataError(DataError::Kind::malformed_line,
                    "unknown occupation " + std::to_string(u.occupation));
  return {ui->second, static_cast<std::uint32_t>(u.gender_code), age->second, occ->second};
}

/// One rating resolved to user/movie indices.
struct Example {
  std::uint32_t user = 0;
  std::uint32_t movie = 0;
  double rating = 0.0;
};

/// Everything the model consumes, indexed by user/movie index.
struct EncodedDataset {
  Vocabularies vocab;
  std::vector<EncodedUser> users;
  std::vector<EncodedMovie> movies;
  std::vector<std::string> titles;  ///< display titles by movie index
  std::vector<Example> ratings;
};

inline std::vector<Example> resolve_ratings(const std::vector<RatingRecord>& ratings,
                                            const Vocabularies& v) {
  std::vector<Example> out;
  out.reserve(ratings.size());
  for (std::size_t i = 0; i < ratings.size(); ++i) {
    const auto& r = ratings[i];
    auto u = v.user_index.find(r.user_id);
    if (u == v.user_index.end())
      throw DataError(DataError::Kind::unknown_user,
                      "rating " + std::to_string(i + 1) + " references unknown user " +
                          std::to_string(r.user_id),
                      i + 1);
    auto m = v.movie_index.find(r.movie_id);
    if (m == v.movie_index.end())
      throw DataError(DataError::Kind::unknown_movie,
                      "rating " + std::to_string(i + 1) + " references unknown movie " +
                          std::to_string(r.movie_id),
                      i + 1);
    out.push_back({u->second, m->second, static_cast<double>(r.rating)});
  }
  return out;
}

/// Encodes parsed records. Users/movies are stored by their vocabulary index.
inline EncodedDataset encode_dataset(const std::vector<UserRecord>& users,
                                     const std::vector<MovieRecord>& movies,
                                     const std::vector<RatingRecord>& ratings,
                                     Vocabularies vocab) {
  EncodedDataset d;
  d.users.resize(vocab.num_users());
  d.movies.resize(vocab.num_movies());
  d.titles.resize(vocab.num_movies());
  for (const auto& u : users) {
    auto e = encode_user(u, vocab);
    d.users[e.user_index] = e;
  }
  for (const auto& m : movies) {
    auto e = encode_movie(m, vocab);
    d.movies[e.movie_index] = e;
    d.titles[e.movie_index] = m.title + (m.year ? " (" + std::to_string(*m.year) + ")" : "");
  }
  d.ratings = resolve_ratings(ratings, vocab);
  d.vocab = std::move(vocab);
  return d;
}

struct RawMovieLens {
  std::vector<UserRecord> users;
  std::vector<MovieRecord> movies;
  std::vector<RatingRecord> ratings;
};

/// Reads users.dat, movies.dat and ratings.dat from `dir`. Errors name the file.
inline RawMovieLens read_movielens(const std::filesystem::path& dir) {
  auto open = [&](const char* name) {
    auto path = dir / name;
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError(DataError::Kind::io, "cannot open " + path.string());
    return in;
  };
  auto with_file = [&](const char* name, auto&& parse) {
    auto in = open(name);
    try {
      return parse(in);
    } catch (const DataError& e) {
      throw DataError(e.kind(), (dir / name).string() + ": " + e.what(), e.line());
    }
  };
  RawMovieLens raw;
  raw.users = with_file("users.dat", [](std::istream& in) { return parse_users(in); });
  raw.movies = with_file("movies.dat", [](std::istream& in) { return parse_movies(in); });
  raw.ratings = with_file("ratings.dat", [](std::istream& in) { return parse_ratings(in); });
  return raw;
}

}  // namespace frec
