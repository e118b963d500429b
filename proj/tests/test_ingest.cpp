#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <set>
#include <sstream>

#include "frec/ingest.hpp"
#include "frec/synthetic.hpp"

namespace frec {
namespace {

template <typename Parse>
auto parse(Parse&& fn, const std::string& text) {
  std::istringstream in(text);
  return fn(in);
}

DataError::Kind error_kind(const std::function<void()>& fn, std::size_t* line = nullptr) {
  try {
    fn();
  } catch (const DataError& e) {
    if (line) *line = e.line();
    return e.kind();
  }
  ADD_FAILURE() << "no DataError thrown";
  return DataError::Kind::io;
}

// Users covering every ML-1M age and occupations 0..20.
std::vector<UserRecord> full_users() {
  std::vector<UserRecord> users;
  const int ages[] = {1, 18, 25, 35, 45, 50, 56};
  for (int i = 0; i < 21; ++i)
    users.push_back({static_cast<std::uint32_t>(i + 1), i % 2, ages[i % 7], i, "00000"});
  return users;
}

// -- parse_ratings -----------------------------------------------------------

TEST(ParseRatings, FirstSampleRows) {
  auto r = parse(parse_ratings, "1::1193::5::978300760\n1::661::3::978302109\n");
  ASSERT_EQ(r.size(), 2u);
  EXPECT_EQ(r[0], (RatingRecord{1, 1193, 5, 978300760}));
  EXPECT_EQ(r[1], (RatingRecord{1, 661, 3, 978302109}));
}

TEST(ParseRatings, EmptyStream) { EXPECT_TRUE(parse(parse_ratings, "").empty()); }

TEST(ParseRatings, RatingOutOfRange) {
  std::size_t line = 0;
  EXPECT_EQ(error_kind([] { parse(parse_ratings, "1::2::9::0"); }, &line),
            DataError::Kind::rating_out_of_range);
  EXPECT_EQ(line, 1u);
}

TEST(ParseRatings, MalformedLinesReportLineNumber) {
  std::size_t line = 0;
  EXPECT_EQ(error_kind([] { parse(parse_ratings, "1::2::3::4\n1::2::3\n"); }, &line),
            DataError::Kind::malformed_line);
  EXPECT_EQ(line, 2u);
  EXPECT_EQ(error_kind([] { parse(parse_ratings, "1::x::3::4\n"); }), DataError::Kind::malformed_line);
  EXPECT_EQ(error_kind([] { parse(parse_ratings, "0::2::3::4\n"); }), DataError::Kind::malformed_line);
}

TEST(ParseRatings, CrlfAndBlankLinesTolerated) {
  auto r = parse(parse_ratings, "1::2::3::4\r\n\n5::6::1::0\r\n");
  ASSERT_EQ(r.size(), 2u);
  EXPECT_EQ(r[1], (RatingRecord{5, 6, 1, 0}));
}

// -- parse_users -------------------------------------------------------------

TEST(ParseUsers, GenderCodes) {
  auto u = parse(parse_users, "1::F::1::10::48067\n2::M::56::16::70072\n");
  ASSERT_EQ(u.size(), 2u);
  EXPECT_EQ(u[0].gender_code, 0);
  EXPECT_EQ(u[1].gender_code, 1);
  EXPECT_EQ(u[1].raw_age, 56);
  EXPECT_EQ(u[1].occupation, 16);
  EXPECT_EQ(u[1].zip, "70072");
}

TEST(ParseUsers, UnknownGender) {
  std::size_t line = 0;
  EXPECT_EQ(error_kind([] { parse(parse_users, "3::X::1::1::00000"); }, &line),
            DataError::Kind::unknown_gender);
  EXPECT_EQ(line, 1u);
}

TEST(ParseUsers, WrongFieldCount) {
  EXPECT_EQ(error_kind([] { parse(parse_users, "3::F::1::1"); }), DataError::Kind::malformed_line);
}

// -- parse_movies ------------------------------------------------------------

TEST(ParseMovies, ToyStory) {
  auto m = parse(parse_movies, "1::Toy Story (1995)::Animation|Children's|Comedy\n");
  ASSERT_EQ(m.size(), 1u);
  EXPECT_EQ(m[0].movie_id, 1u);
  EXPECT_EQ(m[0].title, "Toy Story");
  EXPECT_EQ(m[0].year, 1995);
  EXPECT_EQ(m[0].genres, (std::vector<std::string>{"Animation", "Children's", "Comedy"}));
}

TEST(ParseMovies, SingleGenre) {
  auto m = parse(parse_movies, "5::Father of the Bride Part II (1995)::Comedy\n");
  ASSERT_EQ(m.size(), 1u);
  EXPECT_EQ(m[0].genres, (std::vector<std::string>{"Comedy"}));
  EXPECT_EQ(m[0].title, "Father of the Bride Part II");
}

TEST(ParseMovies, NoYear) {
  auto m = parse(parse_movies, "99::Untitled::Drama\n");
  ASSERT_EQ(m.size(), 1u);
  EXPECT_FALSE(m[0].year.has_value());
  EXPECT_EQ(m[0].title, "Untitled");
}

TEST(ParseMovies, TitleContainingSeparatorAndParentheses) {
  auto m = parse(parse_movies, "7::City of Lost Children, The (1995)::Adventure|Sci-Fi\n"
                               "8::Seven (Se7en) (1995)::Crime|Thriller\n");
  EXPECT_EQ(m[0].title, "City of Lost Children, The");
  EXPECT_EQ(m[1].title, "Seven (Se7en)");
  EXPECT_EQ(m[1].year, 1995);
}

TEST(ParseMovies, Latin1TitleDecodes) {
  auto m = parse(parse_movies, "9::Caf\xE9 Society (1995)::Drama\n");
  EXPECT_EQ(m[0].title, "Caf\xC3\xA9 Society");
  EXPECT_EQ(tokenize_title(m[0].title)[0], "caf\xC3\xA9");
  auto upper = parse(parse_movies, "10::\xC9T\xC9 (1990)::Drama\n");
  EXPECT_EQ(tokenize_title(upper[0].title)[0], "\xC3\xA9t\xC3\xA9");
}

TEST(ParseMovies, EmptyGenreListIsMalformed) {
  EXPECT_EQ(error_kind([] { parse(parse_movies, "1::Toy Story (1995)::"); }),
            DataError::Kind::malformed_line);
}

// -- vocabularies ------------------------------------------------------------

TEST(Vocabularies, AgesMapToSevenBuckets) {
  auto v = build_vocabularies(parse(parse_movies, "1::A (1990)::Drama\n"), full_users());
  const int ages[] = {1, 18, 25, 35, 45, 50, 56};
  for (std::uint32_t b = 0; b < 7; ++b) EXPECT_EQ(v.age_bucket.at(ages[b]), b);
}

TEST(Vocabularies, MinimalGenreTable) {
  auto v = build_vocabularies(parse(parse_movies, "1::A (1990)::Comedy\n"), full_users());
  ASSERT_EQ(v.genres.size(), 2u);
  EXPECT_EQ(v.genre_code.at(std::string(pad_token)), 0u);
  EXPECT_EQ(v.genre_code.at("Comedy"), 1u);
  EXPECT_EQ(v.num_genres(), 1u);
}

TEST(Vocabularies, WrongAgeCountThrows) {
  auto users = full_users();
  users.resize(3);
  auto movies = parse(parse_movies, "1::A (1990)::Comedy\n");
  EXPECT_EQ(error_kind([&] { build_vocabularies(movies, users); }), DataError::Kind::too_many_ages);
  users = full_users();
  users[0].raw_age = 57;
  EXPECT_EQ(error_kind([&] { build_vocabularies(movies, users); }), DataError::Kind::too_many_ages);
}

TEST(Vocabularies, CodesAreBijectionOntoRange) {
  auto raw = synthetic::make_movielens(40, 60, 200, 31);
  auto v = build_vocabularies(raw.movies, raw.users);
  auto check = [](const auto& table, const auto& map) {
    ASSERT_EQ(table.size(), map.size());
    std::set<std::uint32_t> codes;
    for (const auto& [key, code] : map) {
      ASSERT_LT(code, table.size());
      EXPECT_EQ(table[code], key);
      codes.insert(code);
    }
    EXPECT_EQ(codes.size(), table.size());
  };
  check(v.genres, v.genre_code);
  check(v.words, v.word_code);
  check(v.ages, v.age_bucket);
  check(v.occupations, v.occupation_index);
  check(v.user_ids, v.user_index);
  check(v.movie_ids, v.movie_index);
}

// -- encode_movie / encode_user ---------------------------------------------

TEST(EncodeMovie, ToyStoryGenresPadToEighteen) {
  auto movies = parse(parse_movies, "1::Toy Story (1995)::Animation|Children's|Comedy\n");
  auto v = build_vocabularies(movies, full_users());
  EncodedMovie e = encode_movie(movies[0], v);
  std::array<std::uint32_t, 18> want{1, 2, 3};
  EXPECT_EQ(e.genres, want);
  EXPECT_EQ(e.title[0], v.word_code.at("toy"));
  EXPECT_EQ(e.title[1], v.word_code.at("story"));
  for (std::size_t i = 2; i < title_len; ++i) EXPECT_EQ(e.title[i], pad_code);
}

TEST(EncodeMovie, EmptyTitleIsAllPad) {
  auto movies = parse(parse_movies, "3::(1995)::Drama\n");
  ASSERT_EQ(movies[0].title, "");
  auto v = build_vocabularies(movies, full_users());
  EncodedMovie e = encode_movie(movies[0], v);
  for (auto c : e.title) EXPECT_EQ(c, pad_code);
}

TEST(EncodeMovie, LongTitleKeepsFirstSixteenTokens) {
  std::string title;
  for (int i = 0; i < 20; ++i) title += "w" + std::to_string(i) + " ";
  auto movies = parse(parse_movies, "4::" + title + "(2000)::Drama\n");
  auto v = build_vocabularies(movies, full_users());
  EncodedMovie e = encode_movie(movies[0], v);
  for (std::size_t i = 0; i < title_len; ++i) EXPECT_EQ(e.title[i], v.word_code.at("w" + std::to_string(i)));
}

TEST(EncodeMovie, UnknownTokensThrow) {
  auto movies = parse(parse_movies, "1::Toy Story (1995)::Comedy\n");
  auto v = build_vocabularies(movies, full_users());
  MovieRecord other = movies[0];
  other.genres = {"Western"};
  EXPECT_EQ(error_kind([&] { encode_movie(other, v); }), DataError::Kind::unknown_genre);
  other = movies[0];
  other.title = "Toy Soldiers";
  EXPECT_EQ(error_kind([&] { encode_movie(other, v); }), DataError::Kind::unknown_word);
}

TEST(EncodeUser, AgeAndOccupation) {
  auto movies = parse(parse_movies, "1::A (1990)::Drama\n");
  auto users = full_users();
  auto v = build_vocabularies(movies, users);
  UserRecord u{1, 0, 1, 10, "48067"};
  EXPECT_EQ(encode_user(u, v), (EncodedUser{v.user_index.at(1), 0, 0, 10}));
  u.raw_age = 56;
  EXPECT_EQ(encode_user(u, v).age_bucket, 6u);
  u.raw_age = 57;
  EXPECT_EQ(error_kind([&] { encode_user(u, v); }), DataError::Kind::unknown_age);
}

// -- properties --------------------------------------------------------------

TEST(EncodingProperties, PadIsContiguousSuffixAndDeterministic) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    auto raw = synthetic::make_movielens(30, 80, 100, seed);
    auto v = build_vocabularies(raw.movies, raw.users);
    for (const auto& m : raw.movies) {
      EncodedMovie e = encode_movie(m, v);
      EXPECT_EQ(e, encode_movie(m, v));
      auto suffix_ok = [](const auto& codes) {
        auto first_pad = std::find(codes.begin(), codes.end(), pad_code);
        return std::all_of(first_pad, codes.end(), [](auto c) { return c == pad_code; });
      };
      EXPECT_TRUE(suffix_ok(e.genres));
      EXPECT_TRUE(suffix_ok(e.title));
      EXPECT_NE(e.genres[0], pad_code);
    }
    for (const auto& u : raw.users) EXPECT_EQ(encode_user(u, v), encode_user(u, v));
  }
}

TEST(ReadMovielens, RoundTripThroughFiles) {
  auto raw = synthetic::make_movielens(25, 40, 300, 9);
  auto dir = std::filesystem::temp_directory_path() / "frec_ingest_roundtrip";
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  synthetic::write_movielens(dir, raw);
  auto back = read_movielens(dir);
  ASSERT_EQ(back.users.size(), raw.users.size());
  ASSERT_EQ(back.movies.size(), raw.movies.size());
  ASSERT_EQ(back.ratings, raw.ratings);
  for (std::size_t i = 0; i < raw.movies.size(); ++i) {
    EXPECT_EQ(back.movies[i].title, raw.movies[i].title);
    EXPECT_EQ(back.movies[i].genres, raw.movies[i].genres);
  }
  std::filesystem::remove_all(dir);
}

TEST(ReadMovielens, MissingDirectoryIsIoError) {
  EXPECT_EQ(error_kind([] { read_movielens("/nonexistent/frec"); }), DataError::Kind::io);
}

}  // namespace
}  // namespace frec
