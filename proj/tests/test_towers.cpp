#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "frec/gradcheck.hpp"
#include "frec/towers.hpp"
#include "frec/verify/checks.hpp"

namespace frec {
namespace {

using verify::detail::random_batch;
using verify::detail::tiny_dims;

Model tiny_model(TitleEncoder enc = TitleEncoder::cnn, std::uint64_t seed = 5) {
  ModelConfig cfg;
  cfg.title_encoder = enc;
  return init_params(cfg, tiny_dims(), seed);
}

EncodedMovie movie_with(std::uint32_t index, std::vector<std::uint32_t> genres,
                        std::vector<std::uint32_t> words) {
  EncodedMovie m;
  m.movie_index = index;
  std::copy(genres.begin(), genres.end(), m.genres.begin());
  std::copy(words.begin(), words.end(), m.title.begin());
  return m;
}

std::vector<double> values(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

TEST(InitParams, SameSeedIsBitIdentical) {
  Model a = tiny_model(TitleEncoder::attn_cnn, 9), b = tiny_model(TitleEncoder::attn_cnn, 9);
  ASSERT_EQ(a.params.size(), b.params.size());
  for (std::size_t i = 0; i < a.params.size(); ++i) {
    EXPECT_EQ(a.params.items()[i].name, b.params.items()[i].name);
    EXPECT_EQ(values(a.params.items()[i].value), values(b.params.items()[i].value));
  }
}

TEST(InitParams, DifferentSeedsDiffer) {
  EXPECT_NE(values(tiny_model(TitleEncoder::cnn, 1).params.at("user.uid_table")),
            values(tiny_model(TitleEncoder::cnn, 2).params.at("user.uid_table")));
}

TEST(InitParams, UidTableShapeAtMovieLensScale) {
  ModelDims dims{6040, 3706, 18, 100, 7, 21};
  Model m = init_params(ModelConfig{}, dims, 1);
  EXPECT_EQ(m.params.at("user.uid_table").shape(), (Shape{6040, 32}));
  EXPECT_EQ(m.params.at("movie.mid_table").shape(), (Shape{3706, 16}));
  EXPECT_EQ(m.params.at("movie.genre_table").shape(), (Shape{19, 32}));
  EXPECT_EQ(m.params.at("user.age_table").shape(), (Shape{7, 16}));
}

TEST(InitParams, PadRowsAreZero) {
  Model m = tiny_model();
  for (const char* name : {"movie.genre_table", "movie.word_table"}) {
    const Tensor& t = m.params.at(name);
    for (std::size_t c = 0; c < t.cols(); ++c) EXPECT_EQ(t.at(0, c), 0.0) << name;
  }
}

TEST(InitParams, EmbeddingsWithinInitRange) {
  Model m = tiny_model();
  for (const auto& p : m.params.items()) {
    if (!p.name.ends_with("_table")) continue;
    for (double v : p.value.data()) EXPECT_LE(std::abs(v), 0.05) << p.name;
  }
}

TEST(InitParams, ZeroCountRejected) {
  ModelDims dims = tiny_dims();
  dims.num_genres = 0;
  EXPECT_THROW(init_params(ModelConfig{}, dims, 1), ShapeError);
}

TEST(UserFeature, LengthAndRange) {
  Model m = tiny_model();
  Rng rng(3);
  Batch b = random_batch(m.dims, 10, rng);
  for (const auto& u : b.users) {
    Tensor f = user_feature(m, u);
    ASSERT_EQ(f.shape(), (Shape{200}));
    for (double v : f.data()) {
      EXPECT_GE(v, -1.0);
      EXPECT_LE(v, 1.0);
    }
  }
}

TEST(UserFeature, DistinctUsersDiffer) {
  Model m = tiny_model();
  EncodedUser a{0, 1, 2, 1}, b{1, 1, 2, 1};
  EXPECT_NE(values(user_feature(m, a)), values(user_feature(m, b)));
}

TEST(UserFeature, OutOfRangeIndexThrows) {
  Model m = tiny_model();
  EncodedUser u{static_cast<std::uint32_t>(m.dims.num_users), 0, 0, 0};
  EXPECT_THROW(user_feature(m, u), ShapeError);
}

TEST(MovieFeature, LengthAndRangeInBothModes) {
  Model m = tiny_model(TitleEncoder::attn_cnn);
  Rng rng(4);
  Batch b = random_batch(m.dims, 6, rng);
  for (Mode mode : {Mode::train, Mode::eval}) {
    for (const auto& mv : b.movies) {
      Tensor f = movie_feature(m, mv, mode, rng);
      ASSERT_EQ(f.size(), 200u);
      for (double v : f.data()) EXPECT_LE(std::abs(v), 1.0);
    }
  }
}

TEST(GenreSum, AllPadIsZero) {
  Model m = tiny_model();
  EncodedMovie mv = movie_with(0, {}, {1, 2});
  Tensor g = genre_sum(m, std::span<const EncodedMovie>(&mv, 1));
  for (double v : g.data()) EXPECT_EQ(v, 0.0);
}

TEST(GenreSum, EqualsRowAddition) {
  Model m = tiny_model();
  EncodedMovie mv = movie_with(0, {1, 2, 3}, {1});
  Tensor g = genre_sum(m, std::span<const EncodedMovie>(&mv, 1));
  const Tensor& table = m.params.at("movie.genre_table");
  for (std::size_t c = 0; c < table.cols(); ++c)
    EXPECT_NEAR(g[c], table.at(1, c) + table.at(2, c) + table.at(3, c), 1e-15);
}

TEST(MovieFeature, EvalModeIsDeterministic) {
  Model m = tiny_model(TitleEncoder::attn_cnn);
  EncodedMovie mv = movie_with(2, {1, 3}, {4, 5, 6});
  Rng r1(1), r2(999);
  EXPECT_EQ(values(movie_feature(m, mv, Mode::eval, r1)),
            values(movie_feature(m, mv, Mode::eval, r2)));
}

TEST(MovieFeature, TrainModeDropoutVariesWithRng) {
  Model m = tiny_model();
  EncodedMovie mv = movie_with(2, {1, 3}, {4, 5, 6});
  Rng r1(1), r2(2);
  EXPECT_NE(values(movie_feature(m, mv, Mode::train, r1)),
            values(movie_feature(m, mv, Mode::train, r2)));
}

TEST(MovieFeature, PadGenreSlotsContributeNothing) {
  for (TitleEncoder enc : {TitleEncoder::cnn, TitleEncoder::attn_cnn}) {
    Model m = tiny_model(enc);
    Rng rng(0);
    EncodedMovie packed = movie_with(1, {2, 3}, {1, 2, 3});
    EncodedMovie spread = movie_with(1, {0, 2, 0, 0, 3}, {1, 2, 3});
    EXPECT_EQ(values(movie_feature(m, packed, Mode::eval, rng)),
              values(movie_feature(m, spread, Mode::eval, rng)));
  }
}

TEST(MovieFeature, BatchedRowsMatchSingleCalls) {
  Model m = tiny_model(TitleEncoder::attn_cnn);
  Rng rng(6);
  Batch b = random_batch(m.dims, 4, rng);
  Tensor all = movie_features(m, b.movies, Mode::eval, rng);
  for (std::size_t i = 0; i < b.movies.size(); ++i) {
    Tensor one = movie_feature(m, b.movies[i], Mode::eval, rng);
    for (std::size_t k = 0; k < 200; ++k) EXPECT_EQ(all.at(i, k), one[k]);
  }
}

TEST(MovieFeature, ZeroAttentionMatchesCnnVariant) {
  Model cnn = tiny_model(TitleEncoder::cnn, 11);
  Model att = tiny_model(TitleEncoder::attn_cnn, 11);
  for (auto& p : att.params.items()) {
    if (p.name.starts_with("movie.attn.")) {
      for (double& v : p.value.data()) v = 0.0;
    } else {
      auto src = cnn.params.at(p.name).data();
      std::copy(src.begin(), src.end(), p.value.data().begin());
    }
  }
  Rng rng(12);
  Batch b = random_batch(cnn.dims, 8, rng);
  Tensor fc = movie_features(cnn, b.movies, Mode::eval, rng);
  Tensor fa = movie_features(att, b.movies, Mode::eval, rng);
  for (std::size_t i = 0; i < fc.size(); ++i) EXPECT_NEAR(fc[i], fa[i], 1e-12);
}

TEST(PredictRating, OrthogonalIsZero) {
  std::vector<double> u(200, 0.0), v(200, 0.0);
  u[0] = 0.7;
  v[1] = -0.3;
  EXPECT_EQ(predict_rating(Tensor({200}, u), Tensor({200}, v)).item(), 0.0);
}

TEST(PredictRating, UnitBasis) {
  std::vector<double> e(200, 0.0);
  e[0] = 1.0;
  EXPECT_EQ(predict_rating(Tensor({200}, e), Tensor({200}, e)).item(), 1.0);
}

TEST(PredictRating, LoopSumOracle) {
  Rng rng(8);
  std::vector<double> u(200), v(200);
  for (auto& x : u) x = rng.uniform(-1, 1);
  for (auto& x : v) x = rng.uniform(-1, 1);
  double expect = 0.0;
  for (std::size_t i = 0; i < 200; ++i) expect += u[i] * v[i];
  EXPECT_NEAR(predict_rating(Tensor({200}, u), Tensor({200}, v)).item(), expect, 1e-12);
}

TEST(PredictRating, LengthMismatchThrows) {
  EXPECT_THROW(predict_rating(Tensor::zeros({200}), Tensor::zeros({199})), ShapeError);
}

TEST(ModelLoss, ExactPredictionsGiveZero) {
  Model m = tiny_model();
  Rng rng(9);
  Batch b = random_batch(m.dims, 5, rng);
  Tensor pred = predict_batch(m, b, Mode::eval, rng);
  b.ratings = values(pred);
  EXPECT_EQ(model_loss(m, b, Mode::eval, rng).item(), 0.0);
}

TEST(ModelLoss, ZeroPredictionAgainstFive) {
  Model m = tiny_model();
  for (const char* name : {"user.out.w", "user.out.b"})
    for (double& v : m.params.at(name).data()) v = 0.0;
  Rng rng(10);
  Batch b = random_batch(m.dims, 1, rng);
  b.ratings = {5.0};
  EXPECT_EQ(model_loss(m, b, Mode::eval, rng).item(), 25.0);
}

TEST(ModelLoss, EmptyBatchThrows) {
  Model m = tiny_model();
  Rng rng(1);
  EXPECT_THROW(model_loss(m, Batch{}, Mode::eval, rng), ShapeError);
}

TEST(ModelLoss, GradientPassesFiniteDifferences) {
  for (TitleEncoder enc : {TitleEncoder::cnn, TitleEncoder::attn_cnn}) {
    Model m = tiny_model(enc, 31);
    Rng rng(32);
    verify::detail::randomize_for_check(m, rng);
    Batch b = random_batch(m.dims, 4, rng);
    {
      NoGradGuard no_grad;
      Tensor pred = predict_batch(m, b, Mode::eval, rng);
      for (std::size_t i = 0; i < b.size(); ++i) b.ratings[i] = pred[i] + rng.uniform(-0.5, 0.5);
    }
    std::vector<Tensor> inputs;
    for (const auto& p : m.params.items())
      if (!verify::detail::structurally_inert(p)) inputs.push_back(p.value);
    GradCheckOptions opt;
    opt.max_coords_per_tensor = 4;
    auto f = [&] {
      Rng r(77);
      return model_loss(m, b, Mode::train, r);
    };
    GradCheckResult r = grad_check(f, inputs, opt);
    EXPECT_LE(r.max_rel_error, 1e-4) << to_string(enc) << " " << r.worst;
    EXPECT_GT(r.checked, inputs.size());
  }
}

double grad_norm(Tensor& t, bool skip_pad_row) {
  double s = 0.0;
  auto g = t.grad();
  for (std::size_t i = skip_pad_row ? t.cols() : 0; i < g.size(); ++i) s += g[i] * g[i];
  return std::sqrt(s);
}

TEST(ModelLoss, EveryLearnableTensorGetsGradient) {
  for (TitleEncoder enc : {TitleEncoder::cnn, TitleEncoder::attn_cnn}) {
    Model m = tiny_model(enc, 41);
    Rng rng(42);
    Batch b = random_batch(m.dims, 8, rng);
    m.params.zero_grads();
    Tensor loss = model_loss(m, b, Mode::train, rng);
    backward(loss);
    for (auto& p : m.params.items()) {
      if (verify::detail::structurally_inert(p)) continue;
      EXPECT_GT(grad_norm(p.value, p.pad_row_frozen), 0.0) << to_string(enc) << " " << p.name;
    }
  }
}

TEST(ModelLoss, InertHeightTablesHaveZeroGradient) {
  Model m = tiny_model(TitleEncoder::attn_cnn, 43);
  Rng rng(44);
  verify::detail::randomize_for_check(m, rng);
  Batch b = random_batch(m.dims, 8, rng);
  m.params.zero_grads();
  Tensor loss = model_loss(m, b, Mode::train, rng);
  backward(loss);
  std::size_t inert = 0;
  for (auto& p : m.params.items()) {
    if (!verify::detail::structurally_inert(p)) continue;
    ++inert;
    EXPECT_LE(grad_norm(p.value, false), 1e-12 * std::max(1.0, loss.item())) << p.name;
  }
  EXPECT_EQ(inert, m.config.attn_heads);
}

}  // namespace
}  // namespace frec
