#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <numeric>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "frec/adam.hpp"
#include "frec/error.hpp"
#include "frec/ingest.hpp"
#include "frec/rng.hpp"
#include "frec/towers.hpp"

namespace frec {

struct TrainConfig {
  std::size_t epochs = 10;
  std::size_t batch_size = 256;
  double lr = 1e-3;
  std::uint64_t seed = Rng::default_seed;
  double test_fraction = 0.2;
  bool shuffle = true;
};

class NonFiniteLoss : public NumericError {
 public:
  NonFiniteLoss(std::size_t epoch, std::size_t step)
      : NumericError("non-finite training loss at epoch " + std::to_string(epoch) + ", step " +
                     std::to_string(step)),
        epoch_(epoch),
        step_(step) {}
  std::size_t epoch() const { return epoch_; }
  std::size_t step() const { return step_; }

 private:
  std::size_t epoch_;
  std::size_t step_;
};

enum class Split { train, test };

struct MetricsRow {
  std::size_t epoch = 0;
  std::size_t step = 0;
  Split split = Split::train;
  double loss = 0.0;
  std::optional<double> rmse;  ///< only on full-split rows
};

/// Per-step train losses and per-epoch full test evaluations.
struct MetricsLog {
  std::vector<MetricsRow> rows;

  std::vector<const MetricsRow*> select(Split s) const {
    std::vector<const MetricsRow*> out;
    for (const auto& r : rows)
      if (r.split == s) out.push_back(&r);
    return out;
  }

  /// CSV with header `epoch,step,split,loss,rmse`; numbers in %.17g.
  void write_csv(std::ostream& os) const {
    os << "epoch,step,split,loss,rmse\n";
    char buf[64];
    for (const auto& r : rows) {
      os << r.epoch << ',' << r.step << ',' << (r.split == Split::train ? "train" : "test") << ',';
      std::snprintf(buf, sizeof buf, "%.17g", r.loss);
      os << buf << ',';
      if (r.rmse) {
        std::snprintf(buf, sizeof buf, "%.17g", *r.rmse);
        os << buf;
      }
      os << '\n';
    }
  }
};

/// Seeded uniform split by record: round(fraction * N) records go to the
/// test side. Both sides keep the input order.
template <typename T>
std::pair<std::vector<T>, std::vector<T>> split_ratings(std::span<const T> records, double fraction,
                                                        std::uint64_t seed) {
  if (!(fraction >= 0.0 && fraction < 1.0))
    throw Error(ErrorClass::usage, "split fraction must lie in [0, 1)");
  const std::size_t n = records.size();
  const auto n_test = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng = Rng::derive(seed, 2);
  rng.shuffle(std::span<std::size_t>(order));
  std::vector<char> is_test(n, 0);
  for (std::size_t i = 0; i < n_test; ++i) is_test[order[i]] = 1;
  std::pair<std::vector<T>, std::vector<T>> out;
  for (std::size_t i = 0; i < n; ++i) (is_test[i] ? out.second : out.first).push_back(records[i]);
  return out;
}

template <typename T>
std::pair<std::vector<T>, std::vector<T>> split_ratings(const std::vector<T>& records,
                                                        double fraction, std::uint64_t seed) {
  return split_ratings(std::span<const T>(records), fraction, seed);
}

/// Seeded subset of `count` records in input order; all of them when count >= N.
template <typename T>
std::vector<T> subsample(const std::vector<T>& records, std::size_t count, std::uint64_t seed) {
  if (count >= records.size()) return records;
  std::vector<std::size_t> order(records.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng = Rng::derive(seed, 3);
  rng.shuffle(std::span<std::size_t>(order));
  order.resize(count);
  std::sort(order.begin(), order.end());
  std::vector<T> out;
  out.reserve(count);
  for (std::size_t i : order) out.push_back(records[i]);
  return out;
}

struct Evaluation {
  double mse = 0.0;
  double rmse = 0.0;
  double rmse_clamped = 0.0;  ///< predictions clamped to [1, 5] first
};

/// Raw predictions in eval mode, in example order.
inline std::vector<double> predict_all(const Model& model, const EncodedDataset& data,
                                       std::span<const Example> examples,
                                       std::size_t chunk = 1024) {
  NoGradGuard no_grad;
  Rng unused(0);
  std::vector<double> out;
  out.reserve(examples.size());
  for (std::size_t b = 0; b < examples.size(); b += chunk) {
    auto part = examples.subspan(b, std::min(chunk, examples.size() - b));
    Tensor pred = predict_batch(model, make_batch(data, part), Mode::eval, unused);
    out.insert(out.end(), pred.data().begin(), pred.data().end());
  }
  return out;
}

inline Evaluation evaluate(const Model& model, const EncodedDataset& data,
                           std::span<const Example> examples) {
  if (examples.empty()) throw Error(ErrorClass::usage, "evaluate: empty dataset");
  auto pred = predict_all(model, data, examples);
  double se = 0.0, se_clamped = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred[i] - examples[i].rating;
    const double dc = std::clamp(pred[i], 1.0, 5.0) - examples[i].rating;
    se += d * d;
    se_clamped += dc * dc;
  }
  const double n = static_cast<double>(pred.size());
  Evaluation e;
  e.mse = se / n;
  e.rmse = std::sqrt(e.mse);
  e.rmse_clamped = std::sqrt(se_clamped / n);
  return e;
}

/// Minibatch Adam over `train_set`. Logs every step's batch loss and, before
/// the first epoch and after each epoch, a full evaluation of `test_set`
/// (skipped when the test set is empty).
inline MetricsLog train(Model& model, const EncodedDataset& data,
                        std::span<const Example> train_set, std::span<const Example> test_set,
                        const TrainConfig& config) {
  if (train_set.empty()) throw Error(ErrorClass::usage, "train: empty training set");
  if (config.batch_size == 0) throw Error(ErrorClass::usage, "train: batch size must be >= 1");
  MetricsLog log;
  AdamState adam(model.params, AdamConfig{config.lr});
  Rng shuffle_rng = Rng::derive(config.seed, 4);
  Rng dropout_rng = Rng::derive(config.seed, 5);
  std::vector<Example> order(train_set.begin(), train_set.end());
  std::size_t step = 0;

  auto log_test = [&](std::size_t epoch) {
    if (test_set.empty()) return;
    Evaluation e = evaluate(model, data, test_set);
    log.rows.push_back({epoch, step, Split::test, e.mse, e.rmse});
  };

  log_test(0);
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    if (config.shuffle) shuffle_rng.shuffle(std::span<Example>(order));
    for (std::size_t b = 0; b < order.size(); b += config.batch_size) {
      ++step;
      auto part = std::span<const Example>(order).subspan(
          b, std::min(config.batch_size, order.size() - b));
      model.params.zero_grads();
      Tensor loss = model_loss(model, make_batch(data, part), Mode::train, dropout_rng);
      if (!std::isfinite(loss.item())) throw NonFiniteLoss(epoch, step);
      backward(loss);
      adam_step(model.params, adam);
      log.rows.push_back({epoch, step, Split::train, loss.item(), std::nullopt});
    }
    log_test(epoch);
  }
  return log;
}

struct Recommendation {
  std::uint32_t movie_id = 0;
  std::uint32_t movie_index = 0;
  double score = 0.0;
};

/// Top-k unrated movies for one user by predicted rating; ties go to the
/// smaller movie id.
inline std::vector<Recommendation> recommend(const Model& model, const EncodedDataset& data,
                                             const std::unordered_set<std::uint32_t>& rated,
                                             std::uint32_t user_id, std::size_t k) {
  auto it = data.vocab.user_index.find(user_id);
  if (it == data.vocab.user_index.end())
    throw DataError(DataError::Kind::unknown_user, "unknown user id " + std::to_string(user_id));
  if (k == 0) throw Error(ErrorClass::usage, "recommend: k must be >= 1");
  NoGradGuard no_grad;
  Rng unused(0);
  Tensor user = user_feature(model, data.users.at(it->second));
  std::vector<EncodedMovie> candidates;
  for (const auto& mv : data.movies)
    if (!rated.contains(mv.movie_index)) candidates.push_back(mv);
  std::vector<Recommendation> out;
  const std::size_t chunk = 1024;
  for (std::size_t b = 0; b < candidates.size(); b += chunk) {
    auto part = std::span<const EncodedMovie>(candidates).subspan(
        b, std::min(chunk, candidates.size() - b));
    Tensor feats = movie_features(model, part, Mode::eval, unused);
    const std::size_t d = feats.cols();
    for (std::size_t r = 0; r < part.size(); ++r) {
      double s = 0.0;
      for (std::size_t j = 0; j < d; ++j) s += user[j] * feats[r * d + j];
      out.push_back({data.vocab.movie_ids[part[r].movie_index], part[r].movie_index, s});
    }
  }
  std::sort(out.begin(), out.end(), [](const Recommendation& a, const Recommendation& b) {
    return a.score != b.score ? a.score > b.score : a.movie_id < b.movie_id;
  });
  if (out.size() > k) out.resize(k);
  return out;
}

/// Movie indices each user rated in `examples`, by user index.
inline std::vector<std::unordered_set<std::uint32_t>> rated_movies(
    std::size_t num_users, std::span<const Example> examples) {
  std::vector<std::unordered_set<std::uint32_t>> out(num_users);
  for (const auto& e : examples) out.at(e.user).insert(e.movie);
  return out;
}

}  // namespace frec
