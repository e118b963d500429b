#pragma once

// `frec` command-line surface. Exit codes: 0 success, 1 usage error,
// 2 data error (parse failures, bad checkpoints, unknown ids), 3 numeric
// failure (non-finite loss, failed verification checks).

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

#include "CLI11.hpp"
#include "frec/checkpoint.hpp"
#include "frec/error.hpp"
#include "frec/ingest.hpp"
#include "frec/metadata.hpp"
#include "frec/towers.hpp"
#include "frec/trainer.hpp"
#include "frec/verify/checks.hpp"

namespace frec::cli {

enum ExitCode : int { ok = 0, usage_error = 1, data_error = 2, numeric_failure = 3 };

inline std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

namespace detail {

struct PreparedData {
  RawMovieLens raw;
  EncodedDataset data;
};

inline PreparedData load_and_encode(const std::filesystem::path& dir) {
  PreparedData p;
  p.raw = read_movielens(dir);
  Vocabularies vocab = build_vocabularies(p.raw.movies, p.raw.users);
  p.data = encode_dataset(p.raw.users, p.raw.movies, p.raw.ratings, std::move(vocab));
  return p;
}

/// Train/test examples as reproduced from the stored training settings.
inline std::pair<std::vector<Example>, std::vector<Example>> make_split(
    const std::vector<Example>& all, std::size_t max_ratings, double test_fraction,
    std::uint64_t seed) {
  auto pool = max_ratings == 0 ? all : subsample(all, max_ratings, seed);
  return split_ratings(pool, test_fraction, seed);
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError(DataError::Kind::io, "cannot write " + path.string());
  out << text;
  if (!out) throw DataError(DataError::Kind::io, "failed writing " + path.string());
}

}  // namespace detail

struct PrepareArgs {
  std::string data_dir;
  std::string out;
};

inline int cmd_prepare(const PrepareArgs& a, std::ostream& out) {
  auto p = detail::load_and_encode(a.data_dir);
  const auto& v = p.data.vocab;
  detail::write_text(a.out, metadata_json(v, p.raw.ratings.size()).dump(2) + "\n");
  out << "Parsed " << v.num_users() << " users, " << v.num_movies() << " movies, "
      << p.raw.ratings.size() << " ratings\n";
  out << "users=" << v.num_users() << "\nmovies=" << v.num_movies()
      << "\nratings=" << p.raw.ratings.size() << "\ngenres=" << v.num_genres()
      << "\nwords=" << v.vocab_size() << "\nages=" << v.num_ages()
      << "\noccupations=" << v.num_occupations() << "\n";
  return ok;
}

struct TrainArgs {
  std::string data_dir;
  std::string out_model;
  std::string metrics;
  std::uint64_t seed = Rng::default_seed;
  std::size_t epochs = 10;
  std::size_t batch_size = 256;
  double lr = 1e-3;
  std::string title_encoder = "cnn";
  std::size_t max_ratings = 0;
  double test_fraction = 0.2;
};

inline int cmd_train(const TrainArgs& a, std::ostream& out) {
  ModelConfig mcfg;
  mcfg.title_encoder = parse_title_encoder(a.title_encoder);
  TrainConfig tcfg;
  tcfg.epochs = a.epochs;
  tcfg.batch_size = a.batch_size;
  tcfg.lr = a.lr;
  tcfg.seed = a.seed;
  tcfg.test_fraction = a.test_fraction;

  auto p = detail::load_and_encode(a.data_dir);
  auto [train_set, test_set] = detail::make_split(p.data.ratings, a.max_ratings, a.test_fraction, a.seed);
  if (train_set.empty()) throw DataError(DataError::Kind::malformed_line, "no training ratings");
  out << "train_examples=" << train_set.size() << "\ntest_examples=" << test_set.size() << "\n";

  Model model = init_params(mcfg, p.data.vocab, a.seed);
  MetricsLog log = train(model, p.data, train_set, test_set, tcfg);

  std::ostringstream csv;
  log.write_csv(csv);
  detail::write_text(a.metrics, csv.str());

  json rated = json::array();
  for (const auto& s : rated_movies(p.data.vocab.num_users(), train_set)) {
    std::vector<std::uint32_t> ids(s.begin(), s.end());
    std::sort(ids.begin(), ids.end());
    rated.push_back(ids);
  }
  json extra{{"train",
              {{"seed", a.seed},
               {"epochs", a.epochs},
               {"batch_size", a.batch_size},
               {"lr", a.lr},
               {"max_ratings", a.max_ratings},
               {"test_fraction", a.test_fraction}}},
             {"catalogue", catalogue_to_json(p.data)},
             {"rated", rated}};
  save_checkpoint(model, a.out_model, extra);

  // Report the checkpointed (binary32) model so `evaluate` reproduces it.
  round_to_f32(model);
  if (!test_set.empty()) {
    Evaluation e = evaluate(model, p.data, test_set);
    out << "final_test_mse=" << fmt_double(e.mse) << "\nfinal_test_rmse=" << fmt_double(e.rmse)
        << "\nfinal_test_rmse_clamped=" << fmt_double(e.rmse_clamped) << "\n";
  }
  return ok;
}

struct EvaluateArgs {
  std::string model;
  std::string data_dir;
};

inline int cmd_evaluate(const EvaluateArgs& a, std::ostream& out) {
  Checkpoint ck = load_checkpoint(a.model);
  json settings;
  EncodedDataset stored;
  try {
    settings = ck.extra.at("train");
    stored = catalogue_from_json(ck.extra.at("catalogue"));
  } catch (const json::exception& e) {
    throw DataError(DataError::Kind::malformed_line,
                    std::string("checkpoint lacks training metadata: ") + e.what());
  }
  RawMovieLens raw = read_movielens(a.data_dir);
  stored.ratings = resolve_ratings(raw.ratings, stored.vocab);
  auto [train_set, test_set] = detail::make_split(
      stored.ratings, settings.at("max_ratings").get<std::size_t>(),
      settings.at("test_fraction").get<double>(), settings.at("seed").get<std::uint64_t>());
  const bool on_test = !test_set.empty();
  const auto& examples = on_test ? test_set : train_set;
  Evaluation e = evaluate(ck.model, stored, examples);
  out << "split=" << (on_test ? "test" : "train") << "\nexamples=" << examples.size()
      << "\nmse=" << fmt_double(e.mse) << "\nrmse=" << fmt_double(e.rmse)
      << "\nrmse_clamped=" << fmt_double(e.rmse_clamped) << "\n";
  return ok;
}

struct RecommendArgs {
  std::string model;
  std::uint32_t user_id = 0;
  std::size_t top_k = 10;
};

inline int cmd_recommend(const RecommendArgs& a, std::ostream& out) {
  Checkpoint ck = load_checkpoint(a.model);
  EncodedDataset catalogue;
  std::unordered_set<std::uint32_t> rated;
  try {
    catalogue = catalogue_from_json(ck.extra.at("catalogue"));
    auto it = catalogue.vocab.user_index.find(a.user_id);
    if (it != catalogue.vocab.user_index.end())
      for (auto m : ck.extra.at("rated").at(it->second)) rated.insert(m.get<std::uint32_t>());
  } catch (const json::exception& e) {
    throw DataError(DataError::Kind::malformed_line,
                    std::string("checkpoint lacks catalogue metadata: ") + e.what());
  }
  auto recs = recommend(ck.model, catalogue, rated, a.user_id, a.top_k);
  char buf[32];
  for (std::size_t r = 0; r < recs.size(); ++r) {
    std::snprintf(buf, sizeof buf, "%.4f", recs[r].score);
    out << (r + 1) << ' ' << recs[r].movie_id << ' ' << buf << ' '
        << catalogue.titles.at(recs[r].movie_index) << '\n';
  }
  return ok;
}

struct CheckArgs {
  std::string suite = "all";
  std::uint64_t seed = Rng::default_seed;
  std::size_t seeds = 20;
  bool inject_fault = false;
};

inline int cmd_check(const CheckArgs& a, std::ostream& out) {
  verify::Report report;
  if (a.suite == "gradcheck" || a.suite == "all") {
    verify::GradSuiteOptions opt;
    opt.seed = a.seed;
    opt.seeds = a.seeds;
    if (a.inject_fault) opt.analytic_scale = 1.01;
    report.append(verify::gradient_suite(opt));
  }
  if (a.suite == "attention" || a.suite == "all") {
    verify::AttentionSuiteOptions opt;
    opt.seed = a.seed;
    report.append(verify::attention_suite(opt));
  }
  report.print(out);
  const bool pass = report.all_passed();
  out << "result=" << (pass ? "pass" : "fail") << "\n";
  return pass ? ok : numeric_failure;
}

/// Runs one invocation; `args` excludes the program name.
inline int run(std::vector<std::string> args, std::ostream& out = std::cout,
               std::ostream& err = std::cerr) {
  CLI::App app{"Neural movie recommender: MovieLens ingestion, dual-tower training, verification",
               "frec"};
  app.require_subcommand(1);

  PrepareArgs prep;
  auto* prepare = app.add_subcommand("prepare", "Parse the .dat files and write vocabulary metadata");
  prepare->add_option("--data-dir", prep.data_dir, "Directory with users.dat, movies.dat, ratings.dat")->required();
  prepare->add_option("--out", prep.out, "Metadata JSON output path")->required();

  TrainArgs tr;
  auto* train_cmd = app.add_subcommand("train", "Train the model; write checkpoint and metrics CSV");
  train_cmd->add_option("--data-dir", tr.data_dir)->required();
  train_cmd->add_option("--out-model", tr.out_model)->required();
  train_cmd->add_option("--metrics", tr.metrics, "Metrics CSV output path")->required();
  train_cmd->add_option("--seed", tr.seed)->capture_default_str();
  train_cmd->add_option("--epochs", tr.epochs)->capture_default_str();
  train_cmd->add_option("--batch-size", tr.batch_size)->capture_default_str()->check(CLI::PositiveNumber);
  train_cmd->add_option("--lr", tr.lr)->capture_default_str()->check(CLI::NonNegativeNumber);
  train_cmd->add_option("--title-encoder", tr.title_encoder)
      ->capture_default_str()
      ->check(CLI::IsMember({"cnn", "attn-cnn"}));
  train_cmd->add_option("--max-ratings", tr.max_ratings, "Seeded subsample size (0 = all ratings)")
      ->capture_default_str();
  train_cmd->add_option("--test-fraction", tr.test_fraction)
      ->capture_default_str()
      ->check(CLI::Range(0.0, 0.999999));

  EvaluateArgs ev;
  auto* eval_cmd = app.add_subcommand("evaluate", "Report MSE/RMSE of a checkpoint on its test split");
  eval_cmd->add_option("--model", ev.model)->required();
  eval_cmd->add_option("--data-dir", ev.data_dir)->required();

  RecommendArgs rec;
  auto* rec_cmd = app.add_subcommand("recommend", "Top-k unrated movies for a user");
  rec_cmd->add_option("--model", rec.model)->required();
  rec_cmd->add_option("--user-id", rec.user_id)->required();
  rec_cmd->add_option("--top-k", rec.top_k)->capture_default_str()->check(CLI::PositiveNumber);

  CheckArgs chk;
  auto* check_cmd = app.add_subcommand("check", "Run the gradient and attention verification suites");
  check_cmd->add_option("--suite", chk.suite)
      ->capture_default_str()
      ->check(CLI::IsMember({"gradcheck", "attention", "all"}));
  check_cmd->add_option("--seed", chk.seed)->capture_default_str();
  check_cmd->add_option("--seeds", chk.seeds, "Randomized instances in the gradient battery")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  check_cmd->add_flag("--inject-fault", chk.inject_fault, "Perturb analytic gradients (self-test)")
      ->group("");

  std::reverse(args.begin(), args.end());
  try {
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? ok : usage_error;
  }

  try {
    if (*prepare) return cmd_prepare(prep, out);
    if (*train_cmd) return cmd_train(tr, out);
    if (*eval_cmd) return cmd_evaluate(ev, out);
    if (*rec_cmd) return cmd_recommend(rec, out);
    if (*check_cmd) return cmd_check(chk, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    switch (e.error_class()) {
      case ErrorClass::usage:
        return usage_error;
      case ErrorClass::data:
        return data_error;
      case ErrorClass::numeric:
        return numeric_failure;
    }
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return data_error;
  } catch (const json::exception& e) {
    err << "error: malformed metadata: " << e.what() << "\n";
    return data_error;
  }
  return usage_error;
}

}  // namespace frec::cli
