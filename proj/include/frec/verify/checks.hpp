#pragma once

// Verification suites: a finite-difference battery over every differentiable
// operation and the full model loss, and the attention property/oracle suite.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <map>
#include <numeric>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "frec/gradcheck.hpp"
#include "frec/ops.hpp"
#include "frec/relattn.hpp"
#include "frec/rng.hpp"
#include "frec/towers.hpp"
#include "frec/verify/oracle.hpp"

namespace frec::verify {

struct CheckOutcome {
  std::string name;
  double value = 0.0;
  double threshold = 0.0;
  bool at_most = true;  ///< pass when value <= threshold; otherwise value > threshold
  bool passed = false;
  std::string detail;
};

inline CheckOutcome make_outcome(std::string name, double value, double threshold, bool at_most,
                                 std::string detail = {}) {
  const bool ok = at_most ? value <= threshold : value > threshold;
  return {std::move(name), value, threshold, at_most, ok, std::move(detail)};
}

struct Report {
  std::vector<CheckOutcome> checks;

  bool all_passed() const {
    return std::all_of(checks.begin(), checks.end(), [](const CheckOutcome& c) { return c.passed; });
  }

  void append(const Report& other) {
    checks.insert(checks.end(), other.checks.begin(), other.checks.end());
  }

  /// One `key=value` line per check.
  void print(std::ostream& os) const {
    char buf[64];
    for (const auto& c : checks) {
      std::snprintf(buf, sizeof buf, "%.3e", c.value);
      os << "check=" << c.name << " status=" << (c.passed ? "pass" : "FAIL") << " value=" << buf;
      std::snprintf(buf, sizeof buf, "%.1e", c.threshold);
      os << " bound=" << (c.at_most ? "<=" : ">") << buf;
      if (!c.detail.empty()) os << " detail=\"" << c.detail << '"';
      os << '\n';
    }
  }
};

namespace detail {

inline Tensor random(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(shape_size(shape));
  for (double& x : v) x = rng.uniform(lo, hi);
  return Tensor(std::move(shape), std::move(v), true);
}

/// Entries with magnitude in [0.1, 1] and random sign, clear of relu's kink.
inline Tensor random_off_zero(Shape shape, Rng& rng) {
  Tensor t = random(std::move(shape), rng);
  for (double& x : t.data()) x = (x < 0 ? -1.0 : 1.0) * (0.1 + 0.9 * std::abs(x));
  return t;
}

/// Generic scalar probe: sum(y * weights) with fixed random weights.
inline Tensor probe(const Tensor& y, const Tensor& weights) { return sum(mul(y, weights)); }

inline Tensor weights_like(const Tensor& y, Rng& rng) {
  Tensor w = random(y.shape(), rng);
  w.set_requires_grad(false);
  return w;
}

struct GradCase {
  std::string name;
  std::vector<Tensor> inputs;
  std::function<Tensor()> f;
};

inline std::vector<GradCase> op_cases(std::uint64_t seed) {
  Rng rng = Rng::derive(seed, 200);
  std::vector<GradCase> cases;
  auto with_probe = [&](std::string name, std::vector<Tensor> inputs,
                        std::function<Tensor()> op) {
    Tensor w = weights_like(op(), rng);
    cases.push_back({std::move(name), std::move(inputs), [op, w] { return probe(op(), w); }});
  };

  {
    Tensor a = random({3, 4}, rng), b = random({4, 2}, rng);
    with_probe("matmul", {a, b}, [a, b] { return matmul(a, b); });
  }
  {
    Tensor a = random({3, 4}, rng);
    with_probe("transpose", {a}, [a] { return transpose(a); });
    with_probe("reshape", {a}, [a] { return reshape(a, {2, 6}); });
    with_probe("sum", {a}, [a] { return sum(a); });
    with_probe("scale", {a}, [a] { return scale(a, -1.7); });
    with_probe("slice_rows", {a}, [a] { return slice_rows(a, 1, 2); });
  }
  {
    Tensor a = random({3, 3}, rng), b = random({3, 3}, rng);
    with_probe("add", {a, b}, [a, b] { return add(a, b); });
    with_probe("sub", {a, b}, [a, b] { return sub(a, b); });
    with_probe("mul", {a, b}, [a, b] { return mul(a, b); });
    with_probe("rowwise_dot", {a, b}, [a, b] { return rowwise_dot(a, b); });
    with_probe("concat", {a, b}, [a, b] { return concat({a, b}); });
    with_probe("concat_rows", {a, b}, [a, b] { return concat_rows({a, b}); });
  }
  {
    Tensor x = random({4, 3}, rng), b = random({3}, rng);
    with_probe("add_bias", {x, b}, [x, b] { return add_bias(x, b); });
  }
  {
    Tensor x = random_off_zero({4, 5}, rng);
    with_probe("relu", {x}, [x] { return relu(x); });
    Tensor t = random({4, 5}, rng, -2.0, 2.0);
    with_probe("tanh", {t}, [t] { return tanh(t); });
  }
  {
    Tensor x = random({3, 4}, rng, -2.0, 2.0);
    Tensor target({12}, std::vector<double>(12));
    for (double& v : target.data()) v = rng.uniform();
    cases.push_back({"softmax_rows+mse", {x}, [x, target] {
                       return mse_loss(reshape(softmax_rows(x), {12}), target);
                     }});
  }
  {
    Tensor table = random({5, 3}, rng);
    std::vector<std::size_t> idx{4, 1, 1, 0, 4, 2};
    with_probe("embedding_lookup", {table}, [table, idx] { return embedding_lookup(table, idx); });
  }
  {
    Tensor x = random({6, 3}, rng);
    with_probe("segment_sum", {x}, [x] { return segment_sum(x, 3); });
  }
  {
    Tensor x = random({3, 5}, rng);
    std::vector<std::size_t> idx;
    for (int i = 0; i < 9; ++i) idx.push_back(rng.uniform_int(5));
    with_probe("gather_cols", {x}, [x, idx] { return gather_cols(x, idx, 3); });
  }
  {
    Tensor x = random({2 * 6, 3}, rng), k = random({4, 3, 3}, rng), b = random({4}, rng);
    with_probe("conv_text", {x, k, b}, [x, k, b] { return conv_text(x, 6, k, b); });
  }
  {
    Tensor x = random({2 * 5, 3}, rng);
    with_probe("max_over_time", {x}, [x] { return max_over_time(x, 5); });
  }
  {
    Tensor x = random({4, 6}, rng);
    const std::uint64_t mask_seed = rng.next();
    with_probe("dropout", {x}, [x, mask_seed] {
      Rng r(mask_seed);
      return dropout(x, 0.3, Mode::train, r);
    });
  }
  {
    Tensor p = random({7}, rng, 1.0, 5.0), t = random({7}, rng, 1.0, 5.0);
    t.set_requires_grad(false);
    cases.push_back({"mse_loss", {p}, [p, t] { return mse_loss(p, t); }});
  }
  {
    Tensor x = random({4, 3}, rng);
    auto params = attn::random_attention_params(3, 2, 2, 3, rng);
    auto head = params.heads[0];
    std::vector<Tensor> head_in{x, head.query, head.key, head.value};
    with_probe("attention_head", head_in, [x, head] { return attn::attention_head(x, head); });
    std::vector<Tensor> mha_in = params.tensors();
    mha_in.push_back(x);
    with_probe("mha", mha_in, [x, params] { return attn::mha(x, params); });
  }
  {
    Tensor x = random({4, 3}, rng);
    attn::FlatGrid grid{x, 2, 2};
    auto params = attn::random_attention_params(3, 2, 1, 3, rng);
    std::vector<attn::RelPosTables> tables{attn::random_tables(2, 2, 2, rng)};
    std::vector<Tensor> in = params.tensors();
    in.push_back(x);
    in.push_back(tables[0].width_table);
    in.push_back(tables[0].height_table);
    auto head = params.heads[0];
    with_probe("rel_logits", in, [grid, head, tables] {
      return attn::rel_logits(grid, head, tables[0]);
    });
    with_probe("rel_mha_2x2", in, [grid, params, tables] {
      return attn::rel_mha(grid, params, tables);
    });
  }
  {
    const std::size_t len = 6, d = 4;
    Tensor x = random({len, d}, rng);
    auto params = attn::random_attention_params(d, 2, 2, d, rng);
    std::vector<attn::RelPosTables> tables{attn::random_tables(1, len, 2, rng),
                                           attn::random_tables(1, len, 2, rng)};
    Tensor k = random({3, 3, d}, rng), b = random({3}, rng);
    std::vector<Tensor> in = params.tensors();
    // One-row height tables are inert on a 1 x L grid; see structurally_inert.
    for (const auto& t : tables) in.push_back(t.width_table);
    in.push_back(x);
    in.push_back(k);
    in.push_back(b);
    with_probe("title_encoder+cnn", in, [x, params, tables, k, b, len] {
      Tensor enc = attn::title_attention_encoder(x, params, tables);
      return max_over_time(conv_text(enc, len, k, b), len - 2);
    });
  }
  return cases;
}

inline Batch random_batch(const ModelDims& dims, std::size_t n, Rng& rng) {
  Batch b;
  for (std::size_t i = 0; i < n; ++i) {
    b.users.push_back({static_cast<std::uint32_t>(rng.uniform_int(dims.num_users)),
                       static_cast<std::uint32_t>(rng.uniform_int(2)),
                       static_cast<std::uint32_t>(rng.uniform_int(dims.num_ages)),
                       static_cast<std::uint32_t>(rng.uniform_int(dims.num_occupations))});
    EncodedMovie m;
    m.movie_index = static_cast<std::uint32_t>(rng.uniform_int(dims.num_movies));
    const std::size_t ng = 1 + rng.uniform_int(3);
    for (std::size_t g = 0; g < ng; ++g)
      m.genres[g] = static_cast<std::uint32_t>(1 + rng.uniform_int(dims.num_genres));
    const std::size_t nw = 1 + rng.uniform_int(title_len);
    for (std::size_t w = 0; w < nw; ++w)
      m.title[w] = static_cast<std::uint32_t>(1 + rng.uniform_int(dims.vocab_size));
    b.movies.push_back(m);
    b.ratings.push_back(static_cast<double>(1 + rng.uniform_int(5)));
  }
  return b;
}

/// Redraws parameters at a generic point for gradient checking. Init scale
/// embeddings (U(+-0.05)) make attention logits nearly constant, so query,
/// key and table gradients sit near 1e-8 where central differences are
/// rounding-limited.
inline void randomize_for_check(Model& m, Rng& rng) {
  auto ends_with = [](const std::string& s, std::string_view tail) {
    return s.size() >= tail.size() && s.compare(s.size() - tail.size(), tail.size(), tail) == 0;
  };
  for (auto& p : m.params.items()) {
    double limit = 0.0;
    if (ends_with(p.name, "_table") || ends_with(p.name, ".width")) {
      limit = 0.5;
    } else if (ends_with(p.name, ".b")) {
      limit = 0.1;
    } else if (p.name.starts_with("movie.attn.")) {
      limit = 1.0 / std::sqrt(static_cast<double>(p.value.dim(0)));
    }
    if (limit == 0.0) continue;
    for (double& v : p.value.data()) v = rng.uniform(-limit, limit);
    if (p.pad_row_frozen) ParameterSet::zero_pad_row(p);
  }
}

/// Parameters whose gradient is identically zero: a one-row height table on a
/// 1 x L title grid adds the same logit to every key and cancels in softmax.
inline bool structurally_inert(const Parameter& p) {
  return p.name.starts_with("movie.attn.table") && p.value.rows() == 1 &&
         p.name.ends_with(".height");
}

/// Small vocabulary, full-size layer widths.
inline ModelDims tiny_dims() { return {5, 4, 3, 6, 7, 3}; }

}  // namespace detail

struct GradSuiteOptions {
  std::uint64_t seed = Rng::default_seed;
  std::size_t seeds = 20;
  double eps = 1e-5;
  double tolerance = 1e-4;
  std::size_t model_coords_per_tensor = 6;
  double analytic_scale = 1.0;  ///< fault-injection hook, see GradCheckOptions
};

/// Worst relative error per case across `seeds` randomized instances.
inline Report gradient_suite(const GradSuiteOptions& opt = {}) {
  std::vector<std::string> order;
  std::map<std::string, GradCheckResult> worst;
  std::map<std::string, std::size_t> skipped, widened, checked;
  auto record = [&](const std::string& name, const GradCheckResult& r) {
    if (!worst.contains(name)) order.push_back(name);
    auto& w = worst[name];
    skipped[name] += r.skipped;
    widened[name] += r.widened;
    checked[name] += r.checked;
    if (r.max_rel_error >= w.max_rel_error) w = r;
  };
  for (std::size_t s = 0; s < opt.seeds; ++s) {
    const std::uint64_t seed = opt.seed + s;
    GradCheckOptions gopt;
    gopt.eps = opt.eps;
    gopt.seed = seed;
    gopt.analytic_scale = opt.analytic_scale;
    for (auto& c : detail::op_cases(seed)) record(c.name, grad_check(c.f, c.inputs, gopt));

    for (TitleEncoder enc : {TitleEncoder::cnn, TitleEncoder::attn_cnn}) {
      ModelConfig cfg;
      cfg.title_encoder = enc;
      Model model = init_params(cfg, detail::tiny_dims(), seed);
      Rng rng = Rng::derive(seed, 300);
      detail::randomize_for_check(model, rng);
      Batch batch = detail::random_batch(model.dims, 6, rng);
      const std::uint64_t dropout_seed = rng.next();
      {
        // Targets within half a star of the prediction. Large residuals
        // amplify forward rounding in the numeric derivative.
        NoGradGuard no_grad;
        Rng r(dropout_seed);
        Tensor pred = predict_batch(model, batch, Mode::train, r);
        for (std::size_t i = 0; i < batch.ratings.size(); ++i)
          batch.ratings[i] = pred[i] + rng.uniform(-0.5, 0.5);
      }
      std::vector<Tensor> inputs;
      for (const auto& p : model.params.items())
        if (!detail::structurally_inert(p)) inputs.push_back(p.value);
      GradCheckOptions mopt = gopt;
      mopt.max_coords_per_tensor = opt.model_coords_per_tensor;
      auto f = [&model, &batch, dropout_seed] {
        Rng r(dropout_seed);
        return model_loss(model, batch, Mode::train, r);
      };
      record(std::string("model_loss[") + to_string(enc) + "]", grad_check(f, inputs, mopt));
    }
  }
  Report report;
  for (const auto& name : order) {
    const auto& r = worst[name];
    std::string detail = "seeds=" + std::to_string(opt.seeds) + " checked=" +
                         std::to_string(checked[name]) + " widened=" +
                         std::to_string(widened[name]) + " skipped=" +
                         std::to_string(skipped[name]);
    if (!r.worst.empty()) detail += " worst=" + r.worst;
    report.checks.push_back(
        make_outcome("grad:" + name, r.max_rel_error, opt.tolerance, true, detail));
  }
  return report;
}

namespace detail {

inline Tensor permute_rows(const Tensor& x, const std::vector<std::size_t>& perm) {
  const std::size_t n = x.cols();
  std::vector<double> out(x.size());
  for (std::size_t k = 0; k < perm.size(); ++k)
    std::copy_n(x.data().begin() + perm[k] * n, n, out.begin() + k * n);
  return Tensor(x.shape(), std::move(out));
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
  return worst;
}

inline oracle::Head oracle_head(const attn::HeadProjections& h) {
  return {oracle::to_matrix(h.query), oracle::to_matrix(h.key), oracle::to_matrix(h.value)};
}

}  // namespace detail

struct AttentionSuiteOptions {
  std::uint64_t seed = Rng::default_seed;
  std::size_t max_rows = 6;          ///< equivariance is exhaustive over all n! orders, n <= max_rows
  std::size_t reduction_trials = 100;
  std::size_t oracle_trials = 10;    ///< per (H, W, N_h, d_k) combination
};

/// Permutation equivariance of plain attention, its loss under relative
/// tables, zero-table reduction, brute-force oracle agreement, softmax row
/// sums and offset-only dependence of the relative logits.
inline Report attention_suite(const AttentionSuiteOptions& opt = {}) {
  using namespace attn;
  Report report;
  Rng rng = Rng::derive(opt.seed, 400);

  {
    double worst = 0.0;
    std::size_t perms = 0;
    for (std::size_t n = 1; n <= opt.max_rows; ++n) {
      NoGradGuard ng;
      Tensor x = detail::random({n, 3}, rng);
      auto params = random_attention_params(3, 2, 2, 3, rng);
      Tensor base = mha(x, params);
      std::vector<std::size_t> perm(n);
      std::iota(perm.begin(), perm.end(), std::size_t{0});
      do {
        Tensor lhs = mha(detail::permute_rows(x, perm), params);
        worst = std::max(worst, detail::max_abs_diff(lhs, detail::permute_rows(base, perm)));
        ++perms;
      } while (std::next_permutation(perm.begin(), perm.end()));
    }
    report.checks.push_back(make_outcome("attn:permutation_equivariance", worst, 1e-10, true,
                                         "permutations=" + std::to_string(perms)));
  }
  {
    NoGradGuard ng;
    Tensor x = detail::random({4, 3}, rng);
    auto params = random_attention_params(3, 2, 1, 3, rng);
    std::vector<RelPosTables> tables{random_tables(2, 2, 2, rng)};
    Tensor base = rel_mha({x, 2, 2}, params, tables);
    double worst = 0.0;
    std::vector<std::size_t> perm{0, 1, 2, 3};
    do {
      Tensor lhs = rel_mha({detail::permute_rows(x, perm), 2, 2}, params, tables);
      worst = std::max(worst, detail::max_abs_diff(lhs, detail::permute_rows(base, perm)));
    } while (std::next_permutation(perm.begin(), perm.end()));
    report.checks.push_back(make_outcome("attn:relative_breaks_equivariance", worst, 1e-6, false,
                                         "grid=2x2 permutations=24"));
  }
  {
    NoGradGuard ng;
    double worst = 0.0;
    for (std::size_t t = 0; t < opt.reduction_trials; ++t) {
      const std::size_t h = 1 + rng.uniform_int(3), w = 1 + rng.uniform_int(3);
      const std::size_t heads = 1 + rng.uniform_int(2), dk = 1 + rng.uniform_int(3);
      const std::size_t fin = 1 + rng.uniform_int(4), fout = 1 + rng.uniform_int(4);
      Tensor x = detail::random({h * w, fin}, rng);
      auto params = random_attention_params(fin, dk, heads, fout, rng);
      std::vector<RelPosTables> tables(heads, zero_tables(h, w, dk));
      worst = std::max(worst, detail::max_abs_diff(rel_mha({x, h, w}, params, tables), mha(x, params)));
    }
    report.checks.push_back(make_outcome("attn:zero_table_reduction", worst, 1e-12, true,
                                         "instances=" + std::to_string(opt.reduction_trials)));
  }
  {
    NoGradGuard ng;
    double worst = 0.0, worst_plain = 0.0, worst_rowsum = 0.0;
    std::size_t runs = 0;
    for (std::size_t h = 1; h <= 3; ++h)
      for (std::size_t w = 1; w <= 3; ++w)
        for (std::size_t heads = 1; heads <= 2; ++heads)
          for (std::size_t dk = 1; dk <= 3; ++dk)
            for (std::size_t t = 0; t < opt.oracle_trials; ++t) {
              const std::size_t fin = 1 + rng.uniform_int(3), fout = 1 + rng.uniform_int(3);
              Tensor x = detail::random({h * w, fin}, rng);
              auto params = random_attention_params(fin, dk, heads, fout, rng, 2.0);
              std::vector<RelPosTables> tables;
              std::vector<oracle::Matrix> rw, rh;
              std::vector<oracle::Head> oheads;
              for (std::size_t k = 0; k < heads; ++k) {
                tables.push_back(random_tables(h, w, dk, rng, 1.0));
                rw.push_back(oracle::to_matrix(tables.back().width_table));
                rh.push_back(oracle::to_matrix(tables.back().height_table));
                oheads.push_back(detail::oracle_head(params.heads[k]));
                Tensor a = rel_attention_weights({x, h, w}, params.heads[k], tables.back());
                for (std::size_t i = 0; i < a.rows(); ++i) {
                  double s = 0.0;
                  for (std::size_t j = 0; j < a.cols(); ++j) s += a.at(i, j);
                  worst_rowsum = std::max(worst_rowsum, std::abs(s - 1.0));
                }
              }
              auto xm = oracle::to_matrix(x);
              auto wo = oracle::to_matrix(params.output);
              worst = std::max(worst, oracle::max_abs_diff(
                                          oracle::multi_head(xm, oheads, wo, h, w, &rw, &rh),
                                          rel_mha({x, h, w}, params, tables)));
              worst_plain = std::max(worst_plain,
                                     oracle::max_abs_diff(oracle::multi_head(xm, oheads, wo, h, w),
                                                          mha(x, params)));
              ++runs;
            }
    report.checks.push_back(make_outcome("attn:rel_mha_vs_oracle", worst, 1e-10, true,
                                         "instances=" + std::to_string(runs)));
    report.checks.push_back(make_outcome("attn:mha_vs_oracle", worst_plain, 1e-10, true,
                                         "instances=" + std::to_string(runs)));
    report.checks.push_back(make_outcome("attn:softmax_row_sums", worst_rowsum, 1e-12, true));
  }
  {
    // Identical rows give constant q and k, so logits depend on offsets only.
    NoGradGuard ng;
    const std::size_t h = 3, w = 3, n = 9;
    Tensor row = detail::random({1, 3}, rng);
    std::vector<Tensor> rows(n, row);
    Tensor x = concat_rows(rows);
    auto params = random_attention_params(3, 2, 1, 3, rng);
    FlatGrid grid{x, h, w};
    Tensor l = rel_logits(grid, params.heads[0], random_tables(h, w, 2, rng));
    double worst = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        for (std::size_t a = 0; a < n; ++a)
          for (std::size_t b = 0; b < n; ++b) {
            auto pi = grid.position(i), pj = grid.position(j);
            auto pa = grid.position(a), pb = grid.position(b);
            if (long(pj.x) - long(pi.x) == long(pb.x) - long(pa.x) &&
                long(pj.y) - long(pi.y) == long(pb.y) - long(pa.y))
              worst = std::max(worst, std::abs(l.at(i, j) - l.at(a, b)));
          }
    report.checks.push_back(make_outcome("attn:offset_only_logits", worst, 1e-12, true, "grid=3x3"));
  }
  return report;
}

}  // namespace frec::verify
