#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "frec/adam.hpp"
#include "frec/gradcheck.hpp"
#include "frec/ops.hpp"
#include "frec/params.hpp"
#include "frec/relattn.hpp"

namespace frec {
namespace {

Tensor random_tensor(Shape shape, Rng& rng) {
  std::vector<double> v(shape_size(shape));
  for (double& x : v) x = rng.uniform(-1.0, 1.0);
  return Tensor(std::move(shape), std::move(v), true);
}

TEST(Backward, ProductOfScalars) {
  Tensor x = Tensor::scalar(3.0, true), y = Tensor::scalar(-2.5, true);
  Tensor loss = mul(x, y);
  backward(loss);
  EXPECT_EQ(x.grad()[0], -2.5);
  EXPECT_EQ(y.grad()[0], 3.0);
}

TEST(Backward, NonScalarLossThrows) {
  Tensor x = Tensor::zeros({2}, true);
  Tensor y = scale(x, 2.0);
  EXPECT_THROW(backward(y), ShapeError);
}

TEST(Backward, UnusedParameterGetsZeroGrad) {
  Tensor x = Tensor::scalar(1.0, true), unused = Tensor::zeros({3}, true);
  Tensor loss = tanh(x);
  backward(loss);
  for (double g : unused.grad()) EXPECT_EQ(g, 0.0);
}

TEST(Backward, TwoPassesAccumulateUntilZeroed) {
  Tensor x = Tensor::scalar(2.0, true);
  for (int pass = 0; pass < 2; ++pass) {
    Tensor loss = mul(x, x);
    backward(loss);
  }
  EXPECT_EQ(x.grad()[0], 8.0);
  x.zero_grad();
  EXPECT_EQ(x.grad()[0], 0.0);
  Tensor loss = mul(x, x);
  backward(loss);
  EXPECT_EQ(x.grad()[0], 4.0);
}

TEST(Backward, SharedSubexpressionSumsBothPaths) {
  Tensor x = Tensor::scalar(0.5, true);
  Tensor t = tanh(x);
  Tensor loss = add(t, mul(t, t));
  backward(loss);
  const double th = std::tanh(0.5);
  EXPECT_NEAR(x.grad()[0], (1.0 + 2.0 * th) * (1.0 - th * th), 1e-15);
}

TEST(Backward, TopologicalOrderPutsInputsFirst) {
  Tensor a = Tensor::scalar(1.0, true);
  Tensor b = tanh(a);
  Tensor c = add(b, a);
  Tensor d = mul(c, b);
  auto order = topological_order(d.node());
  auto pos = [&](const Tensor& t) {
    return std::find(order.begin(), order.end(), &t.node()) - order.begin();
  };
  EXPECT_LT(pos(a), pos(b));
  EXPECT_LT(pos(b), pos(c));
  EXPECT_LT(pos(c), pos(d));
}

TEST(Backward, NoGradGuardRecordsNothing) {
  Tensor x = Tensor::scalar(1.0, true);
  NoGradGuard guard;
  Tensor y = tanh(x);
  EXPECT_FALSE(y.requires_grad());
}

TEST(Determinism, SameSeedSameValuesAndGradients) {
  auto run = [] {
    Rng rng(77);
    Tensor a = random_tensor({3, 4}, rng), b = random_tensor({4, 2}, rng);
    Tensor loss = sum(tanh(matmul(a, b)));
    backward(loss);
    std::vector<double> out(a.grad().begin(), a.grad().end());
    out.push_back(loss.item());
    return out;
  };
  EXPECT_EQ(run(), run());
}

// -- grad_check --------------------------------------------------------------

TEST(GradCheck, Quadratic) {
  Tensor x = Tensor::scalar(3.0, true);
  double err = grad_check([&] { return mul(x, x); }, x, 1e-5);
  EXPECT_LE(err, 1e-8);
}

TEST(GradCheck, SoftmaxMsePipeline) {
  Rng rng(21);
  Tensor x = random_tensor({3, 4}, rng);
  Tensor target({12}, std::vector<double>(12, 0.25));
  double err = grad_check([&] { return mse_loss(reshape(softmax_rows(x), {12}), target); }, x, 1e-5);
  EXPECT_LE(err, 1e-6);
}

TEST(GradCheck, RelativeMultiHeadOnTwoByTwoGrid) {
  Rng rng(22);
  attn::FlatGrid grid{random_tensor({4, 3}, rng), 2, 2};
  attn::AttentionParams params = attn::random_attention_params(3, 2, 2, 3, rng, 1.0);
  std::vector<attn::RelPosTables> tables{attn::random_tables(2, 2, 2, rng), attn::random_tables(2, 2, 2, rng)};
  std::vector<Tensor> inputs{grid.x};
  for (const Tensor& t : params.tensors()) inputs.push_back(t);
  for (const auto& tb : tables) {
    inputs.push_back(tb.width_table);
    inputs.push_back(tb.height_table);
  }
  for (Tensor& t : inputs) t.set_requires_grad(true);
  auto f = [&] { return sum(mul(attn::rel_mha(grid, params, tables), attn::rel_mha(grid, params, tables))); };
  GradCheckResult r = grad_check(f, inputs);
  EXPECT_LE(r.max_rel_error, 1e-5) << r.worst;
  EXPECT_GT(r.checked, 0u);
}

TEST(GradCheck, DetectsScaledGradient) {
  Rng rng(23);
  Tensor x = random_tensor({2, 3}, rng);
  std::vector<Tensor> in{x};
  GradCheckOptions opt;
  opt.analytic_scale = 1.01;
  GradCheckResult r = grad_check([&] { return sum(mul(tanh(x), x)); }, in, opt);
  EXPECT_GT(r.max_rel_error, 5e-3);
}

TEST(GradCheck, SkipsReluKink) {
  Tensor x({2}, {0.0, 1.0}, true);
  std::vector<Tensor> in{x};
  GradCheckResult r = grad_check([&] { return sum(relu(x)); }, in);
  EXPECT_EQ(r.skipped, 1u);
  EXPECT_EQ(r.checked, 1u);
  EXPECT_LE(r.max_rel_error, 1e-8);
}

TEST(GradCheck, WidensRoundingLimitedCoordinates) {
  // Gradient ~1e-6 on top of an O(1) value: the difference quotient at 1e-5
  // carries ~2e-11 of rounding error.
  Tensor x({3}, {0.3, -0.7, 0.9}, true);
  Tensor offset({3}, {1.0, 1.0, 1.0});
  std::vector<Tensor> in{x};
  auto f = [&] { return sum(add(offset, scale(mul(x, x), 1e-6))); };
  GradCheckResult r = grad_check(f, in);
  EXPECT_GT(r.widened, 0u);
  EXPECT_EQ(r.checked, 3u);
  EXPECT_LE(r.max_rel_error, 1e-4) << r.worst;

  GradCheckOptions bad;
  bad.analytic_scale = 1.001;
  EXPECT_GT(grad_check(f, in, bad).max_rel_error, 5e-4);
}

TEST(GradCheck, SubsamplesLargeTensors) {
  Rng rng(24);
  Tensor x = random_tensor({10, 10}, rng);
  std::vector<Tensor> in{x};
  GradCheckOptions opt;
  opt.max_coords_per_tensor = 7;
  GradCheckResult r = grad_check([&] { return sum(tanh(x)); }, in, opt);
  EXPECT_EQ(r.checked + r.skipped, 7u);
}

// -- adam --------------------------------------------------------------------

TEST(Adam, ZeroGradientLeavesParametersUnchanged) {
  ParameterSet ps;
  ps.add("w", Tensor({3}, {1.0, -2.0, 0.5}));
  ps.zero_grads();
  AdamState st(ps);
  adam_step(ps, st);
  EXPECT_EQ(ps.at("w")[0], 1.0);
  EXPECT_EQ(ps.at("w")[1], -2.0);
  EXPECT_EQ(ps.at("w")[2], 0.5);
  EXPECT_EQ(st.step, 1u);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  ParameterSet ps;
  ps.add("w", Tensor::scalar(1.0));
  ps.at("w").grad()[0] = 1.0;
  AdamState st(ps);
  adam_step(ps, st);
  EXPECT_NEAR(ps.at("w")[0], 1.0 - 1e-3, 1e-10);
}

TEST(Adam, MissingGradientThrows) {
  ParameterSet ps;
  ps.add("w", Tensor::scalar(1.0));
  AdamState st(ps);
  EXPECT_THROW(adam_step(ps, st), ShapeError);
}

double adam_on_quadratic(double lr, int steps) {
  ParameterSet ps;
  Tensor& x = ps.add("x", Tensor::scalar(0.0));
  AdamConfig cfg;
  cfg.lr = lr;
  AdamState st(ps, cfg);
  const Tensor two = Tensor::scalar(2.0);
  for (int i = 0; i < steps; ++i) {
    ps.zero_grads();
    Tensor d = sub(x, two);
    Tensor loss = mul(d, d);
    backward(loss);
    adam_step(ps, st);
  }
  return x[0];
}

TEST(Adam, ConvergesOnShiftedQuadratic) {
  EXPECT_LT(std::abs(adam_on_quadratic(0.05, 200) - 2.0), 0.05);
}

TEST(Adam, DefaultRateStepIsBoundedByLearningRate) {
  // Each bias-corrected step moves at most about lr when the gradient keeps its sign.
  const double x = adam_on_quadratic(1e-3, 200);
  EXPECT_GT(x, 0.0);
  EXPECT_LE(x, 200 * 1e-3 * (1.0 + 1e-6));
}

TEST(Adam, FrozenPadRowNeverMoves) {
  ParameterSet ps;
  Tensor& table = ps.add("emb", Tensor({3, 2}, {9, 9, 1, 2, 3, 4}), true);
  EXPECT_EQ(table[0], 0.0);
  EXPECT_EQ(table[1], 0.0);
  AdamState st(ps);
  for (int i = 0; i < 5; ++i) {
    ps.zero_grads();
    for (double& g : table.grad()) g = 1.0;
    adam_step(ps, st);
  }
  EXPECT_EQ(table[0], 0.0);
  EXPECT_EQ(table[1], 0.0);
  EXPECT_LT(table[2], 1.0);
}

TEST(Adam, IdenticalTrajectoriesForIdenticalInputs) {
  EXPECT_EQ(adam_on_quadratic(0.01, 50), adam_on_quadratic(0.01, 50));
}

}  // namespace
}  // namespace frec
