#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "frec/rng.hpp"
#include "frec/tensor.hpp"

namespace frec {

struct GradCheckOptions {
  double eps = 1e-5;
  /// Coordinates examined per input tensor; 0 checks every coordinate.
  /// Larger tensors get a seeded random subset.
  std::size_t max_coords_per_tensor = 0;
  std::uint64_t seed = Rng::default_seed;
  /// Multiplies the analytic gradient before comparison. Fault-injection hook
  /// for exercising the failure path; leave at 1 otherwise.
  double analytic_scale = 1.0;
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  /// Coordinates where differences at eps and eps/2 are inconsistent with a
  /// smooth function, i.e. a kink or tie lies within the step. They are
  /// excluded from the maximum.
  std::size_t skipped = 0;
  /// Coordinates whose estimate at eps was rounding-limited and was replaced
  /// by a Richardson estimate from steps 100 eps and 50 eps.
  std::size_t widened = 0;
  std::string worst;  ///< "input#coord analytic numeric" of the worst coordinate
};

/// Compares backward() against central differences of the scalar `f` with
/// respect to every tensor in `inputs`. Relative error per coordinate is
/// |a - n| / max(|a|, |n|, 1e-8).
///
/// Rounding in f limits a central difference to about ulp(f) / eps absolute.
/// When the estimates at eps and eps/2 disagree by more than 1e-5 relative,
/// the coordinate is re-estimated from 100x wider steps, which carry 100x
/// less rounding error.
inline GradCheckResult grad_check(const std::function<Tensor()>& f, std::span<Tensor> inputs,
                                  const GradCheckOptions& opt = {}) {
  for (auto& x : inputs) x.zero_grad();
  {
    Tensor loss = f();
    backward(loss);
  }
  std::vector<std::vector<double>> analytic;
  for (auto& x : inputs) {
    auto g = x.grad();
    analytic.emplace_back(g.begin(), g.end());
    for (double& v : analytic.back()) v *= opt.analytic_scale;
  }

  NoGradGuard no_grad;
  Rng rng = Rng::derive(opt.seed, 0x6772);
  GradCheckResult result;
  const double eps = opt.eps;
  for (std::size_t t = 0; t < inputs.size(); ++t) {
    auto values = inputs[t].data();
    std::vector<std::size_t> coords(values.size());
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    if (opt.max_coords_per_tensor != 0 && coords.size() > opt.max_coords_per_tensor) {
      rng.shuffle(std::span<std::size_t>(coords));
      coords.resize(opt.max_coords_per_tensor);
      std::sort(coords.begin(), coords.end());
    }
    for (std::size_t i : coords) {
      const double orig = values[i];
      auto at = [&](double h) {
        values[i] = orig + h;
        const double v = f().item();
        values[i] = orig;
        return v;
      };
      const double f0 = at(0.0);
      struct Estimate {
        double numeric, half;
        bool smooth;
      };
      auto estimate = [&](double h) {
        const double fp = at(h), fm = at(-h), hp = at(0.5 * h), hm = at(-0.5 * h);
        Estimate e{(fp - fm) / (2.0 * h), (hp - hm) / h, true};
        // Smooth f: both central differences agree to O(h^2) and the gap
        // between one-sided differences halves with the step.
        const double gap = (fp - 2.0 * f0 + fm) / h;
        const double half_gap = (hp - 2.0 * f0 + hm) / (0.5 * h);
        const double mismatch = std::abs(e.numeric - e.half) + std::abs(gap - 2.0 * half_gap);
        const double limit = 1e-6 * std::max(std::abs(e.numeric), std::abs(e.half)) +
                             1e-9 * std::max(1.0, std::abs(f0));
        e.smooth = mismatch <= limit;
        return e;
      };
      Estimate e = estimate(eps);
      if (!e.smooth) {
        ++result.skipped;
        continue;
      }
      double numeric = e.numeric;
      const double spread = std::abs(e.numeric - e.half);
      if (spread > 1e-5 * std::max({std::abs(e.numeric), std::abs(e.half), 1e-8})) {
        Estimate w = estimate(100.0 * eps);
        if (!w.smooth) {
          ++result.skipped;
          continue;
        }
        numeric = (4.0 * w.half - w.numeric) / 3.0;
        ++result.widened;
      }
      const double a = analytic[t][i];
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
      const double err = std::abs(a - numeric) / denom;
      ++result.checked;
      if (err >= result.max_rel_error) {
        result.max_rel_error = err;
        char buf[96];
        std::snprintf(buf, sizeof buf, "%zu#%zu analytic=%.6e numeric=%.6e", t, i, a, numeric);
        result.worst = buf;
      }
    }
  }
  return result;
}

/// Single-input convenience form returning the worst relative error.
inline double grad_check(const std::function<Tensor()>& f, Tensor& x, double eps = 1e-5) {
  GradCheckOptions opt;
  opt.eps = eps;
  return grad_check(f, std::span<Tensor>(&x, 1), opt).max_rel_error;
}

}  // namespace frec
