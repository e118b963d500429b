#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "frec/error.hpp"
#include "frec/params.hpp"

namespace frec {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// First/second moment estimates aligned with a ParameterSet's registration order.
struct AdamState {
  AdamConfig config;
  std::uint64_t step = 0;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;

  explicit AdamState(const ParameterSet& params, AdamConfig cfg = {}) : config(cfg) {
    for (const auto& p : params.items()) {
      m.emplace_back(p.value.size(), 0.0);
      v.emplace_back(p.value.size(), 0.0);
    }
  }
};

/// One bias-corrected Adam update. Frozen PAD rows have their gradient
/// cleared first, so their moments stay zero and the row never moves.
inline void adam_step(ParameterSet& params, AdamState& state) {
  if (state.m.size() != params.size()) throw ShapeError("adam_step: state/parameter mismatch");
  const AdamConfig& c = state.config;
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correct1 = 1.0 - std::pow(c.beta1, t);
  const double correct2 = 1.0 - std::pow(c.beta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    Parameter& p = params.items()[k];
    if (!p.value.has_grad()) {
      throw ShapeError("adam_step: parameter " + p.name + " has no gradient");
    }
    auto g = p.value.grad();
    if (p.pad_row_frozen) std::fill(g.begin(), g.begin() + p.value.cols(), 0.0);
    auto w = p.value.data();
    auto& m = state.m[k];
    auto& v = state.v[k];
    if (m.size() != w.size()) throw ShapeError("adam_step: moment shape mismatch for " + p.name);
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g[i];
      v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g[i] * g[i];
      const double mhat = m[i] / correct1;
      const double vhat = v[i] / correct2;
      w[i] -= c.lr * mhat / (std::sqrt(vhat) + c.epsilon);
    }
  }
}

}  // namespace frec
