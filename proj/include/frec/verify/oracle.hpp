#pragma once

// Brute-force scalar references for the attention kernels. Everything here is
// written as explicit index loops over nested vectors and shares no code with
// the tensor library beyond reading input values.

#include <cmath>
#include <cstddef>
#include <vector>

#include "frec/tensor.hpp"

namespace frec::oracle {

using Matrix = std::vector<std::vector<double>>;

inline Matrix to_matrix(const Tensor& t) {
  Matrix m(t.rows(), std::vector<double>(t.cols()));
  for (std::size_t i = 0; i < t.rows(); ++i)
    for (std::size_t j = 0; j < t.cols(); ++j) m[i][j] = t.data()[i * t.cols() + j];
  return m;
}

struct Head {
  Matrix wq, wk, wv;
};

/// Row i of X times W, column c: sum_f X[i][f] * W[f][c].
inline double project(const Matrix& x, const Matrix& w, std::size_t i, std::size_t c) {
  double s = 0.0;
  for (std::size_t f = 0; f < w.size(); ++f) s += x[i][f] * w[f][c];
  return s;
}

/// One head; `rw`/`rh` may be empty for plain attention. Grid positions are
/// row-major with `width` columns.
inline Matrix head_output(const Matrix& x, const Head& h, std::size_t height, std::size_t width,
                          const Matrix* rw, const Matrix* rh) {
  const std::size_t n = x.size();
  const std::size_t dk = h.wq.front().size();
  Matrix out(n, std::vector<double>(dk, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    const long ix = static_cast<long>(i % width), iy = static_cast<long>(i / width);
    std::vector<double> logits(n);
    for (std::size_t j = 0; j < n; ++j) {
      const long jx = static_cast<long>(j % width), jy = static_cast<long>(j / width);
      double l = 0.0;
      for (std::size_t c = 0; c < dk; ++c) {
        double key = project(x, h.wk, j, c);
        if (rw) key += (*rw)[static_cast<std::size_t>(jx - ix + static_cast<long>(width) - 1)][c];
        if (rh) key += (*rh)[static_cast<std::size_t>(jy - iy + static_cast<long>(height) - 1)][c];
        l += project(x, h.wq, i, c) * key;
      }
      logits[j] = l / std::sqrt(static_cast<double>(dk));
    }
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) z += std::exp(logits[j]);
    for (std::size_t j = 0; j < n; ++j) {
      const double a = std::exp(logits[j]) / z;
      for (std::size_t c = 0; c < dk; ++c) out[i][c] += a * project(x, h.wv, j, c);
    }
  }
  return out;
}

/// Heads concatenated along features, then multiplied by W_O.
inline Matrix multi_head(const Matrix& x, const std::vector<Head>& heads, const Matrix& wo,
                         std::size_t height, std::size_t width,
                         const std::vector<Matrix>* rw = nullptr,
                         const std::vector<Matrix>* rh = nullptr) {
  const std::size_t n = x.size();
  std::vector<std::vector<double>> cat(n);
  for (std::size_t h = 0; h < heads.size(); ++h) {
    Matrix o = head_output(x, heads[h], height, width, rw ? &(*rw)[h] : nullptr,
                           rh ? &(*rh)[h] : nullptr);
    for (std::size_t i = 0; i < n; ++i) cat[i].insert(cat[i].end(), o[i].begin(), o[i].end());
  }
  const std::size_t fout = wo.front().size();
  Matrix out(n, std::vector<double>(fout, 0.0));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < fout; ++c)
      for (std::size_t k = 0; k < cat[i].size(); ++k) out[i][c] += cat[i][k] * wo[k][c];
  return out;
}

inline double max_abs_diff(const Matrix& a, const Tensor& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < a[i].size(); ++j)
      worst = std::max(worst, std::abs(a[i][j] - b.data()[i * a[i].size() + j]));
  return worst;
}

}  // namespace frec::oracle
