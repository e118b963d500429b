#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "frec/error.hpp"
#include "frec/rng.hpp"
#include "frec/tensor.hpp"

namespace frec {

namespace detail {

inline void require_rank(const Tensor& t, std::size_t rank, const char* op) {
  if (t.rank() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                     shape_str(t.shape()));
  }
}

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
}

inline Node& parent(Node& n, std::size_t i) { return *n.parents[i]; }

}  // namespace detail

// ---------------------------------------------------------------------------
// Linear algebra
// ---------------------------------------------------------------------------

/// [m,k] x [k,n] -> [m,n].
inline Tensor matmul(const Tensor& a, const Tensor& b) {
  detail::require_rank(a, 2, "matmul");
  detail::require_rank(b, 2, "matmul");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw ShapeError("matmul: inner dimensions differ " + shape_str(a.shape()) + " x " +
                     shape_str(b.shape()));
  }
  std::vector<double> out(m * n, 0.0);
  auto A = a.data();
  auto B = b.data();
  for (std::size_t i = 0; i < m; ++i) {
    double* row = out.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double s = A[i * k + p];
      if (s == 0.0) continue;
      const double* brow = B.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) row[j] += s * brow[j];
    }
  }
  return Tensor::from_op("matmul", {m, n}, std::move(out), {a, b}, [m, k, n](Node& self) {
    Node& na = detail::parent(self, 0);
    Node& nb = detail::parent(self, 1);
    const double* g = self.grad.data();
    if (na.requires_grad) {
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
          const double* brow = nb.value.data() + p * n;
          const double* grow = g + i * n;
          double acc = 0.0;
          for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
          na.grad[i * k + p] += acc;
        }
      }
    }
    if (nb.requires_grad) {
      for (std::size_t i = 0; i < m; ++i) {
        const double* grow = g + i * n;
        for (std::size_t p = 0; p < k; ++p) {
          const double s = na.value[i * k + p];
          if (s == 0.0) continue;
          double* gb = nb.grad.data() + p * n;
          for (std::size_t j = 0; j < n; ++j) gb[j] += s * grow[j];
        }
      }
    }
  });
}

inline Tensor transpose(const Tensor& a) {
  detail::require_rank(a, 2, "transpose");
  const std::size_t m = a.dim(0), n = a.dim(1);
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = a[i * n + j];
  return Tensor::from_op("transpose", {n, m}, std::move(out), {a}, [m, n](Node& self) {
    Node& na = detail::parent(self, 0);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) na.grad[i * n + j] += self.grad[j * m + i];
  });
}

/// Same data under a new shape with equal element count.
inline Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_size(shape) != a.size()) {
    throw ShapeError("reshape: cannot view " + shape_str(a.shape()) + " as " + shape_str(shape));
  }
  std::vector<double> out(a.data().begin(), a.data().end());
  return Tensor::from_op("reshape", std::move(shape), std::move(out), {a}, [](Node& self) {
    Node& na = detail::parent(self, 0);
    for (std::size_t i = 0; i < self.grad.size(); ++i) na.grad[i] += self.grad[i];
  });
}

// ---------------------------------------------------------------------------
// Elementwise
// ---------------------------------------------------------------------------

inline Tensor add(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "add");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
  return Tensor::from_op("add", a.shape(), std::move(out), {a, b}, [](Node& self) {
    for (std::size_t k = 0; k < 2; ++k) {
      Node& p = detail::parent(self, k);
      if (!p.requires_grad) continue;
      for (std::size_t i = 0; i < self.grad.size(); ++i) p.grad[i] += self.grad[i];
    }
  });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "sub");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] - b[i];
  return Tensor::from_op("sub", a.shape(), std::move(out), {a, b}, [](Node& self) {
    Node& pa = detail::parent(self, 0);
    Node& pb = detail::parent(self, 1);
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      if (pa.requires_grad) pa.grad[i] += self.grad[i];
      if (pb.requires_grad) pb.grad[i] -= self.grad[i];
    }
  });
}

/// Hadamard product.
inline Tensor mul(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "mul");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
  return Tensor::from_op("mul", a.shape(), std::move(out), {a, b}, [](Node& self) {
    Node& pa = detail::parent(self, 0);
    Node& pb = detail::parent(self, 1);
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      if (pa.requires_grad) pa.grad[i] += self.grad[i] * pb.value[i];
      if (pb.requires_grad) pb.grad[i] += self.grad[i] * pa.value[i];
    }
  });
}

inline Tensor scale(const Tensor& a, double c) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = c * a[i];
  return Tensor::from_op("scale", a.shape(), std::move(out), {a}, [c](Node& self) {
    Node& pa = detail::parent(self, 0);
    for (std::size_t i = 0; i < self.grad.size(); ++i) pa.grad[i] += c * self.grad[i];
  });
}

/// x[m,n] + bias[n] broadcast over rows.
inline Tensor add_bias(const Tensor& x, const Tensor& bias) {
  detail::require_rank(x, 2, "add_bias");
  const std::size_t m = x.dim(0), n = x.dim(1);
  if (bias.size() != n) {
    throw ShapeError("add_bias: bias " + shape_str(bias.shape()) + " for input " +
                     shape_str(x.shape()));
  }
  std::vector<double> out(x.data().begin(), x.data().end());
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] += bias[j];
  return Tensor::from_op("add_bias", x.shape(), std::move(out), {x, bias}, [m, n](Node& self) {
    Node& px = detail::parent(self, 0);
    Node& pb = detail::parent(self, 1);
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        const double g = self.grad[i * n + j];
        if (px.requires_grad) px.grad[i * n + j] += g;
        if (pb.requires_grad) pb.grad[j] += g;
      }
    }
  });
}

inline Tensor relu(const Tensor& x) {
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] > 0.0 ? x[i] : 0.0;
  return Tensor::from_op("relu", x.shape(), std::move(out), {x}, [](Node& self) {
    Node& px = detail::parent(self, 0);
    for (std::size_t i = 0; i < self.grad.size(); ++i)
      if (px.value[i] > 0.0) px.grad[i] += self.grad[i];
  });
}

inline Tensor tanh(const Tensor& x) {
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(x[i]);
  return Tensor::from_op("tanh", x.shape(), std::move(out), {x}, [](Node& self) {
    Node& px = detail::parent(self, 0);
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      const double y = self.value[i];
      px.grad[i] += self.grad[i] * (1.0 - y * y);
    }
  });
}

// ---------------------------------------------------------------------------
// Reductions and reshuffles
// ---------------------------------------------------------------------------

inline Tensor sum(const Tensor& x) {
  double s = 0.0;
  for (double v : x.data()) s += v;
  return Tensor::from_op("sum", {1}, {s}, {x}, [](Node& self) {
    Node& px = detail::parent(self, 0);
    for (double& g : px.grad) g += self.grad[0];
  });
}

/// Row-wise stable softmax: exp(x - rowmax) / sum.
inline Tensor softmax_rows(const Tensor& x) {
  detail::require_rank(x, 2, "softmax_rows");
  const std::size_t m = x.dim(0), n = x.dim(1);
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i) {
    const double* row = x.data().data() + i * n;
    double mx = -INFINITY;
    for (std::size_t j = 0; j < n; ++j) {
      if (!std::isfinite(row[j])) throw NumericError("softmax_rows: non-finite input");
      mx = std::max(mx, row[j]);
    }
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) z += (out[i * n + j] = std::exp(row[j] - mx));
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] /= z;
  }
  return Tensor::from_op("softmax_rows", x.shape(), std::move(out), {x}, [m, n](Node& self) {
    Node& px = detail::parent(self, 0);
    for (std::size_t i = 0; i < m; ++i) {
      const double* y = self.value.data() + i * n;
      const double* g = self.grad.data() + i * n;
      double dot = 0.0;
      for (std::size_t j = 0; j < n; ++j) dot += g[j] * y[j];
      for (std::size_t j = 0; j < n; ++j) px.grad[i * n + j] += y[j] * (g[j] - dot);
    }
  });
}

/// Copies table rows; the backward pass scatter-adds, so repeated indices accumulate.
inline Tensor embedding_lookup(const Tensor& table, std::span<const std::size_t> indices) {
  detail::require_rank(table, 2, "embedding_lookup");
  const std::size_t rows = table.dim(0), d = table.dim(1);
  std::vector<double> out(indices.size() * d);
  for (std::size_t r = 0; r < indices.size(); ++r) {
    if (indices[r] >= rows) {
      throw ShapeError("embedding_lookup: index " + std::to_string(indices[r]) +
                       " out of range for table with " + std::to_string(rows) + " rows");
    }
    std::copy_n(table.data().data() + indices[r] * d, d, out.data() + r * d);
  }
  std::vector<std::size_t> idx(indices.begin(), indices.end());
  return Tensor::from_op("embedding_lookup", {indices.size(), d}, std::move(out), {table},
                         [idx = std::move(idx), d](Node& self) {
                           Node& pt = detail::parent(self, 0);
                           for (std::size_t r = 0; r < idx.size(); ++r)
                             for (std::size_t c = 0; c < d; ++c)
                               pt.grad[idx[r] * d + c] += self.grad[r * d + c];
                         });
}

/// Sums consecutive groups of `group` rows: [S*group, D] -> [S, D].
inline Tensor segment_sum(const Tensor& x, std::size_t group) {
  detail::require_rank(x, 2, "segment_sum");
  if (group == 0 || x.dim(0) % group != 0) {
    throw ShapeError("segment_sum: " + std::to_string(x.dim(0)) + " rows not divisible by " +
                     std::to_string(group));
  }
  const std::size_t segments = x.dim(0) / group, d = x.dim(1);
  std::vector<double> out(segments * d, 0.0);
  for (std::size_t r = 0; r < x.dim(0); ++r)
    for (std::size_t c = 0; c < d; ++c) out[(r / group) * d + c] += x[r * d + c];
  return Tensor::from_op("segment_sum", {segments, d}, std::move(out), {x},
                         [group, d](Node& self) {
                           Node& px = detail::parent(self, 0);
                           for (std::size_t r = 0; r < px.shape[0]; ++r)
                             for (std::size_t c = 0; c < d; ++c)
                               px.grad[r * d + c] += self.grad[(r / group) * d + c];
                         });
}

/// out[i, j] = x[i, index[i * width + j]] for x of shape [n, m]; yields [n, width].
inline Tensor gather_cols(const Tensor& x, std::span<const std::size_t> index, std::size_t width) {
  detail::require_rank(x, 2, "gather_cols");
  const std::size_t n = x.dim(0), m = x.dim(1);
  if (index.size() != n * width) throw ShapeError("gather_cols: index length mismatch");
  std::vector<double> out(n * width);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < width; ++j) {
      const std::size_t c = index[i * width + j];
      if (c >= m) throw ShapeError("gather_cols: column index out of range");
      out[i * width + j] = x[i * m + c];
    }
  }
  std::vector<std::size_t> idx(index.begin(), index.end());
  return Tensor::from_op("gather_cols", {n, width}, std::move(out), {x},
                         [idx = std::move(idx), n, m, width](Node& self) {
                           Node& px = detail::parent(self, 0);
                           for (std::size_t i = 0; i < n; ++i)
                             for (std::size_t j = 0; j < width; ++j)
                               px.grad[i * m + idx[i * width + j]] += self.grad[i * width + j];
                         });
}

/// Joins along the last axis. Rank-1 inputs yield a rank-1 result; rank-2
/// inputs must agree on row count.
inline Tensor concat(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  const bool flat = parts.front().rank() == 1;
  const std::size_t m = parts.front().rows();
  std::size_t total = 0;
  std::vector<std::size_t> widths;
  for (const auto& p : parts) {
    if ((p.rank() == 1) != flat || p.rank() > 2 || p.rows() != m) {
      throw ShapeError("concat: incompatible part " + shape_str(p.shape()));
    }
    widths.push_back(p.cols());
    total += p.cols();
  }
  std::vector<double> out(m * total);
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    for (std::size_t i = 0; i < m; ++i)
      std::copy_n(parts[k].data().data() + i * widths[k], widths[k],
                  out.data() + i * total + offset);
    offset += widths[k];
  }
  Shape shape = flat ? Shape{total} : Shape{m, total};
  return Tensor::from_op("concat", std::move(shape), std::move(out), parts,
                         [widths, m, total](Node& self) {
                           std::size_t offset = 0;
                           for (std::size_t k = 0; k < widths.size(); ++k) {
                             Node& p = detail::parent(self, k);
                             if (p.requires_grad) {
                               for (std::size_t i = 0; i < m; ++i)
                                 for (std::size_t j = 0; j < widths[k]; ++j)
                                   p.grad[i * widths[k] + j] += self.grad[i * total + offset + j];
                             }
                             offset += widths[k];
                           }
                         });
}

/// Stacks rank-2 tensors with equal column counts.
inline Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no inputs");
  const std::size_t n = parts.front().cols();
  std::vector<std::size_t> sizes;
  std::vector<double> out;
  for (const auto& p : parts) {
    detail::require_rank(p, 2, "concat_rows");
    if (p.dim(1) != n) throw ShapeError("concat_rows: column mismatch " + shape_str(p.shape()));
    sizes.push_back(p.size());
    out.insert(out.end(), p.data().begin(), p.data().end());
  }
  const std::size_t m = out.size() / n;
  return Tensor::from_op("concat_rows", {m, n}, std::move(out), parts, [sizes](Node& self) {
    std::size_t offset = 0;
    for (std::size_t k = 0; k < sizes.size(); ++k) {
      Node& p = detail::parent(self, k);
      if (p.requires_grad)
        for (std::size_t i = 0; i < sizes[k]; ++i) p.grad[i] += self.grad[offset + i];
      offset += sizes[k];
    }
  });
}

inline Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t count) {
  detail::require_rank(x, 2, "slice_rows");
  if (begin + count > x.dim(0)) throw ShapeError("slice_rows: range out of bounds");
  const std::size_t n = x.dim(1);
  std::vector<double> out(x.data().begin() + begin * n, x.data().begin() + (begin + count) * n);
  return Tensor::from_op("slice_rows", {count, n}, std::move(out), {x}, [begin, n](Node& self) {
    Node& px = detail::parent(self, 0);
    for (std::size_t i = 0; i < self.grad.size(); ++i) px.grad[begin * n + i] += self.grad[i];
  });
}

/// Per-row inner product of two equally shaped tensors: [B, n] x [B, n] -> [B].
/// Rank-1 operands count as a single row.
inline Tensor rowwise_dot(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "rowwise_dot");
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<double> out(m, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i] += a[i * n + j] * b[i * n + j];
  return Tensor::from_op("rowwise_dot", {m}, std::move(out), {a, b}, [n](Node& self) {
    Node& pa = detail::parent(self, 0);
    Node& pb = detail::parent(self, 1);
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      const double g = self.grad[i];
      for (std::size_t j = 0; j < n; ++j) {
        if (pa.requires_grad) pa.grad[i * n + j] += g * pb.value[i * n + j];
        if (pb.requires_grad) pb.grad[i * n + j] += g * pa.value[i * n + j];
      }
    }
  });
}

// ---------------------------------------------------------------------------
// Text convolution
// ---------------------------------------------------------------------------

/// Full-width valid convolution over `x`, which stacks sequences of `seq_len`
/// rows each: [S*L, D]. `filters` is [F, w, D], `bias` has F entries.
/// Output is [S*(L-w+1), F]; row t of sequence s is window t of that sequence.
inline Tensor conv_text(const Tensor& x, std::size_t seq_len, const Tensor& filters,
                        const Tensor& bias) {
  detail::require_rank(x, 2, "conv_text");
  detail::require_rank(filters, 3, "conv_text");
  const std::size_t d = x.dim(1), f = filters.dim(0), w = filters.dim(1);
  if (filters.dim(2) != d) throw ShapeError("conv_text: filter width differs from embedding dim");
  if (bias.size() != f) throw ShapeError("conv_text: bias length differs from filter count");
  if (seq_len == 0 || x.dim(0) % seq_len != 0)
    throw ShapeError("conv_text: row count not a multiple of sequence length");
  if (w == 0 || w > seq_len)
    throw ShapeError("conv_text: window " + std::to_string(w) + " too large for sequence of " +
                     std::to_string(seq_len));
  const std::size_t seqs = x.dim(0) / seq_len, steps = seq_len - w + 1, span = w * d;
  std::vector<double> out(seqs * steps * f);
  const double* X = x.data().data();
  const double* K = filters.data().data();
  for (std::size_t s = 0; s < seqs; ++s) {
    for (std::size_t t = 0; t < steps; ++t) {
      const double* win = X + (s * seq_len + t) * d;
      for (std::size_t k = 0; k < f; ++k) {
        const double* ker = K + k * span;
        double acc = bias[k];
        for (std::size_t e = 0; e < span; ++e) acc += win[e] * ker[e];
        out[(s * steps + t) * f + k] = acc;
      }
    }
  }
  return Tensor::from_op(
      "conv_text", {seqs * steps, f}, std::move(out), {x, filters, bias},
      [seq_len, seqs, steps, f, span, d](Node& self) {
        Node& px = detail::parent(self, 0);
        Node& pk = detail::parent(self, 1);
        Node& pb = detail::parent(self, 2);
        for (std::size_t s = 0; s < seqs; ++s) {
          for (std::size_t t = 0; t < steps; ++t) {
            const std::size_t base = (s * seq_len + t) * d;
            for (std::size_t k = 0; k < f; ++k) {
              const double g = self.grad[(s * steps + t) * f + k];
              if (g == 0.0) continue;
              if (pb.requires_grad) pb.grad[k] += g;
              if (pk.requires_grad)
                for (std::size_t e = 0; e < span; ++e) pk.grad[k * span + e] += g * px.value[base + e];
              if (px.requires_grad)
                for (std::size_t e = 0; e < span; ++e) px.grad[base + e] += g * pk.value[k * span + e];
            }
          }
        }
      });
}

/// Single-filter form: seq [L, D], filter [w, D], scalar bias -> [L-w+1].
inline Tensor conv_text(const Tensor& seq, const Tensor& filter, const Tensor& bias) {
  detail::require_rank(seq, 2, "conv_text");
  detail::require_rank(filter, 2, "conv_text");
  Tensor kernel = reshape(filter, {1, filter.dim(0), filter.dim(1)});
  Tensor out = conv_text(seq, seq.dim(0), kernel, bias);
  return reshape(out, {out.size()});
}

/// Column-wise max over consecutive groups of `steps` rows: [S*T, F] -> [S, F].
/// The gradient goes to the first maximal row of each group.
inline Tensor max_over_time(const Tensor& x, std::size_t steps) {
  detail::require_rank(x, 2, "max_over_time");
  if (steps == 0 || x.dim(0) == 0) throw ShapeError("max_over_time: empty input");
  if (x.dim(0) % steps != 0) throw ShapeError("max_over_time: rows not a multiple of steps");
  const std::size_t seqs = x.dim(0) / steps, f = x.dim(1);
  std::vector<double> out(seqs * f);
  std::vector<std::size_t> arg(seqs * f);
  for (std::size_t s = 0; s < seqs; ++s) {
    for (std::size_t k = 0; k < f; ++k) {
      std::size_t best = s * steps;
      for (std::size_t t = 1; t < steps; ++t) {
        const std::size_t r = s * steps + t;
        if (x[r * f + k] > x[best * f + k]) best = r;
      }
      arg[s * f + k] = best;
      out[s * f + k] = x[best * f + k];
    }
  }
  return Tensor::from_op("max_over_time", {seqs, f}, std::move(out), {x},
                         [arg = std::move(arg), f](Node& self) {
                           Node& px = detail::parent(self, 0);
                           for (std::size_t i = 0; i < arg.size(); ++i)
                             px.grad[arg[i] * f + (i % f)] += self.grad[i];
                         });
}

/// Rank-1 form: maximum of a vector as a one-element tensor.
inline Tensor max_over_time(const Tensor& v) {
  if (v.size() == 0) throw ShapeError("max_over_time: empty input");
  Tensor out = max_over_time(reshape(v, {v.size(), 1}), v.size());
  return reshape(out, {1});
}

// ---------------------------------------------------------------------------
// Regularization and loss
// ---------------------------------------------------------------------------

enum class Mode { train, eval };

/// Inverted dropout: in train mode each entry survives with probability
/// 1 - rate and is scaled by 1 / (1 - rate). Eval mode is the identity.
inline Tensor dropout(const Tensor& x, double rate, Mode mode, Rng& rng) {
  if (!(rate >= 0.0 && rate < 1.0)) throw ShapeError("dropout: rate must lie in [0, 1)");
  if (mode == Mode::eval || rate == 0.0) return x;
  const double keep = 1.0 / (1.0 - rate);
  std::vector<double> mask(x.size());
  for (double& m : mask) m = rng.uniform() < rate ? 0.0 : keep;
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * mask[i];
  return Tensor::from_op("dropout", x.shape(), std::move(out), {x},
                         [mask = std::move(mask)](Node& self) {
                           Node& px = detail::parent(self, 0);
                           for (std::size_t i = 0; i < mask.size(); ++i)
                             px.grad[i] += self.grad[i] * mask[i];
                         });
}

/// Mean squared difference; `target` is treated as a constant.
inline Tensor mse_loss(const Tensor& pred, const Tensor& target) {
  if (pred.size() != target.size() || pred.size() == 0) {
    throw ShapeError("mse_loss: shape mismatch " + shape_str(pred.shape()) + " vs " +
                     shape_str(target.shape()));
  }
  const std::size_t n = pred.size();
  std::vector<double> diff(n);
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    diff[i] = pred[i] - target[i];
    s += diff[i] * diff[i];
  }
  return Tensor::from_op("mse_loss", {1}, {s / static_cast<double>(n)}, {pred},
                         [diff = std::move(diff), n](Node& self) {
                           Node& pp = detail::parent(self, 0);
                           const double c = 2.0 * self.grad[0] / static_cast<double>(n);
                           for (std::size_t i = 0; i < n; ++i) pp.grad[i] += c * diff[i];
                         });
}

}  // namespace frec
