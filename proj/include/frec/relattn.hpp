#pragma once

// Multi-head self-attention over a flattened H x W grid, with optional
// two-dimensional relative position terms.
//
// Positions are row-major: i = i_y * W + i_x. For a query at (i_x, i_y) and
// a key at (j_x, j_y) the logit is
//
//   L[i, j] = (q_i . k_j + q_i . rW[j_x - i_x] + q_i . rH[j_y - i_y]) / sqrt(d_k)
//
// where rW has 2W-1 rows indexed by (j_x - i_x) + (W - 1) and rH has 2H-1
// rows indexed by (j_y - i_y) + (H - 1). Without the table terms this is plain
// scaled dot-product attention; heads are concatenated along features and
// projected by W_O.

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "frec/error.hpp"
#include "frec/ops.hpp"
#include "frec/rng.hpp"
#include "frec/tensor.hpp"

namespace frec::attn {

/// W_q, W_k, W_v for one head, each [F_in, d_k]. Values share d_k.
struct HeadProjections {
  Tensor query;
  Tensor key;
  Tensor value;

  std::size_t in_dim() const { return query.dim(0); }
  std::size_t key_dim() const { return query.dim(1); }
};

struct AttentionParams {
  std::vector<HeadProjections> heads;
  Tensor output;  ///< W_O, [N_h * d_k, F_out]

  std::size_t num_heads() const { return heads.size(); }
  std::size_t key_dim() const { return heads.front().key_dim(); }
  std::size_t out_dim() const { return output.dim(1); }

  std::vector<Tensor> tensors() const {
    std::vector<Tensor> out;
    for (const auto& h : heads) {
      out.push_back(h.query);
      out.push_back(h.key);
      out.push_back(h.value);
    }
    out.push_back(output);
    return out;
  }
};

/// Relative position embeddings for one head on an H x W grid.
struct RelPosTables {
  Tensor width_table;   ///< [2W-1, d_k], x offsets
  Tensor height_table;  ///< [2H-1, d_k], y offsets
  std::size_t height = 1;
  std::size_t width = 1;
};

struct GridPos {
  std::size_t x = 0;
  std::size_t y = 0;
  bool operator==(const GridPos&) const = default;
};

/// Grid features flattened to [H*W, F_in].
struct FlatGrid {
  Tensor x;
  std::size_t height = 1;
  std::size_t width = 1;

  std::size_t size() const { return height * width; }
  GridPos position(std::size_t i) const { return {i % width, i / width}; }
  std::size_t index(GridPos p) const { return p.y * width + p.x; }
};

namespace detail {

inline void check_head(const Tensor& x, const HeadProjections& h) {
  frec::detail::require_rank(x, 2, "attention");
  for (const Tensor* w : {&h.query, &h.key, &h.value}) {
    frec::detail::require_rank(*w, 2, "attention");
    if (w->dim(0) != x.dim(1) || w->dim(1) != h.key_dim())
      throw ShapeError("attention: projection " + shape_str(w->shape()) + " for input " +
                       shape_str(x.shape()));
  }
}

inline void check_params(const Tensor& x, const AttentionParams& p) {
  if (p.heads.empty()) throw ShapeError("attention: no heads");
  for (const auto& h : p.heads) {
    check_head(x, h);
    if (h.key_dim() != p.key_dim()) throw ShapeError("attention: heads differ in d_k");
  }
  frec::detail::require_rank(p.output, 2, "attention");
  if (p.output.dim(0) != p.num_heads() * p.key_dim())
    throw ShapeError("attention: output projection " + shape_str(p.output.shape()) +
                     " does not match " + std::to_string(p.num_heads()) + " heads of d_k " +
                     std::to_string(p.key_dim()));
}

inline void check_tables(const FlatGrid& g, const RelPosTables& t, std::size_t d_k) {
  if (g.x.rank() != 2 || g.x.dim(0) != g.size())
    throw ShapeError("relative attention: grid " + std::to_string(g.height) + "x" +
                     std::to_string(g.width) + " does not match features " + shape_str(g.x.shape()));
  if (t.height != g.height || t.width != g.width)
    throw ShapeError("relative attention: table grid differs from input grid");
  if (t.width_table.rank() != 2 || t.width_table.dim(0) != 2 * g.width - 1 ||
      t.width_table.dim(1) != d_k)
    throw ShapeError("relative attention: width table must be [2W-1, d_k], got " +
                     shape_str(t.width_table.shape()));
  if (t.height_table.rank() != 2 || t.height_table.dim(0) != 2 * g.height - 1 ||
      t.height_table.dim(1) != d_k)
    throw ShapeError("relative attention: height table must be [2H-1, d_k], got " +
                     shape_str(t.height_table.shape()));
}

/// Table row for every (i, j) pair, per axis.
inline void offset_indices(const FlatGrid& g, std::vector<std::size_t>& x_rows,
                           std::vector<std::size_t>& y_rows) {
  const std::size_t n = g.size();
  x_rows.resize(n * n);
  y_rows.resize(n * n);
  for (std::size_t i = 0; i < n; ++i) {
    GridPos pi = g.position(i);
    for (std::size_t j = 0; j < n; ++j) {
      GridPos pj = g.position(j);
      x_rows[i * n + j] = pj.x + (g.width - 1) - pi.x;
      y_rows[i * n + j] = pj.y + (g.height - 1) - pi.y;
    }
  }
}

}  // namespace detail

/// [H, W, F_in] -> FlatGrid in row-major position order.
inline FlatGrid flatten_image(const Tensor& img) {
  frec::detail::require_rank(img, 3, "flatten_image");
  const std::size_t h = img.dim(0), w = img.dim(1), f = img.dim(2);
  return {reshape(img, {h * w, f}), h, w};
}

inline Tensor attention_weights(const Tensor& x, const HeadProjections& head) {
  detail::check_head(x, head);
  Tensor q = matmul(x, head.query);
  Tensor k = matmul(x, head.key);
  Tensor logits = matmul(q, transpose(k));
  return softmax_rows(scale(logits, 1.0 / std::sqrt(static_cast<double>(head.key_dim()))));
}

/// Softmax((X W_q)(X W_k)^T / sqrt(d_k)) (X W_v): [n, d_k].
inline Tensor attention_head(const Tensor& x, const HeadProjections& head) {
  return matmul(attention_weights(x, head), matmul(x, head.value));
}

/// Concat of every head's output, projected by W_O: [n, F_out].
inline Tensor mha(const Tensor& x, const AttentionParams& params) {
  detail::check_params(x, params);
  std::vector<Tensor> heads;
  for (const auto& h : params.heads) heads.push_back(attention_head(x, h));
  return matmul(concat(heads), params.output);
}

/// Scaled logits with both relative-position terms: [n, n].
inline Tensor rel_logits(const FlatGrid& grid, const HeadProjections& head,
                         const RelPosTables& tables) {
  detail::check_head(grid.x, head);
  detail::check_tables(grid, tables, head.key_dim());
  std::vector<std::size_t> x_rows, y_rows;
  detail::offset_indices(grid, x_rows, y_rows);
  const std::size_t n = grid.size();
  Tensor q = matmul(grid.x, head.query);
  Tensor k = matmul(grid.x, head.key);
  Tensor content = matmul(q, transpose(k));
  Tensor s_w = gather_cols(matmul(q, transpose(tables.width_table)), x_rows, n);
  Tensor s_h = gather_cols(matmul(q, transpose(tables.height_table)), y_rows, n);
  return scale(add(add(content, s_h), s_w), 1.0 / std::sqrt(static_cast<double>(head.key_dim())));
}

inline Tensor rel_attention_weights(const FlatGrid& grid, const HeadProjections& head,
                                    const RelPosTables& tables) {
  return softmax_rows(rel_logits(grid, head, tables));
}

/// Multi-head attention with per-head relative tables: [n, F_out].
inline Tensor rel_mha(const FlatGrid& grid, const AttentionParams& params,
                      std::span<const RelPosTables> tables) {
  detail::check_params(grid.x, params);
  if (tables.size() != params.num_heads())
    throw ShapeError("rel_mha: " + std::to_string(tables.size()) + " tables for " +
                     std::to_string(params.num_heads()) + " heads");
  std::vector<Tensor> heads;
  for (std::size_t h = 0; h < params.num_heads(); ++h) {
    const auto& head = params.heads[h];
    heads.push_back(
        matmul(rel_attention_weights(grid, head, tables[h]), matmul(grid.x, head.value)));
  }
  return matmul(concat(heads), params.output);
}

/// Title tokens as a 1 x L grid through rel_mha, plus a residual connection.
/// Output width equals input width, so W_O must be [N_h * d_k, D].
inline Tensor title_attention_encoder(const Tensor& title_emb, const AttentionParams& params,
                                      std::span<const RelPosTables> tables) {
  frec::detail::require_rank(title_emb, 2, "title_attention_encoder");
  if (params.out_dim() != title_emb.dim(1))
    throw ShapeError("title_attention_encoder: output width must equal embedding width");
  FlatGrid grid{title_emb, 1, title_emb.dim(0)};
  return add(title_emb, rel_mha(grid, params, tables));
}

// ---------------------------------------------------------------------------
// Construction helpers
// ---------------------------------------------------------------------------

inline Tensor uniform_tensor(Shape shape, double limit, Rng& rng, bool requires_grad = true) {
  std::vector<double> data(shape_size(shape));
  for (double& v : data) v = rng.uniform(-limit, limit);
  return Tensor(std::move(shape), std::move(data), requires_grad);
}

/// Projections ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)) times `gain`.
inline AttentionParams random_attention_params(std::size_t in_dim, std::size_t key_dim,
                                               std::size_t heads, std::size_t out_dim, Rng& rng,
                                               double gain = 1.0) {
  AttentionParams p;
  const double lim_in = gain / std::sqrt(static_cast<double>(in_dim));
  for (std::size_t h = 0; h < heads; ++h) {
    p.heads.push_back({uniform_tensor({in_dim, key_dim}, lim_in, rng),
                       uniform_tensor({in_dim, key_dim}, lim_in, rng),
                       uniform_tensor({in_dim, key_dim}, lim_in, rng)});
  }
  p.output = uniform_tensor({heads * key_dim, out_dim},
                            gain / std::sqrt(static_cast<double>(heads * key_dim)), rng);
  return p;
}

inline RelPosTables random_tables(std::size_t height, std::size_t width, std::size_t key_dim,
                                  Rng& rng, double limit = 0.5) {
  return {uniform_tensor({2 * width - 1, key_dim}, limit, rng),
          uniform_tensor({2 * height - 1, key_dim}, limit, rng), height, width};
}

inline RelPosTables zero_tables(std::size_t height, std::size_t width, std::size_t key_dim) {
  return {Tensor::zeros({2 * width - 1, key_dim}, true), Tensor::zeros({2 * height - 1, key_dim}, true),
          height, width};
}

}  // namespace frec::attn
