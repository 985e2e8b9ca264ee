#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "ukd/numerics/rng.hpp"
#include "ukd/numerics/tensor.hpp"

namespace ukd::num {

// Elementwise arithmetic. Shapes must match exactly.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double factor);
Tensor add_scalar(const Tensor& x, double offset);

/// x[N, D] + b[D], broadcast over rows.
Tensor add_row(const Tensor& x, const Tensor& b);
/// x[N, D] * g[D], broadcast over rows.
Tensor mul_row(const Tensor& x, const Tensor& g);
/// Row i of x[N, D] multiplied by the constant factors[i].
Tensor scale_rows(const Tensor& x, std::span<const double> factors);

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
/// x[N, in] * w[in, out] + b[out]. `b` may be undefined.
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
/// Column means of x[N, D] as a [1, D] tensor.
Tensor mean_rows(const Tensor& x);

Tensor reshape(const Tensor& x, Shape shape);
Tensor gather_rows(const Tensor& x, std::span<const std::size_t> rows);
Tensor concat_rows(std::span<const Tensor> parts);
/// Repeats x[T, D] `times` times along rows: [times * T, D].
Tensor tile_rows(const Tensor& x, std::size_t times);

/// Numerically stable softmax of x / temperature along `axis`.
Tensor softmax(const Tensor& x, int axis = -1, double temperature = 1.0);
Tensor log_softmax(const Tensor& x, int axis = -1, double temperature = 1.0);

/// Mean over rows of -sum_k p[k] log_q[k]. `p` is treated as a constant target
/// and every row must sum to 1 within 1e-6.
Tensor cross_entropy(const Tensor& p, const Tensor& log_q);

/// Cosine similarity of two flattened vectors; throws DegenerateInputError if
/// either norm is below 1e-12.
Tensor cosine_similarity(const Tensor& a, const Tensor& b);
/// Row-wise cosine similarity of a[N, D], b[N, D] -> [N].
Tensor cosine_rows(const Tensor& a, const Tensor& b);

/// Mean over elements of the Huber-style smooth L1 distance.
Tensor smooth_l1(const Tensor& a, const Tensor& b, double beta = 1.0);

Tensor layernorm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                 double eps = 1e-6);
Tensor gelu(const Tensor& x);
Tensor relu(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor sigmoid(const Tensor& x);
/// Elementwise log(max(x, floor)); the gradient is zero where the floor binds.
Tensor log(const Tensor& x, double floor = 0.0);
/// Inverted dropout. Identity when !training or p == 0.
Tensor dropout(const Tensor& x, double p, Rng& rng, bool training);
/// Row-wise x / max(||x||, eps).
Tensor l2_normalize(const Tensor& x, double eps = 1e-12);

/// Replaces rows of x[N, D] flagged in `mask` with token[D].
Tensor mask_replace(const Tensor& x, std::span<const std::uint8_t> mask,
                    const Tensor& token);

/// Bilinear resampling (half-pixel centres, edge clamp) of a square token grid
/// x[g_in * g_in, D] to [g_out * g_out, D].
Tensor resample_grid(const Tensor& x, std::size_t g_in, std::size_t g_out);

struct GridWeight {
  std::size_t out;
  std::size_t in;
  double weight;
};
std::vector<GridWeight> bilinear_grid_weights(std::size_t g_in, std::size_t g_out);

/// Multi-head self attention over a packed qkv[B * T, 3 * D] projection.
/// Returns the concatenated head outputs [B * T, D].
Tensor multi_head_attention(const Tensor& qkv, std::size_t batch, std::size_t tokens,
                            std::size_t heads);

}  // namespace ukd::num
