#include "ukd/numerics/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <array>
#include <limits>
#include <cmath>
#include <numbers>

#include "ukd/errors.hpp"

namespace ukd::num {

using detail::Node;

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using CMap = Eigen::Map<const RowMat>;
using MMap = Eigen::Map<RowMat>;

// Gradient buffer of parent i, or nullptr when it does not need one.
std::vector<double>* parent_grad(Node& self, std::size_t i) {
  auto& p = self.parents[i];
  return (p && p->requires_grad) ? &p->ensure_grad() : nullptr;
}

const std::vector<double>& parent_value(const Node& self, std::size_t i) {
  return self.parents[i]->value;
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) +
                         " vs " + shape_string(b.shape()));
  }
}

void require_rank2(const Tensor& x, const char* op) {
  if (x.rank() != 2) {
    throw DimensionError(std::string(op) + ": expected rank-2 tensor, got " +
                         shape_string(x.shape()));
  }
}

template <typename F, typename DF>
Tensor unary(const Tensor& x, F f, DF df) {
  const auto xv = x.values();
  std::vector<double> y(xv.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = f(xv[i]);
  return Tensor::make_result(x.shape(), std::move(y), {x}, [df](Node& self) {
    auto* gx = parent_grad(self, 0);
    if (!gx) return;
    const auto& xv = parent_value(self, 0);
    for (std::size_t i = 0; i < xv.size(); ++i) {
      (*gx)[i] += self.grad[i] * df(xv[i], self.value[i]);
    }
  });
}

struct AxisLayout {
  std::size_t outer = 1, n = 1, inner = 1;
};

AxisLayout axis_layout(const Shape& shape, int axis) {
  const int rank = static_cast<int>(shape.size());
  if (rank == 0) throw DimensionError("softmax of a scalar");
  if (axis < 0) axis += rank;
  if (axis < 0 || axis >= rank) {
    throw DimensionError("softmax axis out of range for shape " + shape_string(shape));
  }
  AxisLayout l;
  for (int i = 0; i < axis; ++i) l.outer *= shape[i];
  l.n = shape[axis];
  for (int i = axis + 1; i < rank; ++i) l.inner *= shape[i];
  return l;
}

void require_positive_temperature(double t) {
  if (!(t > 0.0)) {
    throw ParameterError("softmax temperature must be positive, got " + std::to_string(t));
  }
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<double> y(a.values().begin(), a.values().end());
  const auto bv = b.values();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += bv[i];
  return Tensor::make_result(a.shape(), std::move(y), {a, b}, [](Node& self) {
    for (std::size_t k = 0; k < 2; ++k) {
      if (auto* g = parent_grad(self, k)) {
        for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i];
      }
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  std::vector<double> y(a.values().begin(), a.values().end());
  const auto bv = b.values();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] -= bv[i];
  return Tensor::make_result(a.shape(), std::move(y), {a, b}, [](Node& self) {
    if (auto* g = parent_grad(self, 0)) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i];
    }
    if (auto* g = parent_grad(self, 1)) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] -= self.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  const auto av = a.values();
  const auto bv = b.values();
  std::vector<double> y(av.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = av[i] * bv[i];
  return Tensor::make_result(a.shape(), std::move(y), {a, b}, [](Node& self) {
    const auto& av = parent_value(self, 0);
    const auto& bv = parent_value(self, 1);
    if (auto* g = parent_grad(self, 0)) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i] * bv[i];
    }
    if (auto* g = parent_grad(self, 1)) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i] * av[i];
    }
  });
}

Tensor scale(const Tensor& x, double factor) {
  return unary(x, [factor](double v) { return v * factor; },
               [factor](double, double) { return factor; });
}

Tensor add_scalar(const Tensor& x, double offset) {
  return unary(x, [offset](double v) { return v + offset; },
               [](double, double) { return 1.0; });
}

Tensor add_row(const Tensor& x, const Tensor& b) {
  require_rank2(x, "add_row");
  const std::size_t n = x.dim(0), d = x.dim(1);
  if (b.numel() != d) {
    throw DimensionError("add_row: row vector of " + std::to_string(b.numel()) +
                         " values for width " + std::to_string(d));
  }
  std::vector<double> y(x.values().begin(), x.values().end());
  const auto bv = b.values();
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < d; ++c) y[r * d + c] += bv[c];
  return Tensor::make_result(x.shape(), std::move(y), {x, b}, [n, d](Node& self) {
    if (auto* g = parent_grad(self, 0)) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i];
    }
    if (auto* g = parent_grad(self, 1)) {
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < d; ++c) (*g)[c] += self.grad[r * d + c];
    }
  });
}

Tensor mul_row(const Tensor& x, const Tensor& gvec) {
  require_rank2(x, "mul_row");
  const std::size_t n = x.dim(0), d = x.dim(1);
  if (gvec.numel() != d) {
    throw DimensionError("mul_row: row vector of " + std::to_string(gvec.numel()) +
                         " values for width " + std::to_string(d));
  }
  std::vector<double> y(x.values().begin(), x.values().end());
  const auto gv = gvec.values();
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < d; ++c) y[r * d + c] *= gv[c];
  return Tensor::make_result(x.shape(), std::move(y), {x, gvec}, [n, d](Node& self) {
    const auto& xv = parent_value(self, 0);
    const auto& gv = parent_value(self, 1);
    if (auto* g = parent_grad(self, 0)) {
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < d; ++c) (*g)[r * d + c] += self.grad[r * d + c] * gv[c];
    }
    if (auto* g = parent_grad(self, 1)) {
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < d; ++c) (*g)[c] += self.grad[r * d + c] * xv[r * d + c];
    }
  });
}

Tensor scale_rows(const Tensor& x, std::span<const double> factors) {
  const std::size_t n = x.shape().empty() ? 1 : x.dim(0);
  if (factors.size() != n) {
    throw DimensionError("scale_rows: " + std::to_string(factors.size()) +
                         " factors for " + std::to_string(n) + " rows");
  }
  const std::size_t width = n ? x.numel() / n : 0;
  std::vector<double> f(factors.begin(), factors.end());
  std::vector<double> y(x.values().begin(), x.values().end());
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < width; ++c) y[r * width + c] *= f[r];
  return Tensor::make_result(x.shape(), std::move(y), {x},
                             [f = std::move(f), width](Node& self) {
                               auto* g = parent_grad(self, 0);
                               if (!g) return;
                               for (std::size_t r = 0; r < f.size(); ++r)
                                 for (std::size_t c = 0; c < width; ++c)
                                   (*g)[r * width + c] += self.grad[r * width + c] * f[r];
                             });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul: incompatible shapes " + shape_string(a.shape()) + " x " +
                         shape_string(b.shape()));
  }
  const Eigen::Index m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<double> y(static_cast<std::size_t>(m * n));
  MMap(y.data(), m, n).noalias() = CMap(a.values().data(), m, k) * CMap(b.values().data(), k, n);
  return Tensor::make_result({a.dim(0), b.dim(1)}, std::move(y), {a, b},
                             [m, k, n](Node& self) {
                               CMap dy(self.grad.data(), m, n);
                               if (auto* g = parent_grad(self, 0)) {
                                 MMap(g->data(), m, k).noalias() +=
                                     dy * CMap(parent_value(self, 1).data(), k, n).transpose();
                               }
                               if (auto* g = parent_grad(self, 1)) {
                                 MMap(g->data(), k, n).noalias() +=
                                     CMap(parent_value(self, 0).data(), m, k).transpose() * dy;
                               }
                             });
}

Tensor transpose(const Tensor& a) {
  require_rank2(a, "transpose");
  const Eigen::Index m = a.dim(0), n = a.dim(1);
  std::vector<double> y(a.numel());
  MMap(y.data(), n, m) = CMap(a.values().data(), m, n).transpose();
  return Tensor::make_result({a.dim(1), a.dim(0)}, std::move(y), {a}, [m, n](Node& self) {
    if (auto* g = parent_grad(self, 0)) {
      MMap(g->data(), m, n) += CMap(self.grad.data(), n, m).transpose();
    }
  });
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  if (x.rank() != 2 || w.rank() != 2 || x.dim(1) != w.dim(0)) {
    throw DimensionError("linear: incompatible shapes " + shape_string(x.shape()) + " x " +
                         shape_string(w.shape()));
  }
  const Eigen::Index m = x.dim(0), k = x.dim(1), n = w.dim(1);
  if (b.defined() && b.numel() != static_cast<std::size_t>(n)) {
    throw DimensionError("linear: bias of " + std::to_string(b.numel()) + " for width " +
                         std::to_string(n));
  }
  std::vector<double> y(static_cast<std::size_t>(m * n));
  MMap out(y.data(), m, n);
  out.noalias() = CMap(x.values().data(), m, k) * CMap(w.values().data(), k, n);
  if (b.defined()) {
    out.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(b.values().data(), n);
  }
  return Tensor::make_result(
      {x.dim(0), w.dim(1)}, std::move(y), {x, w, b}, [m, k, n](Node& self) {
        CMap dy(self.grad.data(), m, n);
        if (auto* g = parent_grad(self, 0)) {
          MMap(g->data(), m, k).noalias() +=
              dy * CMap(parent_value(self, 1).data(), k, n).transpose();
        }
        if (auto* g = parent_grad(self, 1)) {
          MMap(g->data(), k, n).noalias() +=
              CMap(parent_value(self, 0).data(), m, k).transpose() * dy;
        }
        if (self.parents[2]) {
          if (auto* g = parent_grad(self, 2)) {
            Eigen::Map<Eigen::RowVectorXd>(g->data(), n) += dy.colwise().sum();
          }
        }
      });
}

Tensor sum(const Tensor& x) {
  double s = 0.0;
  for (double v : x.values()) s += v;
  return Tensor::make_result({}, {s}, {x}, [](Node& self) {
    if (auto* g = parent_grad(self, 0)) {
      for (double& v : *g) v += self.grad[0];
    }
  });
}

Tensor mean(const Tensor& x) {
  if (x.numel() == 0) throw DegenerateInputError("mean of an empty tensor");
  return scale(sum(x), 1.0 / static_cast<double>(x.numel()));
}

Tensor mean_rows(const Tensor& x) {
  require_rank2(x, "mean_rows");
  const std::size_t n = x.dim(0), d = x.dim(1);
  if (n == 0) throw DegenerateInputError("mean_rows of an empty tensor");
  std::vector<double> y(d, 0.0);
  const auto xv = x.values();
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < d; ++c) y[c] += xv[r * d + c];
  for (double& v : y) v /= static_cast<double>(n);
  return Tensor::make_result({1, d}, std::move(y), {x}, [n, d](Node& self) {
    if (auto* g = parent_grad(self, 0)) {
      const double inv = 1.0 / static_cast<double>(n);
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < d; ++c) (*g)[r * d + c] += self.grad[c] * inv;
    }
  });
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw DimensionError("reshape: " + shape_string(x.shape()) + " -> " + shape_string(shape));
  }
  std::vector<double> y(x.values().begin(), x.values().end());
  return Tensor::make_result(std::move(shape), std::move(y), {x}, [](Node& self) {
    if (auto* g = parent_grad(self, 0)) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i];
    }
  });
}

Tensor gather_rows(const Tensor& x, std::span<const std::size_t> rows) {
  if (x.rank() == 0) throw DimensionError("gather_rows on a scalar");
  const std::size_t n = x.dim(0);
  const std::size_t width = n ? x.numel() / n : 0;
  std::vector<std::size_t> idx(rows.begin(), rows.end());
  std::vector<double> y(idx.size() * width);
  const auto xv = x.values();
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] >= n) {
      throw DimensionError("gather_rows: row " + std::to_string(idx[i]) + " out of " +
                           std::to_string(n));
    }
    std::copy_n(xv.begin() + idx[i] * width, width, y.begin() + i * width);
  }
  Shape shape = x.shape();
  shape[0] = idx.size();
  return Tensor::make_result(std::move(shape), std::move(y), {x},
                             [idx = std::move(idx), width](Node& self) {
                               auto* g = parent_grad(self, 0);
                               if (!g) return;
                               for (std::size_t i = 0; i < idx.size(); ++i)
                                 for (std::size_t c = 0; c < width; ++c)
                                   (*g)[idx[i] * width + c] += self.grad[i * width + c];
                             });
}

Tensor concat_rows(std::span<const Tensor> parts) {
  if (parts.empty()) throw DimensionError("concat_rows of zero tensors");
  Shape tail(parts[0].shape().begin() + 1, parts[0].shape().end());
  std::size_t total_rows = 0;
  std::vector<std::size_t> sizes;
  for (const auto& p : parts) {
    Shape t(p.shape().begin() + 1, p.shape().end());
    if (p.rank() == 0 || t != tail) {
      throw DimensionError("concat_rows: incompatible shape " + shape_string(p.shape()));
    }
    total_rows += p.dim(0);
    sizes.push_back(p.numel());
  }
  std::vector<double> y;
  y.reserve(shape_numel(tail) * total_rows);
  for (const auto& p : parts) y.insert(y.end(), p.values().begin(), p.values().end());
  Shape shape{total_rows};
  shape.insert(shape.end(), tail.begin(), tail.end());
  std::vector<Tensor> inputs(parts.begin(), parts.end());
  return Tensor::make_result(std::move(shape), std::move(y), std::move(inputs),
                             [sizes = std::move(sizes)](Node& self) {
                               std::size_t offset = 0;
                               for (std::size_t k = 0; k < sizes.size(); ++k) {
                                 if (auto* g = parent_grad(self, k)) {
                                   for (std::size_t i = 0; i < sizes[k]; ++i)
                                     (*g)[i] += self.grad[offset + i];
                                 }
                                 offset += sizes[k];
                               }
                             });
}

Tensor tile_rows(const Tensor& x, std::size_t times) {
  const std::size_t block = x.numel();
  std::vector<double> y;
  y.reserve(block * times);
  for (std::size_t t = 0; t < times; ++t) y.insert(y.end(), x.values().begin(), x.values().end());
  Shape shape = x.shape();
  if (shape.empty()) shape = {1};
  shape[0] *= times;
  return Tensor::make_result(std::move(shape), std::move(y), {x}, [block, times](Node& self) {
    auto* g = parent_grad(self, 0);
    if (!g) return;
    for (std::size_t t = 0; t < times; ++t)
      for (std::size_t i = 0; i < block; ++i) (*g)[i] += self.grad[t * block + i];
  });
}

Tensor softmax(const Tensor& x, int axis, double temperature) {
  require_positive_temperature(temperature);
  const AxisLayout l = axis_layout(x.shape(), axis);
  const auto xv = x.values();
  std::vector<double> y(xv.size());
  for (std::size_t o = 0; o < l.outer; ++o) {
    for (std::size_t in = 0; in < l.inner; ++in) {
      const std::size_t base = o * l.n * l.inner + in;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < l.n; ++j) mx = std::max(mx, xv[base + j * l.inner]);
      double z = 0.0;
      for (std::size_t j = 0; j < l.n; ++j) {
        const double e = std::exp((xv[base + j * l.inner] - mx) / temperature);
        y[base + j * l.inner] = e;
        z += e;
      }
      for (std::size_t j = 0; j < l.n; ++j) y[base + j * l.inner] /= z;
    }
  }
  return Tensor::make_result(x.shape(), std::move(y), {x}, [l, temperature](Node& self) {
    auto* g = parent_grad(self, 0);
    if (!g) return;
    const auto& y = self.value;
    const auto& dy = self.grad;
    for (std::size_t o = 0; o < l.outer; ++o) {
      for (std::size_t in = 0; in < l.inner; ++in) {
        const std::size_t base = o * l.n * l.inner + in;
        double dot = 0.0;
        for (std::size_t j = 0; j < l.n; ++j) dot += dy[base + j * l.inner] * y[base + j * l.inner];
        for (std::size_t j = 0; j < l.n; ++j) {
          const std::size_t i = base + j * l.inner;
          (*g)[i] += y[i] * (dy[i] - dot) / temperature;
        }
      }
    }
  });
}

Tensor log_softmax(const Tensor& x, int axis, double temperature) {
  require_positive_temperature(temperature);
  const AxisLayout l = axis_layout(x.shape(), axis);
  const auto xv = x.values();
  std::vector<double> y(xv.size());
  for (std::size_t o = 0; o < l.outer; ++o) {
    for (std::size_t in = 0; in < l.inner; ++in) {
      const std::size_t base = o * l.n * l.inner + in;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < l.n; ++j) mx = std::max(mx, xv[base + j * l.inner]);
      double z = 0.0;
      for (std::size_t j = 0; j < l.n; ++j) z += std::exp((xv[base + j * l.inner] - mx) / temperature);
      const double log_z = std::log(z);
      for (std::size_t j = 0; j < l.n; ++j) {
        y[base + j * l.inner] = (xv[base + j * l.inner] - mx) / temperature - log_z;
      }
    }
  }
  return Tensor::make_result(x.shape(), std::move(y), {x}, [l, temperature](Node& self) {
    auto* g = parent_grad(self, 0);
    if (!g) return;
    const auto& y = self.value;
    const auto& dy = self.grad;
    for (std::size_t o = 0; o < l.outer; ++o) {
      for (std::size_t in = 0; in < l.inner; ++in) {
        const std::size_t base = o * l.n * l.inner + in;
        double total = 0.0;
        for (std::size_t j = 0; j < l.n; ++j) total += dy[base + j * l.inner];
        for (std::size_t j = 0; j < l.n; ++j) {
          const std::size_t i = base + j * l.inner;
          (*g)[i] += (dy[i] - std::exp(y[i]) * total) / temperature;
        }
      }
    }
  });
}

Tensor cross_entropy(const Tensor& p, const Tensor& log_q) {
  require_same_shape(p, log_q, "cross_entropy");
  if (p.numel() == 0) throw DegenerateInputError("cross_entropy of empty distributions");
  const std::size_t k = p.cols();
  const std::size_t rows = p.numel() / k;
  const auto pv = p.values();
  const auto qv = log_q.values();
  double total = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    double mass = 0.0;
    double ce = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      const double pj = pv[r * k + j];
      mass += pj;
      if (pj != 0.0) ce -= pj * qv[r * k + j];
    }
    if (std::abs(mass - 1.0) > 1e-6) {
      throw ContractViolation("cross_entropy: teacher row " + std::to_string(r) +
                              " sums to " + std::to_string(mass));
    }
    total += ce;
  }
  std::vector<double> target(pv.begin(), pv.end());
  return Tensor::make_result(
      {}, {total / static_cast<double>(rows)}, {log_q},
      [target = std::move(target), rows](Node& self) {
        auto* g = parent_grad(self, 0);
        if (!g) return;
        const double s = self.grad[0] / static_cast<double>(rows);
        for (std::size_t i = 0; i < target.size(); ++i) (*g)[i] -= target[i] * s;
      });
}

Tensor cosine_similarity(const Tensor& a, const Tensor& b) {
  if (a.numel() != b.numel()) {
    throw DimensionError("cosine_similarity: shape mismatch " + shape_string(a.shape()) +
                         " vs " + shape_string(b.shape()));
  }
  Tensor ar = reshape(a, {1, a.numel()});
  Tensor br = reshape(b, {1, b.numel()});
  return reshape(cosine_rows(ar, br), {});
}

Tensor cosine_rows(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "cosine_rows");
  require_rank2(a, "cosine_rows");
  const std::size_t n = a.dim(0), d = a.dim(1);
  const auto av = a.values();
  const auto bv = b.values();
  std::vector<double> y(n), na(n), nb(n);
  for (std::size_t r = 0; r < n; ++r) {
    double dot = 0.0, aa = 0.0, bb = 0.0;
    for (std::size_t c = 0; c < d; ++c) {
      const double x = av[r * d + c], z = bv[r * d + c];
      dot += x * z;
      aa += x * x;
      bb += z * z;
    }
    na[r] = std::sqrt(aa);
    nb[r] = std::sqrt(bb);
    if (na[r] <= 1e-12 || nb[r] <= 1e-12) {
      throw DegenerateInputError("cosine similarity of a zero-norm vector (row " +
                                 std::to_string(r) + ")");
    }
    // sqrt(aa * bb) keeps cos(x, x) exactly 1.
    y[r] = dot / std::sqrt(aa * bb);
  }
  return Tensor::make_result(
      {n}, std::move(y), {a, b},
      [n, d, na = std::move(na), nb = std::move(nb)](Node& self) {
        const auto& av = parent_value(self, 0);
        const auto& bv = parent_value(self, 1);
        auto* ga = parent_grad(self, 0);
        auto* gb = parent_grad(self, 1);
        for (std::size_t r = 0; r < n; ++r) {
          const double g = self.grad[r];
          const double c = self.value[r];
          const double inv = 1.0 / (na[r] * nb[r]);
          for (std::size_t j = 0; j < d; ++j) {
            const double x = av[r * d + j], z = bv[r * d + j];
            if (ga) (*ga)[r * d + j] += g * (z * inv - c * x / (na[r] * na[r]));
            if (gb) (*gb)[r * d + j] += g * (x * inv - c * z / (nb[r] * nb[r]));
          }
        }
      });
}

Tensor smooth_l1(const Tensor& a, const Tensor& b, double beta) {
  require_same_shape(a, b, "smooth_l1");
  if (!(beta > 0.0)) throw ParameterError("smooth_l1 beta must be positive");
  if (a.numel() == 0) throw DegenerateInputError("smooth_l1 of empty tensors");
  const auto av = a.values();
  const auto bv = b.values();
  double total = 0.0;
  for (std::size_t i = 0; i < av.size(); ++i) {
    const double d = av[i] - bv[i];
    const double ad = std::abs(d);
    total += ad < beta ? 0.5 * d * d / beta : ad - 0.5 * beta;
  }
  const double n = static_cast<double>(av.size());
  return Tensor::make_result({}, {total / n}, {a, b}, [beta, n](Node& self) {
    const auto& av = parent_value(self, 0);
    const auto& bv = parent_value(self, 1);
    auto* ga = parent_grad(self, 0);
    auto* gb = parent_grad(self, 1);
    const double s = self.grad[0] / n;
    for (std::size_t i = 0; i < av.size(); ++i) {
      const double d = av[i] - bv[i];
      const double dd = std::abs(d) < beta ? d / beta : (d > 0 ? 1.0 : -1.0);
      if (ga) (*ga)[i] += s * dd;
      if (gb) (*gb)[i] -= s * dd;
    }
  });
}

Tensor layernorm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  require_rank2(x, "layernorm");
  const std::size_t n = x.dim(0), d = x.dim(1);
  if (gamma.numel() != d || beta.numel() != d) {
    throw DimensionError("layernorm: affine parameters do not match width " + std::to_string(d));
  }
  const auto xv = x.values();
  const auto gv = gamma.values();
  const auto bv = beta.values();
  std::vector<double> y(xv.size()), xhat(xv.size()), rstd(n);
  for (std::size_t r = 0; r < n; ++r) {
    double mu = 0.0;
    for (std::size_t c = 0; c < d; ++c) mu += xv[r * d + c];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t c = 0; c < d; ++c) {
      const double t = xv[r * d + c] - mu;
      var += t * t;
    }
    var /= static_cast<double>(d);
    rstd[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t c = 0; c < d; ++c) {
      const std::size_t i = r * d + c;
      xhat[i] = (xv[i] - mu) * rstd[r];
      y[i] = xhat[i] * gv[c] + bv[c];
    }
  }
  return Tensor::make_result(
      x.shape(), std::move(y), {x, gamma, beta},
      [n, d, xhat = std::move(xhat), rstd = std::move(rstd)](Node& self) {
        const auto& gv = parent_value(self, 1);
        const auto& dy = self.grad;
        if (auto* gx = parent_grad(self, 0)) {
          for (std::size_t r = 0; r < n; ++r) {
            double s1 = 0.0, s2 = 0.0;
            for (std::size_t c = 0; c < d; ++c) {
              const double dxh = dy[r * d + c] * gv[c];
              s1 += dxh;
              s2 += dxh * xhat[r * d + c];
            }
            const double inv_d = 1.0 / static_cast<double>(d);
            for (std::size_t c = 0; c < d; ++c) {
              const std::size_t i = r * d + c;
              const double dxh = dy[i] * gv[c];
              (*gx)[i] += rstd[r] * (dxh - inv_d * s1 - xhat[i] * inv_d * s2);
            }
          }
        }
        if (auto* gg = parent_grad(self, 1)) {
          for (std::size_t i = 0; i < dy.size(); ++i) (*gg)[i % d] += dy[i] * xhat[i];
        }
        if (auto* gb = parent_grad(self, 2)) {
          for (std::size_t i = 0; i < dy.size(); ++i) (*gb)[i % d] += dy[i];
        }
      });
}

Tensor gelu(const Tensor& x) {
  constexpr double kInvSqrt2 = 0.70710678118654752440;
  const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
  return unary(
      x, [](double v) { return 0.5 * v * (1.0 + std::erf(v * kInvSqrt2)); },
      [inv_sqrt_2pi](double v, double) {
        return 0.5 * (1.0 + std::erf(v * kInvSqrt2)) + v * inv_sqrt_2pi * std::exp(-0.5 * v * v);
      });
}

Tensor relu(const Tensor& x) {
  return unary(x, [](double v) { return v > 0.0 ? v : 0.0; },
               [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor tanh(const Tensor& x) {
  return unary(x, [](double v) { return std::tanh(v); },
               [](double, double y) { return 1.0 - y * y; });
}

Tensor log(const Tensor& x, double floor) {
  if (!(floor >= 0.0)) throw ParameterError("log floor must be non-negative");
  return unary(
      x, [floor](double v) { return std::log(std::max(v, floor)); },
      [floor](double v, double) { return v > floor ? 1.0 / v : 0.0; });
}

Tensor sigmoid(const Tensor& x) {
  return unary(
      x,
      [](double v) {
        if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor dropout(const Tensor& x, double p, Rng& rng, bool training) {
  if (!(p >= 0.0 && p < 1.0)) throw ParameterError("dropout rate must lie in [0, 1)");
  if (!training || p == 0.0) return x;
  const double keep = 1.0 - p;
  std::vector<double> mask(x.numel());
  for (double& m : mask) m = rng.uniform() < keep ? 1.0 / keep : 0.0;
  const auto xv = x.values();
  std::vector<double> y(xv.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = xv[i] * mask[i];
  return Tensor::make_result(x.shape(), std::move(y), {x}, [mask = std::move(mask)](Node& self) {
    auto* g = parent_grad(self, 0);
    if (!g) return;
    for (std::size_t i = 0; i < mask.size(); ++i) (*g)[i] += self.grad[i] * mask[i];
  });
}

Tensor l2_normalize(const Tensor& x, double eps) {
  const std::size_t n = x.rank() < 2 ? 1 : x.dim(0);
  const std::size_t d = n ? x.numel() / n : 0;
  const auto xv = x.values();
  std::vector<double> y(xv.size()), norms(n);
  for (std::size_t r = 0; r < n; ++r) {
    double ss = 0.0;
    for (std::size_t c = 0; c < d; ++c) ss += xv[r * d + c] * xv[r * d + c];
    norms[r] = std::sqrt(ss);
    const double denom = std::max(norms[r], eps);
    for (std::size_t c = 0; c < d; ++c) y[r * d + c] = xv[r * d + c] / denom;
  }
  return Tensor::make_result(
      x.shape(), std::move(y), {x}, [n, d, eps, norms = std::move(norms)](Node& self) {
        auto* g = parent_grad(self, 0);
        if (!g) return;
        for (std::size_t r = 0; r < n; ++r) {
          if (norms[r] <= eps) {
            for (std::size_t c = 0; c < d; ++c) (*g)[r * d + c] += self.grad[r * d + c] / eps;
            continue;
          }
          double dot = 0.0;
          for (std::size_t c = 0; c < d; ++c) dot += self.grad[r * d + c] * self.value[r * d + c];
          for (std::size_t c = 0; c < d; ++c) {
            const std::size_t i = r * d + c;
            (*g)[i] += (self.grad[i] - self.value[i] * dot) / norms[r];
          }
        }
      });
}

Tensor mask_replace(const Tensor& x, std::span<const std::uint8_t> mask, const Tensor& token) {
  require_rank2(x, "mask_replace");
  const std::size_t n = x.dim(0), d = x.dim(1);
  if (mask.size() != n || token.numel() != d) {
    throw DimensionError("mask_replace: mask of " + std::to_string(mask.size()) +
                         " rows / token of " + std::to_string(token.numel()) + " for " +
                         shape_string(x.shape()));
  }
  std::vector<std::uint8_t> m(mask.begin(), mask.end());
  std::vector<double> y(x.values().begin(), x.values().end());
  const auto tv = token.values();
  for (std::size_t r = 0; r < n; ++r) {
    if (m[r]) std::copy(tv.begin(), tv.end(), y.begin() + r * d);
  }
  return Tensor::make_result(x.shape(), std::move(y), {x, token},
                             [m = std::move(m), d](Node& self) {
                               auto* gx = parent_grad(self, 0);
                               auto* gt = parent_grad(self, 1);
                               for (std::size_t r = 0; r < m.size(); ++r) {
                                 for (std::size_t c = 0; c < d; ++c) {
                                   const double g = self.grad[r * d + c];
                                   if (m[r]) {
                                     if (gt) (*gt)[c] += g;
                                   } else if (gx) {
                                     (*gx)[r * d + c] += g;
                                   }
                                 }
                               }
                             });
}

std::vector<GridWeight> bilinear_grid_weights(std::size_t g_in, std::size_t g_out) {
  if (g_in == 0 || g_out == 0) throw DimensionError("bilinear resampling of an empty grid");
  auto axis = [g_in, g_out](std::size_t o) {
    double s = (static_cast<double>(o) + 0.5) * static_cast<double>(g_in) /
                   static_cast<double>(g_out) - 0.5;
    s = std::clamp(s, 0.0, static_cast<double>(g_in - 1));
    const auto i0 = static_cast<std::size_t>(std::floor(s));
    const std::size_t i1 = std::min(i0 + 1, g_in - 1);
    const double f = s - static_cast<double>(i0);
    return std::array<std::pair<std::size_t, double>, 2>{{{i0, 1.0 - f}, {i1, f}}};
  };
  std::vector<GridWeight> out;
  for (std::size_t oy = 0; oy < g_out; ++oy) {
    const auto wy = axis(oy);
    for (std::size_t ox = 0; ox < g_out; ++ox) {
      const auto wx = axis(ox);
      const std::size_t first = out.size();
      for (const auto& [iy, fy] : wy) {
        for (const auto& [ix, fx] : wx) {
          const double w = fy * fx;
          if (w == 0.0) continue;
          const std::size_t in = iy * g_in + ix;
          auto it = std::find_if(out.begin() + first, out.end(),
                                 [in](const GridWeight& gw) { return gw.in == in; });
          if (it != out.end()) {
            it->weight += w;
          } else {
            out.push_back({oy * g_out + ox, in, w});
          }
        }
      }
    }
  }
  return out;
}

Tensor resample_grid(const Tensor& x, std::size_t g_in, std::size_t g_out) {
  require_rank2(x, "resample_grid");
  if (x.dim(0) != g_in * g_in) {
    throw DimensionError("resample_grid: " + std::to_string(x.dim(0)) +
                         " tokens do not form a " + std::to_string(g_in) + "x" +
                         std::to_string(g_in) + " grid");
  }
  if (g_in == g_out) return x;
  const std::size_t d = x.dim(1);
  auto weights = bilinear_grid_weights(g_in, g_out);
  std::vector<double> y(g_out * g_out * d, 0.0);
  const auto xv = x.values();
  for (const auto& w : weights)
    for (std::size_t c = 0; c < d; ++c) y[w.out * d + c] += w.weight * xv[w.in * d + c];
  return Tensor::make_result({g_out * g_out, d}, std::move(y), {x},
                             [weights = std::move(weights), d](Node& self) {
                               auto* g = parent_grad(self, 0);
                               if (!g) return;
                               for (const auto& w : weights)
                                 for (std::size_t c = 0; c < d; ++c)
                                   (*g)[w.in * d + c] += w.weight * self.grad[w.out * d + c];
                             });
}

Tensor multi_head_attention(const Tensor& qkv, std::size_t batch, std::size_t tokens,
                            std::size_t heads) {
  require_rank2(qkv, "multi_head_attention");
  if (heads == 0 || qkv.dim(0) != batch * tokens || qkv.dim(1) % (3 * heads) != 0) {
    throw DimensionError("multi_head_attention: qkv " + shape_string(qkv.shape()) +
                         " incompatible with batch " + std::to_string(batch) + ", tokens " +
                         std::to_string(tokens) + ", heads " + std::to_string(heads));
  }
  const Eigen::Index bt = qkv.dim(0);
  const Eigen::Index dim = qkv.dim(1) / 3;
  const Eigen::Index dh = dim / heads;
  const Eigen::Index t = tokens;
  const double sc = 1.0 / std::sqrt(static_cast<double>(dh));

  CMap in(qkv.values().data(), bt, 3 * dim);
  std::vector<double> y(static_cast<std::size_t>(bt * dim));
  MMap out(y.data(), bt, dim);
  // Attention probabilities per (batch, head), kept for the backward pass.
  std::vector<double> probs(batch * heads * tokens * tokens);
  RowMat s(t, t);
  for (std::size_t b = 0; b < batch; ++b) {
    const Eigen::Index r0 = b * t;
    for (std::size_t h = 0; h < heads; ++h) {
      const Eigen::Index c0 = h * dh;
      auto q = in.block(r0, c0, t, dh);
      auto k = in.block(r0, dim + c0, t, dh);
      auto v = in.block(r0, 2 * dim + c0, t, dh);
      s.noalias() = (q * k.transpose()) * sc;
      for (Eigen::Index i = 0; i < t; ++i) {
        const double mx = s.row(i).maxCoeff();
        s.row(i) = (s.row(i).array() - mx).exp();
        s.row(i) /= s.row(i).sum();
      }
      MMap(probs.data() + (b * heads + h) * tokens * tokens, t, t) = s;
      out.block(r0, c0, t, dh).noalias() = s * v;
    }
  }
  return Tensor::make_result(
      {qkv.dim(0), static_cast<std::size_t>(dim)}, std::move(y), {qkv},
      [batch, heads, bt, dim, dh, t, sc, probs = std::move(probs)](Node& self) {
        auto* g = parent_grad(self, 0);
        if (!g) return;
        CMap in(parent_value(self, 0).data(), bt, 3 * dim);
        CMap dout(self.grad.data(), bt, dim);
        MMap gin(g->data(), bt, 3 * dim);
        RowMat dp(t, t);
        for (std::size_t b = 0; b < batch; ++b) {
          const Eigen::Index r0 = b * t;
          for (std::size_t h = 0; h < heads; ++h) {
            const Eigen::Index c0 = h * dh;
            CMap p(probs.data() + (b * heads + h) * t * t, t, t);
            auto q = in.block(r0, c0, t, dh);
            auto k = in.block(r0, dim + c0, t, dh);
            auto v = in.block(r0, 2 * dim + c0, t, dh);
            auto d_o = dout.block(r0, c0, t, dh);
            gin.block(r0, 2 * dim + c0, t, dh).noalias() += p.transpose() * d_o;
            dp.noalias() = d_o * v.transpose();
            for (Eigen::Index i = 0; i < t; ++i) {
              const double dot = dp.row(i).dot(p.row(i));
              dp.row(i) = p.row(i).array() * (dp.row(i).array() - dot);
            }
            gin.block(r0, c0, t, dh).noalias() += (dp * k) * sc;
            gin.block(r0, dim + c0, t, dh).noalias() += (dp.transpose() * q) * sc;
          }
        }
      });
}

}  // namespace ukd::num
