#include "mjscc/ops.hpp"

#include <cmath>
#include <numeric>

#include <Eigen/Dense>

#include "mjscc/macs.hpp"

namespace mjscc::ops {

namespace {

using detail::Node;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowMap = Eigen::Map<RowMatrix>;
using ConstRowMap = Eigen::Map<const RowMatrix>;

void accumulate(Node& parent, std::size_t i, double value) {
  if (parent.requires_grad) parent.grad_buffer()[i] += value;
}

double sigmoid(double v) {
  if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
  const double e = std::exp(v);
  return e / (1.0 + e);
}

double softplus_value(double v) {
  // ln(1 + e^v) without overflow for large |v|.
  return v > 0 ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v));
}

// Elementwise unary op with derivative expressed from (input, output).
template <typename Fn, typename Deriv>
Tensor unary(const Tensor& x, Fn fn, Deriv deriv) {
  const auto in = x.data();
  std::vector<double> out(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = fn(in[i]);
  return Tensor::make_result(x.shape(), std::move(out), {x}, [deriv](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    auto& g = p.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * deriv(p.data[i], self.data[i]);
  });
}

struct BinaryLayout {
  Shape shape;
  bool a_scalar;
  bool b_scalar;
};

BinaryLayout binary_layout(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() == b.shape()) return {a.shape(), false, false};
  if (b.numel() == 1) return {a.shape(), false, true};
  if (a.numel() == 1) return {b.shape(), true, false};
  throw DimensionError(std::string(op) + ": incompatible shapes " + shape_str(a.shape()) +
                       " and " + shape_str(b.shape()));
}

// da = d out/d a (a, b), db = d out/d b (a, b).
template <typename Fn, typename DA, typename DB>
Tensor binary(const Tensor& a, const Tensor& b, const char* name, Fn fn, DA da, DB db) {
  const BinaryLayout layout = binary_layout(a, b, name);
  const std::size_t n = shape_numel(layout.shape);
  const auto av = a.data();
  const auto bv = b.data();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = fn(av[layout.a_scalar ? 0 : i], bv[layout.b_scalar ? 0 : i]);
  }
  return Tensor::make_result(layout.shape, std::move(out), {a, b}, [layout, da, db](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      const std::size_t ia = layout.a_scalar ? 0 : i;
      const std::size_t ib = layout.b_scalar ? 0 : i;
      const double x = pa.data[ia];
      const double y = pb.data[ib];
      accumulate(pa, ia, self.grad[i] * da(x, y));
      accumulate(pb, ib, self.grad[i] * db(x, y));
    }
  });
}

void require_rank(const Tensor& x, std::size_t rank, const char* op) {
  if (x.rank() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                         shape_str(x.shape()));
  }
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw DimensionError("matmul: inner extents differ " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()));
  }
  std::vector<double> out(m * n, 0.0);
  RowMap(out.data(), m, n).noalias() = ConstRowMap(a.data().data(), m, k) * ConstRowMap(b.data().data(), k, n);
  macs::tally(m * k * n);
  return Tensor::make_result({m, n}, std::move(out), {a, b}, [m, k, n](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    const ConstRowMap g(self.grad.data(), m, n);
    if (pa.requires_grad) {
      RowMap(pa.grad_buffer().data(), m, k).noalias() += g * ConstRowMap(pb.data.data(), k, n).transpose();
    }
    if (pb.requires_grad) {
      RowMap(pb.grad_buffer().data(), k, n).noalias() += ConstRowMap(pa.data.data(), m, k).transpose() * g;
    }
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "add", [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
      [](double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "sub", [](double x, double y) { return x - y; }, [](double, double) { return 1.0; },
      [](double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "mul", [](double x, double y) { return x * y; }, [](double, double y) { return y; },
      [](double x, double) { return x; });
}

Tensor div(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "div", [](double x, double y) { return x / y; },
      [](double, double y) { return 1.0 / y; }, [](double x, double y) { return -x / (y * y); });
}

Tensor neg(const Tensor& x) {
  return unary(x, [](double v) { return -v; }, [](double, double) { return -1.0; });
}

Tensor scale(const Tensor& x, double factor) {
  return unary(
      x, [factor](double v) { return factor * v; }, [factor](double, double) { return factor; });
}

Tensor add_scalar(const Tensor& x, double offset) {
  return unary(
      x, [offset](double v) { return v + offset; }, [](double, double) { return 1.0; });
}

Tensor exp(const Tensor& x) {
  return unary(x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& x) {
  return unary(x, [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

Tensor square(const Tensor& x) {
  return unary(x, [](double v) { return v * v; }, [](double v, double) { return 2.0 * v; });
}

Tensor relu(const Tensor& x) {
  return unary(
      x, [](double v) { return v > 0 ? v : 0.0; }, [](double v, double) { return v > 0 ? 1.0 : 0.0; });
}

Tensor silu(const Tensor& x) {
  return unary(
      x, [](double v) { return v * sigmoid(v); },
      [](double v, double) {
        const double s = sigmoid(v);
        return s * (1.0 + v * (1.0 - s));
      });
}

Tensor softplus(const Tensor& x) {
  return unary(x, softplus_value, [](double v, double) { return sigmoid(v); });
}

Tensor pow_scalar(const Tensor& x, double p) {
  return unary(
      x, [p](double v) { return std::pow(v, p); },
      [p](double v, double) { return p * std::pow(v, p - 1.0); });
}

Tensor sum(const Tensor& x) {
  const auto v = x.data();
  const double total = std::accumulate(v.begin(), v.end(), 0.0);
  return Tensor::make_result({1}, {total}, {x}, [](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    auto& g = p.grad_buffer();
    for (double& gi : g) gi += self.grad[0];
  });
}

Tensor mean(const Tensor& x) { return scale(sum(x), 1.0 / static_cast<double>(x.numel())); }

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw DimensionError("reshape: " + shape_str(x.shape()) + " -> " + shape_str(shape));
  }
  std::vector<double> out(x.data().begin(), x.data().end());
  return Tensor::make_result(std::move(shape), std::move(out), {x}, [](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    auto& g = p.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

Tensor transpose(const Tensor& x) {
  require_rank(x, 2, "transpose");
  const std::size_t rows = x.dim(0), cols = x.dim(1);
  const auto v = x.data();
  std::vector<double> out(v.size());
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) out[c * rows + r] = v[r * cols + c];
  return Tensor::make_result({cols, rows}, std::move(out), {x}, [rows, cols](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    auto& g = p.grad_buffer();
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < cols; ++c) g[r * cols + c] += self.grad[c * rows + r];
  });
}

Tensor gather(const Tensor& x, const std::vector<std::size_t>& index, Shape shape) {
  if (shape_numel(shape) != index.size()) {
    throw DimensionError("gather: index length " + std::to_string(index.size()) +
                         " does not match " + shape_str(shape));
  }
  const auto v = x.data();
  std::vector<double> out(index.size());
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] >= v.size()) throw DimensionError("gather: index out of range");
    out[i] = v[index[i]];
  }
  return Tensor::make_result(std::move(shape), std::move(out), {x}, [index](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    auto& g = p.grad_buffer();
    for (std::size_t i = 0; i < index.size(); ++i) g[index[i]] += self.grad[i];
  });
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  require_rank(x, 2, "linear");
  require_rank(w, 2, "linear");
  const std::size_t rows = x.dim(0), in = x.dim(1), out_dim = w.dim(1);
  if (w.dim(0) != in || b.numel() != out_dim) {
    throw DimensionError("linear: x " + shape_str(x.shape()) + ", w " + shape_str(w.shape()) +
                         ", b " + shape_str(b.shape()));
  }
  std::vector<double> out(rows * out_dim);
  RowMap o(out.data(), rows, out_dim);
  o.rowwise() = Eigen::Map<const Eigen::RowVectorXd>(b.data().data(), out_dim);
  o.noalias() += ConstRowMap(x.data().data(), rows, in) * ConstRowMap(w.data().data(), in, out_dim);
  macs::tally(rows * in * out_dim);
  return Tensor::make_result({rows, out_dim}, std::move(out), {x, w, b},
                             [rows, in, out_dim](Node& self) {
    Node& px = *self.parents[0];
    Node& pw = *self.parents[1];
    Node& pb = *self.parents[2];
    const ConstRowMap g(self.grad.data(), rows, out_dim);
    if (px.requires_grad) {
      RowMap(px.grad_buffer().data(), rows, in).noalias() += g * ConstRowMap(pw.data.data(), in, out_dim).transpose();
    }
    if (pw.requires_grad) {
      RowMap(pw.grad_buffer().data(), in, out_dim).noalias() += ConstRowMap(px.data.data(), rows, in).transpose() * g;
    }
    if (pb.requires_grad) {
      Eigen::Map<Eigen::RowVectorXd>(pb.grad_buffer().data(), out_dim) += g.colwise().sum();
    }
  });
}

Tensor scale_rows(const Tensor& x, const Tensor& v) {
  require_rank(x, 2, "scale_rows");
  const std::size_t rows = x.dim(0), cols = x.dim(1);
  if (v.numel() != rows) {
    throw DimensionError("scale_rows: " + shape_str(x.shape()) + " by " + shape_str(v.shape()));
  }
  const auto xv = x.data();
  const auto vv = v.data();
  std::vector<double> out(xv.size());
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] = xv[r * cols + c] * vv[r];
  return Tensor::make_result(x.shape(), std::move(out), {x, v}, [rows, cols](Node& self) {
    Node& px = *self.parents[0];
    Node& pv = *self.parents[1];
    for (std::size_t r = 0; r < rows; ++r) {
      double acc = 0.0;
      for (std::size_t c = 0; c < cols; ++c) {
        const std::size_t i = r * cols + c;
        accumulate(px, i, self.grad[i] * pv.data[r]);
        acc += self.grad[i] * px.data[i];
      }
      accumulate(pv, r, acc);
    }
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  const std::size_t d = x.shape().back();
  if (gamma.numel() != d || beta.numel() != d) {
    throw DimensionError("layer_norm: feature width " + std::to_string(d) + " vs gamma " +
                         shape_str(gamma.shape()) + ", beta " + shape_str(beta.shape()));
  }
  if (!(eps > 0)) throw ContractError("layer_norm: eps must be positive");
  const std::size_t rows = x.numel() / d;
  const auto xv = x.data();
  const auto gv = gamma.data();
  const auto bv = beta.data();
  std::vector<double> out(xv.size());
  std::vector<double> normalized(xv.size());
  std::vector<double> inv_std(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = &xv[r * d];
    double mu = 0.0;
    for (std::size_t j = 0; j < d; ++j) mu += row[j];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<double>(d);
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < d; ++j) {
      const double xh = (row[j] - mu) * inv_std[r];
      normalized[r * d + j] = xh;
      out[r * d + j] = gv[j] * xh + bv[j];
    }
  }
  return Tensor::make_result(
      x.shape(), std::move(out), {x, gamma, beta},
      [rows, d, normalized = std::move(normalized), inv_std = std::move(inv_std)](Node& self) {
        Node& px = *self.parents[0];
        Node& pg = *self.parents[1];
        Node& pb = *self.parents[2];
        const auto& g = self.grad;
        for (std::size_t r = 0; r < rows; ++r) {
          double sum_gxh = 0.0;
          double sum_gxh_xh = 0.0;
          for (std::size_t j = 0; j < d; ++j) {
            const std::size_t i = r * d + j;
            const double gxh = g[i] * pg.data[j];
            sum_gxh += gxh;
            sum_gxh_xh += gxh * normalized[i];
            accumulate(pg, j, g[i] * normalized[i]);
            accumulate(pb, j, g[i]);
          }
          if (!px.requires_grad) continue;
          auto& gx = px.grad_buffer();
          const double inv_d = 1.0 / static_cast<double>(d);
          for (std::size_t j = 0; j < d; ++j) {
            const std::size_t i = r * d + j;
            const double gxh = g[i] * pg.data[j];
            gx[i] += inv_std[r] * (gxh - inv_d * sum_gxh - normalized[i] * inv_d * sum_gxh_xh);
          }
        }
      });
}

Tensor depthwise_conv2d(const Tensor& x, std::size_t height, std::size_t width,
                        const Tensor& kernel, const Tensor& bias) {
  require_rank(kernel, 3, "depthwise_conv2d");
  const std::size_t channels = kernel.dim(0);
  const std::size_t k = kernel.dim(1);
  if (kernel.dim(2) != k || k % 2 == 0) {
    throw DimensionError("depthwise_conv2d: kernel must be odd square, got " +
                         shape_str(kernel.shape()));
  }
  if (x.numel() != channels * height * width || bias.numel() != channels) {
    throw DimensionError("depthwise_conv2d: x " + shape_str(x.shape()) + " vs " +
                         std::to_string(channels) + " channels of " + std::to_string(height) +
                         "x" + std::to_string(width));
  }
  const auto pad = static_cast<std::ptrdiff_t>(k / 2);
  const auto H = static_cast<std::ptrdiff_t>(height);
  const auto W = static_cast<std::ptrdiff_t>(width);
  const auto K = static_cast<std::ptrdiff_t>(k);
  const auto xv = x.data();
  const auto kv = kernel.data();
  const auto bv = bias.data();
  std::vector<double> out(xv.size());
  for (std::size_t c = 0; c < channels; ++c) {
    const double* plane = &xv[c * height * width];
    const double* ker = &kv[c * k * k];
    for (std::ptrdiff_t i = 0; i < H; ++i) {
      for (std::ptrdiff_t j = 0; j < W; ++j) {
        double acc = bv[c];
        for (std::ptrdiff_t di = 0; di < K; ++di) {
          const std::ptrdiff_t si = i + di - pad;
          if (si < 0 || si >= H) continue;
          for (std::ptrdiff_t dj = 0; dj < K; ++dj) {
            const std::ptrdiff_t sj = j + dj - pad;
            if (sj < 0 || sj >= W) continue;
            acc += ker[di * K + dj] * plane[si * W + sj];
          }
        }
        out[c * height * width + static_cast<std::size_t>(i * W + j)] = acc;
      }
    }
  }
  macs::tally(channels * height * width * k * k);
  return Tensor::make_result(x.shape(), std::move(out), {x, kernel, bias},
                             [channels, height, width, k, pad, H, W, K](Node& self) {
    Node& px = *self.parents[0];
    Node& pk = *self.parents[1];
    Node& pb = *self.parents[2];
    const auto& g = self.grad;
    for (std::size_t c = 0; c < channels; ++c) {
      const std::size_t base = c * height * width;
      for (std::ptrdiff_t i = 0; i < H; ++i) {
        for (std::ptrdiff_t j = 0; j < W; ++j) {
          const double go = g[base + static_cast<std::size_t>(i * W + j)];
          if (go == 0.0) continue;
          accumulate(pb, c, go);
          for (std::ptrdiff_t di = 0; di < K; ++di) {
            const std::ptrdiff_t si = i + di - pad;
            if (si < 0 || si >= H) continue;
            for (std::ptrdiff_t dj = 0; dj < K; ++dj) {
              const std::ptrdiff_t sj = j + dj - pad;
              if (sj < 0 || sj >= W) continue;
              const std::size_t xi = base + static_cast<std::size_t>(si * W + sj);
              const std::size_t ki = c * k * k + static_cast<std::size_t>(di * K + dj);
              accumulate(pk, ki, go * px.data[xi]);
              accumulate(px, xi, go * pk.data[ki]);
            }
          }
        }
      }
    }
  });
}

Tensor power_normalize(const Tensor& x) {
  if (x.numel() % 2 != 0) throw DimensionError("power_normalize: odd number of reals");
  const auto v = x.data();
  const double symbols = static_cast<double>(v.size() / 2);
  double energy = 0.0;
  for (double e : v) energy += e * e;
  if (energy == 0.0) return Tensor::make_result(x.shape(), std::vector<double>(v.size(), 0.0), {x}, {});
  const double factor = std::sqrt(symbols / energy);
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] * factor;
  return Tensor::make_result(x.shape(), std::move(out), {x}, [factor, energy](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    // out_i = x_i * sqrt(K) * E^{-1/2}, dE/dx_j = 2 x_j.
    double dot = 0.0;
    for (std::size_t i = 0; i < self.grad.size(); ++i) dot += self.grad[i] * p.data[i];
    auto& g = p.grad_buffer();
    for (std::size_t j = 0; j < g.size(); ++j) {
      g[j] += factor * self.grad[j] - factor * dot * p.data[j] / energy;
    }
  });
}

Tensor complex_mul_const(const Tensor& x, const std::vector<double>& coeffs) {
  if (x.numel() != coeffs.size() || x.numel() % 2 != 0) {
    throw DimensionError("complex_mul_const: length mismatch");
  }
  const auto v = x.data();
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < v.size(); i += 2) {
    const double cr = coeffs[i], ci = coeffs[i + 1];
    out[i] = cr * v[i] - ci * v[i + 1];
    out[i + 1] = cr * v[i + 1] + ci * v[i];
  }
  return Tensor::make_result(x.shape(), std::move(out), {x}, [coeffs](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    auto& g = p.grad_buffer();
    for (std::size_t i = 0; i < g.size(); i += 2) {
      const double cr = coeffs[i], ci = coeffs[i + 1];
      const double gr = self.grad[i], gi = self.grad[i + 1];
      g[i] += cr * gr + ci * gi;
      g[i + 1] += -ci * gr + cr * gi;
    }
  });
}

}  // namespace mjscc::ops
