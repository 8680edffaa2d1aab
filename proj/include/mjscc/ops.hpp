#pragma once

#include <cstddef>
#include <vector>

#include "mjscc/tensor.hpp"

// Differentiable tensor operations. Binary elementwise ops accept equal shapes
// or a one-element tensor on either side; anything else is a DimensionError.
// The few row/column-wise ops below (linear, scale_rows, layer_norm) are named
// explicitly instead of relying on general broadcasting.
namespace mjscc::ops {

Tensor matmul(const Tensor& a, const Tensor& b);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);

Tensor neg(const Tensor& x);
Tensor scale(const Tensor& x, double factor);
Tensor add_scalar(const Tensor& x, double offset);
Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);
Tensor square(const Tensor& x);
Tensor relu(const Tensor& x);
Tensor silu(const Tensor& x);
Tensor softplus(const Tensor& x);
/// x^p elementwise for x > 0.
Tensor pow_scalar(const Tensor& x, double p);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

/// Same values, new shape with equal element count.
Tensor reshape(const Tensor& x, Shape shape);
/// 2D transpose.
Tensor transpose(const Tensor& x);
/// out.flat[i] = x.flat[index[i]]. Gradient scatters back (indices may repeat).
Tensor gather(const Tensor& x, const std::vector<std::size_t>& index, Shape shape);

/// x[rows x in] * w[in x out] + b[out].
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);
/// out[r, c] = x[r, c] * v[r] for x of rank 2.
Tensor scale_rows(const Tensor& x, const Tensor& v);
/// Normalizes the last axis to zero mean and unit variance, then gamma*x+beta.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double eps = 1e-5);
/// Depthwise 2D convolution, zero padding k/2. x: [C x H x W] (or [C x H*W]
/// with explicit height/width), kernel: [C x k x k], bias: [C].
Tensor depthwise_conv2d(const Tensor& x, std::size_t height, std::size_t width,
                        const Tensor& kernel, const Tensor& bias);

/// Scales a flat vector of interleaved (re, im) pairs to unit mean complex
/// power. An all-zero signal stays zero (and passes no gradient).
Tensor power_normalize(const Tensor& x);
/// Multiplies interleaved complex pairs by fixed complex coefficients
/// (interleaved, same length). Gradient flows to x only.
Tensor complex_mul_const(const Tensor& x, const std::vector<double>& coeffs);

}  // namespace mjscc::ops
