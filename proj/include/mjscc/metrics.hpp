#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include "mjscc/tensor.hpp"

namespace mjscc::metrics {

inline constexpr double kDbCap = 100.0;

double mse(const Tensor& x, const Tensor& y);
/// 10 log10(max^2 / MSE), capped at 100 dB.
double psnr(const Tensor& x, const Tensor& y, double max_val = 1.0);

struct MsssimOptions {
  std::size_t window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double data_range = 1.0;
};

inline constexpr std::array<double, 5> kMsssimWeights = {0.0448, 0.2856, 0.3001, 0.2363, 0.1333};

/// 5 when the smaller side is >= 176, else the largest s with
/// min(H, W) >= 2^(s-1) * window. Throws DimensionError when even one scale
/// does not fit.
std::size_t msssim_scales(std::size_t height, std::size_t width, std::size_t window = 11);
/// First `scales` standard weights, renormalized to sum to 1.
std::vector<double> msssim_weights(std::size_t scales);

/// Per-scale means of the luminance*contrast*structure map and of the
/// contrast*structure map for one [H x W] plane, valid Gaussian filtering.
struct SsimTerms {
  double ssim = 0.0;
  double cs = 0.0;
};
SsimTerms ssim_plane(const std::vector<double>& x, const std::vector<double>& y, std::size_t height,
                     std::size_t width, const MsssimOptions& opt = {});

/// Mean over channels of prod_{j<M} cs_j^{w_j} * ssim_M^{w_M} on [C x H x W]
/// images, with 2x2 average pooling between scales and negative terms
/// clamped to 0.
double msssim(const Tensor& x, const Tensor& y, const MsssimOptions& opt = {});
/// -10 log10(1 - m), capped at 100 dB.
double msssim_db(double m);

/// Differentiable 1 - MS-SSIM(x, y) with the same definition (gradient to both).
Tensor msssim_loss(const Tensor& x, const Tensor& y, const MsssimOptions& opt = {});
/// Differentiable mean squared error.
Tensor mse_loss(const Tensor& x, const Tensor& y);

struct MetricReport {
  double mse = 0.0;
  double psnr_db = 0.0;
  double msssim = 0.0;
  double msssim_db = 0.0;
};

MetricReport evaluate(const Tensor& reference, const Tensor& reconstruction);

}  // namespace mjscc::metrics
