#include "mjscc/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "mjscc/ops.hpp"

namespace mjscc::metrics {

namespace {

void check_same(const Tensor& x, const Tensor& y, const char* op) {
  if (x.shape() != y.shape()) {
    throw DimensionError(std::string(op) + ": " + shape_str(x.shape()) + " vs " + shape_str(y.shape()));
  }
}

void check_image(const Tensor& x, const char* op) {
  if (x.rank() != 3) throw DimensionError(std::string(op) + ": expected [C x H x W], got " + shape_str(x.shape()));
}

std::vector<double> gaussian(const MsssimOptions& opt) {
  std::vector<double> g(opt.window);
  const double c = (static_cast<double>(opt.window) - 1.0) / 2.0;
  double total = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double d = static_cast<double>(i) - c;
    g[i] = std::exp(-d * d / (2.0 * opt.sigma * opt.sigma));
    total += g[i];
  }
  for (double& v : g) v /= total;
  return g;
}

std::vector<double> pool2(const std::vector<double>& x, std::size_t h, std::size_t w) {
  const std::size_t h2 = h / 2, w2 = w / 2;
  std::vector<double> out(h2 * w2);
  for (std::size_t i = 0; i < h2; ++i)
    for (std::size_t j = 0; j < w2; ++j)
      out[i * w2 + j] = 0.25 * (x[2 * i * w + 2 * j] + x[2 * i * w + 2 * j + 1] +
                                x[(2 * i + 1) * w + 2 * j] + x[(2 * i + 1) * w + 2 * j + 1]);
  return out;
}

// max(x, 0)^p with zero gradient on the clamped side.
Tensor clamped_pow(const Tensor& x, double p) {
  std::vector<double> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.at(i) > 0.0 ? std::pow(x.at(i), p) : 0.0;
  return Tensor::make_result(x.shape(), std::move(out), {x}, [p](detail::Node& self) {
    detail::Node& in = *self.parents[0];
    if (!in.requires_grad) return;
    auto& g = in.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (in.data[i] > 0.0) g[i] += self.grad[i] * p * std::pow(in.data[i], p - 1.0);
    }
  });
}

// Valid filtering with a separable window as two constant matrix products.
struct PlaneFilter {
  Tensor rows;  // [H' x H]
  Tensor cols;  // [W x W']

  PlaneFilter(const std::vector<double>& g, std::size_t h, std::size_t w) {
    const std::size_t k = g.size(), ho = h - k + 1, wo = w - k + 1;
    std::vector<double> r(ho * h, 0.0), c(w * wo, 0.0);
    for (std::size_t i = 0; i < ho; ++i)
      for (std::size_t t = 0; t < k; ++t) r[i * h + i + t] = g[t];
    for (std::size_t j = 0; j < wo; ++j)
      for (std::size_t t = 0; t < k; ++t) c[(j + t) * wo + j] = g[t];
    rows = Tensor::from({ho, h}, std::move(r));
    cols = Tensor::from({w, wo}, std::move(c));
  }
  Tensor operator()(const Tensor& x) const { return ops::matmul(ops::matmul(rows, x), cols); }
};

Tensor pool_matrix_rows(std::size_t n) {
  std::vector<double> v((n / 2) * n, 0.0);
  for (std::size_t i = 0; i < n / 2; ++i) v[i * n + 2 * i] = v[i * n + 2 * i + 1] = 0.5;
  return Tensor::from({n / 2, n}, std::move(v));
}

Tensor channel_plane(const Tensor& x, std::size_t c) {
  const std::size_t h = x.dim(1), w = x.dim(2);
  std::vector<std::size_t> index(h * w);
  for (std::size_t i = 0; i < h * w; ++i) index[i] = c * h * w + i;
  return ops::gather(x, index, {h, w});
}

}  // namespace

double mse(const Tensor& x, const Tensor& y) {
  check_same(x, y, "mse");
  double acc = 0.0;
  for (std::size_t i = 0; i < x.numel(); ++i) {
    const double d = x.at(i) - y.at(i);
    acc += d * d;
  }
  return acc / static_cast<double>(x.numel());
}

double psnr(const Tensor& x, const Tensor& y, double max_val) {
  const double e = mse(x, y);
  if (e == 0.0) return kDbCap;
  return std::min(kDbCap, 10.0 * std::log10(max_val * max_val / e));
}

std::size_t msssim_scales(std::size_t height, std::size_t width, std::size_t window) {
  const std::size_t m = std::min(height, width);
  if (m >= 176) return 5;
  std::size_t s = 0;
  while (s < 5 && m >= (std::size_t{1} << s) * window) ++s;
  if (s == 0) {
    throw DimensionError("msssim: " + std::to_string(height) + "x" + std::to_string(width) +
                         " is smaller than the " + std::to_string(window) + "-pixel window");
  }
  return s;
}

std::vector<double> msssim_weights(std::size_t scales) {
  std::vector<double> w(kMsssimWeights.begin(), kMsssimWeights.begin() + static_cast<std::ptrdiff_t>(scales));
  double total = 0.0;
  for (double v : w) total += v;
  for (double& v : w) v /= total;
  return w;
}

SsimTerms ssim_plane(const std::vector<double>& x, const std::vector<double>& y, std::size_t height,
                     std::size_t width, const MsssimOptions& opt) {
  const std::vector<double> g = gaussian(opt);
  const std::size_t k = opt.window;
  if (height < k || width < k) throw DimensionError("ssim_plane: plane smaller than window");
  const double c1 = std::pow(opt.k1 * opt.data_range, 2), c2 = std::pow(opt.k2 * opt.data_range, 2);
  double ssim_sum = 0.0, cs_sum = 0.0;
  const std::size_t ho = height - k + 1, wo = width - k + 1;
  for (std::size_t i = 0; i < ho; ++i)
    for (std::size_t j = 0; j < wo; ++j) {
      double mx = 0.0, my = 0.0, xx = 0.0, yy = 0.0, xy = 0.0;
      for (std::size_t a = 0; a < k; ++a)
        for (std::size_t b = 0; b < k; ++b) {
          const double wgt = g[a] * g[b];
          const double u = x[(i + a) * width + j + b], v = y[(i + a) * width + j + b];
          mx += wgt * u;
          my += wgt * v;
          xx += wgt * u * u;
          yy += wgt * v * v;
          xy += wgt * u * v;
        }
      const double vx = xx - mx * mx, vy = yy - my * my, cov = xy - mx * my;
      const double cs = (2.0 * cov + c2) / (vx + vy + c2);
      const double lum = (2.0 * mx * my + c1) / (mx * mx + my * my + c1);
      ssim_sum += lum * cs;
      cs_sum += cs;
    }
  const double n = static_cast<double>(ho * wo);
  return {ssim_sum / n, cs_sum / n};
}

double msssim(const Tensor& x, const Tensor& y, const MsssimOptions& opt) {
  check_same(x, y, "msssim");
  check_image(x, "msssim");
  const std::size_t C = x.dim(0);
  const std::size_t scales = msssim_scales(x.dim(1), x.dim(2), opt.window);
  const std::vector<double> w = msssim_weights(scales);
  double total = 0.0;
  for (std::size_t c = 0; c < C; ++c) {
    std::size_t h = x.dim(1), wd = x.dim(2);
    std::vector<double> a(x.data().begin() + c * h * wd, x.data().begin() + (c + 1) * h * wd);
    std::vector<double> b(y.data().begin() + c * h * wd, y.data().begin() + (c + 1) * h * wd);
    double value = 1.0;
    for (std::size_t s = 0; s < scales; ++s) {
      const SsimTerms t = ssim_plane(a, b, h, wd, opt);
      const double term = s + 1 == scales ? t.ssim : t.cs;
      value *= term > 0.0 ? std::pow(term, w[s]) : 0.0;
      if (s + 1 < scales) {
        a = pool2(a, h, wd);
        b = pool2(b, h, wd);
        h /= 2;
        wd /= 2;
      }
    }
    total += value;
  }
  return total / static_cast<double>(C);
}

double msssim_db(double m) {
  if (m >= 1.0) return kDbCap;
  return std::min(kDbCap, -10.0 * std::log10(1.0 - m));
}

Tensor msssim_loss(const Tensor& x, const Tensor& y, const MsssimOptions& opt) {
  check_same(x, y, "msssim_loss");
  check_image(x, "msssim_loss");
  const std::size_t C = x.dim(0);
  const std::size_t scales = msssim_scales(x.dim(1), x.dim(2), opt.window);
  const std::vector<double> w = msssim_weights(scales);
  const std::vector<double> g = gaussian(opt);
  const double c1 = std::pow(opt.k1 * opt.data_range, 2), c2 = std::pow(opt.k2 * opt.data_range, 2);

  Tensor total;
  for (std::size_t c = 0; c < C; ++c) {
    Tensor a = channel_plane(x, c), b = channel_plane(y, c);
    Tensor value;
    for (std::size_t s = 0; s < scales; ++s) {
      const PlaneFilter f(g, a.dim(0), a.dim(1));
      const Tensor mx = f(a), my = f(b);
      const Tensor mx2 = ops::square(mx), my2 = ops::square(my), mxy = ops::mul(mx, my);
      const Tensor vx = ops::sub(f(ops::square(a)), mx2);
      const Tensor vy = ops::sub(f(ops::square(b)), my2);
      const Tensor cov = ops::sub(f(ops::mul(a, b)), mxy);
      const Tensor cs = ops::div(ops::add_scalar(ops::scale(cov, 2.0), c2),
                                 ops::add_scalar(ops::add(vx, vy), c2));
      Tensor term;
      if (s + 1 == scales) {
        const Tensor lum = ops::div(ops::add_scalar(ops::scale(mxy, 2.0), c1),
                                    ops::add_scalar(ops::add(mx2, my2), c1));
        term = ops::mean(ops::mul(lum, cs));
      } else {
        term = ops::mean(cs);
      }
      const Tensor factor = clamped_pow(term, w[s]);
      value = s == 0 ? factor : ops::mul(value, factor);
      if (s + 1 < scales) {
        const Tensor pr = pool_matrix_rows(a.dim(0));
        const Tensor pc = ops::transpose(pool_matrix_rows(a.dim(1)));
        a = ops::matmul(ops::matmul(pr, a), pc);
        b = ops::matmul(ops::matmul(pr, b), pc);
      }
    }
    total = c == 0 ? value : ops::add(total, value);
  }
  return ops::add_scalar(ops::scale(total, -1.0 / static_cast<double>(C)), 1.0);
}

Tensor mse_loss(const Tensor& x, const Tensor& y) {
  check_same(x, y, "mse_loss");
  return ops::mean(ops::square(ops::sub(x, y)));
}

MetricReport evaluate(const Tensor& reference, const Tensor& reconstruction) {
  MetricReport r;
  r.mse = mse(reference, reconstruction);
  r.psnr_db = psnr(reference, reconstruction);
  r.msssim = msssim(reference, reconstruction);
  r.msssim_db = msssim_db(r.msssim);
  return r;
}

}  // namespace mjscc::metrics
