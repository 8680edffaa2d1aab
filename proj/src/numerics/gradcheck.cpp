#include "mjscc/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace mjscc {

namespace {

double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / (std::abs(analytic) + std::abs(numeric) + 1e-12);
}

}  // namespace

double grad_check(const std::function<Tensor(const Tensor&)>& f, Tensor x, double eps) {
  return grad_check_params([&] { return f(x); }, {x}, {}, eps);
}

GradCheckReport grad_check_report(const std::function<Tensor()>& loss, std::vector<Tensor> params,
                                  std::vector<ProbeCoordinate> coords, double eps, double small) {
  if (coords.empty()) {
    for (std::size_t t = 0; t < params.size(); ++t)
      for (std::size_t i = 0; i < params[t].numel(); ++i) coords.push_back({t, i});
  }
  for (Tensor& p : params) {
    if (!p.requires_grad()) throw ContractError("grad_check: probed tensor must require grad");
    p.zero_grad();
  }
  loss().backward();
  std::vector<std::vector<double>> analytic;
  analytic.reserve(params.size());
  for (const Tensor& p : params) analytic.push_back(p.grad());

  GradCheckReport report;
  NoGradGuard no_grad;
  for (const auto& [t, i] : coords) {
    auto values = params[t].mutable_data();
    const double original = values[i];
    values[i] = original + eps;
    const double plus = loss().item();
    values[i] = original - eps;
    const double minus = loss().item();
    values[i] = original;
    const double numeric = (plus - minus) / (2.0 * eps);
    const double a = analytic[t][i];
    const double rel = relative_error(a, numeric);
    report.max_relative_all = std::max(report.max_relative_all, rel);
    if (std::max(std::abs(a), std::abs(numeric)) > small) {
      report.max_relative = std::max(report.max_relative, rel);
      ++report.large;
    } else {
      report.max_absolute = std::max(report.max_absolute, std::abs(a - numeric));
      ++report.small;
    }
  }
  for (Tensor& p : params) p.zero_grad();
  return report;
}

double grad_check_params(const std::function<Tensor()>& loss, std::vector<Tensor> params,
                         std::vector<ProbeCoordinate> coords, double eps) {
  return grad_check_report(loss, std::move(params), std::move(coords), eps).max_relative_all;
}

}  // namespace mjscc
