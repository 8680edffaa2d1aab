#pragma once

#include <functional>

#include "mjscc/tensor.hpp"

namespace mjscc {

/// Compares the reverse-mode gradient of scalar `f` at `x` against central
/// differences with step `eps`. Returns the max over coordinates of
/// |a - n| / (|a| + |n| + 1e-12). `x` must require grad; its values are
/// restored before returning.
double grad_check(const std::function<Tensor(const Tensor&)>& f, Tensor x, double eps = 1e-5);

/// Same check over a set of leaf tensors that `loss` reads implicitly
/// (e.g. model parameters). `coords` selects (tensor, flat index) pairs to
/// probe; an empty list probes every coordinate.
struct ProbeCoordinate {
  std::size_t tensor;
  std::size_t index;
};
double grad_check_params(const std::function<Tensor()>& loss, std::vector<Tensor> params,
                         std::vector<ProbeCoordinate> coords = {}, double eps = 1e-5);

/// Splits the comparison by gradient size. Coordinates where
/// max(|a|, |n|) > small contribute to max_relative; the rest contribute
/// |a - n| to max_absolute, since central differences carry roundoff of
/// roughly machine-eps * |f| / eps there.
struct GradCheckReport {
  double max_relative = 0.0;
  double max_absolute = 0.0;
  double max_relative_all = 0.0;  // the plain grad_check value
  std::size_t large = 0;
  std::size_t small = 0;
};
GradCheckReport grad_check_report(const std::function<Tensor()>& loss, std::vector<Tensor> params,
                                  std::vector<ProbeCoordinate> coords = {}, double eps = 1e-5,
                                  double small = 1e-6);

}  // namespace mjscc
