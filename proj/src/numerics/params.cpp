#include "mjscc/params.hpp"

#include <cmath>

#include "mjscc/ops.hpp"

namespace mjscc {

void ParamSet::add(std::string name, const Tensor& tensor) {
  entries_.push_back({std::move(name), tensor});
}

std::vector<Tensor> ParamSet::tensors() const {
  std::vector<Tensor> out;
  out.reserve(entries_.size());
  for (const auto& e : entries_) out.push_back(e.tensor);
  return out;
}

std::size_t ParamSet::numel() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.tensor.numel();
  return n;
}

const Tensor& ParamSet::find(const std::string& name) const {
  for (const auto& e : entries_)
    if (e.name == name) return e.tensor;
  throw std::out_of_range("no parameter named " + name);
}

void ParamSet::zero_grad() {
  for (auto& e : entries_) e.tensor.zero_grad();
}

Tensor uniform_param(Shape shape, double bound, Rng& rng) {
  std::vector<double> values(shape_numel(shape));
  rng.fill_uniform(values.data(), values.size(), -bound, bound);
  return Tensor::from(std::move(shape), std::move(values), true);
}

LinearParams LinearParams::init(std::size_t in, std::size_t out, Rng& rng) {
  return {uniform_param({in, out}, 1.0 / std::sqrt(static_cast<double>(in)), rng),
          Tensor::zeros({out}, true)};
}

void LinearParams::collect(const std::string& prefix, ParamSet& set) const {
  set.add(prefix + ".weight", weight);
  set.add(prefix + ".bias", bias);
}

LayerNormParams LayerNormParams::init(std::size_t width) {
  return {Tensor::full({width}, 1.0, true), Tensor::zeros({width}, true)};
}

void LayerNormParams::collect(const std::string& prefix, ParamSet& set) const {
  set.add(prefix + ".gamma", gamma);
  set.add(prefix + ".beta", beta);
}

Tensor apply(const LinearParams& p, const Tensor& x) { return ops::linear(x, p.weight, p.bias); }
Tensor apply(const LayerNormParams& p, const Tensor& x) { return ops::layer_norm(x, p.gamma, p.beta); }

}  // namespace mjscc
