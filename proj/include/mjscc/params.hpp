#pragma once

#include <string>
#include <vector>

#include "mjscc/rng.hpp"
#include "mjscc/tensor.hpp"

namespace mjscc {

struct NamedParam {
  std::string name;
  Tensor tensor;
};

/// Ordered list of trainable tensors. Order is the registration order and is
/// what the checkpoint and optimizer use.
class ParamSet {
 public:
  void add(std::string name, const Tensor& tensor);
  const std::vector<NamedParam>& entries() const { return entries_; }
  std::vector<Tensor> tensors() const;
  /// Total scalar count.
  std::size_t numel() const;
  const Tensor& find(const std::string& name) const;
  void zero_grad();

 private:
  std::vector<NamedParam> entries_;
};

Tensor uniform_param(Shape shape, double bound, Rng& rng);

struct LinearParams {
  Tensor weight;  // [in x out]
  Tensor bias;    // [out]

  /// weight ~ U(+-1/sqrt(in)), bias = 0.
  static LinearParams init(std::size_t in, std::size_t out, Rng& rng);
  void collect(const std::string& prefix, ParamSet& set) const;
};

struct LayerNormParams {
  Tensor gamma;
  Tensor beta;

  static LayerNormParams init(std::size_t width);
  void collect(const std::string& prefix, ParamSet& set) const;
};

Tensor apply(const LinearParams& p, const Tensor& x);
Tensor apply(const LayerNormParams& p, const Tensor& x);

}  // namespace mjscc
