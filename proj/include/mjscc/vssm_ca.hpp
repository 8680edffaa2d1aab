#pragma once

#include <cstddef>
#include <string>

#include "mjscc/gssm.hpp"
#include "mjscc/params.hpp"
#include "mjscc/ssm.hpp"

namespace mjscc::vssm {

struct BlockShape {
  std::size_t width = 32;      // d, the stage width
  std::size_t expand = 2;      // E, inner width is E*d
  std::size_t conv_kernel = 3;
  std::size_t mlp_ratio = 2;
  std::size_t state_dim = 8;   // N
  std::size_t gen_dim = 2;     // O

  std::size_t inner() const { return expand * width; }
};

/// Parameters of one VSSM-CA block.
///
/// Branch 1: norm1 -> in_proj -> depthwise conv -> SiLU -> dual GSSM with
/// CSI-ReST plus (D1 + D2) * input. Branch 2: norm1 -> gate_proj -> SiLU.
/// The product goes through out_proj into a residual, then a pre-norm channel
/// MLP with its own residual.
struct VssmCaParams {
  BlockShape shape;
  LayerNormParams norm1;
  LinearParams in_proj;
  Tensor conv_kernel;  // [E*d x k x k]
  Tensor conv_bias;    // [E*d]
  ssm::SsmBank forward_ssm;
  ssm::SsmBank reverse_ssm;
  Tensor d1;  // [E*d]
  Tensor d2;  // [E*d]
  LinearParams gate_proj;
  LinearParams out_proj;
  LayerNormParams norm2;
  LinearParams mlp_in;
  LinearParams mlp_out;

  static VssmCaParams init(const BlockShape& shape, Rng& rng);
  void collect(const std::string& prefix, ParamSet& set) const;
};

/// tokens: [H*W x d], row-major raster order. Returns the same shape.
Tensor vssm_ca_tokens(const VssmCaParams& p, const Tensor& tokens, std::size_t height,
                      std::size_t width, double snr_db, const gssm::CsiRestConfig& csi);

/// patches: [d x H x W]. Returns the same shape.
Tensor vssm_ca_forward(const VssmCaParams& p, const Tensor& patches, double snr_db,
                       const gssm::CsiRestConfig& csi);

}  // namespace mjscc::vssm
