#include "mjscc/vssm_ca.hpp"

#include <cmath>

#include "mjscc/macs.hpp"
#include "mjscc/ops.hpp"

namespace mjscc::vssm {

VssmCaParams VssmCaParams::init(const BlockShape& shape, Rng& rng) {
  const std::size_t d = shape.width;
  const std::size_t inner = shape.inner();
  const std::size_t k = shape.conv_kernel;
  VssmCaParams p;
  p.shape = shape;
  p.norm1 = LayerNormParams::init(d);
  p.in_proj = LinearParams::init(d, inner, rng);
  p.conv_kernel = uniform_param({inner, k, k}, 1.0 / static_cast<double>(k), rng);
  p.conv_bias = Tensor::zeros({inner}, true);
  p.forward_ssm = ssm::SsmBank::init(inner, shape.state_dim, shape.gen_dim, rng);
  p.reverse_ssm = ssm::SsmBank::init(inner, shape.state_dim, shape.gen_dim, rng);
  p.d1 = Tensor::full({inner}, 0.5, true);
  p.d2 = Tensor::full({inner}, 0.5, true);
  p.gate_proj = LinearParams::init(d, inner, rng);
  p.out_proj = LinearParams::init(inner, d, rng);
  p.norm2 = LayerNormParams::init(d);
  p.mlp_in = LinearParams::init(d, shape.mlp_ratio * d, rng);
  p.mlp_out = LinearParams::init(shape.mlp_ratio * d, d, rng);
  return p;
}

void VssmCaParams::collect(const std::string& prefix, ParamSet& set) const {
  norm1.collect(prefix + ".norm1", set);
  in_proj.collect(prefix + ".in_proj", set);
  set.add(prefix + ".conv.kernel", conv_kernel);
  set.add(prefix + ".conv.bias", conv_bias);
  const char* names[] = {"a_tilde", "g", "h_d", "delta", "h_b", "h_c"};
  const auto fwd = forward_ssm.tensors();
  const auto rev = reverse_ssm.tensors();
  for (std::size_t i = 0; i < fwd.size(); ++i) set.add(prefix + ".gssm1." + names[i], fwd[i]);
  for (std::size_t i = 0; i < rev.size(); ++i) set.add(prefix + ".gssm2." + names[i], rev[i]);
  set.add(prefix + ".d1", d1);
  set.add(prefix + ".d2", d2);
  gate_proj.collect(prefix + ".gate_proj", set);
  out_proj.collect(prefix + ".out_proj", set);
  norm2.collect(prefix + ".norm2", set);
  mlp_in.collect(prefix + ".mlp_in", set);
  mlp_out.collect(prefix + ".mlp_out", set);
}

Tensor vssm_ca_tokens(const VssmCaParams& p, const Tensor& tokens, std::size_t height,
                      std::size_t width, double snr_db, const gssm::CsiRestConfig& csi) {
  if (tokens.rank() != 2 || tokens.dim(0) != height * width || tokens.dim(1) != p.shape.width) {
    throw DimensionError("vssm_ca: tokens " + shape_str(tokens.shape()) + " vs " +
                         std::to_string(height) + "x" + std::to_string(width) + " patches of width " +
                         std::to_string(p.shape.width));
  }
  const Tensor normed = apply(p.norm1, tokens);

  // Branch 1, channel-major so each inner channel is one length-T sequence.
  const Tensor expanded = ops::transpose(apply(p.in_proj, normed));
  const Tensor local =
      ops::silu(ops::depthwise_conv2d(expanded, height, width, p.conv_kernel, p.conv_bias));
  Tensor mixed;
  {
    macs::Scope scope("gssm");
    mixed = gssm::dual_gssm_forward(local, p.forward_ssm, p.reverse_ssm, csi, snr_db);
  }
  const Tensor skip = ops::scale_rows(local, ops::add(p.d1, p.d2));
  const Tensor branch1 = ops::transpose(ops::add(mixed, skip));

  const Tensor branch2 = ops::silu(apply(p.gate_proj, normed));
  const Tensor hidden = ops::add(tokens, apply(p.out_proj, ops::mul(branch1, branch2)));

  const Tensor mlp = apply(p.mlp_out, ops::silu(apply(p.mlp_in, apply(p.norm2, hidden))));
  return ops::add(hidden, mlp);
}

Tensor vssm_ca_forward(const VssmCaParams& p, const Tensor& patches, double snr_db,
                       const gssm::CsiRestConfig& csi) {
  if (patches.rank() != 3) throw DimensionError("vssm_ca: expected [c x H x W] patches");
  const std::size_t c = patches.dim(0), h = patches.dim(1), w = patches.dim(2);
  const Tensor tokens = ops::transpose(ops::reshape(patches, {c, h * w}));
  const Tensor out = vssm_ca_tokens(p, tokens, h, w, snr_db, csi);
  return ops::reshape(ops::transpose(out), {c, h, w});
}

}  // namespace mjscc::vssm
