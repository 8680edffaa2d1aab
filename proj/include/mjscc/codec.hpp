#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "mjscc/gssm.hpp"
#include "mjscc/params.hpp"
#include "mjscc/vssm_ca.hpp"

namespace mjscc::codec {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct ModelConfig {
  std::vector<std::size_t> blocks;  // n_k per stage
  std::vector<std::size_t> widths;  // c_k per stage
  std::size_t embed_downsample = 4;
  std::size_t state_dim = 8;  // N
  std::size_t gen_dim = 0;    // O; 0 picks max(ceil(c_k / 16), 1) per stage
  std::size_t expand = 2;
  std::size_t conv_kernel = 3;
  std::size_t mlp_ratio = 2;
  /// Whether the last stage halves the spatial size again. When false its
  /// merge (and the matching divide) is a channel-only layer norm + FC.
  bool last_stage_downsample = false;
  gssm::CsiRestConfig csi;
  std::uint64_t cbr_num = 1;
  std::uint64_t cbr_den = 12;
  std::size_t image_height = 32;
  std::size_t image_width = 32;
  std::uint64_t seed = 1;

  /// stages [1,1], widths [32,48], N=8, 32x32, CBR 1/12.
  static ModelConfig toy();
  /// blocks [2,2,6,2], widths [128,192,256,320], N=16, 128x128, CBR 1/48.
  static ModelConfig full();

  std::size_t stages() const { return widths.size(); }
  std::size_t stage_gen_dim(std::size_t stage) const;
  vssm::BlockShape block_shape(std::size_t stage) const;
  /// Whether stage k (0-based, k >= 1) halves the spatial size on entry.
  bool stage_downsamples(std::size_t stage) const;
  std::size_t stage_height(std::size_t stage) const;
  std::size_t stage_width(std::size_t stage) const;
  /// Complex channel uses per image: cbr * 3 * P * W.
  std::size_t channel_uses() const;
  /// Real channels of the 1x1 compression: 2 * k_uses / (p * w).
  std::size_t compressed_channels() const;

  /// Throws ConfigError naming the first violated constraint.
  void validate() const;
};

/// Feature map in token layout: tokens [h*w x c], row-major raster order.
struct FeatureMap {
  Tensor tokens;
  std::size_t height = 0;
  std::size_t width = 0;

  std::size_t channels() const { return tokens.dim(1); }
  /// [c x h x w] view.
  Tensor patches() const;
  static FeatureMap from_patches(const Tensor& patches);
};

struct MergeParams {
  LayerNormParams norm;
  LinearParams proj;
  bool spatial = true;  // false: channel-only norm + FC, no 2x2 gather
};

struct DivideParams {
  LayerNormParams norm;
  LinearParams proj;
  std::size_t factor = 2;  // pixel-shuffle factor; 1 means channel-only
};

struct CodecParams {
  ModelConfig config;
  LinearParams embed;                                // [3 r^2 -> c_1]
  std::vector<MergeParams> merges;                   // stages 2..L
  std::vector<std::vector<vssm::VssmCaParams>> encoder_blocks;
  LinearParams compress;                             // [c_L -> c_out]
  LinearParams expand;                               // [c_out -> c_L]
  std::vector<std::vector<vssm::VssmCaParams>> decoder_blocks;  // indexed by stage
  std::vector<DivideParams> divides;                 // indexed by stage; stage 0 outputs pixels

  /// Validates the config, then initializes from config.seed.
  static CodecParams init(const ModelConfig& config);
  /// Every trainable tensor under a stable name, in a fixed order.
  ParamSet parameters() const;
};

/// Space-to-depth with factor r, then FC: [3 x P x W] -> tokens [(P/r)(W/r) x c_1].
/// Patch feature layout is (channel, dy, dx).
FeatureMap patch_embed(const Tensor& image, const LinearParams& proj, std::size_t factor);
/// 2x2 gather (feature layout (dy, dx, channel)), layer norm, FC.
FeatureMap patch_merge(const FeatureMap& x, const MergeParams& p);
/// Layer norm, FC to c_prev * r^2, pixel shuffle (feature c*r^2 + dy*r + dx).
FeatureMap patch_divide(const FeatureMap& x, const DivideParams& p);
/// Rearranges tokens [h*w x c*r^2] into [(h r)(w r) x c].
FeatureMap pixel_shuffle(const FeatureMap& x, std::size_t factor);
/// 1x1 conv to c_out, then interleaved (re, im) pairs, power-normalized to [k_uses x 2].
Tensor conv_compress(const FeatureMap& x, const LinearParams& proj);
/// Inverse layout of conv_compress followed by a 1x1 conv.
FeatureMap conv_expand(const Tensor& signal, const LinearParams& proj, std::size_t height,
                       std::size_t width);

/// image [3 x P x W] in [0,1] -> unit-power signal [k_uses x 2].
Tensor encode(const CodecParams& p, const Tensor& image, double snr_db);
/// received/equalized signal [k_uses x 2] -> image [3 x P x W] (not clamped).
Tensor decode(const CodecParams& p, const Tensor& signal, double snr_db);

/// Elementwise clamp to [0,1], outside any graph.
Tensor clamp_unit(const Tensor& image);

// ---------------------------------------------------------------------------
// Checkpoint file, little-endian:
//   "MJSC" u32 version
//   u32 config_len, config text
//   u32 param_count, then per param: u32 name_len, name, u32 rank, u64 dims[rank], f64 values
//   u8 has_optimizer; if 1: u64 step, then per param f64 m[numel], f64 v[numel]

inline constexpr std::uint32_t kCheckpointVersion = 1;

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct OptimizerBlob {
  std::uint64_t step = 0;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
};

struct ParamBlob {
  std::string name;
  Shape shape;
  std::vector<double> values;
};

struct Checkpoint {
  std::string config_text;
  std::vector<ParamBlob> params;
  bool has_optimizer = false;
  OptimizerBlob optimizer;
};

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ckpt);
/// Throws CheckpointError on bad magic, version or truncation.
Checkpoint parse_checkpoint(const std::vector<std::uint8_t>& bytes);

Checkpoint make_checkpoint(const std::string& config_text, const ParamSet& params,
                           const OptimizerBlob* optimizer = nullptr);
/// Copies blob values into `params` by name; names, order and shapes must match.
void restore_params(const Checkpoint& ckpt, const ParamSet& params);

}  // namespace mjscc::codec
